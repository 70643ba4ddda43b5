import pytest
from fastapi.testclient import TestClient

from conftest import assert_same_shape
from model_adapter.config import AdapterConfig, AdapterError
from model_adapter.service import create_app


class TestChatEndpoint:
    def test_golden_two_turn_request_gets_valid_reply(self, client, golden):
        response = client.post("/chat", json=golden("chat_request_two_turns.json"))
        assert response.status_code == 200
        assert_same_shape(golden("chat_response.json"), response.json())
        content = response.json()["choices"][0]["message"]["content"]
        assert isinstance(content, str) and content

    def test_multi_image_turn_accepted(self, client, golden):
        response = client.post("/chat", json=golden("chat_request_two_images.json"))
        assert response.status_code == 200
        assert "2 images" in response.json()["choices"][0]["message"]["content"]

    def test_empty_history_is_400(self, client):
        assert client.post("/chat", json={"messages": []}).status_code == 400
        assert client.post("/chat", json={}).status_code == 400

    def test_unsupported_part_type_is_400(self, client):
        body = {"messages": [{"role": "user", "content": [{"type": "audio"}]}]}
        assert client.post("/chat", json=body).status_code == 400

    def test_bad_role_is_400(self, client):
        body = {"messages": [{"role": "pirate", "content": [{"type": "text", "text": "x"}]}]}
        assert client.post("/chat", json=body).status_code == 400

    def test_non_data_image_url_is_400(self, client):
        body = {"messages": [{"role": "user", "content": [
            {"type": "image_url", "image_url": {"url": "https://example.com/x.png"}}
        ]}]}
        assert client.post("/chat", json=body).status_code == 400

    def test_reply_is_deterministic(self, client, golden):
        body = golden("chat_request_two_turns.json")
        first = client.post("/chat", json=body).json()
        second = client.post("/chat", json=body).json()
        assert first == second

    def test_model_failure_maps_to_502(self, monkeypatch, golden):
        from model_adapter import models

        def boom(self, turns):
            raise RuntimeError("model crashed")

        monkeypatch.setattr(models.EchoChat, "reply", boom)
        client = TestClient(create_app(AdapterConfig(embedding_dim=16)))
        response = client.post("/chat", json=golden("chat_request_two_turns.json"))
        assert response.status_code == 502


class TestInfoAndConfig:
    def test_info_reports_models_and_dim(self, client):
        body = client.get("/info").json()
        assert body["dim"] == 64
        assert set(body["models"]) == {"encoder", "detector", "chat"}

    def test_unknown_config_key_rejected(self):
        with pytest.raises(AdapterError):
            AdapterConfig.from_dict({"surprise": 1})

    def test_embedding_dim_floor(self):
        with pytest.raises(AdapterError):
            AdapterConfig(embedding_dim=1)

    def test_unknown_providers_rejected(self):
        from model_adapter.models import load_models

        with pytest.raises(AdapterError):
            load_models(AdapterConfig(encoder_model="carrier:pigeon"))
        with pytest.raises(AdapterError):
            load_models(AdapterConfig(detector_model="sonar:ping"))
        with pytest.raises(AdapterError):
            load_models(AdapterConfig(chat_model="tarot:deck"))

    def test_yolo_provider_needs_library_or_weights(self):
        from model_adapter.models import load_models

        with pytest.raises(AdapterError):
            load_models(AdapterConfig(detector_model="yolo:v8n"))
