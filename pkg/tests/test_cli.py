import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from kurag.cli import main
from test_config_ops import write_config

FIXTURES = Path(__file__).resolve().parent / "fixtures"
CORPUS = str(FIXTURES / "corpus_small.jsonl")
EVAL = str(FIXTURES / "eval_small.jsonl")


@pytest.fixture
def runner():
    return CliRunner()


def ingested_config(tmp_path, runner) -> str:
    config_path = write_config(tmp_path)
    result = runner.invoke(main, ["--config", config_path, "ingest", CORPUS])
    assert result.exit_code == 0, result.output
    return config_path


class TestIngestCommand:
    def test_summary_line(self, tmp_path, runner):
        config_path = write_config(tmp_path)
        result = runner.invoke(main, ["--config", config_path, "ingest", CORPUS])
        assert result.exit_code == 0
        assert "3 docs, 9 chunks, 3 KUs" in result.output
        assert (tmp_path / "store" / "store.json").exists()

    def test_empty_corpus(self, tmp_path, runner):
        empty = tmp_path / "empty.jsonl"
        empty.write_text("")
        result = runner.invoke(main, ["--config", write_config(tmp_path), "ingest", str(empty)])
        assert result.exit_code == 0
        assert "0 docs, 0 chunks, 0 KUs" in result.output

    def test_duplicate_doc_id_aborts_with_line(self, tmp_path, runner):
        bad = tmp_path / "dup.jsonl"
        bad.write_text(
            '{"doc_id": "a", "text": "First fact sentence."}\n'
            '{"doc_id": "a", "text": "Second fact sentence."}\n'
        )
        result = runner.invoke(main, ["--config", write_config(tmp_path), "ingest", str(bad)])
        assert result.exit_code == 2
        assert "line 2" in result.output

    def test_malformed_line_aborts_with_line(self, tmp_path, runner):
        bad = tmp_path / "bad.jsonl"
        bad.write_text('{"doc_id": "a", "text": "Fine sentence."}\n{broken\n')
        result = runner.invoke(main, ["--config", write_config(tmp_path), "ingest", str(bad)])
        assert result.exit_code == 2
        assert "line 2" in result.output

    def test_missing_corpus_file(self, tmp_path, runner):
        result = runner.invoke(main, ["--config", write_config(tmp_path), "ingest", "/nope.jsonl"])
        assert result.exit_code == 2


class TestQueryCommand:
    def test_planted_query_prints_gold(self, tmp_path, runner):
        config_path = ingested_config(tmp_path, runner)
        image = tmp_path / "query.bin"
        image.write_bytes(b"@@entity:Karnin Lift Bridge@@")
        result = runner.invoke(main, [
            "--config", config_path, "query",
            "--question", "When did the span open?", "--image", str(image),
        ])
        assert result.exit_code == 0
        assert result.output.strip() == "1905"

    def test_transcript_written(self, tmp_path, runner):
        config_path = ingested_config(tmp_path, runner)
        image = tmp_path / "query.bin"
        image.write_bytes(b"@@entity:Karnin Lift Bridge@@")
        transcript = tmp_path / "t.json"
        result = runner.invoke(main, [
            "--config", config_path, "query",
            "--question", "When did the span open?", "--image", str(image),
            "--transcript", str(transcript),
        ])
        assert result.exit_code == 0
        exported = json.loads(transcript.read_text())
        assert len(exported["transcript"]) == 4
        assert exported["final_answer"] == "1905"

    def test_no_kcc_mode_single_turn_transcript(self, tmp_path, runner):
        config_path = ingested_config(tmp_path, runner)
        image = tmp_path / "query.bin"
        image.write_bytes(b"@@entity:Karnin Lift Bridge@@")
        transcript = tmp_path / "t.json"
        result = runner.invoke(main, [
            "--config", config_path, "query", "--mode", "no_kcc",
            "--question", "When did the span open?", "--image", str(image),
            "--transcript", str(transcript),
        ])
        assert result.exit_code == 0
        exported = json.loads(transcript.read_text())
        assert [t["role"] for t in exported["transcript"]] == ["user", "assistant"]

    def test_nonexistent_image_exits_2(self, tmp_path, runner):
        config_path = ingested_config(tmp_path, runner)
        result = runner.invoke(main, [
            "--config", config_path, "query",
            "--question", "Q?", "--image", str(tmp_path / "missing.png"),
        ])
        assert result.exit_code == 2
        assert "image file not found" in result.output

    def test_missing_store_is_actionable(self, tmp_path, runner):
        config_path = write_config(tmp_path)
        image = tmp_path / "query.bin"
        image.write_bytes(b"x")
        result = runner.invoke(main, [
            "--config", config_path, "query", "--question", "Q?", "--image", str(image),
        ])
        assert result.exit_code == 2
        assert "ingest" in result.output

    def test_image_required_outside_no_ku(self, tmp_path, runner):
        config_path = ingested_config(tmp_path, runner)
        result = runner.invoke(main, ["--config", config_path, "query", "--question", "Q?"])
        assert result.exit_code == 2


class TestEvalCommand:
    def test_writes_reports_and_figure(self, tmp_path, runner):
        config_path = ingested_config(tmp_path, runner)
        out = tmp_path / "out"
        result = runner.invoke(main, [
            "--config", config_path, "eval", EVAL,
            "--mode", "kurag", "--mode", "no_ku", "--out", str(out),
        ])
        assert result.exit_code == 0
        assert "mode=kurag n=3 accuracy=1.0000" in result.output
        assert (out / "report_kurag.json").exists()
        assert (out / "report_no_ku.csv").exists()
        assert (out / "summary.csv").exists()
        assert (out / "accuracy_by_mode.png").exists()

    def test_min_accuracy_floor_fails_run(self, tmp_path, runner):
        config_path = ingested_config(tmp_path, runner)
        result = runner.invoke(main, [
            "--config", config_path, "eval", EVAL,
            "--mode", "no_ku", "--min-accuracy", "0.99",
        ])
        assert result.exit_code == 1
        assert "below configured floor" in result.output

    def test_min_accuracy_floor_passes(self, tmp_path, runner):
        config_path = ingested_config(tmp_path, runner)
        result = runner.invoke(main, [
            "--config", config_path, "eval", EVAL, "--min-accuracy", "0.99",
        ])
        assert result.exit_code == 0


class TestManagementCommands:
    def test_ku_show(self, tmp_path, runner):
        config_path = ingested_config(tmp_path, runner)
        result = runner.invoke(main, ["--config", config_path, "ku", "show", "karnin-lift-bridge"])
        assert result.exit_code == 0
        info = json.loads(result.output)
        assert info["name"] == "Karnin Lift Bridge"

    def test_ku_show_missing(self, tmp_path, runner):
        config_path = ingested_config(tmp_path, runner)
        result = runner.invoke(main, ["--config", config_path, "ku", "show", "ghost"])
        assert result.exit_code == 2

    def test_chunk_delete_prunes_unit(self, tmp_path, runner):
        config_path = ingested_config(tmp_path, runner)
        show = runner.invoke(main, ["--config", config_path, "ku", "show", "granite-gate"])
        chunk_ids = json.loads(show.output)["chunk_ids"]
        for chunk_id in chunk_ids:
            result = runner.invoke(main, ["--config", config_path, "chunk", "delete", str(chunk_id)])
            assert result.exit_code == 0
        assert json.loads(result.output)["deleted_units"] == ["granite-gate"]

    def test_chunk_delete_missing(self, tmp_path, runner):
        config_path = ingested_config(tmp_path, runner)
        result = runner.invoke(main, ["--config", config_path, "chunk", "delete", "4242"])
        assert result.exit_code == 2


def test_cli_and_service_share_query_handler(tmp_path, runner, monkeypatch):
    """Both surfaces must route through the same ops function."""
    import kurag.ops as ops_module
    from fastapi.testclient import TestClient

    from kurag.config import AppConfig
    from kurag.pipeline import VisualQuery
    from kurag.reasoner import DialogueState
    from kurag.service import create_app

    calls = []

    def fake_query_once(config, question, image, mode="kurag", store=None, backends=None):
        calls.append((question, mode))
        return DialogueState(question=VisualQuery(text=question, image=image),
                             mode=mode, final_answer="stub")

    monkeypatch.setattr(ops_module, "query_once", fake_query_once)
    config_path = ingested_config(tmp_path, runner)
    image = tmp_path / "q.bin"
    image.write_bytes(b"x")
    result = runner.invoke(main, [
        "--config", config_path, "query", "--question", "shared?", "--image", str(image),
    ])
    assert result.output.strip() == "stub"

    app = create_app(AppConfig.from_file(config_path))
    client = TestClient(app)
    response = client.post("/query", data={"question": "shared?", "mode": "kurag"},
                           files={"image": ("q.bin", b"x")})
    assert response.json()["final_answer"] == "stub"
    assert calls == [("shared?", "kurag"), ("shared?", "kurag")]
