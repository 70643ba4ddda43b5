from difflib import SequenceMatcher

import pytest
from hypothesis import given, settings, strategies as st

from kurag.backends.mock import MockEncoder
from kurag.errors import DuplicateDocumentError, NotFoundError, StoreError
from kurag.index import cosine
from kurag.store import (
    Document,
    KnowledgeStore,
    StoreConfig,
    load_corpus_jsonl,
    segment_passage,
)
from kurag.text import count_tokens

DIM = 16


def make_store(alpha=0.85, max_tokens=200, entities=()):
    encoder = MockEncoder(dim=DIM, entities=list(entities))
    return KnowledgeStore(
        encoder, StoreConfig(max_chunk_tokens=max_tokens, alpha=alpha, embedding_dim=DIM)
    )


def sentence_of_tokens(n: int, salt: str = "w") -> str:
    # n-1 words plus the terminating period = n tokens
    return " ".join(f"{salt}{i}" for i in range(n - 1)) + "."


def observable_state(store: KnowledgeStore) -> dict:
    """Canonical view of the knowledge state, id-agnostic for comparisons."""
    return {
        "docs": sorted(store.documents),
        "chunks": sorted((c.doc_id, c.text) for c in store.chunks.values()),
        "units": sorted(
            (
                u.name,
                u.kind,
                tuple(store.chunks[cid].text for cid in u.chunk_ids),
                tuple(sorted(store.images[iid].ref for iid in u.image_ids)),
            )
            for u in store.units.values()
        ),
        "chunk_vectors": len(store.chunk_index),
        "image_vectors": len(store.image_index),
    }


class TestSegmentPassage:
    def test_empty_body(self):
        assert segment_passage("", 200) == []

    def test_single_short_sentence(self):
        chunks = segment_passage("alpha beta gamma delta.", 200)
        assert len(chunks) == 1
        assert chunks[0].token_count == 5
        assert not chunks[0].oversized_flag

    def test_ten_sentences_pack_3_3_3_1(self):
        sentences = [sentence_of_tokens(30, salt=f"s{j}x") for j in range(10)]
        chunks = segment_passage(" ".join(sentences), 100)
        assert [len(c.sentences) for c in chunks] == [3, 3, 3, 1]
        # oracle checks: reconstruction, bound, and greedy maximality
        flattened = [s for c in chunks for s in c.sentences]
        assert flattened == sentences
        for c in chunks:
            assert sum(count_tokens(s) for s in c.sentences) <= 100
        for left, right in zip(chunks, chunks[1:]):
            assert left.token_count + count_tokens(right.sentences[0]) > 100

    def test_oversized_sentence_kept_whole_and_flagged(self):
        body = sentence_of_tokens(12, salt="long") + " tiny one."
        chunks = segment_passage(body, 5)
        assert chunks[0].oversized_flag and len(chunks[0].sentences) == 1
        assert chunks[0].token_count == 12
        assert chunks[1].sentences == ["tiny one."]

    def test_oversized_flushes_open_chunk_first(self):
        body = "a b." + " " + sentence_of_tokens(40, salt="big") + " c d."
        chunks = segment_passage(body, 10)
        assert [c.oversized_flag for c in chunks] == [False, True, False]

    def test_chunk_ids_are_sequential_from_start(self):
        chunks = segment_passage("One two. Three four.", 3, start_id=7, doc_id="d")
        assert [c.chunk_id for c in chunks] == [7, 8]
        assert all(c.doc_id == "d" for c in chunks)

    @settings(max_examples=60, deadline=None)
    @given(
        st.lists(
            st.integers(min_value=1, max_value=40).map(
                lambda n: sentence_of_tokens(n + 1)
            ),
            min_size=0, max_size=15,
        ),
        st.integers(min_value=1, max_value=60),
    )
    def test_property_reconstruction_and_bound(self, sentences, max_tokens):
        chunks = segment_passage(" ".join(sentences), max_tokens)
        assert [s for c in chunks for s in c.sentences] == sentences
        for c in chunks:
            if not c.oversized_flag:
                assert c.token_count <= max_tokens
            else:
                assert len(c.sentences) == 1


class TestIngestDocument:
    def test_entity_document_builds_one_unit(self):
        store = make_store()
        doc = Document(
            doc_id="d1",
            title="Karnin Lift Bridge",
            body=(
                "The Karnin Lift Bridge opened in 1905. It crosses the strait. "
                "Rail traffic ceased in 1945. The lifting span remains intact."
            ),
            image_refs=["@@entity:Karnin Lift Bridge@@"],
        )
        chunks, mutations = store.ingest_document(doc)
        assert len(store.units) == 1
        unit = next(iter(store.units.values()))
        assert unit.name == "Karnin Lift Bridge"
        assert unit.kind == "entity"
        assert len(unit.image_ids) == 1
        assert len(unit.chunk_ids) >= 1
        assert mutations[0].action == "created"

    def test_empty_body_with_image_creates_no_unit(self):
        store = make_store()
        chunks, mutations = store.ingest_document(
            Document(doc_id="d1", title="Ghost", body="", image_refs=["img-1"])
        )
        assert chunks == [] and mutations == []
        assert store.stats() == {
            "documents": 1, "chunks": 0, "units": 0,
            "chunk_vectors": 0, "image_vectors": 1,
        }

    def test_no_body_and_no_images_rejected(self):
        with pytest.raises(StoreError):
            Document(doc_id="d1", title="x", body="  ", image_refs=[])

    def test_duplicate_doc_id_rejected(self):
        store = make_store()
        store.ingest_document(Document(doc_id="d1", body="Something here."))
        with pytest.raises(DuplicateDocumentError):
            store.ingest_document(Document(doc_id="d1", body="Else."))

    def test_same_entity_across_documents_unions_detail_end(self):
        store = make_store()
        doc_a = Document(doc_id="a", title="Amber Arch", body="Amber Arch fact one.")
        doc_b = Document(doc_id="b", title="Amber Arch", body="Amber Arch fact two.")
        chunks_a, _ = store.ingest_document(doc_a)
        chunks_b, _ = store.ingest_document(doc_b)
        assert len(store.units) == 1
        unit = next(iter(store.units.values()))
        # replay oracle: detail end is the concatenation in ingestion order
        assert unit.chunk_ids == [c.chunk_id for c in chunks_a + chunks_b]
        assert len(unit.image_ids) == 0

    def test_explicit_ku_names_bypass_heuristics(self):
        store = make_store()
        store.ingest_document(
            Document(
                doc_id="d1",
                title="Ignored Title Entirely",
                body="Plain text mentioning Harbor Mill Gate somewhere.",
                ku_names=["Custom Unit"],
            )
        )
        assert [u.name for u in store.units.values()] == ["Custom Unit"]

    def test_body_span_claims_only_mentioning_chunks(self):
        store = make_store(max_tokens=10)
        store.ingest_document(
            Document(
                doc_id="d1",
                title="Main Topic Page",
                body=(
                    "General introduction text goes first here. "
                    "The Blue Harbor Mill appears in this sentence only. "
                    "Closing remarks follow at the very end."
                ),
            )
        )
        by_name = {u.name: u for u in store.units.values()}
        assert len(by_name["Main Topic Page"].chunk_ids) == 3
        mill_chunks = by_name["Blue Harbor Mill"].chunk_ids
        assert len(mill_chunks) == 1
        assert "Blue Harbor Mill" in store.chunks[mill_chunks[0]].text

    def test_untitled_document_spans_claim_only_their_chunks(self):
        store = make_store(max_tokens=10)
        store.ingest_document(
            Document(
                doc_id="d1",
                title="",
                body=(
                    "Intro sentence with no names here. "
                    "The Blue Harbor Mill is in this one. "
                    "Outro text at the end here."
                ),
            )
        )
        [unit] = store.units.values()
        assert unit.name == "Blue Harbor Mill"
        assert len(unit.chunk_ids) == 1

    def test_kind_propagates(self):
        store = make_store()
        store.ingest_document(
            Document(doc_id="d1", title="Flood Of 1962", body="Flood Of 1962 details.", ku_kind="event")
        )
        assert next(iter(store.units.values())).kind == "event"


class TestLinkOrCreateUnit:
    def test_exact_name_appends(self):
        store = make_store()
        store.ingest_document(Document(doc_id="a", title="Amber Arch", body="Amber Arch fact."))
        mutation = store.link_or_create_unit("Karnin Lift Bridge", None, [999])
        assert mutation.action == "created"
        mutation = store.link_or_create_unit("Karnin Lift Bridge", None, [1000])
        assert mutation.action == "appended"
        assert mutation.match_score == 1.0

    def test_empty_store_creates(self):
        store = make_store()
        mutation = store.link_or_create_unit("Fresh Unit", None, [0])
        assert mutation.action == "created"
        assert mutation.match_score is None

    def test_empty_chunk_ids_rejected(self):
        with pytest.raises(ValueError):
            make_store().link_or_create_unit("X", None, [])

    @pytest.mark.parametrize(
        "candidate", ["Granite Gate", "Granite Gateway", "Qoxel Zumrik", "amber arch"]
    )
    def test_decision_matches_brute_force_oracle(self, candidate):
        store = make_store()
        for i, (name, body) in enumerate(
            [
                ("Amber Arch", "Amber Arch fact."),
                ("Granite Gate", "Granite Gate fact."),
                ("Tundra Windmill", "Tundra Windmill fact."),
            ]
        ):
            store.ingest_document(Document(doc_id=f"d{i}", title=name, body=body))
        # oracle: score every stored unit independently
        def norm(s):
            return " ".join(s.split()).casefold()

        oracle_best = max(
            1.0 if norm(candidate) == norm(u.name)
            else SequenceMatcher(None, norm(candidate), norm(u.name)).ratio()
            for u in store.units.values()
        )
        n_before = len(store.units)
        mutation = store.link_or_create_unit(candidate, None, [777])
        if oracle_best >= store.config.alpha:
            assert mutation.action == "appended"
            assert len(store.units) == n_before
        else:
            assert mutation.action == "created"
            assert len(store.units) == n_before + 1

    def test_image_similarity_can_carry_the_match(self):
        store = make_store(entities=["Amber Arch"])
        store.ingest_document(
            Document(
                doc_id="a", title="Amber Arch", body="Solid fact.",
                image_refs=["@@entity:Amber Arch@@"], ku_names=["Amber Arch"],
            )
        )
        candidate_vec = store.encoder.embed_image(b"@@entity:Amber Arch@@")
        mutation = store.link_or_create_unit("Totally Different Name", candidate_vec, [555])
        assert mutation.action == "appended"
        assert mutation.match_score == pytest.approx(1.0, abs=1e-6)
        # oracle: max of name similarity and image cosine over all units
        unit = next(iter(store.units.values()))
        image_cos = max(
            cosine(candidate_vec, store.image_index.vector(i)) for i in unit.image_ids
        )
        assert image_cos >= store.config.alpha


class TestDeleteAndPrune:
    def test_last_chunk_deletes_unit(self):
        store = make_store()
        store.ingest_document(Document(doc_id="a", title="Amber Arch", body="One fact only."))
        [unit] = store.units.values()
        [chunk_id] = unit.chunk_ids
        deleted = store.delete_chunk_and_prune(chunk_id)
        assert deleted == [unit.ku_id]
        with pytest.raises(NotFoundError):
            store.lookup_unit(unit.ku_id)

    def test_partial_delete_keeps_unit(self):
        store = make_store(max_tokens=8)
        store.ingest_document(
            Document(doc_id="a", title="Amber Arch", body="First fact sentence here. Second fact sentence here.")
        )
        [unit] = store.units.values()
        first, second = unit.chunk_ids
        assert store.delete_chunk_and_prune(first) == []
        assert store.lookup_unit(unit.ku_id).chunk_ids == [second]

    def test_unknown_chunk_id(self):
        with pytest.raises(NotFoundError):
            make_store().delete_chunk_and_prune(123)

    def test_delete_whole_document_matches_rebuild_oracle(self):
        names = [f"{a} {b}" for a, b in zip(
            ["Amber", "Basalt", "Cedar", "Dusk", "Ember", "Fjord"],
            ["Arch", "Bastion", "Causeway", "Dome", "Escarp", "Footbridge"],
        )]
        docs = [
            Document(
                doc_id=f"d{i}", title=name,
                body=f"{name} fact one recorded. {name} fact two recorded.",
                image_refs=[f"img-{i}"], ku_names=[name],
            )
            for i, name in enumerate(names)
        ]
        store = make_store()
        for doc in docs:
            store.ingest_document(doc)
        victim = store.documents["d2"]
        victim_chunks = [c.chunk_id for c in store.chunks.values() if c.doc_id == "d2"]
        deleted: list[str] = []
        for chunk_id in victim_chunks:
            deleted += store.delete_chunk_and_prune(chunk_id)
        assert deleted == ["cedar-causeway"]
        rebuilt = make_store()
        for doc in docs:
            if doc.doc_id != "d2":
                rebuilt.ingest_document(doc)
        assert observable_state(store) == observable_state(rebuilt)

    def test_crud_confluence_with_shared_unit(self):
        doc_a = Document(
            doc_id="a", title="Amber Arch", body="Amber Arch fact from first doc.",
            image_refs=["img-a"], ku_names=["Amber Arch"],
        )
        doc_b = Document(
            doc_id="b", title="Amber Arch", body="Amber Arch fact from second doc.",
            image_refs=["img-b"], ku_names=["Amber Arch"],
        )
        store = make_store()
        store.ingest_document(doc_a)
        store.ingest_document(doc_b)
        for chunk_id in [c.chunk_id for c in store.chunks.values() if c.doc_id == "a"]:
            store.delete_chunk_and_prune(chunk_id)
        alone = make_store()
        alone.ingest_document(doc_b)
        assert observable_state(store) == observable_state(alone)

    def test_integrity_holds_after_every_delete(self):
        store = make_store(max_tokens=8)
        store.ingest_document(
            Document(
                doc_id="a", title="Amber Arch",
                body="Amber Arch one two three. Amber Arch four five six. Amber Arch seven eight nine.",
                ku_names=["Amber Arch"],
            )
        )
        for chunk_id in sorted(store.chunks):
            store.delete_chunk_and_prune(chunk_id)
            store.check_integrity()
        assert store.units == {}


class TestLookup:
    def test_existing_and_missing(self):
        store = make_store()
        store.ingest_document(Document(doc_id="a", title="Amber Arch", body="A fact."))
        [ku_id] = store.units
        assert store.lookup_unit(ku_id).name == "Amber Arch"
        with pytest.raises(NotFoundError):
            store.lookup_unit("nope")

    def test_pruned_unit_not_found(self):
        store = make_store()
        store.ingest_document(Document(doc_id="a", title="Amber Arch", body="A fact."))
        [ku_id] = store.units
        [chunk_id] = store.lookup_unit(ku_id).chunk_ids
        store.delete_chunk_and_prune(chunk_id)
        with pytest.raises(NotFoundError):
            store.lookup_unit(ku_id)


class TestPersistence:
    def test_roundtrip_preserves_observable_state(self, tmp_path):
        store = make_store(entities=["Amber Arch"])
        store.ingest_document(
            Document(
                doc_id="a", title="Amber Arch",
                body="Amber Arch fact one. Another sentence about the arch.",
                image_refs=["@@entity:Amber Arch@@"],
            )
        )
        store.save(str(tmp_path))
        loaded = KnowledgeStore.load(str(tmp_path), store.encoder)
        assert observable_state(loaded) == observable_state(store)
        query = store.encoder.embed_image(b"@@entity:Amber Arch@@")
        assert (
            loaded.image_index.search_topk(query, 1)[0]
            == store.image_index.search_topk(query, 1)[0]
        )

    def test_missing_directory(self, tmp_path):
        with pytest.raises(NotFoundError):
            KnowledgeStore.load(str(tmp_path / "absent"), MockEncoder(dim=DIM))


class TestCorpusLoader:
    def test_parses_documents(self, tmp_path):
        path = tmp_path / "corpus.jsonl"
        path.write_text(
            '{"doc_id": "a", "title": "T", "text": "Alpha beta.", "images": ["x"], "kind": "event"}\n'
            "\n"
            '{"doc_id": "b", "text": "Gamma delta.", "ku_names": ["N"]}\n'
        )
        docs = list(load_corpus_jsonl(str(path)))
        assert [d.doc_id for _, d in docs] == ["a", "b"]
        assert docs[0][1].ku_kind == "event"
        assert docs[1][1].ku_names == ["N"]

    def test_reports_line_number_on_bad_json(self, tmp_path):
        path = tmp_path / "corpus.jsonl"
        path.write_text('{"doc_id": "a", "text": "ok."}\n{oops\n')
        from kurag.errors import CorpusFormatError

        with pytest.raises(CorpusFormatError) as excinfo:
            list(load_corpus_jsonl(str(path)))
        assert excinfo.value.line_no == 2

    def test_reports_line_number_on_missing_doc_id(self, tmp_path):
        path = tmp_path / "corpus.jsonl"
        path.write_text('{"text": "no id."}\n')
        from kurag.errors import CorpusFormatError

        with pytest.raises(CorpusFormatError) as excinfo:
            list(load_corpus_jsonl(str(path)))
        assert excinfo.value.line_no == 1
