"""Shared fixtures: planted knowledge bases with scripted model backends.

The planted construction registers every entity name with the mock encoder,
tags each document's image with its entity marker, and writes the entity
name into every sentence so unit matching and chunk ranking are exact by
construction. Scripted chat rules then decide answers from the markers baked
into the planted texts.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import pytest

from kurag.backends.mock import INITIAL_ANSWER_PLACEHOLDER, MockDetector, MockEncoder, ScriptedMLLM
from kurag.evaluation import EvalItem
from kurag.reasoner import Backends, CORRECTION_PROMPT
from kurag.store import Document, KnowledgeStore, StoreConfig
from kurag.text import name_similarity

WORDS_FIRST = [
    "Amber", "Basalt", "Cedar", "Dusk", "Ember", "Fjord", "Granite", "Harbor",
    "Iris", "Jade", "Krait", "Lumen", "Maple", "Nickel", "Onyx", "Pewter",
    "Quartz", "Russet", "Slate", "Topaz", "Umber", "Velvet", "Walnut", "Xenon",
    "Yarrow", "Zircon", "Auric", "Birch", "Cobalt", "Delta", "Ecru", "Flint",
    "Gamma", "Hazel", "Indigo", "Juniper", "Kepler", "Laurel", "Mica", "Nadir",
    "Ochre", "Prism", "Quill", "Raven", "Sable", "Tundra", "Ultra", "Vesper",
    "Willow", "Zenith",
]
WORDS_SECOND = [
    "Arch", "Bastion", "Causeway", "Dome", "Escarp", "Footbridge", "Gate",
    "Hall", "Islet", "Jetty", "Keep", "Lighthouse", "Mill", "Nave", "Obelisk",
    "Pier", "Quay", "Rotunda", "Spire", "Terrace", "Underpass", "Vault",
    "Weir", "Xyst", "Yard", "Ziggurat", "Aqueduct", "Belfry", "Citadel",
    "Dam", "Esplanade", "Fort", "Grotto", "Hangar", "Icehouse", "Junction",
    "Kiosk", "Lock", "Monument", "Needle", "Observatory", "Pavilion",
    "Quarry", "Rampart", "Silo", "Tower", "Undercroft", "Viaduct", "Windmill",
    "Yurt",
]

KC_SNIPPET = CORRECTION_PROMPT[:45]


def planted_names(n: int) -> list[str]:
    assert n <= len(WORDS_FIRST)
    return [f"{WORDS_FIRST[i]} {WORDS_SECOND[i]}" for i in range(n)]


@dataclass
class PlantedKB:
    store: KnowledgeStore
    encoder: MockEncoder
    names: list[str]
    items: list[EvalItem]
    rules: list
    gold_unit: dict[str, str] = field(default_factory=dict)       # item_id -> ku_id
    gold_chunk: dict[str, int] = field(default_factory=dict)      # item_id -> chunk_id
    gold_answer: dict[str, str] = field(default_factory=dict)     # item_id -> answer
    kind: dict[str, str] = field(default_factory=dict)            # item_id -> "evidence"|"distractor"

    def backends(self, detector=None) -> Backends:
        return Backends(
            encoder=self.encoder,
            detector=detector or MockDetector(),
            mllm=ScriptedMLLM(self.rules, default_reply="unknown"),
        )


def build_planted_kb(n: int = 50, dim: int = 512, adversarial: bool = False) -> PlantedKB:
    """A synthetic KB of n entities with one document each.

    Every sentence mentions its entity name, so each doc's chunks embed to
    the entity's basis vector and outrank other units' chunks once the query
    is rewritten with the matched name. In adversarial mode the second half
    of the entities store distractor text (markers but no usable evidence)
    and their questions are answerable from the model's scripted knowledge,
    which is what the correction chain must protect.
    """
    names = planted_names(n)
    alpha = 0.85
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            assert name_similarity(a, b) < alpha, f"planted names too close: {a!r} vs {b!r}"

    encoder = MockEncoder(dim=dim, entities=names)
    store = KnowledgeStore(
        encoder, StoreConfig(max_chunk_tokens=24, alpha=alpha, embedding_dim=dim)
    )
    kb = PlantedKB(store=store, encoder=encoder, names=names, items=[], rules=[])
    kb.rules.append(("Describe the image", "a gray landmark"))

    evidence_rules = []
    knowledge_rules = []
    for i, name in enumerate(names):
        distractor = adversarial and i >= n // 2
        if distractor:
            first = f"{name} maintenance logs cite DISTRACT[{i}] during inspection week."
        else:
            first = f"{name} archive records state EVID[{i}] that the answer is gold-{i}."
        body = " ".join(
            [
                first,
                f"{name} stands beside the old harbor road near the southern gate.",
                f"Visitors often photograph {name} at dawn during the quiet season.",
            ]
        )
        chunks, _ = store.ingest_document(
            Document(
                doc_id=f"doc-{i}",
                title=name,
                body=body,
                image_refs=[f"@@entity:{name}@@"],
                ku_names=[name],
            )
        )
        assert len(chunks) == 3, "planted sentences must land in separate chunks"
        item_id = f"q-{i:03d}"
        kb.items.append(
            EvalItem(
                item_id=item_id,
                question=f"What fact do the archives record about this landmark? QMARK[{i}]",
                gold_answers=[f"gold-{i}"],
                image_ref=f"@@entity:{name}@@",
            )
        )
        [ku_id] = [k for k, u in store.units.items() if u.name == name]
        kb.gold_unit[item_id] = ku_id
        kb.gold_chunk[item_id] = chunks[0].chunk_id
        kb.gold_answer[item_id] = f"gold-{i}"
        kb.kind[item_id] = "distractor" if distractor else "evidence"
        if distractor:
            knowledge_rules.append((f"QMARK[{i}]", f"gold-{i}"))
        else:
            evidence_rules.append((f"EVID[{i}]", f"gold-{i}"))

    kb.rules.extend(evidence_rules)
    kb.rules.append(((KC_SNIPPET, "DISTRACT["), INITIAL_ANSWER_PLACEHOLDER))
    kb.rules.append(("DISTRACT[", "distracted guess"))
    kb.rules.extend(knowledge_rules)
    assert len(store.units) == n
    return kb


@pytest.fixture(scope="session")
def planted_kb() -> PlantedKB:
    return build_planted_kb(n=50, dim=512)


@pytest.fixture(scope="session")
def adversarial_kb() -> PlantedKB:
    return build_planted_kb(n=50, dim=512, adversarial=True)
