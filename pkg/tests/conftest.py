"""Shared fixtures: a statistics-faithful synthetic dataset and CLI helpers.

The real benchmark file is not bundled. When HALLUCHECK_WIKIBIO_PATH points
at it, dataset-level tests use the real file; otherwise they run against a
synthetic replica generated here with the same shape: 501 sentences across
50 paragraphs, 241 hallucinated and 260 accurate, 20 samples per paragraph,
samples of exactly 169 words.
"""

from __future__ import annotations

import json
import os
import random
from pathlib import Path

import pytest

FIXTURES = Path(__file__).parent / "data"

_WORDS = (
    "the a in of was born career later year award first second national team "
    "season with for music prize early work known wrote played region study "
    "school member during between city record several against final province "
    "founded group company director published family"
).split()

_GIVEN = ("Mira", "Anton", "Leila", "Viktor", "Ines", "Marek", "Sofia", "Daan", "Priya", "Oskar")
_FAMILY = ("Halvorsen", "Duarte", "Okafor", "Lindqvist", "Moravec", "Iyer", "Castellan", "Brandt")


def _sentence(rng: random.Random, words: int) -> str:
    body = " ".join(rng.choice(_WORDS) for _ in range(words))
    return body[0].upper() + body[1:] + "."


def build_synthetic_wikibio(path: Path, seed: int = 20240817) -> Path:
    """Write the synthetic replica; shape constants match the real dataset."""
    rng = random.Random(seed)
    paragraph_sizes = [10] * 49 + [11]
    total = sum(paragraph_sizes)
    assert total == 501
    hallucinated_slots = set(rng.sample(range(total), 241))

    with open(path, "w", encoding="utf-8") as fh:
        slot = 0
        for p, size in enumerate(paragraph_sizes):
            paragraph_id = f"bio-{p:03d}"
            concept = f"{rng.choice(_GIVEN)} {rng.choice(_FAMILY)}"
            samples = [_sentence(rng, 169) for _ in range(20)]
            for i in range(size):
                label = "hallucinated" if slot in hallucinated_slots else "accurate"
                record = {
                    "paragraph_id": paragraph_id,
                    "concept": concept,
                    "sentence_index": i,
                    "sentence": _sentence(rng, 14),
                    "label": label,
                    "samples": samples,
                }
                fh.write(json.dumps(record, ensure_ascii=False) + "\n")
                slot += 1
    return path


@pytest.fixture(scope="session")
def wikibio_file(tmp_path_factory: pytest.TempPathFactory) -> Path:
    override = os.environ.get("HALLUCHECK_WIKIBIO_PATH")
    if override:
        return Path(override)
    path = tmp_path_factory.mktemp("wikibio") / "wikibio_gpt4o.jsonl"
    return build_synthetic_wikibio(path)


@pytest.fixture()
def fixture_dir() -> Path:
    return FIXTURES


def run_cli(argv: list[str]) -> int:
    from hallucheck.cli import main

    return main(argv)
