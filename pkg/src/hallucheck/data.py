"""Dataset ingestion and persistence.

Three kinds of on-disk artifacts:

* biography benchmark records, one JSON object per line, each carrying a
  labeled sentence plus the stochastic samples drawn for its paragraph;
* short-form QA records in CSV, either the published two-column benchmark
  layout or this package's extended layout with grading columns;
* a sample store, one JSON file per paragraph, digest-checked so repeated
  writes are idempotent and conflicting rewrites are refused.

Score records cross process boundaries as JSON objects; timing never does,
so artifact bytes depend only on inputs and configuration.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import re
import tempfile
import threading
from dataclasses import dataclass, replace
from math import fsum
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .core import DetectorMethod, HallucheckError, Label, ScoreRecord, Triple
from .embed import Embedder, EmbeddingVector, cosine_sim
from .kgx import load_prompt_resource
from .provider import ChatClient, ChatRequest, DETECT_PROFILE

WIKIBIO_EXPECTED_SAMPLES = 20

_WORD = re.compile(r"\S+")


class SchemaError(HallucheckError):
    """An input file violated the documented record schema."""


class NotFound(HallucheckError):
    """Lookup of an unknown key in a store."""


class StoreConflict(HallucheckError):
    """A store key was rewritten with different content."""


class JudgeParseError(HallucheckError):
    """A grading reply contained no recognizable verdict token."""


def word_count(text: str) -> int:
    return len(_WORD.findall(text))


@dataclass(frozen=True)
class WikiBioRecord:
    """One labeled sentence of a generated biography paragraph.

    ``samples`` holds the paragraph's regenerations; every sentence row of a
    paragraph repeats them so each record is self-contained.
    """

    paragraph_id: str
    concept: str
    sentence_index: int
    sentence: str
    label: Label
    samples: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.paragraph_id:
            raise ValueError("paragraph_id must be non-empty")
        if self.sentence_index < 0:
            raise ValueError(f"sentence_index {self.sentence_index} negative")
        if not self.sentence.strip():
            raise ValueError("sentence must be non-empty")
        object.__setattr__(self, "label", Label(self.label))
        object.__setattr__(self, "samples", tuple(self.samples))


_WIKIBIO_FIELDS = {
    "paragraph_id": str,
    "concept": str,
    "sentence_index": int,
    "sentence": str,
    "label": str,
    "samples": list,
}


def _wikibio_from_obj(obj: object, where: str, expected_samples: int | None) -> WikiBioRecord:
    if not isinstance(obj, dict):
        raise SchemaError(f"{where}: expected an object, got {type(obj).__name__}")
    for name, kind in _WIKIBIO_FIELDS.items():
        if name not in obj:
            raise SchemaError(f"{where}: missing field {name!r}")
        if not isinstance(obj[name], kind) or isinstance(obj[name], bool):
            raise SchemaError(
                f"{where}: field {name!r} must be {kind.__name__}, "
                f"got {type(obj[name]).__name__}"
            )
    samples = obj["samples"]
    if not all(isinstance(s, str) for s in samples):
        raise SchemaError(f"{where}: field 'samples' must contain only strings")
    if expected_samples is not None and len(samples) != expected_samples:
        raise SchemaError(
            f"{where}: expected {expected_samples} samples, found {len(samples)}"
        )
    try:
        label = Label(obj["label"])
    except ValueError:
        raise SchemaError(f"{where}: field 'label' must be 'accurate' or 'hallucinated'")
    try:
        return WikiBioRecord(
            paragraph_id=obj["paragraph_id"],
            concept=obj["concept"],
            sentence_index=obj["sentence_index"],
            sentence=obj["sentence"],
            label=label,
            samples=tuple(samples),
        )
    except ValueError as exc:
        raise SchemaError(f"{where}: {exc}")


def load_wikibio(
    path: str | os.PathLike,
    expected_samples: int | None = WIKIBIO_EXPECTED_SAMPLES,
) -> list[WikiBioRecord]:
    """Parse a record-per-line dataset file, validating every field.

    Pass ``expected_samples=None`` to accept any per-paragraph sample count.
    """
    records: list[WikiBioRecord] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            where = f"{os.fspath(path)}:{lineno}"
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"{where}: invalid JSON ({exc.msg})")
            records.append(_wikibio_from_obj(obj, where, expected_samples))
    if not records:
        raise SchemaError(f"{os.fspath(path)}: no records")
    return records


def save_wikibio(records: Iterable[WikiBioRecord], path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(
                json.dumps(
                    {
                        "paragraph_id": r.paragraph_id,
                        "concept": r.concept,
                        "sentence_index": r.sentence_index,
                        "sentence": r.sentence,
                        "label": r.label.value,
                        "samples": list(r.samples),
                    },
                    ensure_ascii=False,
                    sort_keys=True,
                )
                + "\n"
            )


@dataclass(frozen=True)
class SimpleQARecord:
    question: str
    gold_answer: str
    model_answer: str | None = None
    label: Label | None = None
    judge_verdict: str | None = None

    def __post_init__(self) -> None:
        if not self.question.strip():
            raise ValueError("question must be non-empty")
        if not self.gold_answer.strip():
            raise ValueError("gold_answer must be non-empty")
        if self.label is not None:
            if self.model_answer is None:
                raise ValueError("label requires a model_answer")
            object.__setattr__(self, "label", Label(self.label))


_SIMPLEQA_PUBLISHED = ("metadata", "problem", "answer")
_SIMPLEQA_EXTENDED = ("question", "gold_answer", "model_answer", "label", "judge_verdict")


def load_simpleqa(path: str | os.PathLike) -> list[SimpleQARecord]:
    """Read QA pairs from CSV.

    Accepts the published benchmark header (metadata, problem, answer) and
    this package's extended header with grading columns.
    """
    records: list[SimpleQARecord] = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise SchemaError(f"{os.fspath(path)}: empty file")
        names = tuple(reader.fieldnames)
        if set(_SIMPLEQA_PUBLISHED) <= set(names):
            question_key, gold_key = "problem", "answer"
            extended = False
        elif set(("question", "gold_answer")) <= set(names):
            question_key, gold_key = "question", "gold_answer"
            extended = True
        else:
            raise SchemaError(
                f"{os.fspath(path)}: unrecognized header {names}; expected "
                f"{_SIMPLEQA_PUBLISHED} or {_SIMPLEQA_EXTENDED}"
            )
        for lineno, row in enumerate(reader, start=2):
            where = f"{os.fspath(path)}:{lineno}"
            question = (row.get(question_key) or "").strip()
            gold = (row.get(gold_key) or "").strip()
            if not question:
                raise SchemaError(f"{where}: empty question")
            if not gold:
                raise SchemaError(f"{where}: empty gold answer")
            model_answer = label = verdict = None
            if extended:
                model_answer = row.get("model_answer") or None
                raw_label = row.get("label") or None
                verdict = row.get("judge_verdict") or None
                if raw_label is not None:
                    try:
                        label = Label(raw_label)
                    except ValueError:
                        raise SchemaError(f"{where}: bad label {raw_label!r}")
            try:
                records.append(
                    SimpleQARecord(
                        question=question,
                        gold_answer=gold,
                        model_answer=model_answer,
                        label=label,
                        judge_verdict=verdict,
                    )
                )
            except ValueError as exc:
                raise SchemaError(f"{where}: {exc}")
    if not records:
        raise SchemaError(f"{os.fspath(path)}: no records")
    return records


def save_simpleqa(records: Iterable[SimpleQARecord], path: str | os.PathLike) -> None:
    """Write the extended CSV layout; load_simpleqa reads it back unchanged."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_SIMPLEQA_EXTENDED)
        for r in records:
            writer.writerow(
                [
                    r.question,
                    r.gold_answer,
                    r.model_answer or "",
                    r.label.value if r.label else "",
                    r.judge_verdict or "",
                ]
            )


# INCORRECT is checked before CORRECT; \b keeps CORRECT from matching inside it.
_VERDICTS = (
    ("NOT_ATTEMPTED", re.compile(r"\bNOT_ATTEMPTED\b"), None),
    ("INCORRECT", re.compile(r"\bINCORRECT\b"), Label.HALLUCINATED),
    ("CORRECT", re.compile(r"\bCORRECT\b"), Label.ACCURATE),
)


def parse_judge_verdict(reply: str) -> tuple[str, Label | None]:
    """Map a judge reply to (verdict token, label); None = excluded."""
    for token, pattern, label in _VERDICTS:
        if pattern.search(reply):
            return token, label
    raise JudgeParseError(f"no verdict token in judge reply {reply!r}")


def grade_simpleqa(
    record: SimpleQARecord, client: ChatClient, model_id: str
) -> SimpleQARecord:
    """Ask the judge model to compare the model answer against gold.

    A NOT_ATTEMPTED verdict stores the verdict but leaves the label unset;
    such records are excluded from scoring downstream.
    """
    if record.model_answer is None:
        raise ValueError("cannot grade a record without a model_answer")
    prompt = (
        load_prompt_resource("simpleqa_judge.txt")
        .replace("{{QUESTION}}", record.question)
        .replace("{{GOLD}}", record.gold_answer)
        .replace("{{PREDICTED}}", record.model_answer)
    )
    reply = client.complete(ChatRequest.user(model_id, prompt, DETECT_PROFILE)).content
    verdict, label = parse_judge_verdict(reply)
    return replace(record, label=label, judge_verdict=verdict)


@dataclass(frozen=True)
class DatasetStats:
    sentence_count: int
    paragraph_count: int
    hallucinated_count: int
    accurate_count: int
    sentences_per_paragraph: float
    avg_sample_length_words: float
    avg_hallucinated_length_words: float
    avg_accurate_length_words: float
    semantic_similarity_h_vs_a: float
    similarity_method: str = "centroid_cosine"

    def __post_init__(self) -> None:
        for name in ("sentence_count", "paragraph_count", "hallucinated_count", "accurate_count"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} negative")
        if self.hallucinated_count + self.accurate_count != self.sentence_count:
            raise ValueError("label counts do not sum to sentence count")

    def as_record(self) -> dict:
        return {
            "sentence_count": self.sentence_count,
            "paragraph_count": self.paragraph_count,
            "hallucinated_count": self.hallucinated_count,
            "accurate_count": self.accurate_count,
            "sentences_per_paragraph": self.sentences_per_paragraph,
            "avg_sample_length_words": self.avg_sample_length_words,
            "avg_hallucinated_length_words": self.avg_hallucinated_length_words,
            "avg_accurate_length_words": self.avg_accurate_length_words,
            "semantic_similarity_h_vs_a": self.semantic_similarity_h_vs_a,
            "similarity_method": self.similarity_method,
        }


def _mean(values: Sequence[float]) -> float:
    return fsum(values) / len(values) if values else 0.0


def _centroid(vectors: Sequence[EmbeddingVector], model_id: str) -> EmbeddingVector:
    stacked = np.array([v.values for v in vectors], dtype=np.float64)
    return EmbeddingVector(values=tuple(stacked.mean(axis=0)), model_id=model_id)


def compute_stats(records: Sequence[WikiBioRecord], embedder: Embedder) -> DatasetStats:
    """Counts, whitespace word-length averages, and the class-separation
    similarity: cosine between the centroid embeddings of the two classes.

    Sample lengths are averaged per paragraph (each paragraph's samples count
    once, however many sentence rows repeat them).

    The centroid-cosine procedure is this package's own definition; the
    resulting number is comparable across runs of this package, not across
    other implementations.
    """
    if not records:
        raise SchemaError("no records")
    from .evaluation import DegenerateLabels

    by_paragraph: dict[str, WikiBioRecord] = {}
    for r in records:
        by_paragraph.setdefault(r.paragraph_id, r)
    sample_lengths = [
        float(word_count(s)) for r in by_paragraph.values() for s in r.samples
    ]
    hallucinated = [r.sentence for r in records if r.label == Label.HALLUCINATED]
    accurate = [r.sentence for r in records if r.label == Label.ACCURATE]
    if not hallucinated or not accurate:
        raise DegenerateLabels("need sentences in both classes to compute similarity")
    centroid_h = _centroid([embedder.embed(s) for s in hallucinated], embedder.model_id)
    centroid_a = _centroid([embedder.embed(s) for s in accurate], embedder.model_id)
    return DatasetStats(
        sentence_count=len(records),
        paragraph_count=len(by_paragraph),
        hallucinated_count=len(hallucinated),
        accurate_count=len(accurate),
        sentences_per_paragraph=len(records) / len(by_paragraph),
        avg_sample_length_words=_mean(sample_lengths),
        avg_hallucinated_length_words=_mean([float(word_count(s)) for s in hallucinated]),
        avg_accurate_length_words=_mean([float(word_count(s)) for s in accurate]),
        semantic_similarity_h_vs_a=cosine_sim(centroid_h, centroid_a),
    )


def _samples_digest(samples: Sequence[str]) -> str:
    payload = json.dumps(list(samples), ensure_ascii=False, sort_keys=True)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class StoreReceipt:
    paragraph_id: str
    digest: str
    duplicate: bool


class SampleStore:
    """One JSON file per paragraph, keyed by the id's digest.

    Rewriting identical content is a flagged no-op; rewriting different
    content raises, because silently replacing samples would invalidate any
    scores already derived from them.
    """

    def __init__(self, directory: str | os.PathLike) -> None:
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def _path_for(self, paragraph_id: str) -> Path:
        name = hashlib.sha256(paragraph_id.encode("utf-8")).hexdigest()[:24]
        return self.directory / f"{name}.json"

    def put(self, paragraph_id: str, samples: Sequence[str]) -> StoreReceipt:
        if not samples:
            raise ValueError("samples must be non-empty")
        digest = _samples_digest(samples)
        path = self._path_for(paragraph_id)
        with self._lock:
            if path.exists():
                existing = json.loads(path.read_text(encoding="utf-8"))
                if existing["digest"] == digest:
                    return StoreReceipt(paragraph_id, digest, duplicate=True)
                raise StoreConflict(
                    f"paragraph {paragraph_id!r} already stored with different samples"
                )
            payload = {
                "paragraph_id": paragraph_id,
                "digest": digest,
                "samples": list(samples),
            }
            fd, tmp = tempfile.mkstemp(dir=self.directory, suffix=".tmp")
            try:
                with os.fdopen(fd, "w", encoding="utf-8") as fh:
                    json.dump(payload, fh, ensure_ascii=False)
                os.replace(tmp, path)
            except BaseException:
                if os.path.exists(tmp):
                    os.unlink(tmp)
                raise
        return StoreReceipt(paragraph_id, digest, duplicate=False)

    def get(self, paragraph_id: str) -> list[str]:
        path = self._path_for(paragraph_id)
        if not path.exists():
            raise NotFound(f"no samples stored for paragraph {paragraph_id!r}")
        payload = json.loads(path.read_text(encoding="utf-8"))
        return list(payload["samples"])

    def has(self, paragraph_id: str) -> bool:
        return self._path_for(paragraph_id).exists()

    def paragraph_ids(self) -> list[str]:
        ids = []
        for path in sorted(self.directory.glob("*.json")):
            ids.append(json.loads(path.read_text(encoding="utf-8"))["paragraph_id"])
        return sorted(ids)


def persist_samples(
    paragraph_id: str, samples: Sequence[str], path: str | os.PathLike
) -> StoreReceipt:
    return SampleStore(path).put(paragraph_id, samples)


def score_record_to_dict(record: ScoreRecord) -> dict:
    """JSON shape for a score record. Timing is deliberately omitted so
    artifact bytes are reproducible."""
    obj: dict = {
        "output_ref": record.output_ref,
        "method": record.method.value,
        "kg_used": record.kg_used,
        "score": record.score,
        "misses": record.misses,
        "prompt_version": record.prompt_version,
        "model_id": record.model_id,
    }
    if record.triple_scores is not None:
        obj["triple_scores"] = [
            [[t.subject, t.relation, t.obj], c] for t, c in record.triple_scores
        ]
    return obj


def score_record_from_dict(obj: dict) -> ScoreRecord:
    try:
        triple_scores = None
        if "triple_scores" in obj and obj["triple_scores"] is not None:
            triple_scores = tuple(
                (Triple(subject=s, relation=r, obj=o), float(c))
                for (s, r, o), c in obj["triple_scores"]
            )
        return ScoreRecord(
            output_ref=obj["output_ref"],
            method=DetectorMethod(obj["method"]),
            score=float(obj["score"]),
            kg_used=bool(obj["kg_used"]),
            triple_scores=triple_scores,
            misses=int(obj.get("misses", 0)),
            prompt_version=obj.get("prompt_version", ""),
            model_id=obj.get("model_id", ""),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"bad score record: {exc}")


def write_score_records(
    records: Iterable[ScoreRecord], path: str | os.PathLike, append: bool = False
) -> int:
    count = 0
    with open(path, "a" if append else "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(score_record_to_dict(record), ensure_ascii=False, sort_keys=True))
            fh.write("\n")
            count += 1
    return count


def read_score_records(path: str | os.PathLike) -> Iterator[ScoreRecord]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"{os.fspath(path)}:{lineno}: invalid JSON ({exc.msg})")
            if isinstance(obj, dict) and obj.get("_meta"):
                continue
            yield score_record_from_dict(obj)
