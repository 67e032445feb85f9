"""Threshold search, binary metrics with bootstrap intervals, comparisons.

Detector scores are turned into labels by a cut-off: an output is predicted
factual when its score is strictly above the threshold, hallucinated
otherwise. The threshold is chosen by exhaustive search over the hundredth
grid {0.00, 0.01, ..., 1.00}, separately for accuracy and F1. Ranking quality
is summarized threshold-free as average precision with deterministic tie
grouping. Uncertainty comes from a seeded percentile bootstrap over examples,
reported as mean plus or minus the interval half-width.

The positive class defaults to hallucinated (detection framing) and is
configurable everywhere; reports always state which one they used.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import fsum
from typing import Callable, Iterable, NamedTuple, Sequence, TypeVar

import numpy as np

from .core import HallucheckError, Label

T = TypeVar("T")

THRESHOLD_GRID: tuple[float, ...] = tuple(i / 100 for i in range(101))

DEFAULT_RESAMPLES = 1000
DEFAULT_POSITIVE = Label.HALLUCINATED


class DegenerateLabels(HallucheckError):
    """An operation that needs both label classes saw only one."""


class RefMismatch(HallucheckError):
    """Paired score lists do not cover the same examples."""


@dataclass(frozen=True)
class LabeledScore:
    """A detector score joined with its ground-truth label."""

    score: float
    label: Label
    example_ref: str = ""

    def __post_init__(self) -> None:
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score {self.score} outside [0, 1]")
        object.__setattr__(self, "label", Label(self.label))


@dataclass(frozen=True)
class Confusion:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @property
    def accuracy(self) -> float:
        return (self.tp + self.tn) / self.total if self.total else 0.0

    @property
    def precision(self) -> float:
        denom = self.tp + self.fp
        return self.tp / denom if denom else 0.0

    @property
    def recall(self) -> float:
        denom = self.tp + self.fn
        return self.tp / denom if denom else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r else 0.0


class Metrics(NamedTuple):
    accuracy: float
    precision: float
    recall: float
    f1: float


def _require_both_labels(scores: Sequence[LabeledScore]) -> None:
    labels = {s.label for s in scores}
    if len(labels) < 2:
        raise DegenerateLabels(f"need both labels, saw {sorted(l.value for l in labels)}")


def classify(
    scores: Sequence[LabeledScore],
    threshold: float,
    positive: Label = DEFAULT_POSITIVE,
) -> Confusion:
    """Confusion counts at a cut-off: predicted accurate iff score > threshold."""
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold {threshold} outside [0, 1]")
    tp = fp = tn = fn = 0
    for s in scores:
        predicted = Label.ACCURATE if s.score > threshold else Label.HALLUCINATED
        if predicted == positive:
            if s.label == positive:
                tp += 1
            else:
                fp += 1
        else:
            if s.label == positive:
                fn += 1
            else:
                tn += 1
    return Confusion(tp=tp, fp=fp, tn=tn, fn=fn)


def metrics_at(
    scores: Sequence[LabeledScore],
    threshold: float,
    positive: Label = DEFAULT_POSITIVE,
) -> Metrics:
    c = classify(scores, threshold, positive)
    return Metrics(accuracy=c.accuracy, precision=c.precision, recall=c.recall, f1=c.f1)


_OBJECTIVES: dict[str, Callable[[Confusion], float]] = {
    "accuracy": lambda c: c.accuracy,
    "f1": lambda c: c.f1,
}


def threshold_search(
    scores: Sequence[LabeledScore],
    objective: str = "accuracy",
    positive: Label = DEFAULT_POSITIVE,
) -> tuple[float, float]:
    """Best grid threshold for the objective; ties go to the lowest threshold.

    The grid is walked in ascending order with a strict improvement test, so
    the first threshold reaching the best value wins.
    """
    if objective not in _OBJECTIVES:
        raise ValueError(f"objective must be one of {sorted(_OBJECTIVES)}, got {objective!r}")
    if not scores:
        raise DegenerateLabels("no scores to search over")
    _require_both_labels(scores)
    score_fn = _OBJECTIVES[objective]
    best_threshold = THRESHOLD_GRID[0]
    best_value = score_fn(classify(scores, best_threshold, positive))
    for threshold in THRESHOLD_GRID[1:]:
        value = score_fn(classify(scores, threshold, positive))
        if value > best_value:
            best_threshold, best_value = threshold, value
    return best_threshold, best_value


def auc_pr(scores: Sequence[LabeledScore], positive: Label = DEFAULT_POSITIVE) -> float:
    """Average precision over the ranking induced by the scores.

    Items are ranked most-positive-first: ascending score when the positive
    class is hallucinated (low score = likely hallucination), descending when
    it is accurate. Equal scores form one rank group and take the precision at
    the group's end, which makes the value independent of input order.
    """
    _require_both_labels(scores)
    sign = 1.0 if positive == Label.HALLUCINATED else -1.0
    ordered = sorted(scores, key=lambda s: sign * s.score)
    total_positives = sum(1 for s in scores if s.label == positive)
    ap_terms: list[float] = []
    seen = 0
    seen_positives = 0
    i = 0
    while i < len(ordered):
        j = i
        group_positives = 0
        while j < len(ordered) and ordered[j].score == ordered[i].score:
            if ordered[j].label == positive:
                group_positives += 1
            j += 1
        seen += j - i
        seen_positives += group_positives
        if group_positives:
            ap_terms.append(group_positives * (seen_positives / seen))
        i = j
    return fsum(ap_terms) / total_positives


class BootstrapCI(NamedTuple):
    """Percentile bootstrap summary: replicate mean and 95% interval."""

    mean: float
    half_width: float
    low: float
    high: float
    skipped: int

    def __str__(self) -> str:
        return f"{self.mean:.3f} ± {self.half_width:.3f}"


def _resample_indices(rng: np.random.Generator, n: int) -> np.ndarray:
    return rng.integers(0, n, n)


def bootstrap_ci(
    scores: Sequence[LabeledScore],
    metric_fn: Callable[[Sequence[LabeledScore]], float],
    resamples: int = DEFAULT_RESAMPLES,
    seed: int = 0,
) -> BootstrapCI:
    """Resample examples with replacement and take empirical 2.5/97.5 quantiles.

    Resamples on which the metric degenerates (one label class) are skipped
    and counted. Deterministic for a given seed: the generator draws one
    length-n index vector per resample, in order.
    """
    if not scores:
        raise DegenerateLabels("no scores to resample")
    if resamples < 1:
        raise ValueError("resamples must be >= 1")
    rng = np.random.default_rng(seed)
    n = len(scores)
    replicates: list[float] = []
    skipped = 0
    for _ in range(resamples):
        idx = _resample_indices(rng, n)
        sample = [scores[i] for i in idx]
        try:
            replicates.append(metric_fn(sample))
        except DegenerateLabels:
            skipped += 1
    if not replicates:
        raise DegenerateLabels("every bootstrap resample was degenerate")
    mean = fsum(replicates) / len(replicates)
    low, high = (float(v) for v in np.percentile(replicates, [2.5, 97.5]))
    return BootstrapCI(
        mean=mean, half_width=(high - low) / 2, low=low, high=high, skipped=skipped
    )


@dataclass(frozen=True)
class MethodComparison:
    """Paired bootstrap of metric(b) - metric(a)."""

    difference_mean: float
    low: float
    high: float
    significant: bool
    skipped: int

    def __str__(self) -> str:
        verdict = "significant" if self.significant else "not significant"
        return (
            f"Δ = {self.difference_mean:+.3f} "
            f"[{self.low:+.3f}, {self.high:+.3f}] ({verdict})"
        )


def _by_ref(scores: Sequence[LabeledScore]) -> list[LabeledScore]:
    return sorted(scores, key=lambda s: s.example_ref)


def compare_methods(
    a: Sequence[LabeledScore],
    b: Sequence[LabeledScore],
    metric_fn: Callable[[Sequence[LabeledScore]], float],
    resamples: int = DEFAULT_RESAMPLES,
    seed: int = 0,
) -> MethodComparison:
    """Is method b better than method a? Paired bootstrap over shared examples.

    Each resample draws one index vector applied to both methods, so the same
    examples are picked on both sides. Significant at the 95% level iff the
    percentile interval of the difference excludes zero.
    """
    refs_a = sorted(s.example_ref for s in a)
    refs_b = sorted(s.example_ref for s in b)
    if refs_a != refs_b:
        only_a = set(refs_a) - set(refs_b)
        only_b = set(refs_b) - set(refs_a)
        raise RefMismatch(
            f"methods cover different examples (only in a: {sorted(only_a)[:5]}, "
            f"only in b: {sorted(only_b)[:5]})"
        )
    paired_a = _by_ref(a)
    paired_b = _by_ref(b)
    for sa, sb in zip(paired_a, paired_b):
        if sa.label != sb.label:
            raise RefMismatch(f"labels disagree for example {sa.example_ref!r}")
    rng = np.random.default_rng(seed)
    n = len(paired_a)
    diffs: list[float] = []
    skipped = 0
    for _ in range(resamples):
        idx = _resample_indices(rng, n)
        sample_a = [paired_a[i] for i in idx]
        sample_b = [paired_b[i] for i in idx]
        try:
            diffs.append(metric_fn(sample_b) - metric_fn(sample_a))
        except DegenerateLabels:
            skipped += 1
    if not diffs:
        raise DegenerateLabels("every paired resample was degenerate")
    mean = fsum(diffs) / len(diffs)
    low, high = (float(v) for v in np.percentile(diffs, [2.5, 97.5]))
    significant = low > 0.0 or high < 0.0
    return MethodComparison(
        difference_mean=mean, low=low, high=high, significant=significant, skipped=skipped
    )


def balance_dataset(
    items: Sequence[T],
    get_label: Callable[[T], Label],
    seed: int = 0,
) -> list[T]:
    """Subsample every label class down to the minority count, then shuffle.

    Selection and order are fully determined by the seed.
    """
    groups: dict[Label, list[int]] = {}
    for i, item in enumerate(items):
        groups.setdefault(get_label(item), []).append(i)
    if len(groups) < 2:
        raise DegenerateLabels("cannot balance a single-class dataset")
    minority = min(len(ix) for ix in groups.values())
    rng = np.random.default_rng(seed)
    chosen: list[int] = []
    for label in sorted(groups, key=lambda l: l.value):
        indices = groups[label]
        picked = rng.permutation(len(indices))[:minority]
        chosen.extend(indices[p] for p in sorted(picked))
    order = rng.permutation(len(chosen))
    return [items[chosen[o]] for o in order]


@dataclass(frozen=True)
class EvalReport:
    """One method's row of the summary table, with its provenance."""

    method: str
    positive_class: Label
    n: int
    bootstrap_seed: int
    threshold_accuracy: float
    threshold_f1: float
    accuracy: BootstrapCI
    f1: BootstrapCI
    auc_pr: BootstrapCI

    def __post_init__(self) -> None:
        for name in ("accuracy", "f1", "auc_pr"):
            ci: BootstrapCI = getattr(self, name)
            if not 0.0 <= ci.mean <= 1.0:
                raise ValueError(f"{name} mean {ci.mean} outside [0, 1]")
            if ci.half_width < 0.0:
                raise ValueError(f"{name} half-width {ci.half_width} negative")

    def as_record(self) -> dict:
        return {
            "method": self.method,
            "positive_class": self.positive_class.value,
            "n": self.n,
            "bootstrap_seed": self.bootstrap_seed,
            "threshold_accuracy": self.threshold_accuracy,
            "threshold_f1": self.threshold_f1,
            "accuracy": self.accuracy._asdict(),
            "f1": self.f1._asdict(),
            "auc_pr": self.auc_pr._asdict(),
        }


def evaluate_method(
    method: str,
    scores: Sequence[LabeledScore],
    positive: Label = DEFAULT_POSITIVE,
    resamples: int = DEFAULT_RESAMPLES,
    seed: int = 0,
) -> EvalReport:
    """Full per-method evaluation.

    Thresholds are chosen once on the complete data; the bootstrap then
    resamples examples with those thresholds held fixed, which measures
    sampling variability of the metric rather than of the search.
    """
    threshold_accuracy, _ = threshold_search(scores, "accuracy", positive)
    threshold_f1, _ = threshold_search(scores, "f1", positive)
    accuracy_ci = bootstrap_ci(
        scores,
        lambda s: metrics_at(s, threshold_accuracy, positive).accuracy,
        resamples,
        seed,
    )
    f1_ci = bootstrap_ci(
        scores, lambda s: metrics_at(s, threshold_f1, positive).f1, resamples, seed
    )
    auc_ci = bootstrap_ci(scores, lambda s: auc_pr(s, positive), resamples, seed)
    return EvalReport(
        method=method,
        positive_class=positive,
        n=len(scores),
        bootstrap_seed=seed,
        threshold_accuracy=threshold_accuracy,
        threshold_f1=threshold_f1,
        accuracy=accuracy_ci,
        f1=f1_ci,
        auc_pr=auc_ci,
    )


def render_report_table(reports: Iterable[EvalReport]) -> str:
    """Plain-text summary: one row per method, metric columns with ± CI."""
    reports = list(reports)
    if not reports:
        return "(no methods evaluated)\n"
    header = ["Method", "Accuracy", "F1", "AUC-PR", "thr(acc)", "thr(F1)"]
    rows = [
        [
            r.method,
            str(r.accuracy),
            str(r.f1),
            str(r.auc_pr),
            f"{r.threshold_accuracy:.2f}",
            f"{r.threshold_f1:.2f}",
        ]
        for r in reports
    ]
    widths = [max(len(h), *(len(row[i]) for row in rows)) for i, h in enumerate(header)]
    lines = [
        "  ".join(h.ljust(widths[i]) for i, h in enumerate(header)),
        "  ".join("-" * w for w in widths),
    ]
    lines.extend("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)) for row in rows)
    first = reports[0]
    lines.append("")
    lines.append(
        f"positive class: {first.positive_class.value}; n = {first.n}; "
        f"bootstrap seed = {first.bootstrap_seed}"
    )
    return "\n".join(lines) + "\n"
