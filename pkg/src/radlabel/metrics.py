"""Agreement and evaluation statistics.

F1 and Cohen's kappa over binary labels, macro and prevalence-weighted
averages, evaluation-condition selection, disagreement counts, optimistic
and pessimistic agreement bounds, and the paired bootstrap used to compare
two predictors against a shared ground truth.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .labels import (
    CONDITIONS,
    Corpus,
    ReportLabel,
    Study,
    UncertaintyPolicy,
    binarize_corpus,
)


@dataclass(frozen=True)
class ConfusionCounts:
    """2x2 counts; tp + fp + fn + tn equals the number of scored studies."""

    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


def confusion_counts(pred: Sequence[int], truth: Sequence[int]) -> ConfusionCounts:
    """Count tp/fp/fn/tn for aligned binary vectors."""
    p = np.asarray(pred, dtype=np.int64)
    t = np.asarray(truth, dtype=np.int64)
    if p.shape != t.shape or p.ndim != 1:
        raise ValueError("pred and truth must be 1-d vectors of equal length")
    if p.size == 0:
        raise ValueError("cannot score an empty label vector")
    return ConfusionCounts(
        tp=int(np.sum((p == 1) & (t == 1))),
        fp=int(np.sum((p == 1) & (t == 0))),
        fn=int(np.sum((p == 0) & (t == 1))),
        tn=int(np.sum((p == 0) & (t == 0))),
    )


def f1_score(counts: ConfusionCounts) -> float:
    """F1 = 2tp / (2tp + fp + fn).

    Degenerate conventions, applied everywhere including inside bootstrap
    replicates: tp = fp = fn = 0 scores 1.0; tp = 0 with fp + fn > 0
    scores 0.0.
    """
    denom = 2 * counts.tp + counts.fp + counts.fn
    if denom == 0:
        return 1.0
    return 2 * counts.tp / denom


def cohens_kappa(pred: Sequence[int], truth: Sequence[int]) -> float:
    """Cohen's kappa for two binary labelings.

    kappa = (po - pe) / (1 - pe), with po the observed agreement rate and
    pe the chance agreement from the marginal products of the two raters.
    When pe = 1 (both raters degenerate) the value is 1.0 if po = 1 and
    0.0 otherwise.
    """
    c = confusion_counts(pred, truth)
    n = c.total
    po = (c.tp + c.tn) / n
    pe = ((c.tp + c.fp) / n) * ((c.tp + c.fn) / n) + ((c.fn + c.tn) / n) * ((c.fp + c.tn) / n)
    if pe == 1.0:
        return 1.0 if po == 1.0 else 0.0
    return (po - pe) / (1.0 - pe)


def macro_average(scores: Sequence[float]) -> float:
    """Arithmetic mean of per-condition scores."""
    if len(scores) == 0:
        raise ValueError("cannot average an empty score list")
    return float(np.mean(scores))


def weighted_average(scores: Sequence[float], weights: Sequence[float]) -> float:
    """Mean of scores weighted by positive-label counts."""
    if len(scores) != len(weights):
        raise ValueError("scores and weights must have equal length")
    if len(scores) == 0:
        raise ValueError("cannot average an empty score list")
    w = np.asarray(weights, dtype=np.float64)
    if np.any(w < 0):
        raise ValueError("weights must be non-negative")
    total = w.sum()
    if total <= 0:
        raise ValueError("total weight must be positive")
    return float(np.dot(scores, w) / total)


@dataclass(frozen=True)
class MetricsReport:
    """Per-condition scores plus macro and prevalence-weighted averages."""

    per_condition: dict[str, float]
    prevalence: dict[str, int]

    def __post_init__(self):
        missing = set(self.per_condition) - set(self.prevalence)
        if missing:
            raise ValueError(f"prevalence missing for {sorted(missing)}")

    @property
    def conditions(self) -> tuple[str, ...]:
        return tuple(self.per_condition)

    @property
    def macro_average(self) -> float:
        return macro_average(list(self.per_condition.values()))

    @property
    def weighted_average(self) -> float:
        return weighted_average(
            list(self.per_condition.values()),
            [self.prevalence[c] for c in self.per_condition],
        )


def select_evaluation_conditions(corpus: Corpus, min_positive: int = 50) -> list[str]:
    """Conditions whose image-truth positive count meets the floor.

    Returned in canonical order; requires the image-truth channel.
    """
    truth = corpus.truth_matrix()
    positives = truth.sum(axis=0)
    return [c for i, c in enumerate(CONDITIONS) if positives[i] >= min_positive]


def _aligned_pair(report_corpus: Corpus, truth_corpus: Corpus) -> tuple[Corpus, np.ndarray]:
    """Reorder the truth corpus to match the report corpus by study id."""
    report_corpus.require_channel("report_labels")
    truth_corpus.require_channel("image_truth")
    if set(report_corpus.ids()) != set(truth_corpus.ids()):
        raise ValueError("corpora are misaligned: study id sets differ")
    by_id = {s.id: s for s in truth_corpus.studies}
    truth = np.array(
        [by_id[sid].image_truth for sid in report_corpus.ids()], dtype=np.int64
    )
    return report_corpus, truth


@dataclass(frozen=True)
class DisagreementCounts:
    positive_image_negative_report: int
    negative_image_positive_report: int


def disagreement_counts(
    report_corpus: Corpus, truth_corpus: Corpus
) -> dict[str, DisagreementCounts]:
    """Per condition, counts of the two disagreement directions.

    Report labels are resolved blank-to-negative first; studies whose report
    label stays uncertain are excluded from both counts for that condition.
    """
    report_corpus, truth = _aligned_pair(report_corpus, truth_corpus)
    rows = report_corpus.report_label_rows()
    out = {}
    for i, condition in enumerate(CONDITIONS):
        pos_neg = 0
        neg_pos = 0
        for row, t in zip(rows, truth[:, i]):
            label = row[i]
            if label is ReportLabel.UNCERTAIN:
                continue
            report_binary = 1 if label is ReportLabel.POSITIVE else 0
            if t == 1 and report_binary == 0:
                pos_neg += 1
            elif t == 0 and report_binary == 1:
                neg_pos += 1
        out[condition] = DisagreementCounts(pos_neg, neg_pos)
    return out


@dataclass(frozen=True)
class AgreementBounds:
    low_f1: float
    high_f1: float
    low_kappa: float
    high_kappa: float


def agreement_bounds(
    report_corpus: Corpus, truth_corpus: Corpus
) -> dict[str, AgreementBounds]:
    """Pessimistic and optimistic per-condition agreement.

    High scores resolve uncertain report labels to the image truth,
    low scores to its opposite; blank maps to negative in both.
    """
    report_corpus, truth = _aligned_pair(report_corpus, truth_corpus)
    aligned = Corpus(
        studies=tuple(
            Study(
                id=s.id,
                impression=s.impression,
                report_labels=s.report_labels,
                image_truth=tuple(int(v) for v in t),
                probabilities=s.probabilities,
            )
            for s, t in zip(report_corpus.studies, truth)
        ),
        provenance=report_corpus.provenance,
    )
    high = binarize_corpus(aligned, UncertaintyPolicy.TO_TRUTH)
    low = binarize_corpus(aligned, UncertaintyPolicy.TO_OPPOSITE)
    out = {}
    for i, condition in enumerate(CONDITIONS):
        t = truth[:, i]
        out[condition] = AgreementBounds(
            low_f1=f1_score(confusion_counts(low[:, i], t)),
            high_f1=f1_score(confusion_counts(high[:, i], t)),
            low_kappa=cohens_kappa(low[:, i], t),
            high_kappa=cohens_kappa(high[:, i], t),
        )
    return out


@dataclass(frozen=True)
class BootstrapResult:
    """Paired-difference bootstrap summary.

    ci_low <= ci_high always holds; the mean can escape a percentile
    interval for strongly skewed replicate distributions.
    """

    mean_diff: float
    ci_low: float
    ci_high: float
    replicates: int
    seed: int


def _f1_from_count_arrays(tp: np.ndarray, fp: np.ndarray, fn: np.ndarray) -> np.ndarray:
    denom = 2 * tp + fp + fn
    return np.where(denom == 0, 1.0, 2 * tp / np.where(denom == 0, 1, denom))


def _bootstrap_diffs(
    preds_a: np.ndarray,
    preds_b: np.ndarray,
    truth: np.ndarray,
    replicates: int,
    seed: int,
    weights: Optional[np.ndarray],
) -> np.ndarray:
    """Replicate-level differences of (weighted) average F1, resampling studies.

    Each replicate's indices come from one rng stream seeded by `seed`,
    drawn up front, so results do not depend on evaluation order.
    """
    n = truth.shape[0]
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, n, size=(replicates, n))
    diffs = None
    for preds, sign in ((preds_a, 1.0), (preds_b, -1.0)):
        tp = (preds & truth).astype(np.int8)
        fp = (preds & ~truth & 1).astype(np.int8)
        fn = (~preds & 1 & truth).astype(np.int8)
        tp_r = tp[idx].sum(axis=1, dtype=np.int64)
        fp_r = fp[idx].sum(axis=1, dtype=np.int64)
        fn_r = fn[idx].sum(axis=1, dtype=np.int64)
        f1 = _f1_from_count_arrays(tp_r, fp_r, fn_r)
        if weights is None:
            avg = f1.mean(axis=1)
        else:
            avg = f1 @ weights / weights.sum()
        diffs = sign * avg if diffs is None else diffs + sign * avg
    return diffs


def _interval(diffs: np.ndarray, level: float) -> tuple[float, float]:
    lo = (1.0 - level) / 2.0
    qs = np.quantile(diffs, [lo, 1.0 - lo])
    return float(qs[0]), float(qs[1])


def _as_binary_matrix(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.int64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a vector or matrix of binary labels")
    if not np.isin(arr, (0, 1)).all():
        raise ValueError(f"{name} must contain only 0/1 labels")
    return arr


def bootstrap_paired_f1_diff(
    preds_a: Sequence[int],
    preds_b: Sequence[int],
    truth: Sequence[int],
    replicates: int = 1000,
    level: float = 0.95,
    seed: int = 0,
) -> BootstrapResult:
    """Mean and percentile CI of F1(a) - F1(b) over bootstrap resamples.

    Studies are resampled with replacement per replicate; the same indices
    score both predictors (paired design). Deterministic given the seed.
    """
    a = _as_binary_matrix(preds_a, "preds_a")
    b = _as_binary_matrix(preds_b, "preds_b")
    t = _as_binary_matrix(truth, "truth")
    if not (a.shape == b.shape == t.shape):
        raise ValueError("preds_a, preds_b, and truth must be aligned")
    if t.shape[0] == 0:
        raise ValueError("cannot bootstrap an empty sample")
    if replicates < 1:
        raise ValueError("replicates must be at least 1")
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie strictly between 0 and 1")
    if a.shape[1] != 1:
        raise ValueError("bootstrap_paired_f1_diff scores one condition; see the averaged variant")
    diffs = _bootstrap_diffs(a, b, t, replicates, seed, weights=None)
    lo, hi = _interval(diffs, level)
    return BootstrapResult(float(diffs.mean()), lo, hi, replicates, seed)


def bootstrap_paired_average_f1_diff(
    preds_a,
    preds_b,
    truth,
    weights: Optional[Sequence[float]] = None,
    replicates: int = 1000,
    level: float = 0.95,
    seed: int = 0,
) -> BootstrapResult:
    """Paired bootstrap on the (weighted) average F1 across condition columns.

    `weights` defaults to the plain mean; pass full-sample positive counts
    for the prevalence-weighted average.
    """
    a = _as_binary_matrix(preds_a, "preds_a")
    b = _as_binary_matrix(preds_b, "preds_b")
    t = _as_binary_matrix(truth, "truth")
    if not (a.shape == b.shape == t.shape):
        raise ValueError("preds_a, preds_b, and truth must be aligned")
    if t.shape[0] == 0 or t.shape[1] == 0:
        raise ValueError("cannot bootstrap an empty sample")
    if replicates < 1:
        raise ValueError("replicates must be at least 1")
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie strictly between 0 and 1")
    w = None
    if weights is not None:
        w = np.asarray(weights, dtype=np.float64)
        if w.shape != (t.shape[1],):
            raise ValueError("weights must have one entry per condition column")
        if w.sum() <= 0:
            raise ValueError("total weight must be positive")
    diffs = _bootstrap_diffs(a, b, t, replicates, seed, weights=w)
    lo, hi = _interval(diffs, level)
    return BootstrapResult(float(diffs.mean()), lo, hi, replicates, seed)
