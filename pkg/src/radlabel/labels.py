"""Canonical condition set, label vocabularies, and report-label transforms.

Everything downstream (metrics, regression features, file columns) uses the
fixed 14-condition ordering defined here; vectors indexed by condition are
always in this order.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

CONDITIONS: tuple[str, ...] = (
    "No Finding",
    "Enlarged Cardiomediastinum",
    "Cardiomegaly",
    "Lung Opacity",
    "Lung Lesion",
    "Edema",
    "Consolidation",
    "Pneumonia",
    "Atelectasis",
    "Pneumothorax",
    "Pleural Effusion",
    "Pleural Other",
    "Fracture",
    "Support Devices",
)
N_CONDITIONS = len(CONDITIONS)
CONDITION_INDEX: dict[str, int] = {name: i for i, name in enumerate(CONDITIONS)}

# "No Finding" has a restricted report alphabet: automatic labelers only emit
# positive or blank for it.
NO_FINDING = "No Finding"


class ReportLabel(enum.Enum):
    """One 4-class report label for a single condition."""

    POSITIVE = "positive"
    NEGATIVE = "negative"
    UNCERTAIN = "uncertain"
    BLANK = "blank"


class UncertaintyPolicy(enum.Enum):
    """How uncertain report labels are resolved to binary labels."""

    ZEROS = "zeros"
    ONES = "ones"
    TO_TRUTH = "to-truth"
    TO_OPPOSITE = "to-opposite"

    @property
    def needs_truth(self) -> bool:
        return self in (UncertaintyPolicy.TO_TRUTH, UncertaintyPolicy.TO_OPPOSITE)


# One-hot layout: per condition, three indicator columns in this class order.
# Blank is the all-zero reference category and has no column.
ONE_HOT_CLASSES: tuple[ReportLabel, ...] = (
    ReportLabel.POSITIVE,
    ReportLabel.NEGATIVE,
    ReportLabel.UNCERTAIN,
)
FEATURE_NAMES: tuple[str, ...] = tuple(
    f"{condition} {cls.value.capitalize()}"
    for condition in CONDITIONS
    for cls in ONE_HOT_CLASSES
)
N_FEATURES = len(FEATURE_NAMES)


def feature_index(condition: str, label: ReportLabel) -> int:
    """Column index of the (condition, class) indicator in the one-hot layout."""
    if label not in ONE_HOT_CLASSES:
        raise ValueError(f"no one-hot column for label {label!r}")
    return 3 * CONDITION_INDEX[condition] + ONE_HOT_CLASSES.index(label)


def encode_one_hot(labels: Sequence[ReportLabel]) -> np.ndarray:
    """Encode 14 report labels as a 42-bit indicator vector.

    Per condition at most one of the three class bits is set; blank sets
    none. Deterministic and lossless for the non-blank classes.
    """
    if len(labels) != N_CONDITIONS:
        raise ValueError(f"expected {N_CONDITIONS} report labels, got {len(labels)}")
    bits = np.zeros(N_FEATURES, dtype=np.int64)
    for i, label in enumerate(labels):
        if label is not ReportLabel.BLANK:
            bits[3 * i + ONE_HOT_CLASSES.index(label)] = 1
    return bits


def decode_one_hot(bits: Sequence[int]) -> tuple[ReportLabel, ...]:
    """Invert :func:`encode_one_hot`; all-zero triples decode to blank."""
    arr = np.asarray(bits)
    if arr.shape != (N_FEATURES,):
        raise ValueError(f"expected a length-{N_FEATURES} bit vector")
    out = []
    for i in range(N_CONDITIONS):
        triple = arr[3 * i : 3 * i + 3]
        set_bits = np.flatnonzero(triple)
        if len(set_bits) > 1:
            raise ValueError(f"more than one class bit set for {CONDITIONS[i]}")
        if len(set_bits) == 0:
            out.append(ReportLabel.BLANK)
        else:
            out.append(ONE_HOT_CLASSES[int(set_bits[0])])
    return tuple(out)


def binarize(
    labels: Sequence[ReportLabel],
    policy: UncertaintyPolicy,
    truth: Optional[Sequence[int]] = None,
) -> np.ndarray:
    """Map 14 report labels to binary labels (1 positive, 0 negative).

    Blank always maps to negative, before any uncertainty handling.
    Positive and negative pass through. Uncertain resolves per policy:
    zeros to negative, ones to positive, to-truth to the image label,
    to-opposite to its complement.
    """
    if len(labels) != N_CONDITIONS:
        raise ValueError(f"expected {N_CONDITIONS} report labels, got {len(labels)}")
    if policy.needs_truth:
        if truth is None:
            raise ValueError(f"policy {policy.value} requires image truth")
        if len(truth) != N_CONDITIONS:
            raise ValueError("truth length mismatch")
    out = np.zeros(N_CONDITIONS, dtype=np.int64)
    for i, label in enumerate(labels):
        if label is ReportLabel.POSITIVE:
            out[i] = 1
        elif label in (ReportLabel.NEGATIVE, ReportLabel.BLANK):
            out[i] = 0
        elif policy is UncertaintyPolicy.ZEROS:
            out[i] = 0
        elif policy is UncertaintyPolicy.ONES:
            out[i] = 1
        elif policy is UncertaintyPolicy.TO_TRUTH:
            out[i] = int(truth[i])
        else:
            out[i] = 1 - int(truth[i])
    return out


@dataclass(frozen=True)
class Study:
    """Per-study bundle: report text, report labels, image truth, probabilities.

    Each channel is optional; any present vector has length 14 in canonical
    condition order.
    """

    id: str
    impression: Optional[str] = None
    report_labels: Optional[tuple[ReportLabel, ...]] = None
    image_truth: Optional[tuple[int, ...]] = None
    probabilities: Optional[tuple[float, ...]] = None

    def __post_init__(self):
        if not self.id:
            raise ValueError("study id must be a non-empty string")
        if self.report_labels is not None:
            object.__setattr__(self, "report_labels", tuple(self.report_labels))
            if len(self.report_labels) != N_CONDITIONS:
                raise ValueError(f"study {self.id}: report labels must have length {N_CONDITIONS}")
            if not all(isinstance(v, ReportLabel) for v in self.report_labels):
                raise ValueError(f"study {self.id}: report labels must be ReportLabel values")
        if self.image_truth is not None:
            object.__setattr__(self, "image_truth", tuple(int(v) for v in self.image_truth))
            if len(self.image_truth) != N_CONDITIONS:
                raise ValueError(f"study {self.id}: image truth must have length {N_CONDITIONS}")
            if not all(v in (0, 1) for v in self.image_truth):
                raise ValueError(f"study {self.id}: image truth values must be 0 or 1")
        if self.probabilities is not None:
            object.__setattr__(self, "probabilities", tuple(float(v) for v in self.probabilities))
            if len(self.probabilities) != N_CONDITIONS:
                raise ValueError(f"study {self.id}: probabilities must have length {N_CONDITIONS}")
            for v in self.probabilities:
                if not np.isfinite(v) or not 0.0 <= v <= 1.0:
                    raise ValueError(f"study {self.id}: probability {v!r} outside [0, 1]")


CHANNELS = ("impression", "report_labels", "image_truth", "probabilities")


@dataclass(frozen=True)
class Corpus:
    """Ordered collection of studies with unique ids.

    A channel counts as present only when every study carries it.
    """

    studies: tuple[Study, ...]
    provenance: str = ""

    def __post_init__(self):
        object.__setattr__(self, "studies", tuple(self.studies))
        seen = set()
        for s in self.studies:
            if s.id in seen:
                raise ValueError(f"duplicate study id {s.id!r}")
            seen.add(s.id)

    def __len__(self) -> int:
        return len(self.studies)

    def ids(self) -> tuple[str, ...]:
        return tuple(s.id for s in self.studies)

    def has_channel(self, channel: str) -> bool:
        if channel not in CHANNELS:
            raise ValueError(f"unknown channel {channel!r}")
        return bool(self.studies) and all(
            getattr(s, channel) is not None for s in self.studies
        )

    @property
    def has_report_labels(self) -> bool:
        return self.has_channel("report_labels")

    @property
    def has_image_truth(self) -> bool:
        return self.has_channel("image_truth")

    @property
    def has_probabilities(self) -> bool:
        return self.has_channel("probabilities")

    @property
    def has_impressions(self) -> bool:
        return self.has_channel("impression")

    def require_channel(self, channel: str) -> None:
        if not self.has_channel(channel):
            raise ValueError(f"corpus {self.provenance!r} is missing the {channel} channel")

    def report_label_rows(self) -> list[tuple[ReportLabel, ...]]:
        self.require_channel("report_labels")
        return [s.report_labels for s in self.studies]

    def truth_matrix(self) -> np.ndarray:
        self.require_channel("image_truth")
        return np.array([s.image_truth for s in self.studies], dtype=np.int64)

    def probability_matrix(self) -> np.ndarray:
        self.require_channel("probabilities")
        return np.array([s.probabilities for s in self.studies], dtype=np.float64)

    def impressions(self) -> tuple[str, ...]:
        self.require_channel("impression")
        return tuple(s.impression for s in self.studies)


def binarize_corpus(corpus: Corpus, policy: UncertaintyPolicy) -> np.ndarray:
    """Binarize every study's report labels; returns an (n, 14) 0/1 matrix."""
    corpus.require_channel("report_labels")
    if policy.needs_truth:
        corpus.require_channel("image_truth")
        return np.array(
            [binarize(s.report_labels, policy, s.image_truth) for s in corpus.studies]
        )
    return np.array([binarize(s.report_labels, policy) for s in corpus.studies])


def one_hot_matrix(corpus: Corpus) -> np.ndarray:
    """Stack per-study one-hot encodings into an (n, 42) matrix."""
    corpus.require_channel("report_labels")
    return np.array([encode_one_hot(s.report_labels) for s in corpus.studies], dtype=np.float64)


def check_no_finding_alphabet(corpus: Corpus, source: str = "") -> int:
    """Warn when labeler-sourced "No Finding" labels fall outside {positive, blank}.

    Returns the violation count; the corpus is kept as ingested.
    """
    if not corpus.has_report_labels:
        return 0
    idx = CONDITION_INDEX[NO_FINDING]
    bad = [
        (s.id, s.report_labels[idx].value)
        for s in corpus.studies
        if s.report_labels[idx] not in (ReportLabel.POSITIVE, ReportLabel.BLANK)
    ]
    if bad:
        first_id, first_value = bad[0]
        where = f" in {source}" if source else ""
        warnings.warn(
            f"{len(bad)} study(ies){where} carry a {NO_FINDING!r} label outside"
            f" {{positive, blank}} (first: study {first_id!r} labeled {first_value!r})",
            stacklevel=2,
        )
    return len(bad)


def join_corpora(corpora: Sequence[Corpus]) -> Corpus:
    """Inner-join corpora on study id, merging their channels.

    Study order follows the first corpus. Two corpora providing the same
    channel is an error; an empty id intersection is an error. Dropped ids
    are reported through a warning.
    """
    if not corpora:
        raise ValueError("no corpora to join")
    provided: dict[str, str] = {}
    for corpus in corpora:
        for channel in CHANNELS:
            if corpus.has_channel(channel):
                if channel in provided:
                    raise ValueError(
                        f"channel {channel} provided by both {provided[channel]!r}"
                        f" and {corpus.provenance!r}"
                    )
                provided[channel] = corpus.provenance
    common = set(corpora[0].ids())
    for corpus in corpora[1:]:
        common &= set(corpus.ids())
    if not common:
        raise ValueError("corpora share no study ids")
    drops = [len(corpus) - len(common) for corpus in corpora]
    if any(drops):
        warnings.warn(
            "join dropped studies without a match: "
            + ", ".join(f"{corpus.provenance or i}: {d}" for i, (corpus, d) in enumerate(zip(corpora, drops))),
            stacklevel=2,
        )
    by_id = [{s.id: s for s in corpus.studies} for corpus in corpora]
    merged = []
    for sid in corpora[0].ids():
        if sid not in common:
            continue
        parts = {}
        for lookup in by_id:
            s = lookup[sid]
            for channel in CHANNELS:
                value = getattr(s, channel)
                if value is not None:
                    if channel in parts and parts[channel] != value:
                        raise ValueError(f"conflicting {channel} values for study {sid!r}")
                    parts.setdefault(channel, value)
        merged.append(Study(id=sid, **parts))
    provenance = "+".join(c.provenance for c in corpora if c.provenance)
    return Corpus(studies=tuple(merged), provenance=provenance)
