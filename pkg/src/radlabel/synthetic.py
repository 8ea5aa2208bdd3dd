"""Synthetic corpus generator for desk-scale verification.

Produces aligned image truth, 4-class report labels, impression text, and
teacher probabilities from a small generative model: per-condition image
prevalence, report-noise rates (uncertain / blank / polarity flip), parent
blanking for hierarchy pairs, token templates for the text, and a noisy
calibrated teacher. Everything is deterministic given the seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .labels import (
    CONDITIONS,
    CONDITION_INDEX,
    Corpus,
    N_CONDITIONS,
    NO_FINDING,
    ReportLabel,
    Study,
)
from .distill import tokenize
from .glm import sigmoid


@dataclass(frozen=True)
class ConditionProfile:
    """Image prevalence and report-noise rates for one condition.

    Within each truth sign the categorical rates (uncertain, blank, flip)
    must sum to at most 1; the remainder goes to the faithful label.
    """

    prevalence: float = 0.25
    uncertain_pos: float = 0.0  # P(report uncertain | image positive)
    uncertain_neg: float = 0.0
    blank_pos: float = 0.0  # P(report blank | image positive)
    blank_neg: float = 0.0
    flip: float = 0.0  # P(report polarity wrong)

    def __post_init__(self):
        if not 0.0 < self.prevalence < 1.0:
            raise ValueError("prevalence must lie strictly between 0 and 1")
        rates = (
            self.uncertain_pos,
            self.uncertain_neg,
            self.blank_pos,
            self.blank_neg,
            self.flip,
        )
        if any(r < 0.0 or r > 1.0 for r in rates):
            raise ValueError("noise rates must lie in [0, 1]")
        if self.uncertain_pos + self.blank_pos + self.flip > 1.0:
            raise ValueError("positive-side rates sum past 1")
        if self.uncertain_neg + self.blank_neg + self.flip > 1.0:
            raise ValueError("negative-side rates sum past 1")


def _default_templates() -> dict[str, tuple[str, ...]]:
    return {name: tuple(tokenize(name)) for name in CONDITIONS}


@dataclass(frozen=True)
class SyntheticSpec:
    """Full generator configuration.

    `hierarchy` pairs (child, parent) do two things: a positive child in
    the image implies a positive parent (the parent's stated prevalence is
    preserved by drawing the residual rate), and a positive child REPORT
    blanks the parent report label. `detail_leak` is the chance that a
    mentioned condition's phrase carries a truth-revealing modifier,
    standing in for the nuance that report text keeps but 4-class labels
    discard.
    """

    profiles: dict[str, ConditionProfile]
    hierarchy: tuple[tuple[str, str], ...] = ()
    templates: dict[str, tuple[str, ...]] = field(default_factory=_default_templates)
    detail_leak: float = 0.0
    teacher_sharpness: float = 2.5
    teacher_noise: float = 1.0

    def __post_init__(self):
        missing = [c for c in CONDITIONS if c not in self.profiles]
        if missing:
            raise ValueError(f"profiles missing for {missing}")
        unknown = [c for c in self.profiles if c not in CONDITION_INDEX]
        if unknown:
            raise ValueError(f"unknown conditions in profiles: {unknown}")
        if not 0.0 <= self.detail_leak <= 1.0:
            raise ValueError("detail_leak must lie in [0, 1]")
        if self.teacher_noise < 0:
            raise ValueError("teacher_noise must be non-negative")
        children = set()
        parents = set()
        for child, parent in self.hierarchy:
            if child not in CONDITION_INDEX or parent not in CONDITION_INDEX:
                raise ValueError(f"unknown condition in hierarchy pair ({child}, {parent})")
            if child == parent:
                raise ValueError("a condition cannot parent itself")
            children.add(child)
            parents.add(parent)
        overlap = children & parents
        if overlap:
            raise ValueError(f"hierarchy chains are not supported: {sorted(overlap)}")
        for parent in parents:
            p_any = self._p_any_child(parent)
            if self.profiles[parent].prevalence < p_any:
                raise ValueError(
                    f"{parent}: prevalence {self.profiles[parent].prevalence} below the"
                    f" combined child positive rate {p_any:.4f}"
                )

    def _children_of(self, parent: str) -> list[str]:
        return [c for c, p in self.hierarchy if p == parent]

    def _p_any_child(self, parent: str) -> float:
        p_none = 1.0
        for child in self._children_of(parent):
            p_none *= 1.0 - self.profiles[child].prevalence
        return 1.0 - p_none

    @classmethod
    def uniform(
        cls,
        profile: ConditionProfile,
        hierarchy: Sequence[tuple[str, str]] = (),
        detail_leak: float = 0.0,
        teacher_sharpness: float = 2.5,
        teacher_noise: float = 1.0,
    ) -> "SyntheticSpec":
        """Same profile for every condition."""
        return cls(
            profiles={c: profile for c in CONDITIONS},
            hierarchy=tuple(hierarchy),
            detail_leak=detail_leak,
            teacher_sharpness=teacher_sharpness,
            teacher_noise=teacher_noise,
        )

    @classmethod
    def noiseless(cls, prevalence: float = 0.3) -> "SyntheticSpec":
        """Faithful reports, no hierarchy, near-deterministic teacher."""
        return cls.uniform(
            ConditionProfile(prevalence=prevalence),
            teacher_sharpness=4.0,
            teacher_noise=0.0,
        )

    @classmethod
    def demo(cls) -> "SyntheticSpec":
        """A structured corpus exercising hierarchy suppression and hedging.

        Two parent conditions are blanked by their positive children, a few
        conditions hedge heavily, negatives frequently go unmentioned, and
        six conditions are rare. Impressions leak severity detail.
        """
        rare = ConditionProfile(prevalence=0.01, blank_pos=0.2, blank_neg=0.99, flip=0.003)
        profiles = {
            NO_FINDING: ConditionProfile(
                prevalence=0.10, blank_pos=0.12, flip=0.02
            ),
            "Enlarged Cardiomediastinum": ConditionProfile(
                prevalence=0.45, uncertain_pos=0.03, blank_pos=0.62, blank_neg=0.86, flip=0.02
            ),
            "Cardiomegaly": ConditionProfile(
                prevalence=0.35, uncertain_pos=0.10, uncertain_neg=0.01, blank_pos=0.05,
                blank_neg=0.84, flip=0.02
            ),
            "Lung Opacity": ConditionProfile(
                prevalence=0.50, uncertain_pos=0.03, blank_pos=0.58, blank_neg=0.86, flip=0.02
            ),
            "Lung Lesion": rare,
            "Edema": ConditionProfile(
                prevalence=0.22, uncertain_pos=0.24, uncertain_neg=0.015, blank_pos=0.06,
                blank_neg=0.85, flip=0.02
            ),
            "Consolidation": rare,
            "Pneumonia": rare,
            "Atelectasis": ConditionProfile(
                prevalence=0.28, uncertain_pos=0.26, uncertain_neg=0.015, blank_pos=0.08,
                blank_neg=0.85, flip=0.02
            ),
            "Pneumothorax": rare,
            "Pleural Effusion": ConditionProfile(
                prevalence=0.20, uncertain_pos=0.06, blank_pos=0.03, blank_neg=0.88, flip=0.01
            ),
            "Pleural Other": rare,
            "Fracture": rare,
            "Support Devices": ConditionProfile(
                prevalence=0.30, blank_pos=0.02, blank_neg=0.88, flip=0.01
            ),
        }
        return cls(
            profiles=profiles,
            hierarchy=(
                ("Cardiomegaly", "Enlarged Cardiomediastinum"),
                ("Edema", "Lung Opacity"),
                ("Atelectasis", "Lung Opacity"),
            ),
            detail_leak=1.0,
            teacher_sharpness=2.2,
            teacher_noise=0.8,
        )


_LEAK_POSITIVE = "prominent"
_LEAK_NEGATIVE = "resolving"
_HEDGE = "possible"
_NEGATION = "no"


def generate_synthetic_corpus(spec: SyntheticSpec, n: int, seed: int) -> Corpus:
    """Draw a corpus of `n` studies with all four channels populated."""
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = np.random.default_rng(seed)
    prevalence = np.array([spec.profiles[c].prevalence for c in CONDITIONS])
    parents = {p for _, p in spec.hierarchy}

    # image truth: children first, parents forced positive by a positive child
    u_truth = rng.random((n, N_CONDITIONS))
    truth = (u_truth < prevalence).astype(np.int64)
    for parent in sorted(parents, key=CONDITION_INDEX.get):
        j = CONDITION_INDEX[parent]
        p_any = spec._p_any_child(parent)
        residual = (spec.profiles[parent].prevalence - p_any) / (1.0 - p_any)
        any_child = np.zeros(n, dtype=bool)
        for child in spec._children_of(parent):
            any_child |= truth[:, CONDITION_INDEX[child]] == 1
        truth[:, j] = np.where(any_child, 1, (u_truth[:, j] < residual).astype(np.int64))

    # report labels from per-sign categorical noise
    u_report = rng.random((n, N_CONDITIONS))
    report = np.empty((n, N_CONDITIONS), dtype=object)
    for j, condition in enumerate(CONDITIONS):
        prof = spec.profiles[condition]
        t = truth[:, j] == 1
        u = u_report[:, j]
        p_unc = np.where(t, prof.uncertain_pos, prof.uncertain_neg)
        p_blank = np.where(t, prof.blank_pos, prof.blank_neg)
        faithful = np.where(t, ReportLabel.POSITIVE, ReportLabel.NEGATIVE)
        flipped = np.where(t, ReportLabel.NEGATIVE, ReportLabel.POSITIVE)
        label = np.where(
            u < p_unc,
            ReportLabel.UNCERTAIN,
            np.where(
                u < p_unc + p_blank,
                ReportLabel.BLANK,
                np.where(u < p_unc + p_blank + prof.flip, flipped, faithful),
            ),
        )
        report[:, j] = label

    # the automatic labeler only emits positive or blank for "No Finding"
    nf = CONDITION_INDEX[NO_FINDING]
    nf_col = report[:, nf]
    nf_col[(nf_col == ReportLabel.NEGATIVE) | (nf_col == ReportLabel.UNCERTAIN)] = ReportLabel.BLANK

    # hierarchy suppression: a positive child report blanks the parent report
    for child, parent in spec.hierarchy:
        mask = report[:, CONDITION_INDEX[child]] == ReportLabel.POSITIVE
        report[mask, CONDITION_INDEX[parent]] = ReportLabel.BLANK

    # impressions from token templates
    u_leak = rng.random((n, N_CONDITIONS))
    impressions = []
    for i in range(n):
        tokens: list[str] = []
        for j, condition in enumerate(CONDITIONS):
            label = report[i, j]
            if label is ReportLabel.BLANK:
                continue
            phrase = list(spec.templates.get(condition, ()))
            if label is ReportLabel.NEGATIVE:
                tokens.extend([_NEGATION, *phrase])
                continue
            if label is ReportLabel.UNCERTAIN:
                tokens.append(_HEDGE)
            if u_leak[i, j] < spec.detail_leak:
                tokens.append(_LEAK_POSITIVE if truth[i, j] else _LEAK_NEGATIVE)
            tokens.extend(phrase)
        impressions.append(" ".join(tokens))

    # teacher probabilities: noisy calibrated logit of the truth
    logits = spec.teacher_sharpness * (2.0 * truth - 1.0)
    if spec.teacher_noise > 0:
        logits = logits + spec.teacher_noise * rng.standard_normal((n, N_CONDITIONS))
    teacher = sigmoid(logits)

    width = max(5, len(str(n)))
    studies = tuple(
        Study(
            id=f"s{i:0{width}d}",
            impression=impressions[i],
            report_labels=tuple(report[i]),
            image_truth=tuple(int(v) for v in truth[i]),
            probabilities=tuple(float(v) for v in teacher[i]),
        )
        for i in range(n)
    )
    return Corpus(studies=studies, provenance=f"synthetic(seed={seed})")
