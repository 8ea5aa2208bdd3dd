"""Probabilistic text student trained on teacher probabilities.

A linear bag-of-n-grams model with one sigmoid head per condition, fitted
by mini-batch gradient descent on the soft-target cross entropy

    loss = mean over studies and conditions of -(p log q + (1 - p) log(1 - q))

where p is the teacher probability and q the student output. The loss is
minimized at q = p, so a fully converged student reproduces the teacher.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .labels import CONDITIONS, Corpus, N_CONDITIONS
from .glm import sigmoid

_TOKEN = re.compile(r"[a-z0-9]+")


def tokenize(text: str) -> list[str]:
    """Lowercase and split on runs of non-alphanumeric characters."""
    return _TOKEN.findall(text.lower())


def ngrams(tokens: Sequence[str], n_range: Sequence[int] = (1, 2)) -> list[str]:
    """All n-grams of the requested orders, space-joined, in text order."""
    out = []
    for n in n_range:
        for i in range(len(tokens) - n + 1):
            out.append(" ".join(tokens[i : i + n]))
    return out


@dataclass(frozen=True)
class Vocabulary:
    """n-gram to feature-index map with contiguous lexicographic indices."""

    entries: dict[str, int]
    n_range: tuple[int, ...] = (1, 2)
    min_count: int = 1

    @property
    def size(self) -> int:
        return len(self.entries)

    @classmethod
    def build(
        cls,
        texts: Sequence[str],
        n_range: Sequence[int] = (1, 2),
        min_count: int = 1,
    ) -> "Vocabulary":
        """Count n-grams over the training texts and keep the frequent ones.

        Indices are assigned lexicographically, so the vocabulary is a pure
        function of the text multiset. An empty result is valid: the student
        degrades to bias-only heads.
        """
        if len(texts) == 0:
            raise ValueError("cannot build a vocabulary from an empty corpus")
        if min_count < 1:
            raise ValueError("min_count must be at least 1")
        counts: dict[str, int] = {}
        for text in texts:
            for gram in ngrams(tokenize(text), n_range):
                counts[gram] = counts.get(gram, 0) + 1
        kept = sorted(g for g, c in counts.items() if c >= min_count)
        return cls(
            entries={g: i for i, g in enumerate(kept)},
            n_range=tuple(n_range),
            min_count=min_count,
        )

    def feature_indices(self, text: str) -> list[int]:
        """Sorted indices of the in-vocabulary n-grams present in the text."""
        present = {
            self.entries[g]
            for g in ngrams(tokenize(text), self.n_range)
            if g in self.entries
        }
        return sorted(present)

    def featurize(self, texts: Sequence[str]) -> np.ndarray:
        """Binary presence-indicator matrix, one row per text."""
        X = np.zeros((len(texts), self.size), dtype=np.float64)
        for i, text in enumerate(texts):
            X[i, self.feature_indices(text)] = 1.0
        return X

    def to_json_dict(self) -> dict:
        return {
            "entries": self.entries,
            "n_range": list(self.n_range),
            "min_count": self.min_count,
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "Vocabulary":
        return cls(
            entries={k: int(v) for k, v in doc["entries"].items()},
            n_range=tuple(doc["n_range"]),
            min_count=int(doc["min_count"]),
        )


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    batch_size: int = 18
    split_fraction: float = 0.85
    patience: int = 5
    max_epochs: int = 100
    seed: int = 0
    n_range: tuple[int, ...] = (1, 2)
    min_count: int = 1

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 < self.split_fraction < 1.0:
            raise ValueError("split_fraction must lie strictly between 0 and 1")
        if self.batch_size < 1 or self.max_epochs < 1 or self.patience < 1:
            raise ValueError("batch_size, max_epochs, and patience must be positive")

    def to_json_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "batch_size": self.batch_size,
            "split_fraction": self.split_fraction,
            "patience": self.patience,
            "max_epochs": self.max_epochs,
            "seed": self.seed,
            "n_range": list(self.n_range),
            "min_count": self.min_count,
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "TrainConfig":
        doc = dict(doc)
        doc["n_range"] = tuple(doc.get("n_range", (1, 2)))
        return cls(**doc)


@dataclass(frozen=True)
class TrainingHistory:
    train_losses: tuple[float, ...]
    val_losses: tuple[float, ...]
    best_epoch: int


@dataclass(frozen=True)
class StudentModel:
    """Per-condition linear heads over a shared n-gram vocabulary."""

    weights: np.ndarray  # (14, vocabulary size)
    biases: np.ndarray  # (14,)
    vocabulary: Vocabulary
    config: Optional[TrainConfig] = None
    history: Optional[TrainingHistory] = field(default=None, compare=False)

    def predict(self, text: str) -> np.ndarray:
        """Probabilities for all 14 conditions; unknown tokens are ignored."""
        idx = self.vocabulary.feature_indices(text)
        scores = self.weights[:, idx].sum(axis=1) + self.biases
        return sigmoid(scores)

    def predict_matrix(self, texts: Sequence[str]) -> np.ndarray:
        X = self.vocabulary.featurize(texts)
        return sigmoid(X @ self.weights.T + self.biases)

    def to_json_dict(self) -> dict:
        return {
            "vocabulary": self.vocabulary.to_json_dict(),
            "weights": [[float(v) for v in row] for row in self.weights],
            "biases": [float(v) for v in self.biases],
            "config": self.config.to_json_dict() if self.config else None,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict())

    @classmethod
    def from_json_dict(cls, doc: dict) -> "StudentModel":
        return cls(
            weights=np.asarray(doc["weights"], dtype=np.float64),
            biases=np.asarray(doc["biases"], dtype=np.float64),
            vocabulary=Vocabulary.from_json_dict(doc["vocabulary"]),
            config=TrainConfig.from_json_dict(doc["config"]) if doc.get("config") else None,
        )

    @classmethod
    def from_json(cls, text: str) -> "StudentModel":
        return cls.from_json_dict(json.loads(text))


def soft_cross_entropy(logits, targets) -> float:
    """Mean soft-target cross entropy over all (study, condition) cells."""
    z = np.asarray(logits, dtype=np.float64)
    p = np.asarray(targets, dtype=np.float64)
    return float(np.mean(np.logaddexp(0.0, z) - p * z))


def loss_and_gradient(weights, biases, X, targets):
    """Loss plus analytic gradients for the linear student on one batch."""
    z = X @ weights.T + biases
    loss = soft_cross_entropy(z, targets)
    scale = 1.0 / (X.shape[0] * targets.shape[1])
    residual = (sigmoid(z) - targets) * scale
    grad_w = residual.T @ X
    grad_b = residual.sum(axis=0)
    return loss, grad_w, grad_b


def predict_student(model: StudentModel, text: str) -> np.ndarray:
    return model.predict(text)


def _per_study_losses(weights, biases, X, targets) -> np.ndarray:
    z = X @ weights.T + biases
    return np.mean(np.logaddexp(0.0, z) - targets * z, axis=1)


def train_student(corpus: Corpus, config: TrainConfig) -> StudentModel:
    """Distill teacher probabilities into the n-gram student.

    The corpus is shuffled once and split into training and validation
    parts; the vocabulary comes from the training part only. Mini-batch
    gradient descent runs until the validation loss has not improved for
    `patience` epochs, and the returned model is the checkpoint with the
    lowest validation loss. Bit-reproducible given (corpus, config).
    """
    corpus.require_channel("impression")
    corpus.require_channel("probabilities")
    texts = list(corpus.impressions())
    targets = corpus.probability_matrix()
    n = len(texts)
    rng = np.random.default_rng(config.seed)
    order = rng.permutation(n)
    n_train = max(1, int(round(config.split_fraction * n)))
    train_idx = order[:n_train]
    val_idx = order[n_train:]

    vocab = Vocabulary.build(
        [texts[i] for i in train_idx], n_range=config.n_range, min_count=config.min_count
    )
    X = vocab.featurize(texts)
    X_train, P_train = X[train_idx], targets[train_idx]
    X_val, P_val = X[val_idx], targets[val_idx]
    monitor_val = len(val_idx) > 0

    weights = np.zeros((N_CONDITIONS, vocab.size))
    biases = np.zeros(N_CONDITIONS)

    def epoch_losses():
        train = soft_cross_entropy(X_train @ weights.T + biases, P_train)
        val = (
            soft_cross_entropy(X_val @ weights.T + biases, P_val) if monitor_val else train
        )
        return train, val

    train_losses = []
    val_losses = []
    t0, v0 = epoch_losses()
    train_losses.append(t0)
    val_losses.append(v0)
    best_val = v0
    best_epoch = 0
    best_weights = weights.copy()
    best_biases = biases.copy()
    stale = 0
    for epoch in range(1, config.max_epochs + 1):
        perm = rng.permutation(len(train_idx))
        for start in range(0, len(perm), config.batch_size):
            batch = perm[start : start + config.batch_size]
            _, grad_w, grad_b = loss_and_gradient(
                weights, biases, X_train[batch], P_train[batch]
            )
            weights -= config.learning_rate * grad_w
            biases -= config.learning_rate * grad_b
        train_loss, val_loss = epoch_losses()
        if not (np.isfinite(train_loss) and np.isfinite(val_loss)):
            per_study = _per_study_losses(weights, biases, X, targets)
            bad = np.flatnonzero(~np.isfinite(per_study))
            offender = corpus.studies[bad[0]].id if bad.size else corpus.studies[0].id
            raise ValueError(
                f"non-finite loss at epoch {epoch} (study {offender!r});"
                " lower the learning rate"
            )
        train_losses.append(train_loss)
        val_losses.append(val_loss)
        if val_loss < best_val:
            best_val = val_loss
            best_epoch = epoch
            best_weights = weights.copy()
            best_biases = biases.copy()
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                break
    return StudentModel(
        weights=best_weights,
        biases=best_biases,
        vocabulary=vocab,
        config=config,
        history=TrainingHistory(
            train_losses=tuple(train_losses),
            val_losses=tuple(val_losses),
            best_epoch=best_epoch,
        ),
    )
