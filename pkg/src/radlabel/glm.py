"""Self-contained penalized logistic regression and threshold calibration.

One objective covers every regression in the package:

    J(w, b) = sum_i s_i * (log(1 + exp(z_i)) - y_i * z_i) + lam * Omega(w)

with z_i = w . x_i + b, per-sample class weight s_i, and either
Omega = 0.5 * ||w||^2 with lam = 1/C (ridge) or Omega = ||w||_1 with
lam = alpha (lasso). The bias is never penalized and the penalty is not
scaled by the sample count. Fitting is deterministic: zero initialization,
damped Newton steps for the smooth cases, monotone accelerated proximal
gradient for the L1 case.

Internally every fit first aggregates duplicate (x, y) rows into canonical
sorted order with multiplicities, which makes the result invariant to row
permutation and duplication structure and makes leave-one-out
cross-validation cheap: studies sharing (x, y) receive identical folds.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .labels import CONDITIONS, CONDITION_INDEX


def sigmoid(z):
    """Numerically safe logistic function."""
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class Penalty:
    """L1 or L2 penalty; exactly one strength parameter is populated."""

    kind: str
    alpha: Optional[float] = None  # L1 strength
    c: Optional[float] = None  # L2 inverse strength

    def __post_init__(self):
        if self.kind == "l1":
            if self.alpha is None or self.c is not None:
                raise ValueError("l1 penalty takes alpha only")
            if self.alpha <= 0:
                raise ValueError("alpha must be positive")
        elif self.kind == "l2":
            if self.c is None or self.alpha is not None:
                raise ValueError("l2 penalty takes c only")
            if self.c <= 0:
                raise ValueError("c must be positive")
        else:
            raise ValueError(f"unknown penalty kind {self.kind!r}")

    @classmethod
    def l1(cls, alpha: float = 0.5) -> "Penalty":
        return cls(kind="l1", alpha=alpha)

    @classmethod
    def l2(cls, c: float = 1.0) -> "Penalty":
        return cls(kind="l2", c=c)

    @property
    def lam(self) -> float:
        return self.alpha if self.kind == "l1" else 1.0 / self.c


class ClassWeighting(enum.Enum):
    """Per-sample loss weights; inverse prevalence assigns s_i = N / N_y(i)."""

    UNIFORM = "uniform"
    INVERSE_PREVALENCE = "inverse-prevalence"


@dataclass(frozen=True)
class FitReport:
    iterations: int
    final_gradient_norm: float
    converged: bool


@dataclass(frozen=True)
class LogisticModel:
    """Fitted weights, unpenalized bias, and fitting metadata."""

    weights: np.ndarray
    bias: float
    penalty: Optional[Penalty]
    weighting: ClassWeighting
    fit_report: FitReport
    feature_names: Optional[tuple[str, ...]] = None

    def predict_proba(self, features) -> np.ndarray:
        """Sigmoid of the linear score for one feature vector or a matrix."""
        x = np.asarray(features, dtype=np.float64)
        if x.ndim == 1:
            if x.shape[0] != self.weights.shape[0]:
                raise ValueError(
                    f"expected {self.weights.shape[0]} features, got {x.shape[0]}"
                )
            return float(sigmoid(x @ self.weights + self.bias))
        if x.ndim == 2:
            if x.shape[1] != self.weights.shape[0]:
                raise ValueError(
                    f"expected {self.weights.shape[0]} features, got {x.shape[1]}"
                )
            return sigmoid(x @ self.weights + self.bias)
        raise ValueError("features must be a vector or a matrix")

    def to_json_dict(self) -> dict:
        return {
            "feature_names": list(self.feature_names) if self.feature_names else None,
            "weights": [float(w) for w in self.weights],
            "bias": float(self.bias),
            "penalty": None
            if self.penalty is None
            else {"kind": self.penalty.kind, "alpha": self.penalty.alpha, "c": self.penalty.c},
            "weighting": self.weighting.value,
            "fit_report": {
                "iterations": self.fit_report.iterations,
                "final_gradient_norm": self.fit_report.final_gradient_norm,
                "converged": self.fit_report.converged,
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2)

    @classmethod
    def from_json_dict(cls, doc: dict) -> "LogisticModel":
        penalty = None
        if doc.get("penalty") is not None:
            p = doc["penalty"]
            penalty = Penalty(kind=p["kind"], alpha=p.get("alpha"), c=p.get("c"))
        names = doc.get("feature_names")
        report = doc["fit_report"]
        return cls(
            weights=np.asarray(doc["weights"], dtype=np.float64),
            bias=float(doc["bias"]),
            penalty=penalty,
            weighting=ClassWeighting(doc["weighting"]),
            fit_report=FitReport(
                iterations=int(report["iterations"]),
                final_gradient_norm=float(report["final_gradient_norm"]),
                converged=bool(report["converged"]),
            ),
            feature_names=tuple(names) if names else None,
        )

    @classmethod
    def from_json(cls, text: str) -> "LogisticModel":
        return cls.from_json_dict(json.loads(text))


def predict_proba(model: LogisticModel, features) -> np.ndarray:
    return model.predict_proba(features)


def _validate_xy(features, labels) -> tuple[np.ndarray, np.ndarray]:
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("features must be an (n, d) matrix")
    if y.ndim != 1 or y.shape[0] != X.shape[0]:
        raise ValueError("labels must be a vector aligned with features")
    if not np.isfinite(X).all():
        raise ValueError("features contain non-finite values")
    if not np.isin(y, (0.0, 1.0)).all():
        raise ValueError("labels must be 0/1")
    return X, y


def _sample_weights(y: np.ndarray, counts: np.ndarray, weighting: ClassWeighting) -> np.ndarray:
    if weighting is ClassWeighting.UNIFORM:
        return np.ones_like(y)
    total = counts.sum()
    n_pos = counts[y == 1.0].sum()
    n_neg = total - n_pos
    return np.where(y == 1.0, total / n_pos, total / n_neg)


def objective_value(
    weights,
    bias: float,
    features,
    labels,
    penalty: Optional[Penalty],
    weighting: ClassWeighting = ClassWeighting.UNIFORM,
) -> float:
    """J(w, b) on raw rows; reference formula used by the optimizer and tests."""
    X, y = _validate_xy(features, labels)
    w = np.asarray(weights, dtype=np.float64)
    s = _sample_weights(y, np.ones_like(y), weighting)
    z = X @ w + bias
    loss = float(np.sum(s * (np.logaddexp(0.0, z) - y * z)))
    if penalty is None:
        return loss
    if penalty.kind == "l2":
        return loss + 0.5 * penalty.lam * float(w @ w)
    return loss + penalty.lam * float(np.abs(w).sum())


def objective_gradient(
    weights,
    bias: float,
    features,
    labels,
    penalty: Optional[Penalty],
    weighting: ClassWeighting = ClassWeighting.UNIFORM,
) -> tuple[np.ndarray, float]:
    """Analytic gradient of J; for L1 it is only defined off the axes,
    where the penalty term contributes lam * sign(w)."""
    X, y = _validate_xy(features, labels)
    w = np.asarray(weights, dtype=np.float64)
    s = _sample_weights(y, np.ones_like(y), weighting)
    r = s * (sigmoid(X @ w + bias) - y)
    grad_w = X.T @ r
    grad_b = float(r.sum())
    if penalty is not None:
        if penalty.kind == "l2":
            grad_w = grad_w + penalty.lam * w
        else:
            grad_w = grad_w + penalty.lam * np.sign(w)
    return grad_w, grad_b


def _aggregate(X: np.ndarray, y: np.ndarray):
    """Collapse duplicate (x, y) rows to canonical sorted order with counts."""
    stacked = np.column_stack([X, y])
    unique, counts = np.unique(stacked, axis=0, return_counts=True)
    return unique[:, :-1], unique[:, -1], counts.astype(np.float64)


def _fit_newton(Xb, uy, a, lam, max_iter, tol):
    """Damped Newton on the smooth objective (ridge or unpenalized)."""
    m, p = Xb.shape
    d = p - 1
    reg = np.append(np.full(d, lam), 0.0)
    theta = np.zeros(p)

    def value(z, th):
        return float(np.sum(a * (np.logaddexp(0.0, z) - uy * z)) + 0.5 * np.sum(reg * th * th))

    z = Xb @ theta
    current = value(z, theta)
    steps_taken = 0
    for _ in range(max_iter):
        prob = sigmoid(z)
        grad = Xb.T @ (a * (prob - uy)) + reg * theta
        grad_norm = float(np.linalg.norm(grad))
        if grad_norm <= tol:
            return theta, FitReport(steps_taken, grad_norm, True)
        curv = a * prob * (1.0 - prob)
        hess = (Xb * curv[:, None]).T @ Xb
        hess[np.diag_indices_from(hess)] += reg
        try:
            step = np.linalg.solve(hess, -grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(hess, -grad, rcond=None)[0]
        slope = float(grad @ step)
        if abs(slope) <= 1e-9 * (1.0 + abs(current)):
            # predicted decrease is below the objective's float resolution,
            # so a line search cannot certify descent; trust the Newton step
            theta = theta + step
            z = Xb @ theta
            current = value(z, theta)
            steps_taken += 1
            continue
        t = 1.0
        accepted = False
        while t > 1e-14:
            candidate = theta + t * step
            z_candidate = Xb @ candidate
            val = value(z_candidate, candidate)
            if val <= current + 1e-4 * t * slope:
                theta, z, current = candidate, z_candidate, val
                accepted = True
                break
            t *= 0.5
        if not accepted:
            break
        steps_taken += 1
    grad = Xb.T @ (a * (sigmoid(z) - uy)) + reg * theta
    grad_norm = float(np.linalg.norm(grad))
    return theta, FitReport(steps_taken, grad_norm, grad_norm <= tol)


def _min_norm_subgradient(grad, theta, d, lam):
    """Smallest-norm subgradient of the L1 objective; zero at an optimum."""
    out = grad.copy()
    w = theta[:d]
    out[:d][w > 0] += lam
    out[:d][w < 0] -= lam
    at_zero = w == 0
    g0 = out[:d][at_zero]
    out[:d][at_zero] = np.sign(g0) * np.maximum(np.abs(g0) - lam, 0.0)
    return out


def _fit_l1(Xb, uy, a, lam, max_iter, tol):
    """Monotone FISTA with backtracking; soft-threshold leaves the bias free."""
    m, p = Xb.shape
    d = p - 1

    def smooth(th):
        z = Xb @ th
        return float(np.sum(a * (np.logaddexp(0.0, z) - uy * z)))

    def smooth_grad(th):
        z = Xb @ th
        return Xb.T @ (a * (sigmoid(z) - uy))

    def prox(th, step):
        out = th.copy()
        out[:d] = np.sign(out[:d]) * np.maximum(np.abs(out[:d]) - lam * step, 0.0)
        return out

    gram = (Xb * a[:, None]).T @ Xb
    lipschitz = 0.25 * float(np.linalg.eigvalsh(gram)[-1])
    step = 1.0 / max(lipschitz, 1e-12)

    x = np.zeros(p)
    v = x.copy()
    t_mom = 1.0
    obj_x = smooth(x)  # penalty term is zero at the origin
    iterations = 0
    converged = False
    for iterations in range(1, max_iter + 1):
        g = smooth_grad(v)
        f_v = smooth(v)
        while True:
            candidate = prox(v - step * g, step)
            diff = candidate - v
            bound = f_v + float(g @ diff) + float(diff @ diff) / (2.0 * step)
            f_c = smooth(candidate)
            if f_c <= bound + 1e-12 * (1.0 + abs(bound)) or step < 1e-18:
                break
            step *= 0.5
        delta = float(np.max(np.abs(candidate - x)))
        obj_c = f_c + lam * float(np.abs(candidate[:d]).sum())
        t_next = (1.0 + math.sqrt(1.0 + 4.0 * t_mom * t_mom)) / 2.0
        if obj_c > obj_x + lam * float(np.abs(x[:d]).sum()):
            # restart momentum when the accelerated step overshoots
            v = candidate
            t_next = 1.0
        else:
            v = candidate + ((t_mom - 1.0) / t_next) * (candidate - x)
        x = candidate
        obj_x = f_c
        t_mom = t_next
        if delta < tol:
            converged = True
            break
    grad_norm = float(np.linalg.norm(_min_norm_subgradient(smooth_grad(x), x, d, lam)))
    return x, FitReport(iterations, grad_norm, converged)


def _fit_aggregated(
    ux: np.ndarray,
    uy: np.ndarray,
    counts: np.ndarray,
    penalty: Optional[Penalty],
    weighting: ClassWeighting,
    max_iter: int,
    tol: float,
    feature_names,
) -> LogisticModel:
    s = _sample_weights(uy, counts, weighting)
    a = counts * s
    Xb = np.hstack([ux, np.ones((ux.shape[0], 1))])
    if penalty is not None and penalty.kind == "l1":
        theta, report = _fit_l1(Xb, uy, a, penalty.lam, max_iter, tol)
    else:
        lam = 0.0 if penalty is None else penalty.lam
        theta, report = _fit_newton(Xb, uy, a, lam, max_iter, tol)
    return LogisticModel(
        weights=theta[:-1],
        bias=float(theta[-1]),
        penalty=penalty,
        weighting=weighting,
        fit_report=report,
        feature_names=tuple(feature_names) if feature_names else None,
    )


def fit_logistic(
    features,
    labels,
    penalty: Optional[Penalty],
    weighting: ClassWeighting = ClassWeighting.UNIFORM,
    max_iter: int = 500,
    tol: float = 1e-6,
    feature_names: Optional[Sequence[str]] = None,
) -> LogisticModel:
    """Fit the weighted penalized logistic objective.

    Deterministic given its inputs and invariant to row order. Requires
    both classes in `labels`.
    """
    X, y = _validate_xy(features, labels)
    if X.shape[0] < 2:
        raise ValueError("need at least two samples")
    if y.min() == y.max():
        raise ValueError("degenerate labels: both classes must be present")
    if feature_names is not None and len(feature_names) != X.shape[1]:
        raise ValueError("feature_names length must match feature count")
    ux, uy, counts = _aggregate(X, y)
    return _fit_aggregated(ux, uy, counts, penalty, weighting, max_iter, tol, feature_names)


def loocv_binary_predictions(
    features,
    labels,
    penalty: Optional[Penalty],
    weighting: ClassWeighting = ClassWeighting.UNIFORM,
    decision_threshold: float = 0.5,
    max_iter: int = 500,
    tol: float = 1e-6,
) -> np.ndarray:
    """Leave-one-out predictions: fit on all studies but one, predict it.

    A study is labeled positive when its held-out probability reaches
    `decision_threshold`. Folds whose remaining labels are single-class
    fall back to that majority class. Studies sharing identical (x, y)
    rows produce identical folds, so one fit per distinct row suffices;
    the output matches the naive per-fold loop exactly.
    """
    X, y = _validate_xy(features, labels)
    n = X.shape[0]
    if n < 3:
        raise ValueError("leave-one-out needs at least 3 samples")
    stacked = np.column_stack([X, y])
    unique, inverse, counts = np.unique(
        stacked, axis=0, return_inverse=True, return_counts=True
    )
    ux = unique[:, :-1]
    uy = unique[:, -1]
    counts = counts.astype(np.float64)
    preds = np.zeros(n, dtype=np.int64)
    for g in range(unique.shape[0]):
        fold_counts = counts.copy()
        fold_counts[g] -= 1.0
        keep = fold_counts > 0
        fold_ux, fold_uy, fold_cnt = ux[keep], uy[keep], fold_counts[keep]
        pos = fold_cnt[fold_uy == 1.0].sum()
        neg = fold_cnt.sum() - pos
        if pos == 0 or neg == 0:
            label = 1 if pos > neg else 0
        else:
            model = _fit_aggregated(
                fold_ux, fold_uy, fold_cnt, penalty, weighting, max_iter, tol, None
            )
            label = int(model.predict_proba(ux[g]) >= decision_threshold)
        preds[inverse == g] = label
    return preds


@dataclass(frozen=True)
class OddsRatioEntry:
    feature_name: str
    odds_ratio: float
    std_error: float
    statistic: float
    p_value: float


@dataclass(frozen=True)
class OddsRatioTable:
    entries: tuple[OddsRatioEntry, ...]
    selected_features: tuple[str, ...]
    refit_report: Optional[FitReport]


def odds_ratio_table(
    features,
    labels,
    feature_names: Optional[Sequence[str]] = None,
    alpha: float = 0.5,
    p_threshold: float = 0.05,
    max_iter: int = 20000,
    tol: float = 1e-6,
) -> OddsRatioTable:
    """Sparse selection, unpenalized refit, Wald test, significance filter.

    An L1 fit at strength `alpha` selects features with nonzero weight;
    those are refit without penalty and each coefficient gets a Wald
    standard error from the inverse observed information and a two-sided
    normal p-value. The table keeps entries with p below `p_threshold`,
    reporting exp(coefficient) as the odds ratio.
    """
    X, y = _validate_xy(features, labels)
    d = X.shape[1]
    if feature_names is None:
        feature_names = [f"x{i}" for i in range(d)]
    if len(feature_names) != d:
        raise ValueError("feature_names length must match feature count")
    lasso = fit_logistic(
        X, y, Penalty.l1(alpha), ClassWeighting.UNIFORM, max_iter=max_iter, tol=tol
    )
    selected = np.flatnonzero(np.abs(lasso.weights) > 1e-8)
    selected_names = tuple(feature_names[i] for i in selected)
    if selected.size == 0:
        return OddsRatioTable(entries=(), selected_features=(), refit_report=None)
    refit = fit_logistic(
        X[:, selected],
        y,
        penalty=None,
        weighting=ClassWeighting.UNIFORM,
        max_iter=500,
        tol=tol,
        feature_names=selected_names,
    )
    ux, uy, counts = _aggregate(X[:, selected], y)
    Xb = np.hstack([ux, np.ones((ux.shape[0], 1))])
    prob = sigmoid(Xb @ np.append(refit.weights, refit.bias))
    curv = counts * prob * (1.0 - prob)
    info = (Xb * curv[:, None]).T @ Xb
    try:
        cov = np.linalg.inv(info)
    except np.linalg.LinAlgError:
        cov = np.linalg.pinv(info)
    entries = []
    for j, name in enumerate(selected_names):
        var = cov[j, j]
        se = math.sqrt(var) if var > 0 else float("inf")
        coef = float(refit.weights[j])
        stat = coef / se if se > 0 else 0.0
        p_value = math.erfc(abs(stat) / math.sqrt(2.0)) if math.isfinite(stat) else 1.0
        if p_value < p_threshold:
            entries.append(
                OddsRatioEntry(
                    feature_name=name,
                    odds_ratio=math.exp(coef),
                    std_error=se,
                    statistic=stat,
                    p_value=p_value,
                )
            )
    return OddsRatioTable(
        entries=tuple(entries),
        selected_features=selected_names,
        refit_report=refit.fit_report,
    )


@dataclass(frozen=True)
class ThresholdSet:
    """Per-condition decision thresholds with their Youden index values."""

    thresholds: dict[str, float]
    youden_index: Optional[dict[str, float]] = None

    def __post_init__(self):
        for name, t in self.thresholds.items():
            if name not in CONDITION_INDEX:
                raise ValueError(f"unknown condition {name!r}")
            if not 0.0 <= t <= 1.0:
                raise ValueError(f"threshold for {name} outside [0, 1]: {t}")

    @property
    def conditions(self) -> tuple[str, ...]:
        return tuple(c for c in CONDITIONS if c in self.thresholds)

    def __contains__(self, condition: str) -> bool:
        return condition in self.thresholds

    def __getitem__(self, condition: str) -> float:
        return self.thresholds[condition]

    def to_json_dict(self) -> dict:
        doc = {"thresholds": {c: float(self.thresholds[c]) for c in self.conditions}}
        if self.youden_index is not None:
            doc["youden_index"] = {
                c: float(self.youden_index[c]) for c in self.conditions if c in self.youden_index
            }
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2)

    @classmethod
    def from_json_dict(cls, doc: dict) -> "ThresholdSet":
        return cls(
            thresholds={k: float(v) for k, v in doc["thresholds"].items()},
            youden_index={k: float(v) for k, v in doc["youden_index"].items()}
            if "youden_index" in doc
            else None,
        )

    @classmethod
    def from_json(cls, text: str) -> "ThresholdSet":
        return cls.from_json_dict(json.loads(text))


def youden_threshold(probabilities, truth) -> tuple[float, float]:
    """Threshold maximizing sensitivity + specificity - 1 for one condition.

    Candidates are 0, 1, and the midpoints between consecutive distinct
    probabilities; predictions are positive when p >= t; ties break toward
    the smallest threshold. Returns (threshold, youden index).
    """
    p = np.asarray(probabilities, dtype=np.float64)
    t = np.asarray(truth, dtype=np.int64)
    if p.ndim != 1 or p.shape != t.shape:
        raise ValueError("probabilities and truth must be aligned vectors")
    if not np.isfinite(p).all() or p.min() < 0.0 or p.max() > 1.0:
        raise ValueError("probabilities must lie in [0, 1]")
    n_pos = int(t.sum())
    n_neg = t.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("cannot calibrate: need at least one positive and one negative")
    order = np.argsort(p, kind="stable")
    sorted_p = p[order]
    sorted_t = t[order]
    distinct = np.unique(sorted_p)
    candidates = np.concatenate([[0.0], (distinct[1:] + distinct[:-1]) / 2.0, [1.0]])
    candidates = np.unique(candidates)
    # positives strictly below each candidate, via prefix sums over sorted probabilities
    cum_pos = np.concatenate([[0], np.cumsum(sorted_t)])
    below = np.searchsorted(sorted_p, candidates, side="left")
    pos_below = cum_pos[below]
    neg_below = below - pos_below
    sens = (n_pos - pos_below) / n_pos
    spec = neg_below / n_neg
    j = sens + spec - 1.0
    best = int(np.argmax(j))  # first maximum; candidates ascend, so smallest threshold
    return float(candidates[best]), float(j[best])


def youden_thresholds(
    probabilities, truth, conditions: Optional[Sequence[str]] = None
) -> ThresholdSet:
    """Per-condition Youden thresholds from calibration probabilities and truth."""
    p = np.asarray(probabilities, dtype=np.float64)
    t = np.asarray(truth, dtype=np.int64)
    if p.ndim == 1:
        p = p[:, None]
        t = t[:, None]
    if p.shape != t.shape:
        raise ValueError("probabilities and truth must be aligned")
    if conditions is None:
        if p.shape[1] != len(CONDITIONS):
            raise ValueError("conditions must be named unless all 14 columns are present")
        conditions = CONDITIONS
    if len(conditions) != p.shape[1]:
        raise ValueError("one condition name per column is required")
    thresholds = {}
    jvals = {}
    for k, condition in enumerate(conditions):
        try:
            thresholds[condition], jvals[condition] = youden_threshold(p[:, k], t[:, k])
        except ValueError as exc:
            raise ValueError(f"{condition}: {exc}") from None
    return ThresholdSet(thresholds=thresholds, youden_index=jvals)


def apply_thresholds(
    probabilities, thresholds: ThresholdSet, conditions: Optional[Sequence[str]] = None
) -> np.ndarray:
    """Binary labels from a 14-column probability vector or matrix.

    A condition is positive when its probability is >= its threshold.
    Output columns follow `conditions` (default: the threshold set's
    conditions in canonical order).
    """
    p = np.asarray(probabilities, dtype=np.float64)
    if p.shape[-1] != len(CONDITIONS):
        raise ValueError(f"expected {len(CONDITIONS)} probability columns")
    if conditions is None:
        conditions = thresholds.conditions
    missing = [c for c in conditions if c not in thresholds]
    if missing:
        raise ValueError(f"no thresholds for {missing}")
    cols = [CONDITION_INDEX[c] for c in conditions]
    t = np.array([thresholds[c] for c in conditions])
    return (p[..., cols] >= t).astype(np.int64)
