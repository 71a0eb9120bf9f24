"""Selection, risk-coverage curves and the selective-prediction metrics.

All metrics are computed per label on a :class:`~selpredict.core.BinaryLabelView`
and a matching confidence column, then macro-averaged.

Ties: instances sharing a confidence value are selected or rejected together,
so the risk-coverage curve has one point per distinct confidence value.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .confidence import ConfidenceMatrix
from .core import BinaryLabelView, Dataset, binary_view, predictions


class Decision(enum.Enum):
    PREDICT = "predict"
    ABSTAIN = "abstain"


def select(confidence: float, gamma: float) -> Decision:
    """Predict iff ``confidence > gamma`` (strict)."""
    return Decision.PREDICT if confidence > gamma else Decision.ABSTAIN


@dataclass(frozen=True)
class SelectionPolicy:
    thresholds: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.thresholds, dtype=np.float64)
        if t.ndim != 1 or not np.isfinite(t).all():
            raise ValueError("thresholds must be a finite 1-D vector")
        object.__setattr__(self, "thresholds", t)

    def mask(self, conf: np.ndarray) -> np.ndarray:
        """(D, L) boolean selection mask for a confidence matrix."""
        return np.asarray(conf) > self.thresholds[None, :]


def _paired(view: BinaryLabelView, conf) -> tuple:
    conf = np.asarray(conf, dtype=np.float64)
    losses = np.asarray(view.losses)
    if conf.shape != losses.shape:
        raise ValueError(f"confidence length {conf.shape} does not match losses {losses.shape}")
    return conf, losses


def coverage_risk(view: BinaryLabelView, conf, gamma: float) -> tuple:
    """Return ``(coverage, risk)``; risk is None when nothing is selected."""
    conf, losses = _paired(view, conf)
    selected = conf > gamma
    k = int(selected.sum())
    cov = k / len(losses)
    if k == 0:
        return cov, None
    return cov, int(losses[selected].sum()) / k


@dataclass(frozen=True)
class RiskCoverageCurve:
    coverage: np.ndarray
    risk: np.ndarray
    label_index: Optional[int] = None

    @property
    def tie_groups(self) -> int:
        return len(self.coverage)

    @property
    def points(self) -> list:
        return list(zip(self.coverage.tolist(), self.risk.tolist()))


def risk_coverage_curve(view: BinaryLabelView, conf) -> RiskCoverageCurve:
    conf, losses = _paired(view, conf)
    n = len(losses)
    if n == 0:
        raise ValueError("empty view")
    order = np.argsort(-conf, kind="stable")
    c = conf[order]
    cum_loss = np.cumsum(losses[order], dtype=np.int64)
    # last index of each tie block
    ends = np.flatnonzero(np.append(c[1:] != c[:-1], True))
    counts = ends + 1
    return RiskCoverageCurve(
        coverage=counts / n,
        risk=cum_loss[ends] / counts,
        label_index=view.label_index,
    )


def aurcc(curve: RiskCoverageCurve) -> float:
    """Right-endpoint rectangle rule over coverage increments."""
    cov = curve.coverage
    widths = np.diff(cov, prepend=0.0)
    return float(np.dot(widths, curve.risk))


def reversed_pair_count(view: BinaryLabelView, conf) -> int:
    """#{(i, j): conf_i < conf_j and loss_i < loss_j}.

    With 0/1 losses that is: correct i ranked strictly below incorrect j.
    """
    conf, losses = _paired(view, conf)
    wrong = np.sort(conf[losses == 1])
    right = conf[losses == 0]
    if len(wrong) == 0 or len(right) == 0:
        return 0
    above = len(wrong) - np.searchsorted(wrong, right, side="right")
    return int(above.sum())


def rpp(view: BinaryLabelView, conf) -> float:
    n = len(view.losses)
    return reversed_pair_count(view, conf) / (n * n)


class Refinement(NamedTuple):
    value: float
    degenerate: bool


def refinement(view: BinaryLabelView, conf) -> Refinement:
    """Reversed pairs over the worst case ``c * (n - c)``.

    When every prediction is right (or every one wrong) the ratio is 0/0; that
    case is returned as ``Refinement(0.0, degenerate=True)``.
    """
    n = len(view.losses)
    c = view.n_correct
    worst = c * (n - c)
    if worst == 0:
        return Refinement(0.0, True)
    return Refinement(reversed_pair_count(view, conf) / worst, False)


@dataclass(frozen=True)
class SelectiveMetrics:
    labels: tuple
    aurcc: np.ndarray
    rpp: np.ndarray
    rf: np.ndarray
    degenerate_labels: tuple
    degenerate_policy: str = "exclude"
    curves: tuple = field(default=(), repr=False, compare=False)

    @property
    def macro_aurcc(self) -> float:
        return float(np.mean(self.aurcc))

    @property
    def macro_rpp(self) -> float:
        return float(np.mean(self.rpp))

    @property
    def macro_rf(self) -> Optional[float]:
        if self.degenerate_policy == "zero":
            return float(np.mean(self.rf))
        keep = [i for i, lab in enumerate(self.labels) if lab not in self.degenerate_labels]
        if not keep:
            return None
        return float(np.mean(self.rf[keep]))

    def rf_defined(self, label_index: int) -> bool:
        return self.labels[label_index] not in self.degenerate_labels


def macro_metrics(d: Dataset, conf: ConfidenceMatrix, degenerate_policy: str = "exclude",
                  keep_curves: bool = False) -> SelectiveMetrics:
    values = conf.values if isinstance(conf, ConfidenceMatrix) else np.asarray(conf)
    if values.shape != (len(d), d.n_labels):
        raise ValueError(f"confidence shape {values.shape} does not match dataset ({len(d)}, {d.n_labels})")
    if degenerate_policy not in ("exclude", "zero"):
        raise ValueError(f"unknown degenerate policy {degenerate_policy!r}")
    a, r, f, degenerate, curves = [], [], [], [], []
    labels = d.label_set.labels
    for l in range(d.n_labels):
        view = binary_view(d, l)
        col = values[:, l]
        curve = risk_coverage_curve(view, col)
        a.append(aurcc(curve))
        r.append(rpp(view, col))
        rf = refinement(view, col)
        f.append(rf.value)
        if rf.degenerate:
            degenerate.append(labels[l])
        if keep_curves:
            curves.append(curve)
    return SelectiveMetrics(
        labels=labels,
        aurcc=np.array(a),
        rpp=np.array(r),
        rf=np.array(f),
        degenerate_labels=tuple(degenerate),
        degenerate_policy=degenerate_policy,
        curves=tuple(curves),
    )


@dataclass(frozen=True)
class F1Report:
    labels: tuple
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray

    @property
    def macro_f1(self) -> float:
        return float(np.mean(self.f1))


def macro_f1(d: Dataset) -> F1Report:
    """Per-label precision / recall / F1 of the 0.5-threshold decisions.

    Any 0/0 ratio counts as 0.
    """
    pred = predictions(d).astype(bool)
    truth = d.truth.astype(bool)
    tp = (pred & truth).sum(axis=0).astype(np.float64)
    fp = (pred & ~truth).sum(axis=0).astype(np.float64)
    fn = (~pred & truth).sum(axis=0).astype(np.float64)

    def ratio(num, den):
        out = np.zeros_like(num)
        np.divide(num, den, out=out, where=den > 0)
        return out

    return F1Report(
        labels=d.label_set.labels,
        precision=ratio(tp, tp + fp),
        recall=ratio(tp, tp + fn),
        f1=ratio(2 * tp, 2 * tp + fp + fn),
    )
