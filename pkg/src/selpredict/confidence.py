"""Per-label confidence estimators.

Each label is a binary problem, so the class distribution for a single
probability ``p`` is ``(p, 1 - p)``. Higher confidence is always a larger
number: PV and BALD are returned as negated spread / mutual information.

All scalar estimators take a probability (SR) or a length-N sample vector;
:func:`estimate_confidences` applies them to a whole dataset at once.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import entr

from .core import Dataset, decision_matrix, sample_mean

KINDS = ("sr", "smp", "pv", "bald")
CONVENTIONS = ("standard", "paper_literal")


class EstimatorError(ValueError):
    pass


@dataclass(frozen=True)
class EstimatorSpec:
    kind: str = "sr"
    bald_convention: str = "standard"

    def __post_init__(self):
        kind = self.kind.lower()
        conv = self.bald_convention.lower().replace("-", "_")
        if kind not in KINDS:
            raise EstimatorError(f"unknown estimator {self.kind!r}; choose from {KINDS}")
        if conv not in CONVENTIONS:
            raise EstimatorError(f"unknown BALD convention {self.bald_convention!r}")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "bald_convention", conv)

    @property
    def min_samples(self) -> int:
        return 1 if self.kind == "sr" else 2

    @property
    def name(self) -> str:
        if self.kind == "bald" and self.bald_convention != "standard":
            return f"bald-{self.bald_convention}"
        return self.kind


@dataclass(frozen=True)
class ConfidenceMatrix:
    values: np.ndarray
    estimator: EstimatorSpec

    @property
    def shape(self):
        return self.values.shape

    def column(self, label: int) -> np.ndarray:
        return self.values[:, label]


def _check_prob(p):
    p = np.asarray(p, dtype=np.float64)
    if np.isnan(p).any() or (p < 0).any() or (p > 1).any():
        raise EstimatorError("probabilities must lie in [0, 1]")
    return p


def _check_samples(samples, axis=-1):
    s = _check_prob(samples)
    if s.ndim == 0 or s.shape[axis] < 2:
        raise EstimatorError("estimator requires N >= 2 MC samples")
    # Fixed order keeps every reduction independent of sample order.
    return np.sort(s, axis=axis)


def _binary_entropy(p):
    return entr(p) + entr(1.0 - p)


def sr_confidence(p):
    """Softmax response for a binary label: ``max(p, 1 - p)``."""
    p = _check_prob(p)
    return np.maximum(p, 1.0 - p)[()]


def smp_confidence(samples, axis=-1):
    """Softmax response of the MC-sample mean."""
    s = _check_samples(samples, axis)
    m = sample_mean(s, axis=axis)
    return np.maximum(m, 1.0 - m)[()]


def pv_confidence(samples, axis=-1):
    """Negated population variance of the positive-class probability.

    Averaging the variance over both classes gives the same number, since
    Var(p) == Var(1 - p).
    """
    s = _check_samples(samples, axis)
    m = np.expand_dims(sample_mean(s, axis=axis), axis)
    return (-np.mean((s - m) ** 2, axis=axis))[()]


def bald_confidence(samples, convention="standard", axis=-1):
    """Negated BALD mutual information (natural log, 0 log 0 = 0).

    ``standard``: -(H(mean p) - mean_n H(p_n)), which is <= 0.
    ``paper_literal``: sum_y pbar_y log pbar_y + sum_{y,n} p^n_y log p^n_y,
    i.e. -H(mean p) - sum_n H(p_n), with no 1/N on the second term.
    """
    conv = convention.lower().replace("-", "_")
    if conv not in CONVENTIONS:
        raise EstimatorError(f"unknown BALD convention {convention!r}")
    s = _check_samples(samples, axis)
    m = sample_mean(s, axis=axis)
    h_mean = _binary_entropy(m)
    h_samples = _binary_entropy(s)
    if conv == "standard":
        out = -(h_mean - sample_mean(h_samples, axis=axis))
        # Rounding can leave a near-zero gap a few ulps above zero.
        out = np.minimum(out, 0.0)
    else:
        out = -h_mean - h_samples.sum(axis=axis)
    return out[()]


def estimate_confidences(d: Dataset, spec: EstimatorSpec) -> ConfidenceMatrix:
    """(D, L) confidence matrix for ``d`` under ``spec``.

    SR reads the same decision probabilities as :func:`core.binary_view`
    (deterministic row if present, else the sample mean).
    """
    if d.n_samples < spec.min_samples:
        raise EstimatorError(
            f"estimator {spec.name!r} requires N >= {spec.min_samples} MC samples, dataset has N = {d.n_samples}"
        )
    if spec.kind == "sr":
        vals = sr_confidence(decision_matrix(d))
    elif spec.kind == "smp":
        vals = smp_confidence(d.samples, axis=1)
    elif spec.kind == "pv":
        vals = pv_confidence(d.samples, axis=1)
    else:
        vals = bald_confidence(d.samples, spec.bald_convention, axis=1)
    vals = np.array(vals, dtype=np.float64).reshape(len(d), d.n_labels)
    vals.setflags(write=False)
    return ConfidenceMatrix(vals, spec)
