"""Training objectives with analytic gradients, in float64 numpy.

Multi-label handling is per label: every (instance, label) cell is a binary
problem. BCE and gambler's loss average over all B*L cells; CER and ECE are
computed per label over the batch and averaged over labels.

Each function returns a :class:`LossOutput` whose ``grad`` has the shape of
``batch.logits``. CER and ECE hold their piecewise-constant parts (the 0/1
errors, the bin assignment, the hinge active set) fixed when differentiating.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import expit, logsumexp, softmax

from .config import DECISION_THRESHOLD, ECE_BINS

POS, NEG, ABSTAIN = 0, 1, 2


class LossError(ValueError):
    pass


@dataclass(frozen=True)
class LossBatch:
    """logits: (B, L), or (B, L, 3) for the gambler's loss with classes
    (positive, negative, abstain). truths: (B, L) multi-hot."""

    logits: np.ndarray
    truths: np.ndarray
    lam: float = 0.1
    reward: float = 5.0
    n_bins: int = ECE_BINS

    def __post_init__(self):
        z = np.asarray(self.logits, dtype=np.float64)
        y = np.asarray(self.truths, dtype=np.float64)
        if y.ndim != 2 or y.shape[0] < 1:
            raise LossError("truths must be a (B, L) matrix with B >= 1")
        if z.shape[:2] != y.shape or z.ndim not in (2, 3) or (z.ndim == 3 and z.shape[2] != 3):
            raise LossError(f"logits shape {z.shape} incompatible with truths {y.shape}")
        if not np.isin(y, (0.0, 1.0)).all():
            raise LossError("truths must be 0/1")
        if self.n_bins < 1:
            raise LossError("n_bins must be >= 1")
        object.__setattr__(self, "logits", z)
        object.__setattr__(self, "truths", y)

    @property
    def batch_size(self) -> int:
        return self.truths.shape[0]

    @property
    def n_labels(self) -> int:
        return self.truths.shape[1]

    def with_logits(self, logits) -> "LossBatch":
        return replace(self, logits=np.asarray(logits, dtype=np.float64))


@dataclass
class LossOutput:
    value: float
    grad: np.ndarray
    components: dict = field(default_factory=dict)


def _binary_logits(batch: LossBatch) -> np.ndarray:
    if batch.logits.ndim != 2:
        raise LossError("expected (B, L) logits")
    return batch.logits


def bce_task_loss(batch: LossBatch) -> LossOutput:
    z = _binary_logits(batch)
    y = batch.truths
    # softplus(z) - y*z, the stable form of -y log s - (1-y) log(1-s)
    cell = np.logaddexp(0.0, z) - y * z
    value = float(cell.mean())
    grad = (expit(z) - y) / z.size
    return LossOutput(value, grad, {"task": value})


def _sr_parts(batch: LossBatch):
    """Per-cell SR confidence, its derivative w.r.t. the logit, and 0/1 error."""
    z = _binary_logits(batch)
    p = expit(z)
    positive = p >= DECISION_THRESHOLD
    conf = np.where(positive, p, 1.0 - p)
    dconf = np.where(positive, 1.0, -1.0) * p * (1.0 - p)
    err = (positive != batch.truths.astype(bool)).astype(np.float64)
    return conf, dconf, err


def cer_loss(batch: LossBatch) -> LossOutput:
    """Confident-error regularizer: squared hinge over pairs (i, j) where i is
    wrong, j is right, and i is the more confident of the two."""
    if batch.batch_size < 2:
        raise LossError("CER needs a batch of at least 2")
    conf, dconf, err = _sr_parts(batch)
    L = batch.n_labels
    # axes: (i, j, label)
    active = (err[:, None, :] > err[None, :, :])
    hinge = np.where(active, np.maximum(conf[:, None, :] - conf[None, :, :], 0.0), 0.0)
    value = float((hinge ** 2).sum() / L)
    gconf = 2.0 * (hinge.sum(axis=1) - hinge.sum(axis=0)) / L
    return LossOutput(value, gconf * dconf, {"cer": value})


def ece_bins(conf: np.ndarray, n_bins: int) -> np.ndarray:
    """Equal-width bins on [0, 1], right-closed; 0 goes into the first bin."""
    idx = np.ceil(conf * n_bins).astype(np.int64) - 1
    return np.clip(idx, 0, n_bins - 1)


def ece_loss(batch: LossBatch) -> LossOutput:
    conf, dconf, err = _sr_parts(batch)
    B, L = conf.shape
    M = batch.n_bins
    bins = ece_bins(conf, M)
    # flat (label, bin) key so each label is binned independently
    key = bins + M * np.arange(L)[None, :]
    gap = np.bincount(key.ravel(), weights=((1.0 - err) - conf).ravel(), minlength=M * L)
    value = float(np.abs(gap).sum() / (B * L))
    gconf = -np.sign(gap)[key] / (B * L)
    return LossOutput(value, gconf * dconf, {"ece": value})


def gambler_loss(batch: LossBatch) -> LossOutput:
    """-log(p_true + p_abstain / r) per cell, averaged over cells."""
    z = batch.logits
    if z.ndim != 3:
        raise LossError("gambler's loss needs (B, L, 3) logits")
    r = float(batch.reward)
    if not r >= 1.0:
        raise LossError(f"rejection reward must be >= 1, got {r}")
    y_idx = np.where(batch.truths == 1.0, POS, NEG)
    z_true = np.take_along_axis(z, y_idx[..., None], axis=2)[..., 0]
    z_abs = z[..., ABSTAIN] - np.log(r)
    lse = logsumexp(z, axis=2)
    mix = np.logaddexp(z_true, z_abs)
    cell = lse - mix
    n = cell.size
    s = softmax(z, axis=2)
    grad = s.copy()
    w_true = np.exp(z_true - mix)
    w_abs = np.exp(z_abs - mix)
    np.put_along_axis(grad, y_idx[..., None],
                      np.take_along_axis(grad, y_idx[..., None], axis=2) - w_true[..., None], axis=2)
    grad[..., ABSTAIN] -= w_abs
    value = float(cell.mean())
    return LossOutput(value, grad / n, {"gambler": value})


REGULARIZERS = {"cer": cer_loss, "ece": ece_loss}


def combined_loss(batch: LossBatch, regularizer: str = "none") -> LossOutput:
    """BCE task loss plus ``batch.lam`` times the chosen regularizer."""
    task = bce_task_loss(batch)
    if regularizer in (None, "none"):
        return task
    try:
        reg_fn = REGULARIZERS[regularizer]
    except KeyError:
        raise LossError(f"unknown regularizer {regularizer!r}") from None
    reg = reg_fn(batch)
    lam = float(batch.lam)
    return LossOutput(
        task.value + lam * reg.value,
        task.grad + lam * reg.grad,
        {"task": task.value, regularizer: reg.value},
    )


def gambler_confidence(class_probs, atol: float = 1e-9):
    """``1 - p(abstain)`` from (..., 3) class probabilities."""
    p = np.asarray(class_probs, dtype=np.float64)
    if p.shape[-1] != 3:
        raise LossError("expected 3 class probabilities (positive, negative, abstain)")
    if (p < 0).any() or np.abs(p.sum(axis=-1) - 1.0).max() > atol:
        raise LossError("class probabilities must be non-negative and sum to 1")
    return (1.0 - p[..., ABSTAIN])[()]


def gambler_probs(logits) -> np.ndarray:
    return softmax(np.asarray(logits, dtype=np.float64), axis=-1)
