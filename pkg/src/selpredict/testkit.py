"""Synthetic data and brute-force oracles.

Nothing here imports from :mod:`selpredict.selective` or reuses its helpers:
the oracles recompute the metrics straight from their definitions so they
can check the fast paths.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import expit, logit

from .config import FD_EXCLUSION, FD_STEP, N_MC_RUNS
from .core import Dataset, LabelSet
from .losses import LossBatch, LossOutput, ece_bins

MODES = {"calibrated": 1.0, "overconfident": 2.0, "underconfident": 0.5}


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based (Philox) stream, reproducible across platforms."""
    return np.random.Generator(np.random.Philox(seed))


@dataclass(frozen=True)
class SyntheticSpec:
    n_records: int = 1000
    n_labels: int = 14
    n_samples: int = N_MC_RUNS
    seed: int = 0
    mode: str = "calibrated"
    temperature: Optional[float] = None
    base_rates: Optional[Sequence[float]] = None
    concentration: float = 2.0
    noise: float = 0.05
    labels: Optional[Sequence[str]] = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}; choose from {sorted(MODES)}")
        if self.n_records < 1 or self.n_labels < 1 or self.n_samples < 1:
            raise ValueError("n_records, n_labels and n_samples must be >= 1")
        t = self.effective_temperature
        if not t > 0:
            raise ValueError("temperature must be > 0")
        if self.mode == "overconfident" and t <= 1 or self.mode == "underconfident" and t >= 1:
            raise ValueError(f"temperature {t} inconsistent with mode {self.mode!r}")
        if self.base_rates is not None and len(self.base_rates) != self.n_labels:
            raise ValueError("need one base rate per label")
        if self.noise < 0:
            raise ValueError("noise must be >= 0")

    @property
    def effective_temperature(self) -> float:
        return MODES[self.mode] if self.temperature is None else float(self.temperature)


def generate(spec: SyntheticSpec) -> Dataset:
    """Latent q ~ Beta per cell, truth ~ Bernoulli(q), reported probability
    sigmoid(t * logit(q)); N noisy copies (Gaussian, clipped) as MC samples."""
    rng = make_rng(spec.seed)
    D, L, N = spec.n_records, spec.n_labels, spec.n_samples
    rates = np.full(L, 0.5) if spec.base_rates is None else np.asarray(spec.base_rates, dtype=np.float64)
    rates = np.clip(rates, 1e-3, 1 - 1e-3)
    k = spec.concentration
    q = rng.beta(rates * k, (1.0 - rates) * k, size=(D, L))
    truth = (rng.random((D, L)) < q).astype(np.float64)
    det = expit(spec.effective_temperature * logit(q))
    noise = rng.standard_normal((D, N, L))
    samples = np.clip(det[:, None, :] + spec.noise * noise, 0.0, 1.0)

    if spec.labels is not None:
        label_set = LabelSet(tuple(spec.labels))
    elif L == 14:
        label_set = LabelSet.ecthr()
    else:
        label_set = LabelSet.generic(L)
    width = len(str(D - 1))
    ids = [f"s{spec.seed}-{i:0{width}d}" for i in range(D)]
    meta = {"generator": "selpredict.testkit", "seed": spec.seed, "mode": spec.mode,
            "temperature": spec.effective_temperature, "noise": spec.noise}
    return Dataset.from_arrays(label_set, ids, truth, samples, det, meta=meta)


def _as_arrays(losses, conf):
    l = np.asarray(getattr(losses, "losses", losses), dtype=np.int64)
    c = np.asarray(conf, dtype=np.float64)
    if l.shape != c.shape or l.ndim != 1:
        raise ValueError("losses and confidences must be 1-D of equal length")
    return l, c


def rpp_oracle(losses, conf, max_n: int = 10_000) -> float:
    """Exhaustive count over all n^2 ordered pairs."""
    l, c = _as_arrays(losses, conf)
    n = len(l)
    if n > max_n:
        raise ValueError(f"oracle limited to n <= {max_n}")
    reversed_ = (c[:, None] < c[None, :]) & (l[:, None] < l[None, :])
    return int(reversed_.sum()) / n ** 2


def refinement_oracle(losses, conf, max_n: int = 10_000) -> Optional[float]:
    l, c = _as_arrays(losses, conf)
    n = len(l)
    correct = int((l == 0).sum())
    if correct in (0, n):
        return None
    return rpp_oracle(l, c, max_n) * n ** 2 / (correct * (n - correct))


def aurcc_oracle(losses, conf, max_n: int = 10_000) -> float:
    """Sweep gamma over the distinct confidences (selection is conf > gamma),
    evaluate coverage and risk directly, integrate with right endpoints."""
    l, c = _as_arrays(losses, conf)
    n = len(l)
    if n > max_n:
        raise ValueError(f"oracle limited to n <= {max_n}")
    levels = sorted(set(c.tolist()), reverse=True)
    gammas = levels[1:] + [-math.inf]
    terms = []
    prev_cov = 0.0
    for g in gammas:
        sel = c > g
        cov = sel.sum() / n
        risk = (l * sel).sum() / sel.sum()
        terms.append((cov - prev_cov) * risk)
        prev_cov = cov
    return math.fsum(terms)


def fd_gradient_oracle(loss_fn: Callable[[LossBatch], LossOutput], batch: LossBatch,
                       step: float = FD_STEP, max_coords: int = 1000) -> np.ndarray:
    """Central differences, one logit coordinate at a time."""
    z = np.array(batch.logits, dtype=np.float64)
    if z.size > max_coords:
        raise ValueError(f"finite differences limited to {max_coords} coordinates")
    grad = np.zeros_like(z)
    for idx in np.ndindex(z.shape):
        zp = z.copy()
        zm = z.copy()
        zp[idx] += step
        zm[idx] -= step
        grad[idx] = (loss_fn(batch.with_logits(zp)).value - loss_fn(batch.with_logits(zm)).value) / (2 * step)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """||a - b|| / max(||a||, ||b||); 0 when both vanish."""
    a = np.asarray(analytic, dtype=np.float64).ravel()
    b = np.asarray(numeric, dtype=np.float64).ravel()
    scale = max(np.linalg.norm(a), np.linalg.norm(b))
    if scale == 0.0:
        return 0.0
    return float(np.linalg.norm(a - b) / scale)


@dataclass
class GradCheck:
    rel_error: float
    worst_index: tuple
    worst_abs_diff: float


def check_gradient(loss_fn, batch: LossBatch, step: float = FD_STEP) -> GradCheck:
    analytic = loss_fn(batch).grad
    numeric = fd_gradient_oracle(loss_fn, batch, step)
    diff = np.abs(analytic - numeric)
    worst = np.unravel_index(int(np.argmax(diff)), diff.shape)
    return GradCheck(relative_error(analytic, numeric), tuple(int(i) for i in worst), float(diff[worst]))


def _sr(z):
    p = expit(z)
    return p, np.maximum(p, 1.0 - p), (p >= 0.5)


def _near_kink(batch: LossBatch, kind: str, zone: float) -> bool:
    """True if any coordinate sits within ``zone`` of a non-smooth point."""
    if kind in ("bce", "gambler"):
        return False
    p, conf, pos = _sr(batch.logits)
    if np.abs(p - 0.5).min() < zone:
        return True
    err = pos != batch.truths.astype(bool)
    if kind == "cer":
        active = err[:, None, :] & ~err[None, :, :]
        gap = np.abs(conf[:, None, :] - conf[None, :, :])
        return bool((active & (gap < zone)).any())
    # ece: bin edges, and bins whose accuracy-confidence gap is ~0
    M = batch.n_bins
    scaled = conf * M
    if np.abs(scaled - np.round(scaled)).min() / M < zone:
        return True
    B, L = conf.shape
    key = ece_bins(conf, M) + M * np.arange(L)[None, :]
    gap = np.bincount(key.ravel(), weights=((~err) - conf).ravel(), minlength=M * L)
    used = np.bincount(key.ravel(), minlength=M * L) > 0
    return bool((np.abs(gap[used]) < zone).any())


def random_loss_batch(rng: np.random.Generator, kind: str, batch_size: int = 8, n_labels: int = 3,
                      scale: float = 2.0, zone: float = FD_EXCLUSION, **kw) -> LossBatch:
    """Random batch for ``kind`` in {bce, cer, ece, gambler}, redrawn until it
    is clear of kinks (and, for CER, has at least one active pair)."""
    while True:
        shape = (batch_size, n_labels, 3) if kind == "gambler" else (batch_size, n_labels)
        z = scale * rng.standard_normal(shape)
        y = (rng.random((batch_size, n_labels)) < 0.5).astype(np.float64)
        batch = LossBatch(z, y, **kw)
        if _near_kink(batch, kind, zone):
            continue
        if kind == "cer":
            _, conf, pos = _sr(z)
            err = pos != y.astype(bool)
            hinge = (err[:, None, :] & ~err[None, :, :]) & (conf[:, None, :] > conf[None, :, :])
            if not hinge.any():
                continue
        return batch
