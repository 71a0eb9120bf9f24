"""Aggregation across configurations and label-frequency buckets."""

from __future__ import annotations

import warnings
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Mapping, NamedTuple, Optional, Sequence

import numpy as np

from .config import BUCKET_BOUNDARIES
from .selective import F1Report, SelectiveMetrics

AXES = ("model", "loss", "estimator")


@dataclass(frozen=True)
class TrainingFrequencySpec:
    """Fraction of training cases in which each label is positive."""

    fractions: Mapping[str, float]

    def __post_init__(self):
        fr = {str(k): float(v) for k, v in dict(self.fractions).items()}
        for k, v in fr.items():
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"frequency for label {k!r} is {v}, outside [0, 1]")
        object.__setattr__(self, "fractions", fr)

    def for_labels(self, labels: Sequence[str]) -> dict:
        missing = [l for l in labels if l not in self.fractions]
        if missing:
            raise KeyError(f"no training frequency for label(s): {', '.join(missing)}")
        return {l: self.fractions[l] for l in labels}


@dataclass(frozen=True)
class BucketSpec:
    boundaries: tuple = BUCKET_BOUNDARIES

    def __post_init__(self):
        b = tuple(float(x) for x in self.boundaries)
        if not b:
            raise ValueError("need at least one bucket boundary")
        if any(not 0.0 < x <= 1.0 for x in b) or any(x >= y for x, y in zip(b, b[1:])):
            raise ValueError("bucket boundaries must be strictly increasing within (0, 1]")
        object.__setattr__(self, "boundaries", b)

    def __len__(self) -> int:
        return len(self.boundaries)

    def names(self) -> list:
        out = []
        lo = 0.0
        for hi in self.boundaries:
            out.append(f"[{lo:g}, {hi:g})")
            lo = hi
        return out


def bucketize(freq: TrainingFrequencySpec, spec: BucketSpec = BucketSpec(),
              labels: Optional[Sequence[str]] = None) -> list:
    """Partition labels into buckets ``[b_{k-1}, b_k)`` with ``b_{-1} = 0``.

    Fractions of 0 or above the last boundary cannot be placed by the
    intervals; they go to the first / last bucket with a warning.
    Returns one list of label ids per bucket.
    """
    fr = freq.for_labels(labels) if labels is not None else dict(freq.fractions)
    bounds = spec.boundaries
    out = [[] for _ in bounds]
    for label, f in fr.items():
        if f <= 0.0 or f > bounds[-1]:
            warnings.warn(f"label {label!r} frequency {f} outside (0, {bounds[-1]}]; assigned to nearest bucket",
                          stacklevel=2)
        k = int(np.searchsorted(bounds, f, side="right"))
        out[min(k, len(bounds) - 1)].append(label)
    return out


@dataclass(frozen=True)
class ConfigKey:
    model: str
    loss: str
    estimator: str

    def get(self, axis: str) -> str:
        return getattr(self, axis)


@dataclass(frozen=True)
class ConfigResult:
    key: ConfigKey
    metrics: SelectiveMetrics
    f1: Optional[F1Report] = None


class BucketRow(NamedTuple):
    axis: str
    group: str
    bucket: int
    bucket_range: str
    n_labels: int
    n_configs: int
    mean_rf: float


def _check_unique(results: Sequence[ConfigResult]) -> None:
    keys = [r.key for r in results]
    if len(set(keys)) != len(keys):
        raise ValueError("configuration keys must be unique")


def bucket_refinement_report(results: Iterable[ConfigResult], freq: TrainingFrequencySpec,
                             spec: BucketSpec = BucketSpec(), axes: Sequence[str] = AXES) -> list:
    """Mean refinement per (axis value, bucket) over member labels and configs.

    Degenerate refinements are left out of the mean. Empty buckets produce no
    row and a warning.
    """
    results = sorted(results, key=lambda r: (r.key.model, r.key.loss, r.key.estimator))
    if not results:
        return []
    _check_unique(results)
    labels = results[0].metrics.labels
    if any(r.metrics.labels != labels for r in results):
        raise ValueError("all results must share one label set")
    buckets = bucketize(freq, spec, labels)
    names = spec.names()
    for k, members in enumerate(buckets):
        if not members:
            warnings.warn(f"bucket {k + 1} {names[k]} has no labels; omitted", stacklevel=2)

    rows = []
    for axis in axes:
        groups = defaultdict(list)
        for r in results:
            groups[r.key.get(axis)].append(r)
        for group in sorted(groups):
            members_r = groups[group]
            for k, members in enumerate(buckets):
                if not members:
                    continue
                vals = []
                for r in members_r:
                    for lab in members:
                        i = labels.index(lab)
                        if r.metrics.rf_defined(i) or r.metrics.degenerate_policy == "zero":
                            vals.append(r.metrics.rf[i])
                mean = float(np.mean(vals)) if vals else float("nan")
                rows.append(BucketRow(axis, group, k + 1, names[k], len(members), len(members_r), mean))
    return rows


METRICS = ("aurcc", "rpp", "rf", "macro_f1")


class SummaryRow(NamedTuple):
    axis: str
    group: str
    metric: str
    n: int
    mean: float
    std: float


def _macro(r: ConfigResult, metric: str) -> Optional[float]:
    if metric == "aurcc":
        return r.metrics.macro_aurcc
    if metric == "rpp":
        return r.metrics.macro_rpp
    if metric == "rf":
        return r.metrics.macro_rf
    return None if r.f1 is None else r.f1.macro_f1


def mean_and_std(results: Iterable[ConfigResult], axis: str, metrics: Sequence[str] = METRICS) -> list:
    """Unweighted mean and population std of each macro metric per group."""
    if axis not in AXES:
        raise ValueError(f"unknown axis {axis!r}")
    results = list(results)
    _check_unique(results)
    groups = defaultdict(list)
    for r in results:
        groups[r.key.get(axis)].append(r)
    rows = []
    for group in sorted(groups):
        for m in metrics:
            vals = [v for v in (_macro(r, m) for r in groups[group]) if v is not None]
            if not vals:
                continue
            rows.append(SummaryRow(axis, group, m, len(vals), float(np.mean(vals)), float(np.std(vals))))
    return rows


def summarize_values(values: Sequence[float]) -> tuple:
    """(mean, population std) of a plain sequence."""
    v = np.asarray(values, dtype=np.float64)
    return float(v.mean()), float(v.std())
