"""Data model for logged multi-label predictions.

Every label is treated as its own binary task. A :class:`Dataset` holds one
:class:`PredictionRecord` per instance; :func:`binary_view` slices out the
per-label hard decisions and 0/1 losses that the selective metrics consume.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

from .config import DECISION_THRESHOLD

# Articles 2-14 of the convention plus Article 1 of Protocol 1.
ECTHR_ARTICLES = (
    "2", "3", "4", "5", "6", "7", "8", "9", "10", "11", "12", "13", "14", "P1-1",
)


def _frozen_array(x, dtype) -> np.ndarray:
    arr = np.array(x, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class LabelSet:
    labels: tuple

    def __post_init__(self):
        labels = tuple(str(x) for x in self.labels)
        if not labels:
            raise ValueError("label set must be non-empty")
        if len(set(labels)) != len(labels):
            raise ValueError("label identifiers must be unique")
        object.__setattr__(self, "labels", labels)

    @classmethod
    def ecthr(cls) -> "LabelSet":
        return cls(ECTHR_ARTICLES)

    @classmethod
    def generic(cls, n: int) -> "LabelSet":
        return cls(tuple(str(i) for i in range(n)))

    def __len__(self) -> int:
        return len(self.labels)

    def __iter__(self):
        return iter(self.labels)

    def index(self, label: str) -> int:
        return self.labels.index(label)


@dataclass(frozen=True)
class PredictionRecord:
    """One instance: multi-hot truth, N x L sampled probabilities, optional
    deterministic probability row."""

    instance_id: str
    truth: np.ndarray
    prob_samples: np.ndarray
    det_probs: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "instance_id", str(self.instance_id))
        object.__setattr__(self, "truth", _frozen_array(self.truth, np.float64))
        samples = np.array(self.prob_samples, dtype=np.float64)
        if samples.ndim == 1:
            samples = samples[None, :]
        samples.setflags(write=False)
        object.__setattr__(self, "prob_samples", samples)
        if self.det_probs is not None:
            object.__setattr__(self, "det_probs", _frozen_array(self.det_probs, np.float64))

    @property
    def n_samples(self) -> int:
        return self.prob_samples.shape[0]


@dataclass(frozen=True)
class Violation:
    kind: str
    message: str
    instance_id: Optional[str] = None

    def __str__(self) -> str:
        where = f" [{self.instance_id}]" if self.instance_id is not None else ""
        return f"{self.kind}{where}: {self.message}"


class DatasetError(ValueError):
    def __init__(self, violations: Sequence[Violation]):
        self.violations = list(violations)
        lines = "; ".join(str(v) for v in self.violations[:5])
        more = len(self.violations) - 5
        if more > 0:
            lines += f"; ... and {more} more"
        super().__init__(f"invalid dataset: {lines}")


@dataclass(frozen=True)
class Dataset:
    label_set: LabelSet
    records: tuple
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))

    @classmethod
    def from_arrays(cls, label_set, ids, truth, samples, det=None, meta=None) -> "Dataset":
        """Build from stacked arrays: truth (D, L), samples (D, N, L), det (D, L)."""
        truth = np.asarray(truth, dtype=np.float64)
        samples = np.asarray(samples, dtype=np.float64)
        records = [
            PredictionRecord(
                instance_id=ids[i],
                truth=truth[i],
                prob_samples=samples[i],
                det_probs=None if det is None else det[i],
            )
            for i in range(len(ids))
        ]
        ds = cls(label_set, tuple(records), dict(meta or {}))
        # Seed the cache so large generated sets don't restack.
        arrays = {"truth": _frozen_array(truth, np.float64),
                  "samples": _frozen_array(samples, np.float64),
                  "det": None if det is None else _frozen_array(det, np.float64)}
        ds.__dict__["_arrays"] = arrays
        return ds

    def __len__(self) -> int:
        return len(self.records)

    @property
    def n_labels(self) -> int:
        return len(self.label_set)

    @property
    def n_samples(self) -> int:
        return self.records[0].n_samples

    @property
    def ids(self) -> list:
        return [r.instance_id for r in self.records]

    @cached_property
    def _arrays(self) -> dict:
        try:
            truth = np.stack([r.truth for r in self.records])
            samples = np.stack([r.prob_samples for r in self.records])
        except ValueError as exc:
            raise DatasetError([Violation("dimension", str(exc))]) from exc
        det = None
        if all(r.det_probs is not None for r in self.records):
            det = np.stack([r.det_probs for r in self.records])
        for a in (truth, samples, det):
            if a is not None:
                a.setflags(write=False)
        return {"truth": truth, "samples": samples, "det": det}

    @property
    def truth(self) -> np.ndarray:
        """(D, L) 0/1 matrix."""
        return self._arrays["truth"]

    @property
    def samples(self) -> np.ndarray:
        """(D, N, L) sampled probabilities."""
        return self._arrays["samples"]

    @property
    def det(self) -> Optional[np.ndarray]:
        """(D, L) deterministic probabilities, or None when any record lacks them."""
        return self._arrays["det"]

    @property
    def decision_source(self) -> str:
        return "det_probs" if self.det is not None else "sample_mean"


def validate_dataset(d: Dataset) -> list:
    """Return a list of :class:`Violation`; an empty list means valid."""
    out = []
    L = len(d.label_set)
    if len(d.records) == 0:
        return [Violation("empty", "dataset has no records")]

    seen = set()
    N0 = d.records[0].n_samples
    has_det = [r.det_probs is not None for r in d.records]
    if any(has_det) and not all(has_det):
        out.append(Violation("det_presence", "det_probs present on some records but not others"))

    for r in d.records:
        rid = r.instance_id
        if rid in seen:
            out.append(Violation("duplicate_id", "instance_id appears more than once", rid))
        seen.add(rid)

        if r.truth.shape != (L,):
            out.append(Violation("dimension", f"truth has shape {r.truth.shape}, expected ({L},)", rid))
        elif np.isnan(r.truth).any():
            out.append(Violation("nan", "truth contains NaN", rid))
        elif not np.isin(r.truth, (0.0, 1.0)).all():
            out.append(Violation("truth_value", "truth entries must be 0 or 1", rid))

        s = r.prob_samples
        if s.ndim != 2 or s.shape[1] != L:
            out.append(Violation("dimension", f"prob_samples has shape {s.shape}, expected (N, {L})", rid))
        elif s.shape[0] < 1:
            out.append(Violation("dimension", "prob_samples has no rows", rid))
        else:
            if s.shape[0] != N0:
                out.append(Violation("dimension", f"{s.shape[0]} sample rows, expected {N0}", rid))
            out.extend(_check_probs(s, "prob_samples", rid))

        if r.det_probs is not None:
            if r.det_probs.shape != (L,):
                out.append(Violation("dimension", f"det_probs has shape {r.det_probs.shape}, expected ({L},)", rid))
            else:
                out.extend(_check_probs(r.det_probs, "det_probs", rid))
    return out


def _check_probs(a: np.ndarray, name: str, rid: str) -> list:
    out = []
    nan = np.isnan(a)
    if nan.any():
        out.append(Violation("nan", f"{name} contains NaN", rid))
    vals = a[~nan]
    bad = (vals < 0.0) | (vals > 1.0)
    if bad.any():
        out.append(Violation("out_of_range", f"{name} has {int(bad.sum())} value(s) outside [0, 1], e.g. {vals[bad][0]!r}", rid))
    return out


def check_dataset(d: Dataset) -> Dataset:
    """Raise :class:`DatasetError` if ``d`` has any violation, else return it."""
    violations = validate_dataset(d)
    if violations:
        raise DatasetError(violations)
    return d


@dataclass(frozen=True)
class BinaryLabelView:
    label_index: int
    losses: np.ndarray
    decision_probs: np.ndarray
    truth: np.ndarray

    def __len__(self) -> int:
        return len(self.losses)

    @property
    def n_correct(self) -> int:
        return int(len(self.losses) - self.losses.sum())


def sample_mean(samples: np.ndarray, axis: int = 0) -> np.ndarray:
    """Mean over the MC axis, exact for constant samples and independent of
    sample order (sorted, then shifted by the minimum before summing)."""
    s = np.sort(np.asarray(samples, dtype=np.float64), axis=axis)
    lo = np.take(s, [0], axis=axis)
    return np.squeeze(lo, axis=axis) + (s - lo).mean(axis=axis)


def decision_matrix(d: Dataset) -> np.ndarray:
    """(D, L) probabilities used for hard decisions.

    The deterministic row when every record has one, otherwise the mean over
    the MC samples.
    """
    if d.det is not None:
        return d.det
    if d.n_samples == 1:
        return d.samples[:, 0, :]
    return sample_mean(d.samples, axis=1)


def predictions(d: Dataset) -> np.ndarray:
    return (decision_matrix(d) >= DECISION_THRESHOLD).astype(np.int8)


def loss_matrix(d: Dataset) -> np.ndarray:
    """(D, L) 0/1 losses, 1 where the hard decision disagrees with truth."""
    return (predictions(d) != d.truth).astype(np.int8)


def binary_view(d: Dataset, label: int) -> BinaryLabelView:
    L = d.n_labels
    if not 0 <= label < L:
        raise IndexError(f"label index {label} out of range for {L} labels")
    probs = np.ascontiguousarray(decision_matrix(d)[:, label])
    truth = np.ascontiguousarray(d.truth[:, label])
    losses = ((probs >= DECISION_THRESHOLD).astype(np.int8) != truth).astype(np.int8)
    for a in (probs, truth, losses):
        a.setflags(write=False)
    return BinaryLabelView(label, losses, probs, truth)
