"""JSON Lines prediction logs.

One record per line::

    {"id": "case-001", "truth": [0, 1, 0], "samples": [[0.1, 0.8, 0.3], ...], "det": [0.2, 0.7, 0.3]}

``det`` is optional. The first line may instead be a header object
``{"labels": [...], "meta": {...}}``; without one, labels are named ``0..L-1``.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import IO, Union

import numpy as np

from .core import Dataset, LabelSet, PredictionRecord, check_dataset


class IngestError(ValueError):
    def __init__(self, message: str, line: int = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


def _is_header(obj: dict) -> bool:
    return "labels" in obj and "truth" not in obj


_NUMBER_TYPES = {int, float}


def _vector(x, L, name, lineno):
    if not isinstance(x, list) or not set(map(type, x)) <= _NUMBER_TYPES:
        raise IngestError(f"{name!r} must be a flat list of numbers", lineno)
    if L is not None and len(x) != L:
        raise IngestError(f"{name!r} has length {len(x)}, expected {L}", lineno)
    return x


def parse_records(lines, validate: bool = True) -> Dataset:
    label_set = None
    meta = {}
    records = []
    L = None
    for lineno, raw in enumerate(lines, start=1):
        raw = raw.strip()
        if not raw:
            continue
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise IngestError(f"malformed JSON ({exc.msg})", lineno) from None
        if not isinstance(obj, dict):
            raise IngestError("expected a JSON object", lineno)

        if _is_header(obj):
            if records or label_set is not None:
                raise IngestError("header must be the first line", lineno)
            try:
                label_set = LabelSet(tuple(obj["labels"]))
            except (TypeError, ValueError) as exc:
                raise IngestError(f"bad header: {exc}", lineno) from None
            L = len(label_set)
            meta = dict(obj.get("meta") or {})
            continue

        for key in ("id", "truth", "samples"):
            if key not in obj:
                raise IngestError(f"missing field {key!r}", lineno)
        truth = _vector(obj["truth"], L, "truth", lineno)
        if L is None:
            L = len(truth)
        samples = obj["samples"]
        if not isinstance(samples, list) or not samples:
            raise IngestError("'samples' must be a non-empty list of rows", lineno)
        for row in samples:
            _vector(row, L, "samples row", lineno)
        det = obj.get("det")
        if det is not None:
            _vector(det, L, "det", lineno)
        try:
            records.append(PredictionRecord(str(obj["id"]), truth, samples, det))
        except (TypeError, ValueError) as exc:
            raise IngestError(str(exc), lineno) from None

    if not records:
        raise IngestError("no records found")
    if label_set is None:
        label_set = LabelSet.generic(L)
    ds = Dataset(label_set, tuple(records), meta)
    return check_dataset(ds) if validate else ds


def ingest(path: Union[str, Path], validate: bool = True) -> Dataset:
    """Read a prediction log; raises :class:`IngestError` for structural
    problems and :class:`~selpredict.core.DatasetError` for invalid values."""
    with open(path, "r", encoding="utf-8") as fh:
        return parse_records(fh, validate=validate)


def dump_records(d: Dataset, fh: IO[str]) -> None:
    fh.write(json.dumps({"labels": list(d.label_set.labels), "meta": d.meta}) + "\n")
    truth = d.truth.astype(np.int64).tolist()
    samples = d.samples.tolist()
    det = None if d.det is None else d.det.tolist()
    for i, rid in enumerate(d.ids):
        rec = {"id": rid, "truth": truth[i], "samples": samples[i]}
        if det is not None:
            rec["det"] = det[i]
        fh.write(json.dumps(rec) + "\n")


def write_jsonl(d: Dataset, path: Union[str, Path]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        dump_records(d, fh)
