"""Report emission: CSV and JSONL from the same row dicts, SVG curve plots."""

from __future__ import annotations

import csv
import json
import re
from pathlib import Path
from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np

from .selective import RiskCoverageCurve


def write_rows(rows: Sequence[dict], stem: Path, formats: Sequence[str]) -> list:
    """Write ``rows`` to ``stem.csv`` and/or ``stem.jsonl``; returns paths written.

    Floats go through ``repr`` in both formats, so values agree exactly.
    """
    stem = Path(stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    written = []
    if "csv" in formats:
        path = stem.with_suffix(".csv")
        fields = list(rows[0]) if rows else []
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
            w.writeheader()
            for row in rows:
                w.writerow({k: ("" if v is None else v) for k, v in row.items()})
        written.append(path)
    if "jsonl" in formats:
        path = stem.with_suffix(".jsonl")
        with open(path, "w", encoding="utf-8") as fh:
            for row in rows:
                fh.write(json.dumps(row) + "\n")
        written.append(path)
    return written


def read_jsonl(path) -> list:
    with open(path, "r", encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def safe_name(label: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", label) or "label"


def curve_rows(curve: RiskCoverageCurve) -> list:
    return [{"coverage": c, "risk": r} for c, r in zip(curve.coverage.tolist(), curve.risk.tolist())]


def write_curve_csv(curve: RiskCoverageCurve, path: Path) -> None:
    lines = ["coverage,risk"]
    lines.extend(f"{c!r},{r!r}" for c, r in zip(curve.coverage.tolist(), curve.risk.tolist()))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def risk_coverage_svg(curve: RiskCoverageCurve, title: str = "", width: int = 420, height: int = 320,
                      max_points: int = 1500) -> str:
    left, right, top, bottom = 52, 16, 28, 44
    pw, ph = width - left - right, height - top - bottom
    ymax = max(float(curve.risk.max()) if len(curve.risk) else 0.0, 1e-9)
    ymax = min(1.0, ymax * 1.1) if ymax < 0.9 else 1.0

    def sx(c):
        return left + c * pw

    def sy(r):
        return top + ph - (r / ymax) * ph

    # step path: risk holds from the previous coverage up to the current one
    cov, risk = curve.coverage, curve.risk
    if len(cov) > max_points:
        keep = np.unique(np.linspace(0, len(cov) - 1, max_points).astype(np.int64))
        cov, risk = cov[keep], risk[keep]
    pts = []
    prev = 0.0
    for c, r in zip(cov.tolist(), risk.tolist()):
        pts.append(f"{sx(prev):.2f},{sy(r):.2f}")
        pts.append(f"{sx(c):.2f},{sy(r):.2f}")
        prev = c

    ticks = []
    for i in range(6):
        v = i / 5
        x = sx(v)
        y = sy(v * ymax)
        ticks.append(f'<line x1="{x:.2f}" y1="{top + ph}" x2="{x:.2f}" y2="{top + ph + 4}" stroke="#000"/>'
                     f'<text x="{x:.2f}" y="{top + ph + 16}" font-size="10" text-anchor="middle">{v:.1f}</text>')
        ticks.append(f'<line x1="{left - 4}" y1="{y:.2f}" x2="{left}" y2="{y:.2f}" stroke="#000"/>'
                     f'<text x="{left - 6}" y="{y + 3:.2f}" font-size="10" text-anchor="end">{v * ymax:.2f}</text>')

    return "\n".join([
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="#fff"/>',
        f'<text x="{width / 2:.1f}" y="18" font-size="13" text-anchor="middle">{escape(title)}</text>',
        f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="#000"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="#000"/>',
        *ticks,
        f'<text x="{left + pw / 2:.1f}" y="{height - 8}" font-size="11" text-anchor="middle">coverage</text>',
        f'<text x="14" y="{top + ph / 2:.1f}" font-size="11" text-anchor="middle" '
        f'transform="rotate(-90 14 {top + ph / 2:.1f})">risk</text>',
        f'<polyline fill="none" stroke="#1f5fa8" stroke-width="1.5" points="{" ".join(pts)}"/>',
        "</svg>",
        "",
    ])
