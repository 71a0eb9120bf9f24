"""Command-line entry point.

    selpredict validate  --input preds.jsonl
    selpredict eval      --input preds.jsonl --estimator sr,smp --out results/
    selpredict curve     --input preds.jsonl --estimator bald --label 3 --out curves/
    selpredict losscheck --seed 0
    selpredict bucket    --input results/metrics.jsonl --buckets freq.json --out buckets/
    selpredict simulate  --n-records 10000 --seed 7 --out preds.jsonl

Exit codes: 0 success, 1 check failure, 2 usage or I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import config
from . import losses as L
from .analysis import (AXES, BucketSpec, ConfigKey, ConfigResult, TrainingFrequencySpec,
                       bucket_refinement_report, mean_and_std)
from .confidence import EstimatorError, EstimatorSpec, estimate_confidences
from .core import Dataset, DatasetError, validate_dataset
from .io import IngestError, ingest, write_jsonl
from .report import read_jsonl, write_curve_csv, risk_coverage_svg, safe_name, write_rows
from .selective import SelectiveMetrics, macro_f1, macro_metrics
from .testkit import SyntheticSpec, check_gradient, generate, make_rng, random_loss_batch

EXIT_OK, EXIT_CHECK, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _grid(values) -> str:
    return "{" + ", ".join(repr(v) for v in values) + "}"


DEFAULTS_TEXT = (
    "defaults:\n"
    f"  MC dropout runs        N = {config.N_MC_RUNS}\n"
    f"  ECE bins               M = {config.ECE_BINS}\n"
    f"  CER/ECE weight grid    lambda in {_grid(config.LAMBDA_GRID)}\n"
    f"  gambler reward grid    r in {_grid(config.REWARD_GRID)}\n"
    f"  frequency buckets      {_grid(config.BUCKET_BOUNDARIES)}\n"
)


@dataclass
class RunConfig:
    input: Optional[Path] = None
    estimators: tuple = ("sr",)
    bald_convention: str = "standard"
    scale: float = 1.0
    out: Path = Path("selpredict_out")
    formats: tuple = ("csv", "jsonl")
    seed: int = 0
    expect_n: Optional[int] = None
    degenerate_policy: str = "exclude"
    buckets: Optional[Path] = None
    bounds: tuple = config.BUCKET_BOUNDARIES
    model_tag: Optional[str] = None
    loss_tag: Optional[str] = None
    extra: dict = field(default_factory=dict)

    def check(self) -> "RunConfig":
        bad = [f for f in self.formats if f not in config.REPORT_FORMATS]
        if bad:
            raise UsageError(f"unknown format(s) {bad}; choose from {config.REPORT_FORMATS}")
        for p in (self.input, self.buckets):
            if p is not None and not Path(p).is_file():
                raise UsageError(f"file not found: {p}")
        if self.degenerate_policy not in config.DEGENERATE_POLICIES:
            raise UsageError(f"unknown degenerate-rf policy {self.degenerate_policy!r}")
        try:
            for e in self.estimators:
                EstimatorSpec(e, self.bald_convention)
        except EstimatorError as exc:
            raise UsageError(str(exc)) from None
        return self


def _split(value: str) -> tuple:
    return tuple(v.strip() for v in value.split(",") if v.strip())


def _load_checked(cfg: RunConfig) -> Dataset:
    d = ingest(cfg.input)
    if cfg.expect_n is not None and d.n_samples != cfg.expect_n:
        raise UsageError(f"expected N = {cfg.expect_n} MC samples per record, file has N = {d.n_samples}")
    return d


def _tags(d: Dataset, cfg: RunConfig) -> tuple:
    model = cfg.model_tag or str(d.meta.get("model", "unknown"))
    loss = cfg.loss_tag or str(d.meta.get("loss", "task"))
    return model, loss


def _estimators(d: Dataset, cfg: RunConfig) -> list:
    specs = [EstimatorSpec(e, cfg.bald_convention) for e in cfg.estimators]
    for s in specs:
        if d.n_samples < s.min_samples:
            raise UsageError(f"estimator {s.name!r} requires N >= {s.min_samples} MC samples; file has N = {d.n_samples}")
    return specs


def _num(x):
    return None if x is None else float(x)


def metric_rows(d: Dataset, spec: EstimatorSpec, m: SelectiveMetrics, f1, model: str, loss: str,
                scale: float) -> list:
    base = {"model": model, "loss": loss, "estimator": spec.name}
    rows = []
    for i, label in enumerate(m.labels):
        rows.append({
            **base, "scope": "label", "label": label,
            "aurcc": float(m.aurcc[i]) * scale, "rpp": float(m.rpp[i]) * scale, "rf": float(m.rf[i]),
            "rf_degenerate": int(not m.rf_defined(i)),
            "precision": float(f1.precision[i]), "recall": float(f1.recall[i]), "f1": float(f1.f1[i]),
        })
    rows.append({
        **base, "scope": "macro", "label": "macro",
        "aurcc": m.macro_aurcc * scale, "rpp": m.macro_rpp * scale, "rf": _num(m.macro_rf),
        "rf_degenerate": len(m.degenerate_labels),
        "precision": float(np.mean(f1.precision)), "recall": float(np.mean(f1.recall)), "f1": f1.macro_f1,
    })
    return rows


def _write_curves(curves, labels, out: Path, prefix: str, formats) -> None:
    out.mkdir(parents=True, exist_ok=True)
    for i, curve in enumerate(curves):
        stem = out / f"{prefix}{i:02d}_{safe_name(labels[i])}"
        if "csv" in formats:
            write_curve_csv(curve, stem.with_suffix(".csv"))
        if "svg" in formats:
            stem.with_suffix(".svg").write_text(
                risk_coverage_svg(curve, f"label {labels[i]} ({prefix.rstrip('_')})"), encoding="utf-8")


def cmd_validate(cfg: RunConfig) -> int:
    try:
        d = ingest(cfg.input, validate=False)
    except IngestError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CHECK
    violations = validate_dataset(d)
    for v in violations:
        print(v)
    if violations:
        print(f"{len(violations)} violation(s)", file=sys.stderr)
        return EXIT_CHECK
    print(f"ok: {len(d)} records, {d.n_labels} labels, N = {d.n_samples}, decisions from {d.decision_source}")
    return EXIT_OK


def cmd_eval(cfg: RunConfig) -> int:
    d = _load_checked(cfg)
    specs = _estimators(d, cfg)
    model, loss = _tags(d, cfg)
    f1 = macro_f1(d)
    rows = []
    out = Path(cfg.out)
    for spec in specs:
        conf = estimate_confidences(d, spec)
        m = macro_metrics(d, conf, cfg.degenerate_policy, keep_curves=True)
        rows.extend(metric_rows(d, spec, m, f1, model, loss, cfg.scale))
        _write_curves(m.curves, m.labels, out / "curves", f"{spec.name}_", cfg.formats)
        macro_rf = "n/a" if m.macro_rf is None else f"{m.macro_rf:.4f}"
        print(f"{spec.name:>18}  AURCC {m.macro_aurcc * cfg.scale:.4f}  RPP {m.macro_rpp * cfg.scale:.4f}  "
              f"Rf {macro_rf}  m-F1 {f1.macro_f1:.4f}")
    write_rows(rows, out / "metrics", [f for f in cfg.formats if f in ("csv", "jsonl")] or ["jsonl"])
    run = {
        "input": str(cfg.input), "records": len(d), "labels": list(d.label_set.labels),
        "n_samples": d.n_samples, "decision_source": d.decision_source,
        "estimators": [s.name for s in specs], "model": model, "loss": loss, "scale": cfg.scale,
        "degenerate_policy": cfg.degenerate_policy, "defaults": config.defaults(),
    }
    (out / "run.json").write_text(json.dumps(run, indent=2) + "\n", encoding="utf-8")
    return EXIT_OK


def cmd_curve(cfg: RunConfig) -> int:
    d = _load_checked(cfg)
    specs = _estimators(d, cfg)
    label = cfg.extra.get("label")
    if label is None:
        idx = list(range(d.n_labels))
    elif label in d.label_set.labels:
        idx = [d.label_set.index(label)]
    elif label.isdigit() and int(label) < d.n_labels:
        idx = [int(label)]
    else:
        raise UsageError(f"unknown label {label!r}")
    for spec in specs:
        m = macro_metrics(d, estimate_confidences(d, spec), cfg.degenerate_policy, keep_curves=True)
        curves = [m.curves[i] for i in idx]
        labels = [m.labels[i] for i in idx]
        _write_curves(curves, labels, Path(cfg.out), f"{spec.name}_", cfg.formats)
        for i, c in zip(idx, curves):
            print(f"{spec.name} label {m.labels[i]}: {c.tie_groups} points, AURCC {m.aurcc[i] * cfg.scale:.4f}")
    return EXIT_OK


LOSS_CHECKS = {
    "bce": L.bce_task_loss,
    "cer": L.cer_loss,
    "ece": L.ece_loss,
    "gambler": L.gambler_loss,
}


def _ece_value_checks(n_bins: int, rng) -> list:
    """(name, ok, detail) for ECE value properties that need no gradient."""
    out = []
    z = np.full((4, 2), 40.0)
    v = L.ece_loss(L.LossBatch(z, np.ones((4, 2)), n_bins=n_bins)).value
    out.append(("ece confident+correct == 0", abs(v) < 1e-12, v))
    # conf 0.8 everywhere, 3 of 5 correct -> |0.6 - 0.8|
    z = np.full((5, 1), np.log(4.0))
    v = L.ece_loss(L.LossBatch(z, np.array([[1], [1], [1], [0], [0]], float), n_bins=1)).value
    out.append(("ece single bin == 0.2", abs(v - 0.2) < 1e-12, v))
    worst = 0.0
    ok = True
    for _ in range(100):
        b = random_loss_batch(rng, "ece", n_bins=n_bins)
        v = L.ece_loss(b).value
        ok &= 0.0 <= v <= 1.0
        worst = max(worst, v)
    out.append(("ece within [0, 1]", ok, worst))
    return out


def cmd_losscheck(cfg: RunConfig) -> int:
    ex = cfg.extra
    rng = make_rng(cfg.seed)
    kw = {"lam": ex.get("lam", 0.1), "reward": ex.get("reward", 5.0), "n_bins": ex.get("n_bins", config.ECE_BINS)}
    tol = ex.get("tol", config.FD_REL_TOL)
    step = ex.get("step", config.FD_STEP)
    n_batches = ex.get("batches", 100)
    all_ok = True
    for name in ex.get("losses", ("bce", "cer", "gambler", "ece")):
        fn = LOSS_CHECKS[name]
        worst = None
        for b_i in range(n_batches):
            batch = random_loss_batch(rng, name, **kw)
            res = check_gradient(fn, batch, step)
            if worst is None or res.rel_error > worst[0].rel_error:
                worst = (res, b_i)
        ok = worst[0].rel_error <= tol
        all_ok &= ok
        res, b_i = worst
        print(f"{'PASS' if ok else 'FAIL'}  {name:<8} max rel err {res.rel_error:.3e} "
              f"(batch {b_i}, worst coord {res.worst_index}, |diff| {res.worst_abs_diff:.3e})")
    for name, ok, detail in _ece_value_checks(kw["n_bins"], rng):
        all_ok &= bool(ok)
        print(f"{'PASS' if ok else 'FAIL'}  {name} ({detail:.6g})")
    return EXIT_OK if all_ok else EXIT_CHECK


def _read_frequencies(path: Path) -> TrainingFrequencySpec:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read frequency file {path}: {exc}") from None
    if isinstance(obj, dict) and "frequencies" in obj:
        obj = obj["frequencies"]
    if not isinstance(obj, dict):
        raise UsageError("frequency file must map label -> fraction")
    return TrainingFrequencySpec(obj)


def results_from_rows(rows: Sequence[dict]) -> list:
    """Rebuild per-configuration results from ``eval`` metric rows."""
    grouped = {}
    for r in rows:
        if r.get("scope") != "label":
            continue
        key = ConfigKey(str(r["model"]), str(r["loss"]), str(r["estimator"]))
        grouped.setdefault(key, []).append(r)
    out = []
    for key, rs in grouped.items():
        labels = tuple(str(r["label"]) for r in rs)
        if len(set(labels)) != len(labels):
            raise UsageError(f"duplicate label rows for configuration {key}")
        m = SelectiveMetrics(
            labels=labels,
            aurcc=np.array([r["aurcc"] for r in rs], dtype=float),
            rpp=np.array([r["rpp"] for r in rs], dtype=float),
            rf=np.array([r["rf"] for r in rs], dtype=float),
            degenerate_labels=tuple(str(r["label"]) for r in rs if r.get("rf_degenerate")),
        )
        f1 = _RowF1(np.array([r["f1"] for r in rs], dtype=float))
        out.append(ConfigResult(key, m, f1))
    return out


@dataclass
class _RowF1:
    f1: np.ndarray

    @property
    def macro_f1(self) -> float:
        return float(np.mean(self.f1))


def cmd_bucket(cfg: RunConfig) -> int:
    freq = _read_frequencies(cfg.buckets)
    rows = []
    for p in cfg.extra.get("inputs", [cfg.input]):
        if not Path(p).is_file():
            raise UsageError(f"file not found: {p}")
        rows.extend(read_jsonl(p))
    results = results_from_rows(rows)
    if not results:
        raise UsageError("no per-label metric rows found in input")
    try:
        freq.for_labels(results[0].metrics.labels)
    except KeyError as exc:
        raise UsageError(exc.args[0]) from None
    spec = BucketSpec(cfg.bounds)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        report = bucket_refinement_report(results, freq, spec)
    for w in caught:
        print(f"notice: {w.message}")
    table = [r._asdict() for r in report]
    summary = [r._asdict() for ax in AXES for r in mean_and_std(results, ax)]
    fmts = [f for f in cfg.formats if f in ("csv", "jsonl")] or ["csv"]
    out = Path(cfg.out)
    write_rows(table, out / "bucket_report", fmts)
    write_rows(summary, out / "summary", fmts)
    print(f"{'axis':<10} {'group':<18} {'bucket':<14} {'labels':>6} {'configs':>7} {'mean Rf':>8}")
    for r in report:
        print(f"{r.axis:<10} {r.group:<18} {r.bucket_range:<14} {r.n_labels:>6} {r.n_configs:>7} {r.mean_rf:>8.4f}")
    return EXIT_OK


def cmd_simulate(cfg: RunConfig) -> int:
    ex = cfg.extra
    spec = SyntheticSpec(
        n_records=ex["n_records"], n_labels=ex["n_labels"], n_samples=ex["n_samples"], seed=cfg.seed,
        mode=ex["mode"], temperature=ex.get("temperature"), noise=ex["noise"],
        base_rates=ex.get("base_rates"),
    )
    d = generate(spec)
    meta = dict(d.meta)
    if cfg.model_tag:
        meta["model"] = cfg.model_tag
    if cfg.loss_tag:
        meta["loss"] = cfg.loss_tag
    d = Dataset(d.label_set, d.records, meta)
    out = Path(cfg.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_jsonl(d, out)
    print(f"wrote {len(d)} records x {d.n_labels} labels x N = {d.n_samples} to {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.RawDescriptionHelpFormatter
    p = argparse.ArgumentParser(prog="selpredict", description="Selective-prediction evaluation for multi-label classifiers.",
                                epilog=DEFAULTS_TEXT, formatter_class=fmt)
    p.add_argument("--show-config", action="store_true", help="print default settings as JSON and exit")
    sub = p.add_subparsers(dest="command")

    def common(sp, needs_input=True, out_default="selpredict_out"):
        sp.add_argument("--input", required=needs_input, type=Path, help="prediction log (JSON Lines)")
        sp.add_argument("--out", type=Path, default=Path(out_default), help="output directory (default: %(default)s)")
        sp.add_argument("--format", default="csv,jsonl", help="comma list from csv,jsonl,svg (default: %(default)s)")
        sp.add_argument("--seed", type=int, default=0)

    def estimator_opts(sp):
        sp.add_argument("--estimator", default="sr",
                        help="sr, smp, pv, bald, or a comma list of them (default: %(default)s)")
        sp.add_argument("--bald-convention", default="standard", choices=["standard", "paper-literal"])
        sp.add_argument("--scale", type=float, default=1.0, help="multiply AURCC and RPP (e.g. 100)")
        sp.add_argument("--degenerate-rf", default="exclude", choices=list(config.DEGENERATE_POLICIES),
                        help="labels with all-correct / all-wrong decisions: drop from the macro Rf or count as 0")
        sp.add_argument("--expect-n", type=int, help="fail unless every record has this many MC samples")
        sp.add_argument("--model-tag")
        sp.add_argument("--loss-tag")

    sp = sub.add_parser("validate", help="check a prediction log", formatter_class=fmt)
    sp.add_argument("--input", required=True, type=Path)

    sp = sub.add_parser("eval", help="per-label and macro AURCC / RPP / Rf / F1", epilog=DEFAULTS_TEXT, formatter_class=fmt)
    common(sp)
    estimator_opts(sp)

    sp = sub.add_parser("curve", help="risk-coverage curves only", formatter_class=fmt)
    common(sp)
    estimator_opts(sp)
    sp.add_argument("--label", help="label id or index (default: all)")

    sp = sub.add_parser("losscheck", help="finite-difference gradient checks of the losses", epilog=DEFAULTS_TEXT,
                        formatter_class=fmt)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--batches", type=int, default=100)
    sp.add_argument("--tol", type=float, default=config.FD_REL_TOL, help="max relative error (default: %(default)s)")
    sp.add_argument("--step", type=float, default=config.FD_STEP, help="central-difference step (default: %(default)s)")
    sp.add_argument("--lambda", dest="lam", type=float, default=0.1,
                    help=f"regularizer weight; grid {_grid(config.LAMBDA_GRID)} (default: %(default)s)")
    sp.add_argument("--reward", type=float, default=5.0,
                    help=f"gambler reward r >= 1; grid {_grid(config.REWARD_GRID)} (default: %(default)s)")
    sp.add_argument("--n-bins", type=int, default=config.ECE_BINS, help="ECE bins M (default: %(default)s)")

    sp = sub.add_parser("bucket", help="mean refinement per label-frequency bucket", formatter_class=fmt)
    sp.add_argument("--input", required=True, type=Path, nargs="+", help="metrics.jsonl file(s) written by eval")
    sp.add_argument("--buckets", required=True, type=Path, help="JSON file mapping label -> training frequency")
    sp.add_argument("--bounds", default=",".join(repr(b) for b in config.BUCKET_BOUNDARIES),
                    help="bucket upper bounds (default: %(default)s)")
    sp.add_argument("--out", type=Path, default=Path("selpredict_out"))
    sp.add_argument("--format", default="csv,jsonl")

    sp = sub.add_parser("simulate", help="write a synthetic prediction log", epilog=DEFAULTS_TEXT, formatter_class=fmt)
    sp.add_argument("--out", type=Path, required=True, help="output .jsonl path")
    sp.add_argument("--n-records", type=int, default=1000)
    sp.add_argument("--n-labels", type=int, default=14)
    sp.add_argument("--n-samples", type=int, default=config.N_MC_RUNS, help="MC samples N (default: %(default)s)")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--mode", default="calibrated", choices=["calibrated", "overconfident", "underconfident"])
    sp.add_argument("--temperature", type=float)
    sp.add_argument("--noise", type=float, default=0.05, help="MC noise width (default: %(default)s)")
    sp.add_argument("--base-rates", help="comma list of per-label positive rates")
    sp.add_argument("--model-tag")
    sp.add_argument("--loss-tag")
    return p


def config_from_args(args) -> RunConfig:
    cmd = args.command
    cfg = RunConfig(seed=getattr(args, "seed", 0))
    if cmd in ("validate", "eval", "curve"):
        cfg.input = args.input
    if cmd in ("eval", "curve"):
        cfg.estimators = _split(args.estimator)
        cfg.bald_convention = args.bald_convention.replace("-", "_")
        cfg.scale = args.scale
        cfg.degenerate_policy = args.degenerate_rf
        cfg.expect_n = args.expect_n
        cfg.model_tag, cfg.loss_tag = args.model_tag, args.loss_tag
        cfg.extra["label"] = getattr(args, "label", None)
    if cmd in ("eval", "curve", "bucket"):
        cfg.out = args.out
        cfg.formats = _split(args.format)
    if cmd == "bucket":
        cfg.input = args.input[0]
        cfg.extra["inputs"] = list(args.input)
        cfg.buckets = args.buckets
        try:
            cfg.bounds = tuple(float(x) for x in _split(args.bounds))
            BucketSpec(cfg.bounds)
        except ValueError as exc:
            raise UsageError(f"bad --bounds: {exc}") from None
    if cmd == "losscheck":
        cfg.extra.update(batches=args.batches, tol=args.tol, step=args.step, lam=args.lam,
                         reward=args.reward, n_bins=args.n_bins)
    if cmd == "simulate":
        cfg.out = args.out
        cfg.model_tag, cfg.loss_tag = args.model_tag, args.loss_tag
        rates = None
        if args.base_rates:
            rates = [float(x) for x in _split(args.base_rates)]
        cfg.extra.update(n_records=args.n_records, n_labels=args.n_labels, n_samples=args.n_samples,
                         mode=args.mode, temperature=args.temperature, noise=args.noise, base_rates=rates)
    return cfg.check()


COMMANDS = {
    "validate": cmd_validate,
    "eval": cmd_eval,
    "curve": cmd_curve,
    "losscheck": cmd_losscheck,
    "bucket": cmd_bucket,
    "simulate": cmd_simulate,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.show_config:
        print(json.dumps(config.defaults(), indent=2))
        return EXIT_OK
    if not args.command:
        parser.print_help()
        return EXIT_USAGE
    try:
        cfg = config_from_args(args)
        return COMMANDS[args.command](cfg)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (IngestError, DatasetError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CHECK
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
