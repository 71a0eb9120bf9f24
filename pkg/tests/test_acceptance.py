"""Acceptance gate. One test per criterion; the terminal summary prints a
PASS/FAIL line for each (see conftest.py)."""
import csv
import json
import time
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from selpredict import cli, config
from selpredict.analysis import bucketize
from selpredict.confidence import bald_confidence, pv_confidence, smp_confidence, sr_confidence
from selpredict.core import ECTHR_ARTICLES, BinaryLabelView
from selpredict.losses import LossBatch, bce_task_loss, cer_loss, ece_loss, gambler_loss
from selpredict.selective import aurcc, refinement, risk_coverage_curve, rpp
from selpredict.testkit import (
    SyntheticSpec,
    aurcc_oracle,
    check_gradient,
    generate,
    make_rng,
    random_loss_batch,
    rpp_oracle,
)

from test_analysis import ECTHR_LIKE_FREQ

criterion = pytest.mark.criterion


def view(losses):
    losses = np.asarray(losses, dtype=np.int64)
    z = np.zeros(len(losses))
    return BinaryLabelView(0, losses, z, z)


def random_instance(rng, n_max=512):
    """Losses plus confidences drawn from a mix of tie patterns."""
    n = int(rng.integers(1, n_max + 1))
    losses = (rng.random(n) < rng.uniform(0.05, 0.95)).astype(np.int64)
    pattern = rng.integers(0, 4)
    if pattern == 0:
        conf = rng.random(n)
    elif pattern == 1:
        conf = np.round(rng.random(n), int(rng.integers(1, 3)))
    elif pattern == 2:
        conf = rng.choice(rng.random(3), size=n)
    else:
        conf = np.full(n, rng.random())
    return losses, conf


@criterion("AC1 rpp and aurcc match brute-force oracles within 1e-12 on 200 instances, < 5 s")
def test_oracle_equivalence():
    rng = make_rng(101)
    t0 = time.perf_counter()
    for _ in range(200):
        losses, conf = random_instance(rng)
        v = view(losses)
        assert abs(rpp(v, conf) - rpp_oracle(losses, conf)) <= 1e-12
        assert abs(aurcc(risk_coverage_curve(v, conf)) - aurcc_oracle(losses, conf)) <= 1e-12
    assert time.perf_counter() - t0 < 5.0


@criterion("AC2 worked example gives RPP 0.0625, Rf 0.25, AURCC 1/3")
def test_worked_example():
    v = view([0, 1, 0, 1])
    conf = [0.9, 0.8, 0.7, 0.6]
    assert rpp(v, conf) == 0.0625
    assert refinement(v, conf) == (0.25, False)
    assert aurcc(risk_coverage_curve(v, conf)) == 1 / 3
    assert aurcc_oracle([0, 1, 0, 1], conf) == pytest.approx(1 / 3, abs=1e-15)


@criterion("AC3 x^3 + x applied to confidences leaves AURCC, RPP, Rf unchanged on 50 instances")
def test_rank_invariance():
    rng = make_rng(103)
    for _ in range(50):
        losses, conf = random_instance(rng)
        warped = conf ** 3 + conf
        # the map must keep distinct values distinct in floating point
        assert len(np.unique(warped)) == len(np.unique(conf))
        v = view(losses)
        assert aurcc(risk_coverage_curve(v, warped)) - aurcc(risk_coverage_curve(v, conf)) == 0
        assert rpp(v, warped) - rpp(v, conf) == 0
        assert refinement(v, warped).value - refinement(v, conf).value == 0


@criterion("AC4 RPP = Rf * c(n - c) / n^2 within 1e-12 when 0 < c < n")
def test_rpp_refinement_identity():
    rng = make_rng(104)
    checked = 0
    for _ in range(300):
        losses, conf = random_instance(rng)
        n = len(losses)
        c = int((losses == 0).sum())
        if not 0 < c < n:
            continue
        v = view(losses)
        assert abs(rpp(v, conf) - refinement(v, conf).value * c * (n - c) / n ** 2) <= 1e-12
        checked += 1
    assert checked >= 200


@criterion("AC5 identical samples give PV = 0, BALD = 0, and SMP = SR exactly")
def test_estimator_degeneracy():
    rng = make_rng(105)
    ps = np.concatenate([[0.0, 1.0, 0.5, 0.1, 0.7, 1 / 3], rng.random(500)])
    for p in ps:
        for n in (2, 3, 10, 17):
            s = np.full(n, p)
            assert pv_confidence(s) == 0.0
            assert bald_confidence(s, "standard") == 0.0
            assert smp_confidence(s) == sr_confidence(p)


@criterion("AC6 BCE, CER, Gambler gradients match central differences within 1e-6 on 100 batches each, < 30 s")
def test_gradient_suite():
    rng = make_rng(106)
    t0 = time.perf_counter()
    worst = {}
    for name, fn in (("bce", bce_task_loss), ("cer", cer_loss), ("gambler", gambler_loss)):
        errs = [check_gradient(fn, random_loss_batch(rng, name), config.FD_STEP).rel_error for _ in range(100)]
        worst[name] = max(errs)
    assert all(e <= 1e-6 for e in worst.values()), worst
    assert time.perf_counter() - t0 < 30.0


@criterion("AC7 calibrated generator ECE < 0.02 and overconfident (t = 2) ECE > 0.05 on 100k cells")
def test_generator_calibration():
    def ece_of(mode):
        d = generate(SyntheticSpec(n_records=100_000, n_labels=1, n_samples=1, seed=7, mode=mode))
        p = np.clip(d.det, 1e-15, 1 - 1e-15)
        return ece_loss(LossBatch(np.log(p) - np.log1p(-p), d.truth)).value

    assert ece_of("calibrated") < 0.02
    assert ece_of("overconfident") > 0.05


@criterion("AC8 random confidences give Rf in [0.48, 0.52] on 10k balanced instances")
def test_random_refinement():
    rng = make_rng(108)
    losses = np.repeat([0, 1], 5000)
    conf = rng.random(10_000)
    r = refinement(view(losses), conf)
    assert not r.degenerate
    assert 0.48 <= r.value <= 0.52


@criterion("AC9 N = 10, M = 10, lambda and r grids appear in --help and config")
def test_default_constants(capsys):
    assert cli.main(["--help"]) == 0
    text = capsys.readouterr().out
    for s in ("N = 10", "M = 10", "{0.01, 0.05, 0.1, 0.5}", "{1.0, 5.0, 6.5, 14.0}"):
        assert s in text
    d = config.defaults()
    assert d["n_mc_runs"] == 10
    assert d["ece_bins"] == 10
    assert d["lambda_grid"] == [0.01, 0.05, 0.1, 0.5]
    assert d["reward_grid"] == [1.0, 5.0, 6.5, 14.0]


@criterion("AC10 14-article frequency file splits into buckets of 5/4/4/1")
def test_bucket_sizes(tmp_path):
    fq = tmp_path / "freq.json"
    fq.write_text(json.dumps(ECTHR_LIKE_FREQ))
    b = bucketize(cli._read_frequencies(fq), labels=ECTHR_ARTICLES)
    assert [len(x) for x in b] == [5, 4, 4, 1]


@criterion("AC11 simulate -> eval -> bucket on 10k x 14 x N=10 under 10 s with parseable CSV/JSONL/SVG")
def test_end_to_end(tmp_path):
    sim = tmp_path / "sim.jsonl"
    ev = tmp_path / "ev"
    bk = tmp_path / "bk"
    fq = tmp_path / "freq.json"
    fq.write_text(json.dumps(ECTHR_LIKE_FREQ))
    t0 = time.perf_counter()
    assert cli.main(["simulate", "--out", str(sim), "--n-records", "10000", "--n-labels", "14",
                     "--n-samples", "10", "--seed", "1", "--model-tag", "synthetic"]) == 0
    assert cli.main(["eval", "--input", str(sim), "--out", str(ev), "--estimator", "sr,smp,pv,bald",
                     "--format", "csv,jsonl,svg"]) == 0
    assert cli.main(["bucket", "--input", str(ev / "metrics.jsonl"), "--buckets", str(fq),
                     "--out", str(bk)]) == 0
    assert time.perf_counter() - t0 < 10.0

    for stem in (ev / "metrics", bk / "bucket_report", bk / "summary"):
        with open(stem.with_suffix(".csv"), newline="") as fh:
            rows = list(csv.DictReader(fh))
        lines = stem.with_suffix(".jsonl").read_text().splitlines()
        assert rows and len(rows) == len(lines)
        for line in lines:
            json.loads(line)
    svgs = sorted((ev / "curves").glob("*.svg"))
    assert len(svgs) == 4 * 14
    for p in svgs:
        root = ET.parse(p).getroot()
        assert root.tag.endswith("svg")
