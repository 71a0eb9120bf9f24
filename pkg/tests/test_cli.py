import csv
import io
import json

import numpy as np
import pytest

from selpredict import cli, config
from selpredict.io import IngestError, dump_records, ingest, parse_records, write_jsonl
from selpredict.report import read_jsonl
from selpredict.testkit import SyntheticSpec, generate

from test_analysis import ECTHR_LIKE_FREQ


def jl(*objs):
    return [json.dumps(o) for o in objs]


class TestIngest:
    def test_two_records(self):
        d = parse_records(jl(
            {"id": "a", "truth": [1, 0], "samples": [[0.9, 0.1], [0.8, 0.2]]},
            {"id": "b", "truth": [0, 1], "samples": [[0.3, 0.6], [0.1, 0.7]]},
        ))
        assert len(d) == 2
        assert d.n_samples == 2
        assert d.decision_source == "sample_mean"
        assert d.label_set.labels == ("0", "1")

    def test_header(self):
        d = parse_records(jl(
            {"labels": ["x", "y"], "meta": {"model": "m"}},
            {"id": "a", "truth": [1, 0], "samples": [[0.9, 0.1]], "det": [0.95, 0.05]},
        ))
        assert d.label_set.labels == ("x", "y")
        assert d.meta["model"] == "m"
        assert d.decision_source == "det_probs"

    def test_truth_length_cites_line(self):
        lines = jl(
            {"labels": ["x", "y"]},
            {"id": "a", "truth": [1, 0], "samples": [[0.9, 0.1]]},
            {"id": "b", "truth": [1], "samples": [[0.9, 0.1]]},
        )
        with pytest.raises(IngestError, match="line 3"):
            parse_records(lines)

    def test_malformed_json(self):
        with pytest.raises(IngestError, match="line 2"):
            parse_records(['{"id": "a", "truth": [1], "samples": [[0.5]]}', "{not json"])

    def test_validation_errors(self):
        lines = jl(
            {"id": "a", "truth": [1], "samples": [[1.5]]},
            {"id": "a", "truth": [1], "samples": [[0.5]]},
        )
        d = parse_records(lines, validate=False)
        assert len(d) == 2
        with pytest.raises(ValueError):
            parse_records(lines)

    def test_round_trip_bit_identical(self, tmp_path):
        d = generate(SyntheticSpec(n_records=40, n_labels=14, seed=4))
        p = tmp_path / "a.jsonl"
        write_jsonl(d, p)
        back = ingest(p)
        assert back.samples.tobytes() == d.samples.tobytes()
        assert back.det.tobytes() == d.det.tobytes()
        assert back.truth.tobytes() == d.truth.tobytes()
        assert back.label_set == d.label_set
        buf = io.StringIO()
        dump_records(back, buf)
        assert buf.getvalue() == p.read_text()


@pytest.fixture
def sim_file(tmp_path):
    p = tmp_path / "sim.jsonl"
    assert cli.main(["simulate", "--out", str(p), "--n-records", "300", "--n-labels", "14", "--seed", "2",
                     "--noise", "0.2"]) == 0
    return p


class TestEval:
    def test_outputs(self, sim_file, tmp_path):
        out = tmp_path / "ev"
        assert cli.main(["eval", "--input", str(sim_file), "--out", str(out), "--estimator", "sr,smp,pv,bald",
                         "--format", "csv,jsonl,svg"]) == 0
        rows = read_jsonl(out / "metrics.jsonl")
        assert {r["estimator"] for r in rows} == {"sr", "smp", "pv", "bald"}
        assert len([r for r in rows if r["scope"] == "macro"]) == 4
        assert len(list((out / "curves").glob("*.svg"))) == 4 * 14
        run = json.loads((out / "run.json").read_text())
        assert run["decision_source"] == "det_probs"
        assert run["n_samples"] == 10

    def test_csv_matches_jsonl(self, sim_file, tmp_path):
        out = tmp_path / "ev"
        cli.main(["eval", "--input", str(sim_file), "--out", str(out), "--estimator", "sr"])
        js = read_jsonl(out / "metrics.jsonl")
        with open(out / "metrics.csv", newline="") as fh:
            cs = list(csv.DictReader(fh))
        assert len(js) == len(cs)
        for a, b in zip(js, cs):
            for k in ("aurcc", "rpp", "rf"):
                if a[k] is not None:
                    assert float(b[k]) == a[k]

    def test_estimators_differ(self, sim_file, tmp_path):
        cli.main(["eval", "--input", str(sim_file), "--out", str(tmp_path / "e"), "--estimator", "sr,smp"])
        macro = {r["estimator"]: r["rf"] for r in read_jsonl(tmp_path / "e" / "metrics.jsonl")
                 if r["scope"] == "macro"}
        assert macro["sr"] != macro["smp"]

    def test_scale(self, sim_file, tmp_path):
        cli.main(["eval", "--input", str(sim_file), "--out", str(tmp_path / "a")])
        cli.main(["eval", "--input", str(sim_file), "--out", str(tmp_path / "b"), "--scale", "100"])
        a = read_jsonl(tmp_path / "a" / "metrics.jsonl")
        b = read_jsonl(tmp_path / "b" / "metrics.jsonl")
        for x, y in zip(a, b):
            assert y["aurcc"] == pytest.approx(100 * x["aurcc"], rel=1e-12)
            assert y["rpp"] == pytest.approx(100 * x["rpp"], rel=1e-12)
            assert y["rf"] == x["rf"]

    def test_single_sample_smp_fails(self, tmp_path, capsys):
        p = tmp_path / "one.jsonl"
        p.write_text("\n".join(jl({"id": "a", "truth": [1], "samples": [[0.7]]},
                                  {"id": "b", "truth": [0], "samples": [[0.4]]})) + "\n")
        code = cli.main(["eval", "--input", str(p), "--out", str(tmp_path / "o"), "--estimator", "smp"])
        assert code != 0
        assert "N >= 2" in capsys.readouterr().err
        assert cli.main(["eval", "--input", str(p), "--out", str(tmp_path / "o"), "--estimator", "sr"]) == 0

    def test_curve_single_label(self, sim_file, tmp_path):
        out = tmp_path / "c"
        assert cli.main(["curve", "--input", str(sim_file), "--out", str(out), "--label", "P1-1"]) == 0
        files = list(out.glob("*.csv"))
        assert len(files) == 1
        rows = list(csv.reader(files[0].open()))
        assert rows[0] == ["coverage", "risk"]


class TestValidate:
    def test_ok(self, sim_file, capsys):
        assert cli.main(["validate", "--input", str(sim_file)]) == 0
        assert "ok: 300 records" in capsys.readouterr().out

    def test_violations(self, tmp_path, capsys):
        p = tmp_path / "bad.jsonl"
        p.write_text("\n".join(jl({"id": "a", "truth": [2], "samples": [[0.7]]},
                                  {"id": "a", "truth": [0], "samples": [[0.4]]})) + "\n")
        assert cli.main(["validate", "--input", str(p)]) == 1
        out = capsys.readouterr().out
        assert "truth_value" in out and "duplicate_id" in out

    def test_missing_file(self, tmp_path):
        assert cli.main(["validate", "--input", str(tmp_path / "nope.jsonl")]) != 0


class TestLossCheck:
    def test_passes(self, capsys):
        assert cli.main(["losscheck", "--batches", "10"]) == 0
        out = capsys.readouterr().out
        for name in ("bce", "cer", "gambler", "ece"):
            assert f"PASS  {name}" in out

    def test_detects_bug(self, monkeypatch, capsys):
        from selpredict import losses as L

        def broken(batch):
            out = L.bce_task_loss(batch)
            g = out.grad.copy()
            g[0, 1] *= 1.5
            return L.LossOutput(out.value, g, out.components)

        monkeypatch.setitem(cli.LOSS_CHECKS, "bce", broken)
        assert cli.main(["losscheck", "--batches", "3"]) == 1
        out = capsys.readouterr().out
        assert "FAIL  bce" in out
        assert "worst coord (0, 1)" in out


class TestBucket:
    @pytest.fixture
    def metrics_file(self, tmp_path):
        p = tmp_path / "sim.jsonl"
        cli.main(["simulate", "--out", str(p), "--n-records", "200", "--seed", "5", "--model-tag", "bert"])
        cli.main(["eval", "--input", str(p), "--out", str(tmp_path / "ev"), "--estimator", "sr,smp,pv,bald"])
        return tmp_path / "ev" / "metrics.jsonl"

    def test_ecthr_buckets(self, metrics_file, tmp_path, capsys):
        fq = tmp_path / "freq.json"
        fq.write_text(json.dumps(ECTHR_LIKE_FREQ))
        out = tmp_path / "bk"
        assert cli.main(["bucket", "--input", str(metrics_file), "--buckets", str(fq), "--out", str(out)]) == 0
        rows = read_jsonl(out / "bucket_report.jsonl")
        est = [r for r in rows if r["axis"] == "estimator"]
        assert sorted({(r["bucket"], r["n_labels"]) for r in est}) == [(1, 5), (2, 4), (3, 4), (4, 1)]
        for b in (1, 2, 3, 4):
            assert len([r for r in est if r["bucket"] == b]) == 4
        assert (out / "summary.csv").exists()

    def test_empty_bucket_notice(self, metrics_file, tmp_path, capsys):
        fq = tmp_path / "freq.json"
        freq = {k: (0.05 if v < 0.2 else 0.3) for k, v in ECTHR_LIKE_FREQ.items()}
        fq.write_text(json.dumps({"frequencies": freq}))
        out = tmp_path / "bk"
        assert cli.main(["bucket", "--input", str(metrics_file), "--buckets", str(fq), "--out", str(out)]) == 0
        assert "notice:" in capsys.readouterr().out
        assert {r["bucket"] for r in read_jsonl(out / "bucket_report.jsonl")} == {2, 4}

    def test_deterministic(self, metrics_file, tmp_path):
        fq = tmp_path / "freq.json"
        fq.write_text(json.dumps(ECTHR_LIKE_FREQ))
        for o in ("a", "b"):
            cli.main(["bucket", "--input", str(metrics_file), "--buckets", str(fq), "--out", str(tmp_path / o)])
        assert (tmp_path / "a" / "bucket_report.csv").read_bytes() == (tmp_path / "b" / "bucket_report.csv").read_bytes()

    def test_missing_label(self, metrics_file, tmp_path):
        fq = tmp_path / "freq.json"
        fq.write_text(json.dumps({"2": 0.1}))
        assert cli.main(["bucket", "--input", str(metrics_file), "--buckets", str(fq)]) == 2


class TestHelp:
    def test_help_lists_constants(self, capsys):
        assert cli.main(["--help"]) == 0
        out = capsys.readouterr().out
        for text in ("N = 10", "M = 10", "{0.01, 0.05, 0.1, 0.5}", "{1.0, 5.0, 6.5, 14.0}"):
            assert text in out

    def test_show_config(self, capsys):
        assert cli.main(["--show-config"]) == 0
        shown = json.loads(capsys.readouterr().out)
        assert shown["n_mc_runs"] == config.N_MC_RUNS == 10
        assert shown["lambda_grid"] == [0.01, 0.05, 0.1, 0.5]

    def test_no_command(self):
        assert cli.main([]) == 2

    def test_bad_format(self, sim_file, tmp_path):
        assert cli.main(["eval", "--input", str(sim_file), "--out", str(tmp_path), "--format", "xml"]) == 2


def test_module_entry_point():
    import subprocess
    import sys

    r = subprocess.run([sys.executable, "-m", "selpredict", "--show-config"], capture_output=True, text=True)
    assert r.returncode == 0
    assert np.isclose(json.loads(r.stdout)["ece_bins"], 10)
