import csv
import json

import numpy as np
import pytest

from consistent_bayes import RngStream, SampleBatch
from consistent_bayes.cli import main
from consistent_bayes.io import ConfigError, RunConfig, load_config, read_batch, write_batch


def _config(tmp_path, **fields):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(fields))
    return str(path)


def test_pushforward_row_count_and_header(tmp_path):
    cfg = _config(tmp_path, M=100)
    assert main(["pushforward", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    lines = (tmp_path / "o" / "samples.csv").read_text().splitlines()
    assert len(lines) == 101
    assert lines[0] == "lambda_1,lambda_2,q_1"
    record = json.loads((tmp_path / "o" / "pushforward.json").read_text())
    assert record["samples"] == "samples.csv" and len(record["bandwidth"]) == 1 and record["rule"] == "silverman"


def test_pushforward_rerun_byte_identical(tmp_path):
    cfg = _config(tmp_path, M=500)
    main(["pushforward", "--config", cfg, "--out", str(tmp_path / "a")])
    main(["pushforward", "--config", cfg, "--out", str(tmp_path / "b"), "--workers", "4"])
    assert (tmp_path / "a" / "samples.csv").read_bytes() == (tmp_path / "b" / "samples.csv").read_bytes()


def test_negative_m_is_config_error(tmp_path, capsys):
    assert main(["pushforward", "--config", _config(tmp_path, M=-5)]) == 2
    assert "'M'" in capsys.readouterr().err


def test_unknown_key_and_syntax_error(tmp_path, capsys):
    assert main(["pushforward", "--config", _config(tmp_path, M=100, colour="red")]) == 2
    assert "'colour'" in capsys.readouterr().err
    bad = tmp_path / "bad.json"
    bad.write_text('{\n  "M": 100,\n  "seed": \n}')
    assert main(["pushforward", "--config", str(bad)]) == 2
    assert "line 4" in capsys.readouterr().err


def test_missing_inputs(tmp_path):
    assert main(["posterior", "--out", str(tmp_path / "nothing")]) == 3
    assert main(["pushforward", "--config", str(tmp_path / "absent.json")]) == 3


def test_posterior_report(tmp_path):
    cfg = _config(tmp_path, M=10_000, seed=0)
    out = str(tmp_path / "o")
    assert main(["pushforward", "--config", cfg, "--out", out]) == 0
    assert main(["posterior", "--config", cfg, "--out", out]) == 0
    report = json.loads((tmp_path / "o" / "report.json").read_text())
    assert abs(report["diagnostics"]["integral_estimate"] - 0.9993) < 0.05
    rows = (tmp_path / "o" / "accepted.csv").read_text().splitlines()
    assert len(rows) - 1 == report["accepted_count"]
    assert report["config"]["M"] == 10_000
    assert main(["diagnose", "--config", cfg, "--out", out]) == 0
    diag = json.loads((tmp_path / "o" / "diagnostics.json").read_text())["diagnostics"]
    assert diag["integral_estimate"] == report["diagnostics"]["integral_estimate"]


def test_empty_posterior_exit_code(tmp_path, capsys):
    cfg = _config(tmp_path, M=2000, observed={"kind": "normal", "mean": 5.0, "std": 0.01})
    out = str(tmp_path / "o")
    main(["pushforward", "--config", cfg, "--out", out])
    assert main(["posterior", "--config", cfg, "--out", out]) == 4
    assert "empty-posterior" in capsys.readouterr().err


def test_dominance_exit_code(tmp_path):
    cfg = _config(tmp_path, model="piecewise-2d", M=5000, bandwidth_rule="lcv",
                  observed={"kind": "normal", "mean": 10.0, "std": 0.25})
    out = str(tmp_path / "o")
    main(["pushforward", "--config", cfg, "--out", out])
    assert main(["diagnose", "--config", cfg, "--out", out]) == 5


def test_converge_synthetic(tmp_path):
    out = tmp_path / "o"
    assert main(["converge", "--synthetic", "--out", str(out)]) == 0
    with open(out / "convergence.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == ["d", "m", "N", "rep", "l1_error", "slope"]
    assert all(abs(float(r["slope"]) + 0.4) < 1e-10 for r in rows)


def test_converge_small_study(tmp_path):
    cfg = _config(tmp_path, dims=[2], qoi_counts=[1], N_grid=[100, 300, 900], reps=3, eval_count=1000)
    out = tmp_path / "o"
    assert main(["converge", "--config", cfg, "--out", str(out)]) == 0
    with open(out / "convergence.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 3 * 3 + 3
    med = [r for r in rows if r["rep"] == "median"]
    assert len(med) == 3 and all(r["slope"] for r in med)


def test_compare_and_stability(tmp_path):
    cfg = _config(tmp_path, M=20_000, p_values=[1], deltas=[0.0, 0.05])
    out = tmp_path / "o"
    assert main(["compare", "--config", cfg, "--out", str(out)]) == 0
    with open(out / "compare.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["method"] for r in rows] == ["consistent", "statistical"]
    assert main(["stability", "--config", cfg, "--out", str(out)]) == 0
    with open(out / "stability.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert float(rows[1]["difference"]) < 1e-3
    bad = _config(tmp_path, p_values=[2])
    assert main(["compare", "--config", bad, "--out", str(out)]) == 2


def test_block_quantile_flag(tmp_path):
    cfg = _config(tmp_path, model="chi2-block", dim=6, qoi_count=3, M=500)
    assert main(["pushforward", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    assert main(["diagnose", "--config", cfg, "--out", str(tmp_path / "o"), "--block-quantile", "paper"]) == 2


def test_batch_round_trip(tmp_path):
    rng = RngStream(0)
    batch = SampleBatch(rng.normal(size=(50, 3)) * 1e-7, rng.normal(size=(50, 2)) * 1e9, seed=0, model_name="x")
    write_batch(tmp_path / "b.csv", batch)
    back = read_batch(tmp_path / "b.csv")
    assert np.array_equal(back.params, batch.params) and np.array_equal(back.qois, batch.qois)


def test_config_round_trip(tmp_path):
    cfg = RunConfig(model="chi2-quadratic", dim=10, M=300, bandwidth_rule=[0.2])
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg.as_dict()))
    assert load_config(path) == cfg
    with pytest.raises(ConfigError):
        RunConfig(seed=-1)
