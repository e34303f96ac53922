import json

import numpy as np
import pytest

from ssmc import harness
from ssmc.cli import main
from ssmc.datasets import DatasetError, export_image_manifest
from ssmc.harness import (ConfigError, ExperimentConfig, RunOptions, best_lambda_index,
                          invariant_blocks, make_synthetic, run_dataset_experiment,
                          run_geometry_experiment, run_synthetic_experiment)
from ssmc.group_algebra import build_cyclic_shift_rep

SMALL = {"mode": "synthetic", "group": {"kind": "cyclic_shift", "n1": 4, "n2": 4},
         "num_clusters": 2, "trials": 2, "base_seed": 3,
         "synthetic": {"num_seeds": 1, "points_per_submodule": 8, "support": "blocks"}}


def cfg(**over):
    return ExperimentConfig.from_dict({**SMALL, **over})


@pytest.mark.parametrize("bad", [
    {"trials": 0},
    {"formulation": "regularized"},
    {"unknown": 1},
    {"group": {"kind": "nope"}},
    {"preprocessing": {"downsample_factor": 0}},
    {"solver": {"rho": -1}},
    {"mode": "dataset"},
])
def test_config_errors(bad):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({**SMALL, **bad})


def test_lambda_grid_sorted_and_exact_ignores_grid():
    assert cfg(lambda_grid=[5, 1]).lambdas() == [None]
    assert cfg(formulation="regularized", lambda_grid=[5, 1]).lambdas() == [1.0, 5.0]


def test_best_lambda_ties_to_smaller():
    assert best_lambda_index([0.1, 0.1, 0.2]) == 0
    assert best_lambda_index([0.3, 0.1, 0.1]) == 1
    assert best_lambda_index([None, 0.2, 0.2]) == 1
    assert best_lambda_index([None, None]) is None


def test_invariant_blocks():
    blocks = invariant_blocks(build_cyclic_shift_rep(8, 8), 3)
    assert [b.size for b in blocks] == [16, 16, 16]
    assert len(np.unique(np.concatenate(blocks))) == 48
    with pytest.raises(ConfigError):
        invariant_blocks(build_cyclic_shift_rep(2, 4), 3)


def test_synthetic_report_and_ssc_baseline():
    rep = run_synthetic_experiment(cfg(), RunOptions(timestamps=False))
    d = rep.to_dict()
    assert "timing" not in d and "timestamp" not in d
    assert d["results"]["SSC"]["descriptor"] == {"kind": "trivial", "n": 16}
    assert d["results"]["SSmC"]["descriptor"]["kind"] == "cyclic_shift"
    for m in ("SSmC", "SSC"):
        errs = d["results"][m]["trial_errors"]
        assert len(errs) == 2 and all(0 <= e <= 1 for e in errs)
    assert d["results"]["SSmC"]["mean"] == 0.0
    assert rep.to_json() == run_synthetic_experiment(cfg(), RunOptions(timestamps=False)).to_json()


def test_single_cluster_is_error_free():
    r = run_synthetic_experiment(cfg(num_clusters=1, trials=1), RunOptions(timestamps=False))
    assert r.results["SSmC"]["mean"] == 0.0 and r.results["SSC"]["mean"] == 0.0


def test_regularized_sweep_records_grid():
    c = cfg(formulation="regularized", lambda_grid=[50, 5], trials=1)
    r = run_synthetic_experiment(c, RunOptions(timestamps=False))
    res = r.results["SSmC"]
    assert r.lambda_grid == [5.0, 50.0]
    assert len(res["per_lambda_errors"][0]) == 2 and res["best_lambda"][0] in (5.0, 50.0)


def test_failed_trials_are_counted(monkeypatch):
    real = harness._cluster_once

    def flaky(X, labels, rep, c, lam, L, seed, trace):
        out = real(X, labels, rep, c, lam, L, seed, trace)
        return (None,) + out[1:] if rep.order == 1 and seed == harness._trial_seeds(3, 1)[2] else out

    monkeypatch.setattr(harness, "_cluster_once", flaky)
    r = run_synthetic_experiment(cfg(), RunOptions(timestamps=False))
    ssc = r.results["SSC"]
    assert ssc["failed_trials"] == [1] and ssc["trial_errors"][1] is None
    assert ssc["mean"] == ssc["trial_errors"][0]
    assert r.table[1]["failed_trials"] == 1


def test_dataset_experiment(tmp_path):
    ds = make_synthetic(cfg(), 0)
    m = export_image_manifest(ds.X, ds.labels, (4, 4), tmp_path)
    c = cfg(mode="dataset", trials=2, dataset={"manifest": str(m), "images_per_subject": [6, 8]})
    r = run_dataset_experiment(c, RunOptions(timestamps=False))
    assert [row["method"] for row in r.table] == ["SSmC", "SSC"]
    assert r.table[0]["6"] == 0.0 and r.table[0]["8"] == 0.0
    assert r.to_json() == run_dataset_experiment(c, RunOptions(timestamps=False)).to_json()
    too_many = cfg(mode="dataset", dataset={"manifest": str(m), "images_per_subject": [9]})
    with pytest.raises(DatasetError):
        run_dataset_experiment(too_many)


def test_geometry_single_order_slope_undefined():
    c = ExperimentConfig.from_dict({
        "mode": "geometry", "group": {"kind": "cyclic_shift", "n1": 4, "n2": 2},
        "geometry": {"num_directions": 100, "descent_steps": 10,
                     "conjecture": {"N_G_values": [1], "trials": 2}}})
    out = run_geometry_experiment(c, RunOptions(timestamps=False))
    assert out["conjecture_fit"]["slope"] is None
    assert all(r["r_hat"] >= r["r_hat_ssc"] for r in out["conjecture_fit"]["rows"])


def _write(tmp_path, doc, name="c.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


def test_cli_outputs(tmp_path, capsys):
    out = tmp_path / "out"
    rc = main(["synth", "--config", _write(tmp_path, SMALL), "--out", str(out), "--trace",
               "--save-affinity", "--no-timestamp"])
    assert rc == 0
    assert (out / "report.json").exists() and (out / "tables.csv").exists()
    assert sorted(p.name for p in (out / "affinity").iterdir()) == [
        "SSC_trial0.csv", "SSC_trial1.csv", "SSmC_trial0.csv", "SSmC_trial1.csv"]
    W = np.loadtxt(out / "affinity" / "SSmC_trial0.csv", delimiter=",")
    np.testing.assert_array_equal(W, W.T)
    rec = json.loads((out / "trace.jsonl").read_text().splitlines()[0])
    assert {"iter", "primal_res", "dual_res", "objective", "column", "trial", "method"} <= set(rec)
    first = (out / "report.json").read_text()
    assert main(["synth", "--config", _write(tmp_path, SMALL), "--out", str(out),
                 "--no-timestamp"]) == 0
    assert (out / "report.json").read_text() == first


def test_cli_config_errors(tmp_path):
    assert main(["synth", "--config", _write(tmp_path, {**SMALL, "trials": 0})]) == 2
    assert main(["dataset", "--config", _write(tmp_path, SMALL)]) == 2
    assert main(["synth", "--config", str(tmp_path / "missing.json")]) == 2
    bad_n = {**SMALL, "group": {"kind": "cyclic_shift", "n1": 0, "n2": 4}}
    assert main(["synth", "--config", _write(tmp_path, bad_n), "--out", str(tmp_path / "o")]) == 2


def test_cli_all_columns_fail(tmp_path):
    # four generic points in R^16 cannot represent one another exactly
    doc = {**SMALL, "trials": 1,
           "synthetic": {"num_seeds": 4, "points_per_submodule": 2, "support": "full"}}
    assert main(["synth", "--config", _write(tmp_path, doc), "--out", str(tmp_path / "o")]) == 3


def test_cli_geometry(tmp_path):
    doc = {"mode": "geometry", "group": {"kind": "cyclic_shift", "n1": 4, "n2": 2},
           "geometry": {"num_directions": 100, "descent_steps": 10,
                        "conjecture": {"N_G_values": [1, 2], "trials": 1},
                        "event": {"N_k": 8, "t_values": [1.0], "trials": 200}}}
    out = tmp_path / "g"
    assert main(["geometry", "--config", _write(tmp_path, doc), "--out", str(out)]) == 0
    lines = (out / "conjecture.csv").read_text().splitlines()
    assert lines[0] == "N_G,trial,r_hat,r_hat_ssc" and len(lines) == 3
    rep = json.loads((out / "report.json").read_text())
    assert "timestamp" in rep and rep["event_frequencies"][0]["frequency"] == 1.0
