import csv
import json
import os

import pytest

from sojournlab import cli


def _run(argv):
    return cli.main(argv)


def _read_csv(path):
    with open(path) as fh:
        schema = fh.readline().strip()
        rows = list(csv.DictReader(fh))
    return schema, rows


def _read_manifest(out):
    with open(os.path.join(out, "run_manifest.json")) as fh:
        return json.load(fh)


def test_oracle_parabola_values(tmp_path, capsys):
    out = str(tmp_path / "o")
    rc = _run(["oracle", "--x", "0,0.2,0.5", "--s", "1", "--out", out])
    assert rc == 0
    schema, rows = _read_csv(os.path.join(out, "oracle.csv"))
    assert schema == "# sojournlab-oracle-v1"
    vals = {float(r["x"]): float(r["value"]) for r in rows}
    assert abs(vals[0.0] - 1.56418958355) < 1e-9
    assert abs(vals[0.2] - 1.3343977267) < 1e-9
    assert abs(vals[0.5] - 0.988677142176) < 1e-9
    assert capsys.readouterr().out.strip().endswith("oracle.csv")


def test_oracle_brownian_sup_values(tmp_path):
    out = str(tmp_path / "o")
    rc = _run(["oracle", "--family", "brownian-sup", "--s", "1,4,16",
               "--out", out])
    assert rc == 0
    _, rows = _read_csv(os.path.join(out, "oracle.csv"))
    vals = {float(r["S"]): float(r["value"]) for r in rows}
    assert abs(vals[1.0] - 2.72014110619) < 1e-7
    assert abs(vals[4.0] - 5.94320987627) < 1e-7
    assert abs(vals[16.0] - 17.9992343559) < 1e-7


def test_oracle_rejects_unsupported_requests(tmp_path, capsys):
    out = str(tmp_path / "o")
    rc = _run(["oracle", "--alpha", "1.5", "--out", out])
    assert rc == 2
    assert "no closed-form oracle" in capsys.readouterr().err
    rc = _run(["oracle", "--family", "brownian-sup", "--x", "0,0.5",
               "--out", out])
    assert rc == 2
    assert "x = 0 only" in capsys.readouterr().err
    assert not os.path.exists(os.path.join(out, "oracle.csv"))


def test_estimate_constant_plain_writes_table_and_manifest(tmp_path):
    out = str(tmp_path / "c")
    rc = _run(["estimate-constant", "--alpha", "2.0", "--x", "0.2",
               "--n-grid", "65", "--n-samples", "2000", "--seed", "7",
               "--out", out])
    assert rc == 0
    schema, rows = _read_csv(os.path.join(out, "constants.csv"))
    assert schema == "# sojournlab-constants-v1"
    assert len(rows) == 1
    assert rows[0]["route"] == "plain"
    assert float(rows[0]["value"]) > 0
    man = _read_manifest(out)
    assert man["schema"] == "sojournlab-manifest-v1"
    assert man["subcommand"] == "estimate-constant"
    assert man["config"]["seed"] == 7
    assert man["config"]["n_samples"] == 2000
    # execution-shape knobs are not part of the recorded semantics
    assert "workers" not in man["config"]
    assert "out" not in man["config"]
    assert man["outputs"]["table"] == "constants.csv"
    assert man["stream_ids"]["main"]


def test_manifest_replay_is_byte_identical(tmp_path):
    out1 = str(tmp_path / "r1")
    rc = _run(["estimate-constant", "--alpha", "1.5", "--x", "0.1",
               "--n-grid", "129", "--n-samples", "4000", "--seed", "11",
               "--out", out1])
    assert rc == 0
    out2 = str(tmp_path / "r2")
    rc = _run(["estimate-constant", "--from-manifest",
               os.path.join(out1, "run_manifest.json"), "--workers", "3",
               "--out", out2])
    assert rc == 0
    with open(os.path.join(out1, "constants.csv"), "rb") as fh:
        b1 = fh.read()
    with open(os.path.join(out2, "constants.csv"), "rb") as fh:
        b2 = fh.read()
    assert b1 == b2
    m1 = _read_manifest(out1)
    m2 = _read_manifest(out2)
    m1.pop("wall_time_s")
    m2.pop("wall_time_s")
    assert m1 == m2


def test_manifest_subcommand_mismatch(tmp_path, capsys):
    out = str(tmp_path / "m")
    assert _run(["oracle", "--out", out]) == 0
    rc = _run(["estimate-constant", "--from-manifest",
               os.path.join(out, "run_manifest.json"),
               "--out", str(tmp_path / "m2")])
    assert rc == 2
    assert "records subcommand" in capsys.readouterr().err


def test_config_env_flag_precedence(tmp_path, monkeypatch):
    cfg_file = tmp_path / "cfg.json"
    cfg_file.write_text(json.dumps({"n_samples": 5000, "seed": 3,
                                    "n_grid": 65}))
    out = str(tmp_path / "p1")
    monkeypatch.setenv("SOJOURNLAB_N_SAMPLES", "3000")
    rc = _run(["estimate-constant", "--config", str(cfg_file), "--out", out])
    assert rc == 0
    man = _read_manifest(out)
    # env overrides the config file; the file still supplies the rest
    assert man["config"]["n_samples"] == 3000
    assert man["config"]["seed"] == 3
    assert man["config"]["n_grid"] == 65

    out2 = str(tmp_path / "p2")
    rc = _run(["estimate-constant", "--config", str(cfg_file),
               "--n-samples", "1234", "--out", out2])
    assert rc == 0
    assert _read_manifest(out2)["config"]["n_samples"] == 1234


def test_unknown_config_key(tmp_path, capsys):
    cfg_file = tmp_path / "cfg.json"
    cfg_file.write_text(json.dumps({"n_smaples": 100}))
    rc = _run(["estimate-constant", "--config", str(cfg_file),
               "--out", str(tmp_path / "u")])
    assert rc == 2
    assert "unknown config key" in capsys.readouterr().err


def test_config_and_manifest_are_exclusive(tmp_path, capsys):
    cfg_file = tmp_path / "cfg.json"
    cfg_file.write_text("{}")
    rc = _run(["estimate-constant", "--config", str(cfg_file),
               "--from-manifest", str(cfg_file),
               "--out", str(tmp_path / "x")])
    assert rc == 2
    assert "mutually exclusive" in capsys.readouterr().err


def test_seed_is_drawn_and_recorded_when_omitted(tmp_path):
    out = str(tmp_path / "s")
    rc = _run(["oracle", "--out", out])
    assert rc == 0
    seed = _read_manifest(out)["config"]["seed"]
    assert isinstance(seed, int)
    assert seed >= 0


def test_run_experiment_numeric_failure_exit_code(tmp_path, capsys):
    rc = _run(["run-experiment", "--u", "40", "--x-grid", "0,1",
               "--max-sims", "5000", "--sim-batch", "5000",
               "--target-samples", "2000", "--seed", "1",
               "--out", str(tmp_path / "nf")])
    assert rc == 3
    assert "numeric failure" in capsys.readouterr().err


def test_run_experiment_queue_horizon_note(tmp_path, capsys):
    out = str(tmp_path / "q")
    rc = _run(["run-experiment", "--family", "queue", "--u", "2.0",
               "--x-grid", "0,0.5,1,2.5", "--queue-t", "2.0",
               "--n-conditioned", "300", "--sim-batch", "5000",
               "--max-sims", "100000", "--target-samples", "3000",
               "--seed", "2", "--out", out])
    assert rc == 0
    err = capsys.readouterr().err
    assert "excluded-near-horizon" in err
    schema, rows = _read_csv(os.path.join(out, "experiment.csv"))
    assert schema == "# sojournlab-experiment-v1"
    xs = {float(r["x"]) for r in rows}
    assert 2.5 not in xs
    assert {0.0, 0.5, 1.0} <= xs
    # the anchor row is exact
    anchor = [r for r in rows if float(r["x"]) == 0.0][0]
    assert float(anchor["ratio_hat"]) == 1.0
    assert float(anchor["target"]) == 1.0


def test_run_experiment_rows_per_level(tmp_path):
    out = str(tmp_path / "e")
    rc = _run(["run-experiment", "--u", "2.0,2.5", "--x-grid", "0,1,2",
               "--n-conditioned", "400", "--sim-batch", "5000",
               "--max-sims", "200000", "--target-samples", "3000",
               "--seed", "5", "--out", out])
    assert rc == 0
    _, rows = _read_csv(os.path.join(out, "experiment.csv"))
    assert len(rows) == 6
    per_u = {}
    for r in rows:
        per_u.setdefault(float(r["u"]), []).append(float(r["ratio_hat"]))
    for u, ratios in per_u.items():
        assert ratios[0] == 1.0
        assert ratios == sorted(ratios, reverse=True)


def test_double_sum_table(tmp_path):
    out = str(tmp_path / "d")
    rc = _run(["double-sum", "--u", "2.5", "--n-schedule", "2,4",
               "--n-sims", "20000", "--domain-t", "2.0", "--seed", "5",
               "--out", out])
    assert rc == 0
    schema, rows = _read_csv(os.path.join(out, "double_sum.csv"))
    assert schema == "# sojournlab-double-sum-v1"
    assert [float(r["n"]) for r in rows] == [2.0, 4.0]
    assert float(rows[0]["ratio"]) > float(rows[1]["ratio"])
    assert int(float(rows[0]["blocks"])) > int(float(rows[1]["blocks"]))


def test_convergence_table(tmp_path):
    out = str(tmp_path / "cv")
    rc = _run(["convergence", "--alpha", "2.0", "--s-schedule", "2,4,8",
               "--n-samples", "3000", "--seed", "9", "--out", out])
    assert rc == 0
    schema, rows = _read_csv(os.path.join(out, "convergence.csv"))
    assert schema == "# sojournlab-convergence-v1"
    assert [float(r["S"]) for r in rows] == [2.0, 4.0, 8.0]
    # one shared fit is repeated on every row
    assert len({r["slope"] for r in rows}) == 1
    assert float(rows[0]["slope"]) > 0


def test_bad_env_value(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("SOJOURNLAB_N_SAMPLES", "plenty")
    rc = _run(["estimate-constant", "--out", str(tmp_path / "b")])
    assert rc == 2
    assert "SOJOURNLAB_N_SAMPLES" in capsys.readouterr().err
