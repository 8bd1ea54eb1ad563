"""Tests for the command-line front end."""

import csv
import json
import subprocess
import sys

import pytest
import yaml

from quickseek.cli import EXIT_DP, EXIT_INVALID, EXIT_OK, load_preset, main, read_dump

MINIMAL = {"model": {"family": "gaussian_mean_shift", "mu0": 0.0, "mu1": 1.0, "sigma": 1.0},
           "strategy": "single", "pi0": 0.1, "zeta": 0.1, "n_trials": 200}


def _write(tmp_path, cfg, name="run.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(cfg))
    return str(path)


def _rows(path):
    with open(path) as fh:
        return list(csv.reader(fh))


class TestSimulate:
    def test_minimal_config(self, tmp_path):
        out = tmp_path / "out"
        assert main(["simulate", "--config", _write(tmp_path, MINIMAL), "--out", str(out)]) == EXIT_OK
        payload = json.loads((out / "summary.json").read_text())
        res = payload["results"][0]
        assert res["strategy"] == "single"
        assert {"asd", "asd_se", "fip", "fip_se"} <= set(res)
        meta = payload["metadata"]
        assert meta["version"] and meta["config_hash"] and meta["master_seed"] == 0
        assert "threads" not in json.dumps(payload)

    def test_seed_and_threads_byte_identical(self, tmp_path):
        cfg = dict(MINIMAL, strategies=["single", "low_complexity"], per_trial_csv=True)
        cfg.pop("strategy")
        path = _write(tmp_path, cfg)
        outs = []
        for k, threads in enumerate(("1", "3")):
            out = tmp_path / f"o{k}"
            assert main(["simulate", "--config", path, "--seed", "42", "--threads", threads,
                         "--out", str(out)]) == EXIT_OK
            outs.append(out)
        for name in ("summary.json", "trials_single.csv", "trials_low_complexity.csv"):
            assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()

    def test_seed_changes_results(self, tmp_path):
        path = _write(tmp_path, MINIMAL)
        main(["simulate", "--config", path, "--seed", "1", "--out", str(tmp_path / "a")])
        main(["simulate", "--config", path, "--seed", "2", "--out", str(tmp_path / "b")])
        assert (tmp_path / "a" / "summary.json").read_bytes() != (tmp_path / "b" / "summary.json").read_bytes()

    def test_unknown_strategy(self, tmp_path, capsys):
        code = main(["simulate", "--config", _write(tmp_path, dict(MINIMAL, strategy="greedy"))])
        assert code == EXIT_INVALID
        assert "valid options" in capsys.readouterr().err

    def test_unknown_family(self, tmp_path, capsys):
        code = main(["simulate", "--config", _write(tmp_path, dict(MINIMAL, model={"family": "cauchy"}))])
        assert code == EXIT_INVALID
        assert "config.model" in capsys.readouterr().err

    def test_unknown_key(self, tmp_path, capsys):
        assert main(["simulate", "--config", _write(tmp_path, dict(MINIMAL, trails=5))]) == EXIT_INVALID
        assert "trails" in capsys.readouterr().err

    def test_config_or_preset_required(self):
        assert main(["simulate"]) == EXIT_INVALID


class TestPresets:
    def test_table1(self):
        cfg = load_preset("table1")
        assert cfg["sweep"]["axis"] == "snr"
        assert len(cfg["sweep"]["values"]) == 7
        assert len(cfg["strategies"]) == 3

    def test_table2(self):
        cfg = load_preset("table2")
        assert cfg["sweep"]["values"] == [0.5, 0.3, 0.2, 0.1, 0.05, 0.01]

    def test_fig_preset_setting(self):
        cfg = load_preset("fig2-4")
        assert (cfg["pi0"], cfg["c"], cfg["model"]["var0"], cfg["model"]["var1"]) == (0.05, 0.01, 1.0, 3.0)

    def test_unknown(self):
        assert main(["sweep", "--preset", "table9"]) == EXIT_INVALID

    def test_table1_layout(self, tmp_path):
        cfg = load_preset("table1")
        cfg.pop("calibrate")
        cfg.update(c=0.02, solver={"res2": 41, "res3": 21})
        out = tmp_path / "t1"
        assert main(["simulate", "--config", _write(tmp_path, cfg), "--trials", "100", "--out", str(out)]) == EXIT_OK
        rows = _rows(out / "sweep.csv")
        assert len(rows) == 1 + 7
        assert rows[0][0] == "snr"
        for s in ("optimal", "low_complexity", "single"):
            assert f"{s}_asd" in rows[0]


class TestSweepAndRatioMap:
    def test_empty_axis(self, tmp_path, capsys):
        cfg = dict(MINIMAL, sweep={"axis": "pi0", "values": []})
        assert main(["sweep", "--config", _write(tmp_path, cfg)]) == EXIT_INVALID
        assert "config.sweep.values" in capsys.readouterr().err

    def test_pi0_sweep(self, tmp_path):
        cfg = dict(MINIMAL, strategies=["single", "low_complexity"],
                   sweep={"axis": "pi0", "values": [0.5, 0.1]})
        cfg.pop("strategy")
        out = tmp_path / "s"
        assert main(["sweep", "--config", _write(tmp_path, cfg), "--out", str(out)]) == EXIT_OK
        rows = _rows(out / "sweep.csv")
        assert [r[0] for r in rows[1:]] == ["0.5", "0.10000000000000001"]

    def test_fig7_map(self, tmp_path):
        out = tmp_path / "m"
        assert main(["ratio-map", "--preset", "fig7", "--trials", "40", "--out", str(out)]) == EXIT_OK
        rows = _rows(out / "ratio_map.csv")
        cfg = load_preset("fig7")["ratio_map"]
        assert rows[0][:2] == ["mu", "sigma"]
        assert len(rows) == 1 + len(cfg["mu"]) * len(cfg["sigma"])

    def test_ratio_map_empty_axis(self, tmp_path):
        cfg = {"pi0": 0.05, "zeta": 0.01, "ratio_map": {"axis": "kappa", "kappa": []}}
        assert main(["ratio-map", "--config", _write(tmp_path, cfg)]) == EXIT_INVALID


class TestDpSolve:
    CFG = {"model": {"family": "gaussian_variance", "var0": 1.0, "var1": 3.0}, "pi0": 0.05, "c": 0.01,
           "solver": {"res2": 41, "res3": 21}}

    def test_dump(self, tmp_path):
        out = tmp_path / "dp"
        assert main(["dp-solve", "--config", _write(tmp_path, self.CFG), "--out", str(out)]) == EXIT_OK
        header, tables = read_dump(out)
        assert header["res2"] == 41 and header["res3"] == 21 and header["c"] == 0.01
        assert header["residual_scan"] < 1e-6
        u = tables["U_scan"]
        assert u.shape == (41 * 42 // 2, 5)
        assert set(u[:, 3]) <= {0.0, 1.0}
        assert (u[:, 2] <= tables["v_slice"][:, 2]).all()
        assert _rows(out / "U_scan.csv")[0] == ["p11", "pmix", "value", "in_R_tau", "in_R_phi"]

    def test_nonconvergence_exit(self, tmp_path, capsys):
        cfg = dict(self.CFG, solver={"res2": 41, "res3": 21, "max_iter": 1, "tol": 1e-12})
        assert main(["dp-solve", "--config", _write(tmp_path, cfg), "--out", str(tmp_path)]) == EXIT_DP
        assert "residual" in capsys.readouterr().err

    def test_missing_cost(self, tmp_path):
        cfg = {k: v for k, v in self.CFG.items() if k != "c"}
        assert main(["dp-solve", "--config", _write(tmp_path, cfg)]) == EXIT_INVALID


class TestCheck:
    def test_all_pass(self, capsys):
        assert main(["check"]) == EXIT_OK
        lines = capsys.readouterr().out.strip().splitlines()
        assert lines and all(line.startswith("[PASS]") for line in lines)

    def test_module_entry_point(self):
        res = subprocess.run([sys.executable, "-m", "quickseek", "--version"], capture_output=True, text=True)
        assert res.returncode == 0
        assert res.stdout.strip() == "0.1.0"
