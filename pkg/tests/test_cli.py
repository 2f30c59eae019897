import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from horoshear.cli import main
from horoshear.config import ConfigError, ExperimentConfig
from horoshear.lattice import bolza_group

SMALL_DECAY = {"command": "decay", "seed": 3, "t_grid": [2.0, 4.0, 8.0, 16.0, 32.0],
               "n_base_points": 4, "S": 0.5, "sigma": 1.0}


def write(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return path


def run(tmp_path, cfg, out="out", extra=()):
    code = main([cfg["command"], "--config", str(write(tmp_path, cfg, f"{out}.json")),
                 "--out", str(tmp_path / out), *extra])
    return code, tmp_path / out


class TestConfig:
    def test_defaults(self):
        cfg = ExperimentConfig.default("decay")
        assert cfg["t_grid"][0] == 2.0 and cfg["t_grid"][-1] == 512.0
        assert len(cfg.directions()) == 2 and cfg["n_base_points"] == 8

    def test_roundtrip(self):
        cfg = ExperimentConfig.from_dict(SMALL_DECAY)
        assert ExperimentConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg

    @pytest.mark.parametrize("raw", [
        {"command": "decay"},
        {"command": "decay", "seed": 1, "colour": "red"},
        {"command": "decay", "seed": 1, "S": 3.0, "sigma": 2.0},
        {"command": "decay", "seed": 1, "t_grid": [4.0, 2.0]},
        {"command": "decay", "seed": 1, "directions": [[0, 0, 0]]},
        {"command": "mixing", "seed": 1, "mixing": {"pairs": [["f", "nope"]]}},
        {"command": "decay", "seed": 1, "observables": [{"label": "f", "radius": 1.0,
                                                         "smoothness": 2}]},
    ])
    def test_rejections(self, raw):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict(raw)

    def test_inline_lattice(self):
        cfg = ExperimentConfig.from_dict({"command": "verify", "seed": 1,
                                          "lattice": {"inline": bolza_group().to_json()}})
        assert np.array_equal(cfg.group().generators, bolza_group().generators)


class TestVerify:
    def test_default_passes(self, tmp_path):
        code, out = run(tmp_path, {"command": "verify", "seed": 1})
        assert code == 0
        report = json.loads((out / "verify_report.json").read_text())
        assert report["passed"] and len(report["suites"]) == 6
        names = {s["name"] for s in report["suites"]}
        assert {"derivative", "sheared_tangent", "renormalized_tangent_bound", "shadow_factorization",
                "shadow_tangent", "lattice"} == names

    def test_corrupted_generator(self, tmp_path, capsys):
        lat = bolza_group().to_json()
        lat["generators"][0][0][0] = str(float(lat["generators"][0][0][0]) + 1e-3)
        code, out = run(tmp_path, {"command": "verify", "seed": 1, "suite_cases": 10,
                                   "lattice": {"inline": lat}})
        assert code == 1
        report = json.loads((out / "verify_report.json").read_text())
        assert report["first_failure"] == "lattice"
        assert "lattice" in capsys.readouterr().err

    def test_manifest_roundtrip(self, tmp_path):
        cfg = {"command": "verify", "seed": 2, "suite_cases": 10}
        code, out = run(tmp_path, cfg)
        manifest = json.loads((out / "manifest.json").read_text())
        assert ExperimentConfig.from_dict(manifest["config"]) == ExperimentConfig.from_dict(cfg)


class TestDecay:
    def test_two_directions(self, tmp_path):
        code, out = run(tmp_path, SMALL_DECAY)
        assert code == 0
        for k in (0, 1):
            assert (out / f"decay_W{k}.csv").exists()
            fit = json.loads((out / f"fit_W{k}.json").read_text())
            assert "slope" in fit["power"] and fit["converged"]

    def test_reproducible_across_runs_and_workers(self, tmp_path):
        runs = [run(tmp_path, SMALL_DECAY, "a"), run(tmp_path, SMALL_DECAY, "b"),
                run(tmp_path, SMALL_DECAY, "c", ("--workers", "2"))]
        assert all(code == 0 for code, _ in runs)
        for k in (0, 1):
            blobs = {(d / f"decay_W{k}.csv").read_bytes() for _, d in runs}
            assert len(blobs) == 1

    def test_zero_observable(self, tmp_path):
        cfg = dict(SMALL_DECAY, observables=[{"label": "f", "center_point": [0.3, 1.2],
                                              "radius": 1.0, "k_invariant": True,
                                              "amplitude": 0.0}])
        code, out = run(tmp_path, cfg)
        assert code == 0
        rows = list(csv.DictReader(open(out / "decay_W0.csv")))
        assert rows and all(float(r["value"]) == 0.0 for r in rows)

    def test_nonconvergence_exit(self, tmp_path):
        code, _ = run(tmp_path, dict(SMALL_DECAY, kappa=0.002, t_grid=[32.0, 64.0]))
        assert code == 1


class TestMixing:
    def test_zero_time(self, tmp_path):
        cfg = {"command": "mixing", "seed": 1, "t_grid": [0.0],
               "mixing": {"pairs": [["f", "f"]], "n_mc": 20000, "n_ibp": 1}}
        code, out = run(tmp_path, cfg)
        assert code == 0
        report = json.loads((out / "mixing_report.json").read_text())
        assert report["identity_ok"] and report["bound_ok"]
        assert "slope" in report

    def test_reproducible(self, tmp_path):
        cfg = {"command": "mixing", "seed": 4, "t_grid": [1.0, 2.0],
               "mixing": {"pairs": [["f", "g1"]], "n_mc": 5000, "n_sup": 2, "n_ibp": 1,
                          "n_radial": 4, "n_angular": 6}}
        (a, da), (b, db) = run(tmp_path, cfg, "a"), run(tmp_path, cfg, "b", ("--workers", "2"))
        assert a == b == 0
        assert (da / "mixing.csv").read_bytes() == (db / "mixing.csv").read_bytes()


class TestShadow:
    def test_outputs(self, tmp_path):
        cfg = {"command": "shadow", "seed": 1, "directions": [[1, 0, 0], [0, 1, 0]]}
        code, out = run(tmp_path, cfg)
        assert code == 0
        rows = list(csv.DictReader(open(out / "shadow.csv")))
        assert {r["direction"] for r in rows} == {"0"}
        report = json.loads((out / "shadow_report.json").read_text())
        assert report["W0"]["fit"]["slope"] <= -0.9 and "skipped" in report["W1"]

    def test_extended_precision(self, tmp_path):
        cfg = {"command": "shadow", "seed": 1, "directions": [[1, 0.3, 0]], "t_grid": [4.0, 8.0]}
        code, out = run(tmp_path, cfg, extra=("--precision", "dd"))
        assert code == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["config"]["precision"] == "dd"


class TestExitCodes:
    def test_bad_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        assert main(["verify", "--config", str(path), "--out", str(tmp_path / "o")]) == 2

    def test_command_mismatch(self, tmp_path):
        path = write(tmp_path, {"command": "decay", "seed": 1})
        assert main(["verify", "--config", str(path), "--out", str(tmp_path / "o")]) == 2

    def test_extended_precision_refused_for_decay(self, tmp_path):
        assert main(["decay", "--precision", "dd", "--out", str(tmp_path / "o")]) == 2

    def test_workers(self, tmp_path):
        assert main(["verify", "--workers", "0", "--out", str(tmp_path / "o")]) == 2

    def test_module_entry_point(self, tmp_path):
        path = write(tmp_path, {"command": "verify", "seed": 1, "suite_cases": 5})
        proc = subprocess.run([sys.executable, "-m", "horoshear", "verify", "--config", str(path),
                               "--out", str(tmp_path / "o")], capture_output=True, text=True)
        assert proc.returncode == 0 and "PASS lattice" in proc.stdout
