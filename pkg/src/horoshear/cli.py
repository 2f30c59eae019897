"""Command line front end.

    horoshear verify|decay|mixing|shadow [--config PATH] [--out DIR]
              [--workers N] [--precision double|dd]

Exit codes: 0 success, 1 failed suite or identity, 2 configuration error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .arcs import ell_constant, max_shadow_distance
from .config import COMMANDS, ConfigError, ExperimentConfig
from .experiments import (QuadratureError, dump_json, fit_decay, haar_base_points,
                          run_decay_experiment, run_mixing_experiment, shearing_identity_check)
from .lattice import ReductionError
from .suites import run_all

log = logging.getLogger("horoshear")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _manifest(cfg: ExperimentConfig, out: Path, extra: dict | None = None) -> None:
    doc = {"version": __version__, "config": cfg.to_dict()}
    if extra:
        doc.update(extra)
    dump_json(doc, out / "manifest.json")


def _safe_fit(t, value, stderr=None, quad_error=None, model="power") -> dict:
    try:
        return fit_decay(t, value, stderr, quad_error, model).to_json()
    except ValueError as exc:
        return {"error": str(exc)}


def cmd_verify(cfg: ExperimentConfig, out: Path, workers: int) -> int:
    group = cfg.group()
    results = run_all(group, cfg["seed"], cfg["suite_cases"])
    failed = [r.name for r in results if not r.passed]
    report = {"passed": not failed, "first_failure": failed[0] if failed else None,
              "precision": cfg["precision"], "suites": [r.to_json() for r in results]}
    dump_json(report, out / "verify_report.json")
    _manifest(cfg, out)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name}: max residual {r.max_residual:.3e} "
              f"(tol {r.tolerance:.0e}, {r.n_cases} cases)")
    if failed:
        print(f"first failing suite: {failed[0]}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def cmd_decay(cfg: ExperimentConfig, out: Path, workers: int) -> int:
    group = cfg.group()
    obs = cfg.observables(group)
    f = obs[cfg["observables"][0]["label"]]
    base = haar_base_points(f, cfg["n_base_points"], cfg["seed"])
    status = EXIT_OK
    fits = {}
    for k, W in enumerate(cfg.directions()):
        series = run_decay_experiment(f, W, cfg["S"], cfg["t_grid"], base, cfg["kappa"], workers)
        series.to_csv(out / f"decay_W{k}.csv")
        fits[f"W{k}"] = {"W": list(W),
                         "power": _safe_fit(series.t, series.value, series.stderr,
                                            series.quad_error, "power"),
                         "power_log": _safe_fit(series.t, series.value, series.stderr,
                                                series.quad_error, "power_log"),
                         "converged": series.converged}
        dump_json(fits[f"W{k}"], out / f"fit_W{k}.json")
        if not series.converged:
            log.error("quadrature did not converge for W%d", k)
            status = EXIT_FAIL
    _manifest(cfg, out, {"observable": f.manifest(), "fits": fits})
    return status


def cmd_mixing(cfg: ExperimentConfig, out: Path, workers: int) -> int:
    group = cfg.group()
    obs = cfg.observables(group)
    mx = cfg["mixing"]
    pairs = [(obs[a], obs[b]) for a, b in mx["pairs"]]
    series = run_mixing_experiment(pairs, cfg["t_grid"], mx["n_radial"], mx["n_angular"],
                                   mx["k_theta"], workers)
    series.to_csv(out / "mixing.csv")
    f, g = pairs[0]
    checks = []
    for i, t in enumerate(series.t):
        rng = np.random.default_rng([cfg["seed"], 0x3C, i])
        rep = shearing_identity_check(f, g, float(t), mx["sigma"], mx["n_mc"], rng,
                                      correlation=float(series.per_pair[i, 0]),
                                      n_sup=mx["n_sup"], n_ibp=mx["n_ibp"], kappa=cfg["kappa"])
        checks.append(rep.to_json())
    positive = series.t > 0
    report = {
        "t": series.t.tolist(), "rms_correlation": series.value.tolist(),
        "fit_power": _safe_fit(series.t[positive], series.value[positive]),
        "fit_power_log": _safe_fit(series.t[positive], series.value[positive], model="power_log"),
        "shearing_checks": checks,
        "identity_ok": all(c["identity_ok"] for c in checks),
        "bound_ok": all(c["bound_ok"] for c in checks),
    }
    report["slope"] = report["fit_power"].get("slope")
    dump_json(report, out / "mixing_report.json")
    _manifest(cfg, out, {"observables": {k: v.manifest() for k, v in obs.items()}})
    if not (report["identity_ok"] and report["bound_ok"]):
        print("shearing identity or bound failed", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def cmd_shadow(cfg: ExperimentConfig, out: Path, workers: int) -> int:
    rows, fits = [], {}
    for k, W in enumerate(cfg.directions()):
        if W.v == 0:
            fits[f"W{k}"] = {"W": list(W), "skipped": "no V component: the shadow correction vanishes"}
            continue
        ell = ell_constant(W, 1.0)
        dists = [max_shadow_distance(W, float(t), ell, precision=cfg["precision"])
                 for t in cfg["t_grid"]]
        rows += [(k, t, ell, d) for t, d in zip(cfg["t_grid"], dists)]
        fits[f"W{k}"] = {"W": list(W), "ell": ell, "fit": _safe_fit(cfg["t_grid"], dists)}
    with open(out / "shadow.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["direction", "t", "ell", "max_distance"])
        for k, t, ell, d in rows:
            w.writerow([k, repr(float(t)), repr(float(ell)), repr(float(d))])
    dump_json(fits, out / "shadow_report.json")
    _manifest(cfg, out)
    return EXIT_OK


HANDLERS = {"verify": cmd_verify, "decay": cmd_decay, "mixing": cmd_mixing, "shadow": cmd_shadow}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="horoshear", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", type=Path, help="JSON experiment configuration")
    p.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    p.add_argument("--workers", type=int, default=1, help="worker processes")
    p.add_argument("--precision", choices=("double", "dd"), help="override the config precision")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.config is not None:
            cfg = ExperimentConfig.load(args.config)
            if cfg["command"] != args.command:
                raise ConfigError(f"config is for {cfg['command']!r}, not {args.command!r}")
        else:
            cfg = ExperimentConfig.default(args.command)
        if args.precision is not None:
            raw = cfg.to_dict()
            raw["precision"] = args.precision
            cfg = ExperimentConfig.from_dict(raw)
        if cfg["precision"] == "dd" and args.command in ("decay", "mixing"):
            raise ConfigError("extended precision is only available for verify and shadow")
        if args.workers < 1:
            raise ConfigError("--workers must be at least 1")
        args.out.mkdir(parents=True, exist_ok=True)
        t0 = time.perf_counter()
        code = HANDLERS[args.command](cfg, args.out, args.workers)
        log.info("%s finished in %.1f s", args.command, time.perf_counter() - t0)
        return code
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (QuadratureError, ReductionError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
