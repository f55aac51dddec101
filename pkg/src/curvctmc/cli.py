"""Command-line front end.

    curvctmc curvature|bound|tail|verify --config FILE [--seed N] [--paths N] [--out DIR]

Exit codes: 0 success, 1 an inequality was violated, 2 configuration error.
Results go to <out>/<run-id>/ where run-id hashes the effective config.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
import tempfile
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import bounds as B
from .acceptance import VerifyContext, run_suite
from .chain_model import (ChainError, angle_bracket_bound, chain_from_dict, gamma,
                          jump_bound, lipschitz_seminorm, load_chain)
from .curvature import (gamma_criterion, gamma_curvature_estimate, wasserstein_criterion,
                        wasserstein_curvature_estimate)
from .simulate import (CSV_COLUMNS, TruncationError, coordinate_average, monte_carlo_tail,
                       mm1_multisample_tail)

EXIT_OK, EXIT_VIOLATION, EXIT_CONFIG = 0, 1, 2


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    scenario: dict | None = None
    function: object = "identity"
    x0: int = 0
    times: list = field(default_factory=lambda: [1.0])
    t_grid: list = field(default_factory=lambda: [0.1, 0.5, 1.0, 2.0])
    y_grid: list = field(default_factory=lambda: [0.5, 1.0, 2.0, 4.0, 8.0])
    n_paths: int = 10**5
    seed: int = 0
    gamma: float = 0.99
    bounds: list = field(default_factory=lambda: ["thm31"])
    variant: str = "standard"
    stationary: bool = False
    bound_params: dict = field(default_factory=dict)
    bound_scale: float = 1.0
    checks: list | None = None
    out: str = "runs"

    @classmethod
    def from_dict(cls, d: dict, base_dir: Path | None = None) -> "ExperimentConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        cfg = cls(**d)
        if isinstance(cfg.scenario, dict) and "chain_file" in cfg.scenario and base_dir:
            p = Path(cfg.scenario["chain_file"])
            cfg.scenario = {**cfg.scenario, "chain_file": str(p if p.is_absolute()
                                                                else base_dir / p)}
        cfg.validate()
        return cfg

    def validate(self) -> None:
        y = np.asarray(self.y_grid, dtype=float)
        if y.ndim != 1 or len(y) == 0 or np.any(y <= 0) or np.any(np.diff(y) <= 0):
            raise ConfigError("y_grid must be positive and strictly increasing")
        if not 0.5 < self.gamma < 1:
            raise ConfigError("gamma must lie in (0.5, 1)")
        if self.n_paths < 1:
            raise ConfigError("n_paths must be >= 1")
        if self.variant not in ("standard", "bennett", "both"):
            raise ConfigError("variant must be standard, bennett or both")
        if isinstance(self.scenario, dict) and "chain_file" in self.scenario:
            if not Path(self.scenario["chain_file"]).exists():
                raise ConfigError(f"chain file {self.scenario['chain_file']} not found")

    def run_id(self) -> str:
        content = {k: v for k, v in asdict(self).items() if k != "out"}
        blob = json.dumps(content, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:12]

    def chain(self):
        if self.scenario is None:
            raise ConfigError("this command needs a scenario")
        if "chain_file" in self.scenario:
            return load_chain(self.scenario["chain_file"])
        return chain_from_dict(self.scenario)

    def function_values(self, n_states: int) -> np.ndarray:
        fn = self.function
        if fn == "identity":
            return np.arange(n_states, dtype=float)
        if isinstance(fn, dict) and "table" in fn:
            table = np.asarray(fn["table"], dtype=float)
            if table.shape != (n_states,):
                raise ConfigError(f"function table needs {n_states} values")
            return table
        raise ConfigError(f"function {fn!r} is not a one-dimensional function")


# ---------------------------------------------------------------------------
# output

def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
    with os.fdopen(fd, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _write_manifest(run_dir: Path, cfg: ExperimentConfig, command: str, started: float,
                    checks: list) -> None:
    manifest = {"command": command, "tool_version": __version__, "seed": cfg.seed,
                "config": asdict(cfg), "wall_clock_seconds": round(time.time() - started, 3),
                "checks": checks}
    _atomic_write(run_dir / "manifest.json", _json(manifest))


def _run_dir(cfg: ExperimentConfig) -> Path:
    return Path(cfg.out) / cfg.run_id()


# ---------------------------------------------------------------------------
# commands

def cmd_curvature(cfg: ExperimentConfig) -> int:
    started = time.time()
    rates, metric = cfg.chain()
    w_cert = wasserstein_criterion(rates)
    g_cert = gamma_criterion(rates)
    # the rate criterion certifies curvature for d(x, y) = |x - y|
    w_est = wasserstein_curvature_estimate(rates, cfg.t_grid)
    g_est = gamma_curvature_estimate(rates, cfg.t_grid, seed=cfg.seed)
    w_ok = all(w_cert.value <= k + 1e-9 for k in w_est.values)
    g_ok = (not g_cert.valid) or all(g_cert.value <= r + 1e-9 for r in g_est.values)
    estimates = [w_est.to_dict(), g_est.to_dict()]
    if metric.kind != "unit":
        chain_metric = wasserstein_curvature_estimate(rates, cfg.t_grid, metric).to_dict()
        chain_metric["kind"] = "wasserstein (chain metric)"
        estimates.append(chain_metric)
    result = {"certificates": [w_cert.to_dict(), g_cert.to_dict()],
              "estimates": estimates,
              "sandwich": {"wasserstein": "pass" if w_ok else "fail",
                           "gamma": ("pass" if g_ok else "fail") if g_cert.valid else "untested"}}
    run_dir = _run_dir(cfg)
    _atomic_write(run_dir / "curvature.json", _json(result))
    _write_manifest(run_dir, cfg, "curvature", started,
                    [{"name": k, "status": v} for k, v in result["sandwich"].items()])
    print(_json(result), end="")
    return EXIT_OK if w_ok and g_ok else EXIT_VIOLATION


def _chain_params(cfg: ExperimentConfig) -> dict:
    """Bound parameters implied by the scenario chain and function."""
    if cfg.scenario is None:
        return {}
    rates, metric = cfg.chain()
    f = cfg.function_values(rates.n_states)
    params = {"t": float(cfg.times[-1]), "lip": lipschitz_seminorm(f, metric),
              "b": jump_bound(rates, metric), "v2": angle_bracket_bound(rates, metric),
              "gamma_inf": float(np.max(gamma(rates, f))),
              "lam0_plus_nun": float(rates.lam[0] + rates.nu[-1])}
    if metric.kind == "unit":
        # the rate criteria only certify curvature for the unit path metric
        params["K"] = wasserstein_criterion(rates).value
        params["rho"] = gamma_criterion(rates).value
    return params


def bound_values(name: str, y_grid, params: dict, variant: str, stationary: bool,
                 cfg: ExperimentConfig | None = None) -> B.BoundCurve:
    """Evaluate one named bound on a grid from a flat parameter dict."""
    p = dict(params)
    ys = np.asarray(y_grid, dtype=float)
    if name == "cor411":
        vals = [B.bound_cor411(y, p["t"], p["nu"], p["lip"]) for y in ys]
        return B.BoundCurve(name, ys, np.array(vals), "standard",
                            ["underflow"] if 0.0 in vals else [])
    if name == "cor412":
        vals = [B.bound_cor412(y, int(p["n"]), p["T"], p["lam"], p["nu"], p["lip_n"], variant)
                for y in ys]
        flags = (["extension"] if variant == "bennett" else []) + \
            (["underflow"] if 0.0 in vals else [])
        return B.BoundCurve(name, ys, np.array(vals), variant, flags)
    if name == "thm34":
        if cfg is None or cfg.scenario is None:
            raise ConfigError("thm34 needs a scenario chain")
        rates, metric = cfg.chain()
        f = cfg.function_values(rates.n_states)
        vals = [B.bound_thm34(y, rates, f, p["t"], p["rho"], metric) for y in ys]
        return B.BoundCurve(name, ys, np.array(vals), "standard", [])
    spec_fields = {k: p[k] for k in ("t", "lip", "b", "v2", "K", "rho", "gamma_inf") if k in p}
    if stationary:
        spec_fields["t"] = math.inf if name in ("cor49", "cor410") else spec_fields["t"]
    spec = B.DeviationBoundSpec(variant=variant, **spec_fields)
    kwargs = {}
    if name in ("cor49", "cor410"):
        kwargs["stationary"] = stationary
    if name == "cor410":
        kwargs["lam0_plus_nun"] = p["lam0_plus_nun"]
    return B.evaluate_curve(name, ys, spec, **kwargs)


def cmd_bound(cfg: ExperimentConfig) -> int:
    started = time.time()
    params = {**_chain_params(cfg), **cfg.bound_params}
    variants = ["standard", "bennett"] if cfg.variant == "both" else [cfg.variant]
    curves = []
    for name in cfg.bounds:
        for variant in variants:
            if name in ("cor411", "thm34") and variant == "bennett":
                continue
            curves.append(bound_values(name, cfg.y_grid, params, variant, cfg.stationary, cfg))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["y"] + [f"{c.name}_{c.variant}" for c in curves] + ["tightest"])
    for i, y in enumerate(cfg.y_grid):
        vals = [float(c.values[i]) for c in curves]
        best = curves[int(np.argmin(vals))]
        w.writerow([repr(float(y))] + [repr(v) for v in vals] + [f"{best.name}_{best.variant}"])
        print(f"y={float(y):g}: tightest {best.name}_{best.variant} = {min(vals):.6g}",
              file=sys.stderr)
    run_dir = _run_dir(cfg)
    _atomic_write(run_dir / "bounds.csv", buf.getvalue())
    _write_manifest(run_dir, cfg, "bound", started, [])
    out = [{"bound": c.name, "params": _jsonable(params), "y_grid": list(map(float, c.y_grid)),
            "values": list(map(float, c.values)), "variant": c.variant, "flags": c.flags}
           for c in curves]
    print(_json(out), end="")
    return EXIT_OK


def _jsonable(d: dict) -> dict:
    return {k: ("inf" if isinstance(v, float) and math.isinf(v) else v) for k, v in d.items()}


def cmd_tail(cfg: ExperimentConfig) -> int:
    started = time.time()
    rates, metric = cfg.chain()
    scen = cfg.scenario or {}
    if cfg.function == "coordinate-average":
        if scen.get("preset") != "mm1":
            raise ConfigError("coordinate-average is defined for the mm1 scenario")
        f = coordinate_average(len(cfg.times))
        est = mm1_multisample_tail(float(scen["lambda"]), float(scen["nu"]),
                                   int(scen["truncation_n"]), cfg.x0, cfg.times, f,
                                   cfg.y_grid, cfg.n_paths, cfg.gamma, cfg.seed)
        p = {"n": len(cfg.times), "T": float(cfg.times[-1]), "lam": float(scen["lambda"]),
             "nu": float(scen["nu"]), "lip_n": f.lip, **cfg.bound_params}
        curve = bound_values("cor412", cfg.y_grid, p, "standard", False)
    else:
        if len(cfg.times) != 1:
            raise ConfigError("one-dimensional tails take exactly one time")
        fv = cfg.function_values(rates.n_states)
        est = monte_carlo_tail(rates, cfg.x0, fv, float(cfg.times[0]), cfg.y_grid,
                               cfg.n_paths, cfg.gamma, cfg.seed)
        params = {**_chain_params(cfg), **cfg.bound_params}
        curve = bound_values(cfg.bounds[0], cfg.y_grid, params,
                             "standard" if cfg.variant == "both" else cfg.variant,
                             cfg.stationary, cfg)
    est.with_bound(cfg.bound_scale * curve.values)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    w.writerows(est.rows())
    run_dir = _run_dir(cfg)
    _atomic_write(run_dir / "tails.csv", buf.getvalue())
    status = est.status()
    _write_manifest(run_dir, cfg, "tail", started,
                    [{"y": float(y), "status": s} for y, s in zip(est.y_grid, status)])
    print(buf.getvalue(), end="")
    if "fail" in status:
        for y, s in zip(est.y_grid, status):
            if s == "fail":
                print(f"violation: chain={scen}, y={y}, bound={curve.name}", file=sys.stderr)
        return EXIT_VIOLATION
    return EXIT_OK


def cmd_verify(cfg: ExperimentConfig, n_paths: int | None = None) -> int:
    started = time.time()
    ctx = VerifyContext(seed=cfg.seed, n_paths=n_paths, gamma=cfg.gamma,
                        bound_scale=cfg.bound_scale)
    results = run_suite(ctx, only=cfg.checks)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["check"] + CSV_COLUMNS)
    for res in results:
        for est in res.tails:
            for row in est.rows():
                w.writerow([est.label] + row)
    run_dir = _run_dir(cfg)
    _atomic_write(run_dir / "tails.csv", buf.getvalue())
    _write_manifest(run_dir, cfg, "verify", started, [r.to_dict() for r in results])
    failed = False
    for res in results:
        print(res.line())
        for chain, y, bound in res.offending:
            failed = True
            print(f"  violation: chain={chain}, y={y:.6g}, bound={bound}", file=sys.stderr)
    print(f"run directory: {run_dir}")
    return EXIT_VIOLATION if failed else EXIT_OK


COMMANDS = {"curvature": cmd_curvature, "bound": cmd_bound, "tail": cmd_tail,
            "verify": cmd_verify}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="curvctmc",
        description="Curvature bounds and deviation inequalities for birth-death chains.")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", type=Path, help="JSON experiment config")
    parser.add_argument("--seed", type=int, help="random seed (overrides config)")
    parser.add_argument("--paths", type=int, help="Monte Carlo path count (overrides config)")
    parser.add_argument("--out", type=str, help="output directory (overrides config)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        raw = {}
        base = None
        if args.config is not None:
            with open(args.config) as fh:
                raw = json.load(fh)
            base = args.config.parent
        elif args.command != "verify":
            raise ConfigError(f"{args.command} needs --config")
        if args.seed is not None:
            raw["seed"] = args.seed
        if args.paths is not None:
            raw["n_paths"] = args.paths
        if args.out is not None:
            raw["out"] = args.out
        cfg = ExperimentConfig.from_dict(raw, base)
        if args.command == "verify":
            return cmd_verify(cfg, n_paths=args.paths if args.paths is not None
                              else raw.get("n_paths"))
        return COMMANDS[args.command](cfg)
    except (ConfigError, ChainError, B.MissingParameter, B.IncompatibleParameters,
            TruncationError, KeyError, TypeError, ValueError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
