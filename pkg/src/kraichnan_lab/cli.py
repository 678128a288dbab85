"""Experiment runner: validated JSON configs in, reproducible CSV tables and
a machine-readable summary out.

Exit codes: 0 all asserted checks passed, 1 a check failed, 2 config error,
3 compute error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
import time
import warnings
from typing import Dict, List, Optional

import numpy as np
import jsonschema

from . import __version__
from . import flux as _flux
from . import mc_spde as _mc
from . import mellin as _mellin
from . import spectral as _spectral
from .errors import (ComputeError, ConfigError, DomainError, InvariantFailure,
                     KraichnanLabError, TruncationWarning)
from .specfun import ModelParams

EXPERIMENTS = (
    "k-constants", "flux-table", "asymptotics", "spectral-evolve",
    "selfsimilar-balance", "dissipation-integral", "mc-ensemble",
)

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["experiment", "d", "alpha", "s"],
    "properties": {
        "experiment": {"enum": list(EXPERIMENTS)},
        "d": {"type": "integer", "minimum": 2},
        "alpha": {"type": "number"},
        "s": {"type": "number"},
        "m": {"type": "number", "minimum": 0},
        "nu": {"type": "number", "minimum": 0},
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "required": ["rho_min", "rho_max", "nodes"],
            "properties": {
                "rho_min": {"type": "number", "exclusiveMinimum": 0},
                "rho_max": {"type": "number", "exclusiveMinimum": 0},
                "nodes": {"type": "integer", "minimum": 0},
            },
        },
        "time": {
            "type": "object",
            "additionalProperties": False,
            "required": ["t_final"],
            "properties": {
                "t_final": {"type": "number", "exclusiveMinimum": 0},
                "dt": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "trackers": {"type": "array", "items": {"type": "number"}},
        "lattice": {
            "type": "object",
            "additionalProperties": False,
            "required": ["n_max", "n_samples", "dt"],
            "properties": {
                "n_max": {"type": "integer", "minimum": 4},
                "n_samples": {"type": "integer", "minimum": 1},
                "dt": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "seed": {"type": "integer"},
        "selfsimilar": {"type": "boolean"},
        "output_dir": {"type": "string"},
    },
}

_DEFAULTS = {
    "m": 0.0,
    "nu": 0.0,
    "seed": 0,
    "selfsimilar": False,
    "grid": {"rho_min": 1e-2, "rho_max": 1e3, "nodes": 512},
    "time": {"t_final": 1.0},
    "lattice": {"n_max": 16, "n_samples": 2000, "dt": 1e-3},
}


def load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        jsonschema.validate(raw, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"config schema violation: {exc.message}") from exc
    resolved = dict(raw)
    for key, val in _DEFAULTS.items():
        if key not in resolved:
            resolved[key] = json.loads(json.dumps(val))
    if "trackers" not in resolved:
        resolved["trackers"] = [resolved["s"]]
    # parameter-range validation happens in ModelParams and is a config error
    try:
        ModelParams(d=resolved["d"], alpha=resolved["alpha"], s=resolved["s"],
                    m=resolved["m"], nu=resolved["nu"])
    except DomainError as exc:
        raise ConfigError(str(exc)) from exc
    return resolved


def _params(cfg: dict) -> ModelParams:
    return ModelParams(d=cfg["d"], alpha=cfg["alpha"], s=cfg["s"],
                       m=cfg["m"], nu=cfg["nu"])


def _xi_grid(cfg: dict) -> List[float]:
    g = cfg["grid"]
    if g["nodes"] == 0:
        return []
    if g["nodes"] == 1:
        return [g["rho_min"]]
    return list(np.geomspace(g["rho_min"], g["rho_max"], g["nodes"]))


def _check(check_id: str, passed: bool, value, target: str) -> dict:
    return {"id": check_id, "passed": bool(passed), "value": value,
            "target": target}


# --------------------------------------------------------------------------
# experiment bodies: return (artifacts: name->text, checks)

def _exp_k_constants(cfg):
    params = _params(cfg)
    report = _mellin.k_report(params)
    checks = [
        _check("k.gamma_positive", report.k_gamma > 0, report.k_gamma, "> 0"),
        _check("k.gamma_vs_integral",
               abs(report.k_integral - report.k_gamma) <= 1e-6 * report.k_gamma,
               abs(report.k_integral - report.k_gamma) / report.k_gamma,
               "rel <= 1e-6"),
    ]
    if report.k_appendix is not None:
        checks.append(_check(
            "k.gamma_vs_appendix",
            abs(report.k_appendix - report.k_gamma) <= 1e-4 * report.k_gamma,
            abs(report.k_appendix - report.k_gamma) / report.k_gamma,
            "rel <= 1e-4"))
    rows = ["route,value",
            f"gamma,{report.k_gamma!r}",
            f"integral,{report.k_integral!r}"]
    if report.k_appendix is not None:
        rows.append(f"appendix,{report.k_appendix!r}")
    return {"k_constants.csv": "\n".join(rows) + "\n"}, checks


def _exp_flux_table(cfg):
    params = _params(cfg)
    table = _flux.asymptotic_residual_table(params, _xi_grid(cfg))
    checks = []
    if table.xi_values:
        checks.append(_check("flux.residuals_finite",
                             all(math.isfinite(r) for r in table.residuals),
                             max(table.residuals), "finite"))
    return {"flux_table.csv": table.to_csv()}, checks


def _residual_slope(table) -> float:
    xs = np.array(table.xi_values)
    rs = np.array(table.residuals)
    sel = (xs >= 10.0) & (rs > 0)
    if sel.sum() < 2:
        return 0.0
    slope, _ = np.polyfit(np.log(xs[sel]), np.log(rs[sel]), 1)
    return float(slope)


def _exp_asymptotics(cfg):
    params = _params(cfg)
    xi = _xi_grid(cfg) or list(np.geomspace(1.0, 1e3, 40))
    table = _flux.asymptotic_residual_table(params, xi)
    slope = _residual_slope(table)
    checks = [_check("asym.residual_slope", slope <= 0.1, slope, "<= 0.1")]
    window = [x for x in (20.0, 27.0, 35.0, 42.0, 50.0)]
    worst = 0.0
    for x in window:
        fq = _flux.flux_F(x, params, method="quadrature", rel_tol=1e-11)
        fm = _flux.flux_F(x, params, method="mellin")
        worst = max(worst, abs(fq - fm) / abs(fq))
    checks.append(_check("asym.dual_path_agreement", worst <= 1e-5, worst,
                         "rel <= 1e-5 on [20,50]"))
    return {"asymptotics.csv": table.to_csv()}, checks


def _initial_gaussian(grid: _spectral.RadialGrid, params) -> _spectral.SpectrumState:
    a = np.exp(-grid.nodes ** 2)
    return _spectral.SpectrumState(grid=grid, values=a, time=0.0, params=params)


def _initial_log_bump(grid: _spectral.RadialGrid, params, center: float = 1.0,
                      width: float = 0.5) -> _spectral.SpectrumState:
    a = np.exp(-0.5 * ((np.log(grid.nodes) - math.log(center)) / width) ** 2)
    return _spectral.SpectrumState(grid=grid, values=a, time=0.0, params=params)


def _balance_scale(state, kernel, s_query) -> float:
    rho = state.grid.nodes
    psi = rho ** (-2.0 * s_query)
    diff = np.abs(psi[None, :] - psi[:, None])
    scale = float(np.einsum("ij,ij->", kernel.sigma, diff * np.abs(state.values)[:, None]))
    return scale + 1e-300


def _exp_spectral_evolve(cfg):
    params = _params(cfg)
    g = cfg["grid"]
    grid = _spectral.RadialGrid.log_spaced(g["rho_min"], g["rho_max"],
                                           g["nodes"], params.d)
    kernel = _spectral.build_kernel(grid, params,
                                    selfsimilar=cfg["selfsimilar"])
    state = _initial_gaussian(grid, params)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TruncationWarning)
        traj = _spectral.evolve(state, kernel, cfg["time"]["t_final"],
                                dt=cfg["time"].get("dt"),
                                trackers=cfg["trackers"])
    rep = _spectral.balance_check(traj.final_state, kernel, cfg["s"])
    rel = abs(rep.lhs - rep.rhs) / _balance_scale(traj.final_state, kernel, cfg["s"])
    checks = [
        _check("spectral.balance_identity", rel <= 1e-12, rel, "rel <= 1e-12"),
        _check("spectral.no_negative_values",
               float(traj.final_state.values.min()) >= -1e-12 * float(traj.final_state.values.max()),
               float(traj.final_state.values.min()), ">= -1e-12 * max"),
    ]
    return {"trajectory.csv": traj.to_csv()}, checks


def _exp_selfsimilar_balance(cfg):
    params = _params(cfg)
    g = cfg["grid"]
    grid = _spectral.RadialGrid.log_spaced(g["rho_min"], g["rho_max"],
                                           g["nodes"], params.d)
    kernel = _spectral.build_kernel(grid, params, selfsimilar=True)
    state = _initial_log_bump(grid, params)
    K = _mellin.k_constant_gamma(params)
    t_final = cfg["time"]["t_final"]
    dt = cfg["time"].get("dt") or _spectral.default_dt(kernel)
    n_steps = int(math.ceil(t_final / dt))
    sample_at = set(int(round(n_steps * (i + 1) / 11.0)) for i in range(10))
    rows = ["t,ratio,K"]
    worst = 0.0
    for k in range(1, n_steps + 1):
        state = _spectral.step(state, kernel, dt)
        if k in sample_at:
            rep = _spectral.balance_check(state, kernel, params.s)
            denom = _spectral.sobolev_norm(state, params.s + params.alpha - 1.0)
            ratio = -rep.lhs / denom
            worst = max(worst, abs(ratio - K) / K)
            rows.append(f"{state.time!r},{ratio!r},{K!r}")
    checks = [_check("selfsimilar.ratio_matches_K", worst <= 0.02, worst,
                     "rel <= 2e-2 at 10 mid-trajectory times")]
    return {"selfsimilar_balance.csv": "\n".join(rows) + "\n"}, checks


def _exp_dissipation_integral(cfg):
    params = _params(cfg)
    g = cfg["grid"]
    grid = _spectral.RadialGrid.log_spaced(g["rho_min"], g["rho_max"],
                                           g["nodes"], params.d)
    kernel = _spectral.build_kernel(grid, params, selfsimilar=True)
    # bump away from rho = 1 so the decay reaches its terminal power law
    # well before t_final and the tail extrapolation is benign
    state = _initial_log_bump(grid, params, center=4.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TruncationWarning)
        integral, reference = _spectral.anomalous_dissipation_integral(
            state, kernel, cfg["time"]["t_final"], dt=cfg["time"].get("dt"))
    ratio = integral / reference if reference else float("nan")
    checks = [_check("dissipation.integral_vs_reference",
                     0.9 <= ratio <= 1.1, ratio, "in [0.9, 1.1]")]
    body = ("integral,reference,ratio\n"
            f"{integral!r},{reference!r},{ratio!r}\n")
    return {"dissipation_integral.csv": body}, checks


def _exp_mc_ensemble(cfg):
    lat = cfg["lattice"]
    lcfg = _mc.LatticeConfig(n_max=lat["n_max"], alpha=cfg["alpha"],
                             dt=lat["dt"], n_samples=lat["n_samples"],
                             seed=cfg["seed"])
    noise = _mc.build_noise_modes(lcfg)
    modes = {}
    for kx in range(-2, 3):
        for ky in range(-2, 3):
            if (kx, ky) != (0, 0):
                modes[(kx, ky)] = 1.0 / (1.0 + kx * kx + ky * ky)
    initial = _mc.FieldSample.from_modes(noise, modes)
    t_final = cfg["time"]["t_final"]
    stats = _mc.run_ensemble(lcfg, initial, t_final,
                             record_times=[0.0, t_final / 2.0, t_final])
    last = stats[-1]
    smap_last = last.spectrum_map()
    spec_mid = {k: 0.5 * (v + smap_last.get(k, 0.0))
                for k, v in stats[-2].spectrum_map().items()}
    rates = _mc.lattice_master_rate(noise, spec_mid)
    hits = 0
    total = 0
    for idx, (kx, ky) in enumerate(map(tuple, last.modes)):
        if last.diff_mean is None:
            break
        emp = last.diff_mean[idx] / last.diff_dt
        se = last.diff_std_err[idx] / last.diff_dt
        model = rates[(kx, ky)]
        total += 1
        if abs(emp - model) <= 3.0 * se + 1e-300:
            hits += 1
    frac = hits / total if total else 0.0
    checks = [_check("mc.master_equation_rates", frac >= 0.95, frac,
                     ">= 0.95 of modes within 3 sigma")]
    artifacts = {f"ensemble_t{idx}.csv": st.to_csv() for idx, st in enumerate(stats)}
    return artifacts, checks


_RUNNERS = {
    "k-constants": _exp_k_constants,
    "flux-table": _exp_flux_table,
    "asymptotics": _exp_asymptotics,
    "spectral-evolve": _exp_spectral_evolve,
    "selfsimilar-balance": _exp_selfsimilar_balance,
    "dissipation-integral": _exp_dissipation_integral,
    "mc-ensemble": _exp_mc_ensemble,
}


def _atomic_write(path: str, text: str):
    dirname = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=dirname, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def run(config_path: str, output_dir: Optional[str] = None) -> int:
    try:
        cfg = load_config(config_path)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    out_dir = output_dir or cfg.get("output_dir") or "."
    os.makedirs(out_dir, exist_ok=True)
    t0 = time.monotonic()
    try:
        artifacts, checks = _RUNNERS[cfg["experiment"]](cfg)
    except (ConfigError, DomainError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except KraichnanLabError as exc:
        print(f"compute error: {exc}", file=sys.stderr)
        return 3
    elapsed = time.monotonic() - t0

    passed = all(c["passed"] for c in checks)
    manifest = {
        "config": cfg,
        "config_path": os.path.abspath(config_path),
        "version": __version__,
        "timings": {"wall_seconds": elapsed},
    }
    _atomic_write(os.path.join(out_dir, "manifest.json"),
                  json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    for name, text in artifacts.items():
        _atomic_write(os.path.join(out_dir, name), text)
    summary = {"experiment": cfg["experiment"], "checks": checks,
               "passed": passed}
    _atomic_write(os.path.join(out_dir, "summary.json"),
                  json.dumps(summary, indent=2, sort_keys=True) + "\n")
    for c in checks:
        state = "pass" if c["passed"] else "FAIL"
        print(f"[{state}] {c['id']}: value={c['value']!r} target={c['target']}")
    if not passed:
        print("invariant failure", file=sys.stderr)
        return 1
    return 0


def validate(config_path: str) -> int:
    try:
        cfg = load_config(config_path)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    print("ok")
    print(json.dumps(cfg, indent=2, sort_keys=True))
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="kraichnan-lab",
        description="run or validate verification experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run an experiment config")
    p_run.add_argument("config")
    p_run.add_argument("--output-dir", default=None)
    p_val = sub.add_parser("validate", help="validate a config without computing")
    p_val.add_argument("config")
    args = parser.parse_args(argv)
    if args.command == "run":
        return run(args.config, args.output_dir)
    return validate(args.config)


if __name__ == "__main__":
    sys.exit(main())
