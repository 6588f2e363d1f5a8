"""Command-line front end.

Subcommands build an environment model from flags or a JSON config file, run
the scans, sweeps, trajectory and stability experiments, or the built-in
verification suite, and write plot-ready CSV/JSON artifacts.  Every run
leaves a ``<stem>.run.json`` sidecar with the fully resolved configuration;
passing a sidecar back through ``--config`` reproduces the run exactly.
Unless ``--no-plot`` is given, each data artifact is rendered to a PNG next
to it.
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .errors import QsdLabError
from .quantum import SIGMA_X, SIGMA_Y, SIGMA_Z, BlochPoint, bloch_to_state, make_environment
from .dynamics import (
    CONVENTIONS,
    DEFAULT_SEED,
    GISIN_PERCIVAL,
    SdeConfig,
    simulate_trajectory,
    trajectory_to_csv,
)
from .analysis import (
    BlochGrid,
    StabilityConfig,
    coupling_sweep,
    critical_coupling,
    curvature_along_path,
    scan_field,
    stability_experiment,
)
from . import verify as verify_mod


def _default_threads() -> int:
    return os.cpu_count() or 1


# flag name -> (type, default); a single source of truth shared by the
# argument parser, the config-file loader, and the sidecar writer.
_COMMON = {
    "out": (str, None),
    "seed": (int, DEFAULT_SEED),
    "threads": (int, None),
    "plot": (bool, True),
}

_MODEL = {
    "kind": (str, None),
    "mu": (float, None),
    "mu1": (float, None),
    "mu2": (float, None),
}

_FIELDS = {
    "scan": {**_COMMON, **_MODEL,
             "quantity": (str, "curvature"), "grid": (int, 96), "fd_step": (float, 1e-3)},
    "sweep": {**_COMMON, **_MODEL,
              "lo": (float, None), "hi": (float, None), "points": (int, 20),
              "grid": (int, 96), "fd_step": (float, 1e-3)},
    "critical": {**_COMMON, **_MODEL,
                 "lo": (float, None), "hi": (float, None), "tol": (float, 1e-3),
                 "grid": (int, 96), "fd_step": (float, 1e-3)},
    "trajectory": {**_COMMON, **_MODEL,
                   "theta0": (float, 0.0), "phi0": (float, 0.0),
                   "hx": (float, 0.0), "hy": (float, 0.0), "hz": (float, 0.0),
                   "dt": (float, 1e-3), "steps": (int, 10000), "stride": (int, 10),
                   "convention": (str, GISIN_PERCIVAL), "renormalize": (bool, True),
                   "curvature": (bool, False), "fd_step": (float, 1e-3)},
    "stability": {**_COMMON, **_MODEL,
                  "hx": (float, 0.0), "hy": (float, 0.0), "hz": (float, 0.0),
                  "n_paths": (int, StabilityConfig.n_paths),
                  "delta": (float, StabilityConfig.delta),
                  "threshold": (float, StabilityConfig.threshold),
                  "t_final": (float, StabilityConfig.t_final),
                  "dt": (float, StabilityConfig.dt),
                  "stride": (int, StabilityConfig.record_stride),
                  "grid": (int, 96), "fd_step": (float, 1e-3)},
    "verify": {"threads": (int, None)},
}

_DEFAULT_OUT = {
    "scan": "field.csv",
    "sweep": "sweep.csv",
    "critical": "critical.json",
    "trajectory": "trajectory.csv",
    "stability": "stability.json",
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qsdlab",
        description="Stochastic state diffusion and its curvature landscapes for qubits.")
    parser.add_argument("--version", action="version", version=f"qsdlab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    help_text = {
        "scan": "evaluate a norm/curvature landscape on a Bloch grid",
        "sweep": "track curvature extrema across coupling strengths",
        "critical": "bisect for the coupling where the curvature maximum changes sign",
        "trajectory": "integrate one stochastic sample path",
        "stability": "residency statistics of perturbed paths near the curvature maximum",
        "verify": "run the built-in oracle and invariant checks",
    }
    for command, fields in _FIELDS.items():
        p = sub.add_parser(command, help=help_text[command])
        if command != "verify":
            p.add_argument("--config", type=str, default=None,
                           help="JSON config file (or a run sidecar) supplying defaults")
        for name, (ftype, _default) in fields.items():
            flag = "--" + name.replace("_", "-")
            if ftype is bool:
                group = p.add_mutually_exclusive_group()
                group.add_argument(flag, dest=name, action="store_true", default=None)
                group.add_argument("--no-" + name.replace("_", "-"), dest=name,
                                   action="store_false", default=None)
            else:
                p.add_argument(flag, type=ftype, default=None)
    return parser


def _load_config_file(path: str, command: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    if not isinstance(payload, dict):
        raise ValueError("config file must hold a JSON object")
    if "command" in payload and "config" in payload:  # run sidecar
        if payload["command"] != command:
            raise ValueError(
                f"sidecar was recorded for {payload['command']!r}, not {command!r}")
        payload = payload["config"]
    known = _FIELDS[command]
    unknown = sorted(set(payload) - set(known))
    if unknown:
        raise ValueError(f"unknown config keys for {command}: {', '.join(unknown)}")
    out = {}
    for key, value in payload.items():
        ftype, _ = known[key]
        out[key] = bool(value) if ftype is bool else (None if value is None else ftype(value))
    return out


def _resolve(args: argparse.Namespace, command: str) -> dict:
    fields = _FIELDS[command]
    resolved = {name: default for name, (_t, default) in fields.items()}
    config_path = getattr(args, "config", None)
    if config_path:
        resolved.update(_load_config_file(config_path, command))
    for name in fields:
        value = getattr(args, name, None)
        if value is not None:
            resolved[name] = value
    if "out" in fields and not resolved.get("out"):
        resolved["out"] = _DEFAULT_OUT[command]
    if "threads" in fields and resolved.get("threads") is None:
        resolved["threads"] = _default_threads()
    return resolved


def _require(cfg: dict, *names):
    missing = [n for n in names if cfg.get(n) is None]
    if missing:
        raise ValueError(f"missing required option(s): {', '.join('--' + m for m in missing)}")


def _model_from(cfg: dict):
    _require(cfg, "kind")
    kind = cfg["kind"]
    if kind == "thermal":
        _require(cfg, "mu1", "mu2")
        couplings = {"mu1": cfg["mu1"], "mu2": cfg["mu2"]}
    elif kind in ("dephasing", "measurement"):
        _require(cfg, "mu")
        couplings = {"mu": cfg["mu"]}
    else:
        raise ValueError(f"unsupported kind {kind!r} (use dephasing, thermal, or measurement)")
    return make_environment(kind, couplings), couplings


def _hamiltonian_from(cfg: dict) -> np.ndarray:
    return cfg["hx"] * SIGMA_X + cfg["hy"] * SIGMA_Y + cfg["hz"] * SIGMA_Z


def _git_describe() -> str | None:
    try:
        res = subprocess.run(["git", "describe", "--always", "--dirty"],
                             capture_output=True, text=True, timeout=5)
    except (OSError, subprocess.TimeoutExpired):
        return None
    return res.stdout.strip() if res.returncode == 0 else None


def _write_sidecar(out_path: Path, command: str, cfg: dict, elapsed: float) -> None:
    describe = _git_describe()
    sidecar = {
        "command": command,
        "config": cfg,
        "seed": cfg.get("seed"),
        "version": f"qsdlab {__version__}" + (f" ({describe})" if describe else ""),
        "elapsed_seconds": elapsed,
    }
    target = out_path.with_name(out_path.stem + ".run.json")
    target.write_text(json.dumps(sidecar, indent=2) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _cmd_scan(cfg: dict) -> None:
    model, _ = _model_from(cfg)
    if cfg["quantity"] not in ("norm", "curvature", "both"):
        raise ValueError("quantity must be norm, curvature, or both")
    grid = BlochGrid.regular(cfg["grid"], cfg["grid"])
    out = Path(cfg["out"])

    if cfg["quantity"] == "both":
        from .geometry import write_field_csv
        norm_field = scan_field(model, grid, "norm", cfg["fd_step"], cfg["threads"])
        curv_field = scan_field(model, grid, "curvature", cfg["fd_step"], cfg["threads"])
        write_field_csv(out, grid.thetas, grid.phis, norm_field.values, curv_field.values)
        if cfg["plot"]:
            from .plotting import save_field_figure
            save_field_figure(norm_field, out.with_name(out.stem + "_norm.png"))
            save_field_figure(curv_field, out.with_name(out.stem + "_curvature.png"))
    else:
        fld = scan_field(model, grid, cfg["quantity"], cfg["fd_step"], cfg["threads"])
        fld.to_csv(out)
        if cfg["plot"]:
            from .plotting import save_field_figure
            save_field_figure(fld, out.with_suffix(".png"))
    print(f"scan written to {out}")


def _cmd_sweep(cfg: dict) -> None:
    _require(cfg, "kind", "lo", "hi")
    if cfg["kind"] not in ("dephasing", "thermal", "measurement"):
        raise ValueError(f"unsupported kind {cfg['kind']!r}")
    if not (0 < cfg["lo"] < cfg["hi"]):
        raise ValueError("need 0 < lo < hi")
    couplings = np.linspace(cfg["lo"], cfg["hi"], cfg["points"])
    grid = BlochGrid.regular(cfg["grid"], cfg["grid"])
    sweep = coupling_sweep(cfg["kind"], couplings, grid, cfg["fd_step"], cfg["threads"])
    out = Path(cfg["out"])
    sweep.to_csv(out)
    if cfg["plot"]:
        from .plotting import save_sweep_figure
        save_sweep_figure(sweep, out.with_suffix(".png"), title=f"{cfg['kind']} sweep")
    print(f"sweep written to {out}")


def _cmd_critical(cfg: dict) -> None:
    _require(cfg, "kind", "lo", "hi")
    grid = BlochGrid.regular(cfg["grid"], cfg["grid"])
    mu_star = critical_coupling(cfg["kind"], cfg["lo"], cfg["hi"], cfg["tol"],
                                grid, cfg["fd_step"], cfg["threads"])
    out = Path(cfg["out"])
    out.write_text(json.dumps({
        "kind": cfg["kind"], "bracket": [cfg["lo"], cfg["hi"]],
        "tol": cfg["tol"], "grid": cfg["grid"], "critical_coupling": mu_star,
    }, indent=2) + "\n", encoding="utf-8")
    print(f"critical coupling = {mu_star:.6g} (written to {out})")


def _cmd_trajectory(cfg: dict) -> None:
    model, _ = _model_from(cfg)
    model = model.with_hamiltonian(_hamiltonian_from(cfg))
    if cfg["convention"] not in CONVENTIONS:
        raise ValueError(f"convention must be one of {CONVENTIONS}")
    state0 = bloch_to_state(BlochPoint(cfg["theta0"], cfg["phi0"]))
    sde = SdeConfig(dt=cfg["dt"], steps=cfg["steps"], seed=cfg["seed"],
                    renormalize_each_step=cfg["renormalize"], record_stride=cfg["stride"])
    record = simulate_trajectory(state0, model, sde, cfg["convention"])
    out = Path(cfg["out"])
    trajectory_to_csv(record, out)
    curv = None
    if cfg["curvature"]:
        curv = curvature_along_path(record, model, cfg["fd_step"])
        with open(out.with_name(out.stem + ".curvature.csv"), "w", encoding="utf-8") as fh:
            fh.write("t,scalar_curvature\n")
            for t, r in zip(record.times, curv):
                fh.write(f"{t:.12g},{r:.12g}\n")
    if cfg["plot"]:
        from .plotting import save_trajectory_figure
        save_trajectory_figure(record, out.with_suffix(".png"), curvature=curv)
    print(f"trajectory written to {out}")


def _cmd_stability(cfg: dict) -> None:
    _require(cfg, "kind")
    _, couplings = _model_from(cfg)
    pert = _hamiltonian_from(cfg)
    stab_cfg = StabilityConfig(delta=cfg["delta"], threshold=cfg["threshold"],
                               t_final=cfg["t_final"], dt=cfg["dt"],
                               n_paths=cfg["n_paths"], record_stride=cfg["stride"],
                               grid=(cfg["grid"], cfg["grid"]), seed=cfg["seed"])
    report = stability_experiment(cfg["kind"], couplings,
                                  pert if np.any(pert) else None,
                                  stab_cfg, cfg["fd_step"], cfg["threads"])
    out = Path(cfg["out"])
    out.write_text(report.to_json() + "\n", encoding="utf-8")
    if cfg["plot"]:
        from .plotting import save_stability_figure
        save_stability_figure(report, out.with_suffix(".png"))
    print(f"stability verdict: {report.verdict} "
          f"(fraction {report.fraction_resident:.3f}); written to {out}")


_RUNNERS = {
    "scan": _cmd_scan,
    "sweep": _cmd_sweep,
    "critical": _cmd_critical,
    "trajectory": _cmd_trajectory,
    "stability": _cmd_stability,
}


def run(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    command = args.command

    if command == "verify":
        threads = args.threads if args.threads is not None else _default_threads()
        failures = verify_mod.run_all(threads=threads)
        return 1 if failures else 0

    try:
        cfg = _resolve(args, command)
        started = time.monotonic()
        _RUNNERS[command](cfg)
        _write_sidecar(Path(cfg["out"]), command, cfg, time.monotonic() - started)
    except (ValueError, OSError, json.JSONDecodeError, QsdLabError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
