"""Command-line entry point: ``nondiag {check,run,mms,analytic,sweep} --config cfg.json``.

Exit codes: 0 success, 2 config error, 3 solver failure, 4 blow-up suspected,
5 condition check failed.  Every artifact is a deterministic function of the
config (and --seed), so rerunning a config reproduces its files byte for byte.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Mapping

import numpy as np

from . import config as cfgmod
from .analytic import convergence_study, js_modulus_profile, shipped_mms_case
from .conditions import check_all, estimate_ellipticity
from .config import ConfigError
from .coeffmodel import ModelError
from .expr import ExprError
from .grid import StateField
from .io import read_snapshot, series_to_csv, write_snapshot, SnapshotError
from .monitors import ENERGY_RTOL, energy_constant, energy_curves, grad_l2_sq, invariant_violation, l2_norm, make_monitors
from .regularize import regularize_boundary, transform_data, transform_reaction
from .solver import BlowupPolicy, Discretization, PreconditionError, SolverError, solve

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_BLOWUP, EXIT_CHECK = 0, 2, 3, 4, 5
COMMANDS = ("check", "run", "mms", "analytic", "sweep")
OUT_ENV = "NONDIAG_OUT"

log = logging.getLogger("nondiag")


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, allow_nan=True) + "\n"


def _status_code(status: str) -> int:
    return {"completed": EXIT_OK, "newton_failure": EXIT_SOLVER, "blowup_suspected": EXIT_BLOWUP}[status]


# --- building a run from a config ------------------------------------------------------


def _prepare(cfg: Mapping, epsilon: float | None = None, perturb=None):
    """Discretization, initial data and solve keywords for one run.

    ``epsilon`` overrides the regularization block; ``perturb`` is a callable
    added to the (unregularised) initial data.
    """
    model = cfgmod.build_model(cfg)
    grid = cfgmod.build_grid(cfg)
    bc = cfgmod.build_boundary(cfg, model.N)
    reg = dict(cfg.get("regularization") or {})
    if epsilon is not None:
        reg["epsilon"] = epsilon
    scheme = cfgmod.build_scheme({"regularization": reg})
    params = dict(cfg["model"].get("params") or {})

    dt_seed = None
    if "restart_from" in cfg:
        try:
            snap = read_snapshot(cfg["restart_from"])
        except (OSError, SnapshotError) as exc:
            raise ConfigError(str(exc), "restart_from") from exc
        if snap.state.values.shape != (grid.n, model.N):
            raise ConfigError(f"snapshot shape {snap.state.values.shape} does not match the grid", "restart_from")
        u0 = snap.state
        dt_seed = snap.dt_seed
    else:
        base = cfgmod.build_initial(cfg["initial"], params)
        if len(cfg["initial"]) != model.N:
            raise ConfigError(f"expected {model.N} expressions", "initial")
        u0 = base if perturb is None else (lambda x, b=base: b(x) + perturb(x))
        if scheme is not None:
            u0 = (lambda x, f=u0: transform_data(scheme, f(x)))

    if scheme is not None:
        model = transform_reaction(scheme, model)
        bc = regularize_boundary(scheme, bc)
    solver_opts = cfg.get("solver") or {}
    disc = Discretization(model, bc, grid, upwind=bool(solver_opts.get("upwind", False)))
    out = cfg.get("output") or {}
    blow = cfg.get("blowup")
    kwargs = {
        "monitors": make_monitors(cfg.get("monitors") or [], model.N),
        "snapshot_cadence": out.get("snapshot_cadence"),
        "blowup_policy": BlowupPolicy(**blow) if blow else None,
        "strict": bool(solver_opts.get("strict", False)),
        "check_compat": "restart_from" not in cfg,
        "dt_seed": dt_seed,
    }
    return disc, u0, kwargs


def _run(cfg: Mapping, epsilon=None, perturb=None):
    disc, u0, kwargs = _prepare(cfg, epsilon, perturb)
    controller = cfgmod.build_controller(cfg)
    return disc, solve(disc, u0, float(cfg["time"]["T"]), controller, **kwargs)


def _energy_summary(disc: Discretization, result) -> dict:
    """Energy inequality evaluated on the per-step monitor columns plus the initial state."""
    s_l2, s_grad = result.series["l2_squared"], result.series["grad_l2_squared"]
    first = result.snapshots[0].state
    grid = disc.grid
    times = [first.t] + list(s_l2.times)
    l2sq = [l2_norm(first, grid) ** 2] + list(s_l2.values)
    gsq = [grad_l2_sq(first.values, grid.dx)] + list(s_grad.values)
    lam0 = estimate_ellipticity(disc.model).lambda0
    c1 = energy_constant(disc.model, lam0, grid)
    lhs, rhs, diss = energy_curves(times, l2sq, gsq, lam0, c1)
    return {"lambda0": lam0, "C1": c1, "max_lhs_minus_rhs": float(np.max(lhs - rhs)),
            "dissipation": float(diss[-1]), "passed": bool(np.all(lhs <= rhs * (1 + ENERGY_RTOL)))}


def _result_summary(disc, result) -> dict:
    dts = [dt for _, dt in result.dt_history]
    summary = {
        "status": result.status,
        "message": result.message,
        "t_stop": result.t_stop,
        "accepted_steps": len(result.dt_history),
        "dt_min_used": min(dts) if dts else None,
        "dt_max_used": max(dts) if dts else None,
        "snapshot_times": [s.state.t for s in result.snapshots],
        "model": disc.model.name,
    }
    if disc.model.N == 2:
        summary["max_invariant_violation"] = max(invariant_violation(s.state) for s in result.snapshots)
    if "l2_squared" in result.series and result.series["l2_squared"].times:
        summary["energy"] = _energy_summary(disc, result)
    return summary


# --- commands ----------------------------------------------------------------------------


def cmd_check(cfg: Mapping, out: Path, seed: int, workers: int) -> int:
    model = cfgmod.build_model(cfg)
    opts = dict(cfg.get("check") or {})
    random_samples = int(opts.pop("random_samples", 0))
    extra = {}
    if all(k in cfg for k in ("grid", "boundary")) and "initial" in cfg:
        params = dict(cfg["model"].get("params") or {})
        extra = {"u0": cfgmod.build_initial(cfg["initial"], params), "grid": cfgmod.build_grid(cfg),
                 "bc": cfgmod.build_boundary(cfg, model.N)}
    reports = check_all(model, random_samples=random_samples, seed=seed, **opts, **extra)
    ell = estimate_ellipticity(model, opts.get("x_samples", 32), opts.get("u_samples", 64), random_samples, seed)
    payload = {
        "model": model.name,
        "seed": seed,
        "all_pass": all(r.passed for r in reports),
        "ellipticity": {"lambda0": ell.lambda0, "lambda1": ell.lambda1, "cordes_ratio": ell.cordes_ratio},
        "conditions": [r.to_dict() for r in reports],
    }
    (out / "check.json").write_text(_dump(payload))
    for r in reports:
        print(f"{r.condition_id:22s} {'pass' if r.passed else 'FAIL'}  residual={r.worst_residual:.3e}")
    return EXIT_OK if payload["all_pass"] else EXIT_CHECK


def cmd_run(cfg: Mapping, out: Path, seed: int, workers: int) -> int:
    disc, result = _run(cfg)
    fmt = (cfg.get("output") or {}).get("format", "csv")
    snap_dir = out / "snapshots"
    snap_dir.mkdir(exist_ok=True)
    for k, snap in enumerate(result.snapshots):
        write_snapshot(snap_dir / f"snapshot_{k:04d}.{fmt}", snap, fmt)
    (out / "monitors.csv").write_text(series_to_csv(result.series))
    (out / "dt_history.csv").write_text(
        "t,dt\n" + "".join(f"{t!r},{dt!r}\n" for t, dt in result.dt_history))
    summary = _result_summary(disc, result)
    (out / "result.json").write_text(_dump(summary))
    print(f"status={result.status} t_stop={result.t_stop:g} steps={summary['accepted_steps']}")
    return _status_code(result.status)


def _sup_diff(a: StateField, b: StateField) -> float:
    return float(np.abs(a.values - b.values).max())


def cmd_sweep(cfg: Mapping, out: Path, seed: int, workers: int) -> int:
    sw = cfg["sweep"]
    if sw["kind"] == "epsilon":
        if "epsilons" not in sw:
            raise ConfigError("epsilon sweep needs a list", "sweep.epsilons")
        eps = [float(e) for e in sw["epsilons"]]
        jobs = [dict(epsilon=e) for e in eps]
        labels = [{"epsilon": e} for e in eps]
    else:
        if "deltas" not in sw or "perturbation" not in sw:
            raise ConfigError("perturbation sweep needs deltas and perturbation", "sweep")
        params = dict(cfg["model"].get("params") or {})
        psi = cfgmod.build_initial(sw["perturbation"], params, key="sweep.perturbation")
        deltas = [float(d) for d in sw["deltas"]]
        jobs = [dict()] + [dict(perturb=(lambda x, d=d: d * psi(x))) for d in deltas]
        labels = [{"delta": 0.0}] + [{"delta": d} for d in deltas]

    # build everything up front so config errors surface before any solve
    for job in jobs:
        _prepare(cfg, **job)
    with ThreadPoolExecutor(max(1, workers)) as pool:
        results = list(pool.map(lambda job: _run(cfg, **job)[1], jobs))

    points = []
    for k, (label, res) in enumerate(zip(labels, results)):
        name = f"point_{k:03d}.csv"
        write_snapshot(out / name, res.snapshots[-1], "csv")
        points.append({**label, "status": res.status, "t_stop": res.t_stop, "final_snapshot": name})
    summary: dict = {"kind": sw["kind"]}
    ok = all(r.status == "completed" for r in results)
    if ok and sw["kind"] == "epsilon":
        diffs = [_sup_diff(results[i].final, results[i + 1].final) for i in range(len(results) - 1)]
        summary["sup_differences"] = diffs
        summary["ratios"] = [diffs[i] / diffs[i + 1] if diffs[i + 1] > 0 else None for i in range(len(diffs) - 1)]
    elif ok:
        base = results[0].final
        responses = [_sup_diff(r.final, base) / lab["delta"] for lab, r in zip(labels[1:], results[1:])]
        summary["responses"] = responses
        summary["response_ratios"] = [r / responses[0] if responses[0] > 0 else None for r in responses]
    (out / "sweep.json").write_text(_dump({"points": points, "summary": summary}))
    print(_dump(summary), end="")
    statuses = [r.status for r in results]
    if "newton_failure" in statuses:
        return EXIT_SOLVER
    if "blowup_suspected" in statuses:
        return EXIT_BLOWUP
    return EXIT_OK


def cmd_mms(cfg: Mapping, out: Path, seed: int, workers: int) -> int:
    m = cfg.get("mms") or {}
    T = float(m.get("T", 0.1))
    study = m.get("study", "both")
    case = shipped_mms_case()
    report = {"case": case.name}
    if study in ("space", "both"):
        rep = convergence_study(case, m.get("grids", [50, 100, 200]), [m.get("dt", 1e-5)], T, workers)
        report["space"] = rep.to_dict()
    if study in ("time", "both"):
        rep = convergence_study(case, [m.get("n", 400)], m.get("dts", [1e-2, 5e-3, 2.5e-3]), T, workers)
        report["time"] = rep.to_dict()
    (out / "mms.json").write_text(_dump(report))
    for kind in ("space", "time"):
        if kind in report:
            print(f"{kind} order {report[kind]['order']:.4f} errors {report[kind]['errors']}")
    return EXIT_OK


def cmd_analytic(cfg: Mapping, out: Path, seed: int, workers: int) -> int:
    a = cfg.get("analytic") or {}
    prof = js_modulus_profile(float(a.get("kappa", 1.0)), a.get("deltas", [0.02]),
                              a.get("times", [0.0, 0.9, 0.99, 0.999, 0.9999]), int(a.get("n_points", 10001)))
    text = prof.to_csv()
    (out / "omega.csv").write_text(text)
    print(text, end="")
    return EXIT_OK


HANDLERS = {"check": cmd_check, "run": cmd_run, "sweep": cmd_sweep, "mms": cmd_mms, "analytic": cmd_analytic}


def resolve_out(cfg: Mapping, flag: str | None) -> Path:
    """--out wins, then $NONDIAG_OUT, then output.dir from the config, then ./nondiag_out."""
    path = flag or os.environ.get(OUT_ENV) or (cfg.get("output") or {}).get("dir") or "nondiag_out"
    return Path(path)


def execute(command: str, cfg, out: str | Path | None = None, workers: int = 1, seed: int = 0) -> int:
    """Validate ``cfg`` (a dict or a path to JSON), run ``command`` and write its artifacts."""
    if command not in COMMANDS:
        print(f"config error: unknown command {command!r}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if not isinstance(cfg, Mapping):
            cfg = cfgmod.load(cfg)
        cfgmod.validate(cfg, command)
        out_dir = resolve_out(cfg, None if out is None else str(out))
        out_dir.mkdir(parents=True, exist_ok=True)
        return HANDLERS[command](cfg, out_dir, seed, workers)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ModelError, ExprError, PreconditionError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nondiag", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=False, help="JSON run configuration")
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--workers", type=int, default=1, help="concurrent sweep / study points")
    p.add_argument("--seed", type=int, default=0, help="seed for random samples in checks")
    p.add_argument("--print-schema", action="store_true", help="print the config JSON schema and exit")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    if args.print_schema:
        print(_dump(cfgmod.SCHEMA), end="")
        return EXIT_OK
    if args.config is None:
        cfg = {}
    else:
        try:
            cfg = cfgmod.load(args.config)
        except ConfigError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
    return execute(args.command, cfg, args.out, args.workers, args.seed)


if __name__ == "__main__":
    sys.exit(main())
