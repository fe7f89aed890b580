"""The ten acceptance criteria, each at its stated tolerance.

Every test records a one-line verdict; the lines are printed in the pytest
terminal summary (see conftest.py) and when this file is run directly.
"""
import json
import time

import numpy as np
import pytest

from nondiag.analytic import JohnStaraField, convergence_study, js_modulus_profile, shipped_mms_case
from nondiag.cli import execute
from nondiag.coeffmodel import model_from_catalog
from nondiag.conditions import CONDITION_IDS, check_all, estimate_ellipticity
from nondiag.grid import BoundarySpec, Grid1D, TimeController
from nondiag.monitors import Monitor, energy_v102, invariant_violation, mass_total
from nondiag.regularize import EpsilonScheme, transform_data, transform_reaction
from nondiag.solver import Discretization, join_results, restart_from_snapshot, solve

from conftest import boundary_touching_data

RESULTS: dict = {}

INITIAL_EXPR = [
    "(abs(1.5 - 3*x1) - abs(0.5 - 3*x1) + 1)/2",
    "(1 - (abs(1.5 - 3*x1) - abs(0.5 - 3*x1) + 1)/2) * (abs((0.9 - x1)/0.2) - abs((0.9 - x1)/0.2 - 1) + 1)/2",
]
ZERO_FLUX = {"left": [{"type": "zero_flux"}] * 2, "right": [{"type": "zero_flux"}] * 2}


def record(num: int, title: str, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {num:2d} {title}: {detail}"
    RESULTS[num] = line
    print(line)
    assert ok, line


def _states_run(model, eps, n=200, T=1.0, controller=None, cadence=0.1):
    """Zero-flux run from the boundary-touching data, keeping every accepted state."""
    grid = Grid1D(n)
    u0 = boundary_touching_data(grid.centers)
    if eps:
        scheme = EpsilonScheme(eps)
        model = transform_reaction(scheme, model)
        u0 = transform_data(scheme, u0)
    disc = Discretization(model, BoundarySpec.zero_flux(2), grid)
    states = []
    keep = Monitor("keep", lambda s, g: states.append(s) or 0.0)
    inv = Monitor("invariant", lambda s, g: invariant_violation(s))
    ctrl = controller or TimeController(dt_init=1e-3, dt_min=1e-6, dt_max=1e-2)
    res = solve(disc, u0, T, ctrl, [keep, inv], snapshot_cadence=cadence)
    return disc, res, [res.snapshots[0].state] + states


def test_c01_structural_suite():
    t0 = time.perf_counter()
    cap = check_all(model_from_catalog("capillary_demo", {"q": 1, "a": 1, "c": 1}))
    ok = len(cap) == len(CONDITION_IDS) and all(r.passed and r.worst_residual <= 1e-8 for r in cap)
    targets = {"capillary_broken_A21": "triangular_A21", "capillary_broken_FC": "FC"}
    failed = {}
    for name, target in targets.items():
        failed[name] = [r.condition_id for r in check_all(model_from_catalog(name)) if not r.passed]
        ok &= failed[name] == [target]
    dt = time.perf_counter() - t0
    worst = max(r.worst_residual for r in cap)
    record(1, "structural-condition suite", ok and dt < 5.0,
           f"capillary_demo worst residual {worst:.1e}; broken variants fail {failed}; {dt:.2f} s (< 5 s)")


def test_c02_ellipticity_witness():
    rep = estimate_ellipticity(model_from_catalog("capillary_demo", {"q": 1, "a": 1, "c": 1}))
    ok = 0.874 <= rep.lambda0 <= 0.876 and 1.124 <= rep.lambda1 <= 1.126 and rep.cordes_ratio >= 0.33
    record(2, "ellipticity witness", ok,
           f"lambda0={rep.lambda0:.5f} lambda1={rep.lambda1:.5f} ratio={rep.cordes_ratio:.4f}")


def test_c03_invariant_region(capillary):
    t0 = time.perf_counter()
    _, res_eps, _ = _states_run(capillary, 0.05)
    _, res_0, _ = _states_run(capillary, 0.0)
    dt = time.perf_counter() - t0
    u0 = boundary_touching_data(Grid1D(200).centers)
    on_boundary = abs(invariant_violation(u0)) == 0.0
    worst_eps = max(res_eps.series["invariant"].values + [invariant_violation(res_eps.snapshots[0].state)])
    worst_0 = max(res_0.series["invariant"].values + [invariant_violation(res_0.snapshots[0].state)])
    ok = (on_boundary and res_eps.status == res_0.status == "completed" and worst_eps < 0
          and worst_0 <= 1e-6 and dt < 30.0)
    record(3, "invariant region", ok,
           f"eps=0.05 min_h(-G_h)={-worst_eps:.3e} > 0; eps=0 max_h G_h={worst_0:.2e} <= 1e-6; {dt:.1f} s (< 30 s)")


def test_c04_mms_convergence():
    t0 = time.perf_counter()
    case = shipped_mms_case()
    space = convergence_study(case, [50, 100, 200], [1e-5], T=0.1)
    tm = convergence_study(case, [400], [1e-2, 5e-3, 2.5e-3], T=0.1)
    dt = time.perf_counter() - t0
    ok = 1.8 <= space.order <= 2.2 and 0.8 <= tm.order <= 1.2 and dt < 60.0
    record(4, "MMS convergence", ok, f"spatial order {space.order:.3f}, temporal order {tm.order:.3f}; {dt:.1f} s (< 60 s)")


def test_c05_conservation(capillary):
    grid = Grid1D(200)
    disc = Discretization(capillary, BoundarySpec.zero_flux(2), grid)
    res = solve(disc, boundary_touching_data(grid.centers), 1.0, TimeController.fixed(1e-3))
    steps = len(res.dt_history)
    rel = [abs(mass_total(res.final, grid, a) / mass_total(res.snapshots[0].state, grid, a) - 1) for a in range(2)]
    ok = res.status == "completed" and steps >= 1000 and max(rel) <= 1e-12
    record(5, "conservation", ok, f"{steps} steps, relative mass drift {max(rel):.1e} (<= 1e-12)")


def _sweep_cfg(sweep, T, dt):
    return {
        "model": {"catalog": "capillary_demo"}, "grid": {"n": 200}, "boundary": ZERO_FLUX,
        "time": {"T": T, "dt_init": dt, "dt_min": dt, "dt_max": dt}, "sweep": sweep,
    }


def test_c06_epsilon_limit_sweep(tmp_path):
    cfg = _sweep_cfg({"kind": "epsilon", "epsilons": [0.1, 0.05, 0.025, 0.0125]}, 1.0, 1e-2)
    cfg["initial"] = INITIAL_EXPR
    code = execute("sweep", cfg, tmp_path, workers=4)
    summary = json.loads((tmp_path / "sweep.json").read_text())["summary"]
    ratios = summary.get("ratios", [])
    ok = code == 0 and len(ratios) == 2 and all(1.5 <= r <= 2.5 for r in ratios)
    record(6, "epsilon-limit sweep", ok,
           "||u^eps - u^(eps/2)|| for eps=0.1,0.05,0.025: "
           + ", ".join(f"{d:.3e}" for d in summary.get("sup_differences", []))
           + "; ratios " + ", ".join(f"{r:.3f}" for r in ratios))


def test_c07_continuous_dependence(tmp_path):
    cfg = _sweep_cfg({"kind": "perturbation", "deltas": [1e-2, 1e-3],
                      "perturbation": ["cos(2*pi*x1)", "sin(3*pi*x1)"]}, 0.5, 1e-2)
    cfg["initial"] = ["0.3 + 0.1*cos(pi*x1)", "0.3 + 0.1*sin(pi*x1)"]
    code = execute("sweep", cfg, tmp_path, workers=3)
    summary = json.loads((tmp_path / "sweep.json").read_text())["summary"]
    resp = summary.get("responses", [])
    ratio = resp[1] / resp[0] if len(resp) == 2 and resp[0] > 0 else float("nan")
    ok = code == 0 and abs(ratio - 1.0) <= 0.2
    record(7, "continuous-dependence proxy", ok,
           f"response/delta = {resp[0]:.5f} (delta=1e-2), {resp[1]:.5f} (delta=1e-3); ratio {ratio:.4f}")


def test_c08_john_stara_witnesses():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    f = JohnStaraField(1.0)
    v = rng.normal(size=(10_000, 3))
    x = v / np.linalg.norm(v, axis=1, keepdims=True) * rng.uniform(0, 1, (10_000, 1)) ** (1 / 3)
    t = rng.uniform(0.0, 1.0, 10_000)
    sup = float(np.linalg.norm(f(t, x), axis=1).max())
    late = js_modulus_profile(1.0, [0.02], [1 - 1e-4]).table[0, 0]
    times = [0.0, 0.9, 0.99, 0.999, 0.9999]
    col = js_modulus_profile(1.0, [0.02], times).table[:, 0]
    dt = time.perf_counter() - t0
    ok = sup < 1.0 and late >= 1.414 - 1e-3 and bool(np.all(np.diff(col) >= 0)) and dt < 5.0
    record(8, "John-Stara witnesses", ok,
           f"(a) sup|u|={sup:.6f} < 1; (b) omega(0.02; 1-1e-4)={late:.5f}; "
           f"(c) omega(0.02; t)={np.round(col, 4).tolist()}; {dt:.2f} s (< 5 s)")


def test_c09_continuation_determinism(capillary):
    grid = Grid1D(200)
    disc = Discretization(capillary, BoundarySpec.zero_flux(2), grid)
    inv = Monitor("invariant", lambda s, g: invariant_violation(s))
    ctrl = TimeController(dt_init=1e-3, dt_min=1e-6, dt_max=1e-2)
    u0 = boundary_touching_data(grid.centers)
    full = solve(disc, u0, 1.0, ctrl, [inv], snapshot_cadence=0.1)
    first = solve(disc, u0, 0.5, ctrl, [inv], snapshot_cadence=0.1)
    second = restart_from_snapshot(first, -1, 1.0)
    joined = join_results(first, second)
    same_state = np.array_equal(second.final.values, full.final.values)
    same_series = joined.series["invariant"].values == full.series["invariant"].values
    same_dt = joined.dt_history == full.dt_history
    ok = same_state and same_series and same_dt
    record(9, "continuation determinism", ok,
           f"final state bitwise equal={same_state}, monitor series equal={same_series}, dt history equal={same_dt}")


def test_c10_energy_bound(capillary):
    disc, res, states = _states_run(capillary, 0.0)
    lam0 = estimate_ellipticity(capillary).lambda0
    rep = energy_v102(states, disc.grid, lam0, model=capillary)
    ok = res.status == "completed" and rep.passed
    record(10, "energy bound", ok,
           f"C1={rep.c1:.4f}, worst sample ||u||^2 + lambda0*D(t) = {rep.lhs:.5f} <= {rep.rhs:.5f} "
           f"(combined sup_t form: {rep.combined_lhs:.4f} vs {rep.combined_rhs:.4f})")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
