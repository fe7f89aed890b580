"""Conservative finite-volume solver for d = 1.

Cell-centred unknowns, face fluxes

    F_a = phi_a(x, ubar) - sum_b A_ab(x, ubar) (uR_b - uL_b) / dx,   ubar = (uL + uR) / 2,

and backward Euler in time.  Each step is a Newton iteration with a
finite-difference block-tridiagonal Jacobian (3N coloured residual
evaluations) factorised as a banded LU.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import solve_banded
from scipy.linalg.lapack import dgbtrf, dgbtrs

from .coeffmodel import CoefficientModel
from .expr import ExprError
from .grid import (
    BoundarySpec, Dirichlet, Grid1D, PrescribedFlux, RobinEps, RunResult, Snapshot, StateField,
    TimeController, ZeroFlux, at_time,
)

log = logging.getLogger(__name__)

JAC_STEP = 1e-7
INVARIANT_TOL = 1e-12


class SolverError(RuntimeError):
    pass


class NewtonFailure(SolverError):
    pass


class PreconditionError(ValueError):
    pass


Source = Callable[[float, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class Discretization:
    """Everything the residual needs besides the states."""

    model: CoefficientModel
    bc: BoundarySpec
    grid: Grid1D
    source: Source | None = None
    upwind: bool = False

    def __post_init__(self):
        if self.model.d != 1:
            raise ValueError("the finite-volume solver is one-dimensional")
        if self.bc.N != self.model.N:
            raise ValueError(f"boundary spec has {self.bc.N} components, model has {self.model.N}")


def face_flux(model: CoefficientModel, x_face, uL, uR, dx: float, upwind: bool = False) -> np.ndarray:
    """Numerical flux through faces; ``uL``/``uR`` are (..., N), result (..., N)."""
    uL = np.asarray(uL, dtype=float)
    uR = np.asarray(uR, dtype=float)
    x = np.asarray(x_face, dtype=float)[..., None]
    ubar = 0.5 * (uL + uR)
    A = model.A(x, ubar)[..., 0, 0]  # [.., a, b]
    diffusive = np.einsum("...ab,...b->...a", A, (uR - uL) / dx)
    if upwind:
        speed = np.diagonal(model.dphi_du(x, ubar)[..., :, 0, :], axis1=-2, axis2=-1)
        phiL = model.phi(x, uL)[..., 0]
        phiR = model.phi(x, uR)[..., 0]
        convective = np.where(speed >= 0, phiL, phiR)
    else:
        convective = model.phi(x, ubar)[..., 0]
    return convective - diffusive


def _boundary_data(conds, t: float) -> dict:
    return {a: at_time(c.value, t) for a, c in enumerate(conds) if isinstance(c, Dirichlet)}


@dataclass(frozen=True)
class StepData:
    """Boundary data and forcing at one time level; constant during a Newton solve."""

    t: float
    left: dict
    right: dict
    source: np.ndarray | None


def step_data(disc: Discretization, t: float) -> StepData:
    src = None
    if disc.source is not None:
        src = np.asarray(disc.source(t, disc.grid.centers), dtype=float)
    return StepData(t, _boundary_data(disc.bc.left, t), _boundary_data(disc.bc.right, t), src)


def all_fluxes(disc: Discretization, u: np.ndarray, t: float, data: StepData | None = None) -> np.ndarray:
    """(n + 1, N) fluxes in the +x direction, boundary faces included.

    Dirichlet components use a ghost value 2 * datum - u_cell, so the face
    average equals the datum; other components get a zero-gradient ghost and
    their boundary flux is then overwritten by the prescribed value.
    """
    model, grid = disc.model, disc.grid
    n = grid.n
    if data is None:
        data = step_data(disc, t)
    left_data, right_data = data.left, data.right
    uL = np.empty((n + 1, model.N))
    uR = np.empty((n + 1, model.N))
    uL[1:] = u
    uR[:-1] = u
    uL[0] = u[0]
    uR[-1] = u[-1]
    for a, v in left_data.items():
        uL[0, a] = 2.0 * v - u[0, a]
    for a, v in right_data.items():
        uR[-1, a] = 2.0 * v - u[-1, a]
    F = face_flux(model, grid.faces, uL, uR, grid.dx, disc.upwind)
    for row, side, normal, x_b, cell in ((0, "left", -1.0, grid.x_min, u[0]), (n, "right", 1.0, grid.x_max, u[-1])):
        for a, c in enumerate(disc.bc.side(side)):
            if isinstance(c, Dirichlet):
                continue
            if isinstance(c, ZeroFlux):
                F[row, a] = 0.0
            elif isinstance(c, PrescribedFlux):
                F[row, a] = normal * at_time(c.value, t)
            elif isinstance(c, RobinEps):
                if c.epsilon:
                    ref = np.array([at_time(r, t) for r in c.reference])
                    A = model.A(np.array([x_b]), cell)[:, :, 0, 0]
                    F[row, a] = normal * c.epsilon * (A[a] @ (cell - ref))
                else:
                    F[row, a] = 0.0
    return F


def residual(disc: Discretization, u: np.ndarray, u_prev: np.ndarray, t: float, dt: float,
             data: StepData | None = None) -> np.ndarray:
    """Backward-Euler residual at the new time ``t`` (data and forcing evaluated there)."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    grid = disc.grid
    if data is None:
        data = step_data(disc, t)
    F = all_fluxes(disc, u, t, data)
    R = (u - u_prev) / dt + (F[1:] - F[:-1]) / grid.dx - disc.model.g(grid.centers[:, None], u)
    if data.source is not None:
        R = R - data.source
    return R


def jacobian_bands(disc: Discretization, u: np.ndarray, u_prev: np.ndarray, t: float, dt: float,
                   R0: np.ndarray | None = None, data: StepData | None = None):
    """Block-tridiagonal Jacobian by coloured forward differences.

    Returns (lower, diag, upper), each (n, N, N); ``lower[i] = dR_i/du_{i-1}``.
    """
    n, N = u.shape
    if data is None:
        data = step_data(disc, t)
    if R0 is None:
        R0 = residual(disc, u, u_prev, t, dt, data)
    diag = np.zeros((n, N, N))
    lower = np.zeros((n, N, N))
    upper = np.zeros((n, N, N))
    cells = np.arange(n)
    for color in range(3):
        cols = cells[cells % 3 == color]
        for b in range(N):
            h = JAC_STEP * (1.0 + np.abs(u[cols, b]))
            up = u.copy()
            up[cols, b] += h
            dR = residual(disc, up, u_prev, t, dt, data) - R0
            diag[cols, :, b] = dR[cols] / h[:, None]
            # perturbed cell j feeds row j-1 through its upper block and row j+1 through its lower block
            has_left = cols >= 1
            upper[cols[has_left] - 1, :, b] = dR[cols[has_left] - 1] / h[has_left, None]
            has_right = cols + 1 < n
            lower[cols[has_right] + 1, :, b] = dR[cols[has_right] + 1] / h[has_right, None]
    return lower, diag, upper


def solve_block_tridiagonal(lower, diag, upper, rhs) -> np.ndarray:
    """Solve the block-tridiagonal system via banded LU; rhs is (n, N)."""
    n, N, _ = diag.shape
    bw = 2 * N - 1
    ab = _banded_from_blocks(lower, diag, upper)
    return solve_banded((bw, bw), ab, np.asarray(rhs, dtype=float).reshape(-1), check_finite=False).reshape(n, N)


def _banded_from_blocks(lower, diag, upper) -> np.ndarray:
    """LAPACK band storage (kl = ku = 2N - 1) of the block-tridiagonal matrix."""
    n, N, _ = diag.shape
    bw = 2 * N - 1
    ab = np.zeros((2 * bw + 1, n * N))
    i = np.arange(n)
    for off, blk in ((-1, lower), (0, diag), (1, upper)):
        rows_i = i[max(0, -off): n - max(0, off)]
        for a in range(N):
            for b in range(N):
                r = rows_i * N + a
                c = (rows_i + off) * N + b
                ab[bw + r - c, c] = blk[rows_i, a, b]
    return ab


def newton_solve(disc: Discretization, u_prev: np.ndarray, t: float, dt: float, controller: TimeController):
    """Returns (u_new, iterations); raises NewtonFailure.

    The factorised Jacobian is kept across iterations of one step and rebuilt
    whenever the residual fails to drop by half.
    """
    u = u_prev.copy()
    n, N = u.shape
    bw = 2 * N - 1
    lu = piv = None
    r_old = np.inf
    try:
        data = step_data(disc, t)
        for it in range(controller.newton_max_iters + 1):
            R = residual(disc, u, u_prev, t, dt, data)
            if not np.all(np.isfinite(R)):
                raise NewtonFailure("non-finite residual")
            r_norm = np.max(np.abs(R))
            if r_norm <= controller.newton_tol:
                return u, it
            if it == controller.newton_max_iters:
                break
            if lu is None or r_norm > 0.5 * r_old:
                lower, diag, upper = jacobian_bands(disc, u, u_prev, t, dt, R, data)
                ab = np.zeros((3 * bw + 1, n * N))
                ab[bw:] = _banded_from_blocks(lower, diag, upper)
                lu, piv, info = dgbtrf(ab, bw, bw, overwrite_ab=True)
                if info != 0:
                    raise NewtonFailure("singular Jacobian")
            delta, info = dgbtrs(lu, bw, bw, -R.reshape(-1), piv)
            if info != 0 or not np.all(np.isfinite(delta)):
                raise NewtonFailure("singular or ill-conditioned Jacobian")
            u = u + delta.reshape(n, N)
            r_old = r_norm
    except (ExprError, ArithmeticError, np.linalg.LinAlgError) as exc:
        raise NewtonFailure(str(exc)) from exc
    raise NewtonFailure(f"no convergence in {controller.newton_max_iters} iterations "
                        f"(residual {r_norm:.3e})")


def advance(disc: Discretization, state: StateField, controller: TimeController, dt: float | None = None):
    """One accepted implicit step, halving dt on Newton failure. Returns (StateField, dt_used)."""
    if not np.all(np.isfinite(state.values)):
        raise PreconditionError("state contains non-finite values")
    dt = controller.dt_init if dt is None else dt
    while True:
        try:
            u, _ = newton_solve(disc, state.values, state.t + dt, dt, controller)
            return StateField(state.t + dt, u), dt
        except NewtonFailure as exc:
            if dt <= controller.dt_min:
                raise NewtonFailure(f"dt reached dt_min={controller.dt_min:g}: {exc}") from exc
            dt = max(dt * controller.shrink, controller.dt_min)


# --- time integration ------------------------------------------------------------


@dataclass
class MonitorSeries:
    name: str
    times: list = field(default_factory=list)
    values: list = field(default_factory=list)


@dataclass(frozen=True)
class BlowupPolicy:
    monitor: str = "holder"
    factor: float = 10.0
    lookback: int = 4


def blowup_status(series: MonitorSeries | Sequence[float], policy: BlowupPolicy = BlowupPolicy()) -> str:
    """``blowup_suspected`` if the last ``lookback`` values grow monotonically by more than ``factor``."""
    values = np.asarray(series.values if isinstance(series, MonitorSeries) else series, dtype=float)
    if values.size and not np.all(np.isfinite(values)):
        return "blowup_suspected"
    if values.size < max(policy.lookback, 2):
        return "completed"
    window = values[-policy.lookback:]
    monotone = np.all(np.diff(window) > 0)
    if monotone and window[0] > 0 and window[-1] > policy.factor * window[0]:
        return "blowup_suspected"
    return "completed"


def output_times(T: float, cadence: float | None, t0: float = 0.0) -> list[float]:
    """Targets the stepper must land on: multiples of ``cadence`` after t0, then T."""
    out = []
    if cadence:
        k = 1
        while True:
            tk = k * cadence
            if tk >= T - 1e-12 * max(1.0, abs(T)):
                break
            if tk > t0 + 1e-12 * max(1.0, abs(t0)):
                out.append(tk)
            k += 1
    out.append(T)
    return out


def _setup_dict(disc, controller, cadence, monitors, policy, strict):
    return {"disc": disc, "controller": controller, "cadence": cadence, "monitors": tuple(monitors),
            "policy": policy, "strict": strict}


def solve(
    disc: Discretization,
    u0,
    T: float,
    controller: TimeController,
    monitors: Sequence = (),
    snapshot_cadence: float | None = None,
    blowup_policy: BlowupPolicy | None = None,
    strict: bool = False,
    check_compat: bool = True,
    t0: float = 0.0,
    dt_seed: float | None = None,
) -> RunResult:
    """Integrate from ``u0`` (values, StateField, or callable of x) to time T.

    Monitors are callables ``m(state, grid) -> float`` with a ``name``; they
    run after every accepted step.  Snapshots are taken at t0, at every
    multiple of ``snapshot_cadence`` and at the stopping time.
    """
    from .conditions import check_compatibility  # avoids an import cycle at module load
    from .monitors import invariant_violation

    grid = disc.grid
    if isinstance(u0, StateField):
        t0, values = u0.t, np.array(u0.values, dtype=float)
        u0_func = None
    elif callable(u0):
        u0_func = u0
        values = np.asarray(u0(grid.centers[:, None]), dtype=float).reshape(grid.n, disc.model.N)
    else:
        u0_func = None
        values = np.array(u0, dtype=float).reshape(grid.n, disc.model.N)
    if not np.all(np.isfinite(values)):
        raise PreconditionError("initial data not finite")
    if check_compat:
        rep = check_compatibility(u0_func if u0_func is not None else values, disc.bc, grid,
                                  tol=1e-12 if u0_func is not None else 1e-8)
        if not rep.passed:
            msg = f"initial data disagree with Dirichlet data (residual {rep.worst_residual:.3e})"
            if strict:
                raise PreconditionError(msg)
            log.warning(msg)
    if strict and disc.model.N == 2:
        viol = invariant_violation(StateField(t0, values))
        if viol > INVARIANT_TOL:
            raise PreconditionError(f"initial data leave the triangle (max G_h = {viol:.3e})")

    state = StateField(t0, values)
    proposal = controller.dt_init if dt_seed is None else dt_seed
    result = RunResult(meta={"setup": _setup_dict(disc, controller, snapshot_cadence, monitors,
                                                  blowup_policy, strict), "T": T})
    result.snapshots.append(Snapshot(state, proposal))
    for m in monitors:
        result.series[m.name] = MonitorSeries(m.name)

    targets = output_times(T, snapshot_cadence, t0)
    for target in targets:
        while state.t < target:
            remaining = target - state.t
            if remaining <= 1e-12 * max(1.0, abs(target)):
                state = StateField(target, state.values)
                break
            dt_try = min(proposal, remaining)
            clipped = dt_try < proposal
            t_new = target if clipped or dt_try == remaining else state.t + dt_try
            try:
                u_new, iters = newton_solve(disc, state.values, t_new, dt_try, controller)
            except NewtonFailure as exc:
                if dt_try <= controller.dt_min:
                    result.status = "newton_failure"
                    result.message = str(exc)
                    result.snapshots.append(Snapshot(state, proposal))
                    return result
                proposal = max(dt_try * controller.shrink, controller.dt_min)
                continue
            state = StateField(t_new, u_new)
            result.dt_history.append((t_new, dt_try))
            if iters <= controller.grow_below_iters and not clipped:
                proposal = min(controller.dt_max, proposal * controller.growth)
            for m in monitors:
                s = result.series[m.name]
                s.times.append(state.t)
                s.values.append(float(m(state, grid)))
            if not np.all(np.isfinite(state.values)):
                result.status = "blowup_suspected"
                result.message = "non-finite state"
                result.snapshots.append(Snapshot(state, proposal))
                return result
            if blowup_policy is not None and blowup_policy.monitor in result.series:
                if blowup_status(result.series[blowup_policy.monitor], blowup_policy) == "blowup_suspected":
                    result.status = "blowup_suspected"
                    result.message = f"{blowup_policy.monitor} grew by more than {blowup_policy.factor}x"
                    result.snapshots.append(Snapshot(state, proposal))
                    return result
        result.snapshots.append(Snapshot(state, proposal))
    return result


def restart_from_snapshot(result: RunResult, k: int, T: float, **overrides) -> RunResult:
    """Resume ``result`` from snapshot ``k`` (dt seed included) and integrate to T.

    Keyword overrides (``disc``, ``controller``, ``monitors``, ``snapshot_cadence``,
    ``blowup_policy``) start a new experiment; it is flagged in ``meta``.
    """
    if not -len(result.snapshots) <= k < len(result.snapshots):
        raise IndexError(f"snapshot index {k} out of range ({len(result.snapshots)} snapshots)")
    snap = result.snapshots[k]
    if not np.all(np.isfinite(snap.state.values)) or not snap.dt_seed > 0:
        raise SolverError("corrupt snapshot")
    setup = dict(result.meta.get("setup") or {})
    if not setup:
        raise SolverError("result carries no solver setup; pass disc= and controller=")
    known = {"disc", "controller", "monitors", "snapshot_cadence", "blowup_policy"}
    bad = set(overrides) - known
    if bad:
        raise TypeError(f"unknown overrides {sorted(bad)}")
    disc = overrides.get("disc", setup["disc"])
    controller = overrides.get("controller", setup["controller"])
    monitors = overrides.get("monitors", setup["monitors"])
    cadence = overrides.get("snapshot_cadence", setup["cadence"])
    policy = overrides.get("blowup_policy", setup["policy"])
    out = solve(disc, snap.state, T, controller, monitors, cadence, policy, strict=False,
                check_compat=False, dt_seed=snap.dt_seed)
    out.meta["restarted_from"] = {"t": snap.state.t, "k": k}
    out.meta["experiment"] = "modified" if overrides else result.meta.get("experiment", "original")
    return out


def join_results(first: RunResult, second: RunResult) -> RunResult:
    """Concatenate a run with its restart (the restart's first snapshot is the join point)."""
    t_join = second.snapshots[0].state.t
    snaps = [s for s in first.snapshots if s.state.t < t_join] + second.snapshots
    series = {}
    for name, s in first.series.items():
        keep = [i for i, t in enumerate(s.times) if t <= t_join]
        other = second.series.get(name, MonitorSeries(name))
        series[name] = MonitorSeries(name, [s.times[i] for i in keep] + list(other.times),
                                     [s.values[i] for i in keep] + list(other.values))
    dts = [entry for entry in first.dt_history if entry[0] <= t_join]
    return RunResult(snaps, series, second.status, dts + list(second.dt_history), second.message,
                     dict(second.meta))
