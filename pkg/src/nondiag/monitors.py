"""Run-time diagnostics for the quantities bounded a priori.

Pair scans assume a uniform grid and work lag by lag, so they cost
O(n * max_lag) memory-free passes instead of an n x n distance matrix.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .conditions import edge_functions
from .grid import Grid1D, StateField
from .solver import BlowupPolicy, MonitorSeries, blowup_status  # noqa: F401  (re-exported)

MAX_PAIR_POINTS = 4096
ENERGY_RTOL = 1e-12  # lhs and rhs coincide at the first sample


def invariant_violation(state: StateField | np.ndarray) -> float:
    """max over cells and h of G_h(u); <= 0 means every cell lies in the triangle."""
    values = state.values if isinstance(state, StateField) else np.asarray(state, dtype=float)
    if values.shape[-1] != 2:
        raise ValueError("invariant region is defined for N = 2")
    return float(edge_functions(values).max())


def mass_total(state: StateField, grid: Grid1D, alpha: int) -> float:
    """sum_i u_{i,alpha} dx, alpha zero based."""
    return float(np.sum(state.values[:, alpha]) * grid.dx)


def gradient(values: np.ndarray, dx: float) -> np.ndarray:
    """Central differences inside, one-sided at the two ends."""
    return np.gradient(values, dx, axis=0, edge_order=1)


def l2_norm(state: StateField, grid: Grid1D) -> float:
    return math.sqrt(float(np.sum(state.values ** 2) * grid.dx))


def _thin(values: np.ndarray, spacing: float):
    if len(values) <= MAX_PAIR_POINTS:
        return values, spacing
    stride = math.ceil(len(values) / MAX_PAIR_POINTS)
    return values[::stride], spacing * stride


def holder_quotient(values: np.ndarray, spacing: float, gamma: float) -> float:
    """max over pairs of |u_i - u_j| / |x_i - x_j|^gamma on a uniform point set."""
    if not 0 < gamma < 1:
        raise ValueError("gamma must lie in (0, 1)")
    values, spacing = _thin(np.asarray(values, dtype=float), spacing)
    if values.ndim == 1:
        values = values[:, None]
    best = 0.0
    for k in range(1, len(values)):
        jump = np.abs(values[k:] - values[:-k]).max()
        best = max(best, jump / (k * spacing) ** gamma)
    return float(best)


def oscillation_within(values: np.ndarray, spacing: float, delta: float) -> float:
    """max |u_i - u_j| over pairs with |x_i - x_j| <= delta on a uniform point set."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    values, spacing = _thin(np.asarray(values, dtype=float), spacing)
    if values.ndim == 1:
        values = values[:, None]
    max_lag = min(int(math.floor(delta / spacing + 1e-9)), len(values) - 1)
    best = 0.0
    for k in range(1, max_lag + 1):
        best = max(best, float(np.abs(values[k:] - values[:-k]).max()))
    return best


def holder_seminorm(state: StateField, grid: Grid1D, gamma: float, time_weight_r: float | None = None) -> float:
    """Discrete spatial C^gamma seminorm, optionally weighted by t^((gamma - r)/2)."""
    value = holder_quotient(state.values, grid.dx, gamma)
    if time_weight_r is not None:
        value *= state.t ** ((gamma - time_weight_r) / 2.0)
    return value


def modulus_of_continuity(state: StateField, grid: Grid1D, delta: float) -> float:
    return oscillation_within(state.values, grid.dx, delta)


# --- integrated quantities ----------------------------------------------------------


@dataclass
class EnergyReport:
    """Energy inequality along a run.

    ``passed`` is the per-time statement ||u(t)||^2 + lambda0 D(t) <= ||u0||^2 + 2 C1 (t - t0)
    at every sample; ``lhs``/``rhs`` are the worst (largest lhs - rhs) sample after the first.  The
    ``combined_*`` fields hold sup_t ||u||^2 + lambda0 D(T) against ||u0||^2 + 2 C1 (T - t0).
    """

    sup_l2: float
    dissipation: float
    passed: bool
    lhs: float
    rhs: float
    c1: float
    combined_lhs: float = float("nan")
    combined_rhs: float = float("nan")

    @property
    def combined_passed(self) -> bool:
        return bool(self.combined_lhs <= self.combined_rhs)

    def __iter__(self):
        return iter((self.sup_l2, self.dissipation, self.passed))


def grad_l2_sq(values: np.ndarray, dx: float) -> float:
    """int |u_x|^2 dx with central differences (one-sided at the ends)."""
    return float(np.sum(gradient(values, dx) ** 2) * dx)


def energy_constant(model, lambda0: float, grid: Grid1D, u_samples: int = 64) -> float:
    """C1 = |Omega| (sup |phi|^2 / (2 lambda0) + sup (g . u)_+) over the sampled coefficient domain."""
    xs = np.linspace(grid.x_min, grid.x_max, 33)[:, None]
    us = model.sample_u(u_samples)
    X = np.repeat(xs, len(us), axis=0)
    U = np.tile(us, (len(xs), 1))
    phi2 = np.sum(model.phi(X, U) ** 2, axis=(-2, -1)).max()
    gu = np.maximum(np.sum(model.g(X, U) * U, axis=-1), 0.0).max()
    return grid.length * (phi2 / (2.0 * lambda0) + gu)


def energy_curves(times, l2_sq, grad_sq, lambda0: float, c1: float):
    """lhs(t_k) = ||u(t_k)||^2 + lambda0 int_0^t_k |u_x|^2 and rhs(t_k) = ||u(t_0)||^2 + 2 C1 (t_k - t_0).

    The time integral is the cumulative trapezoid rule over the samples.
    """
    times, l2_sq, grad_sq = (np.asarray(a, dtype=float) for a in (times, l2_sq, grad_sq))
    dissipation = lambda0 * cumulative_trapezoid(grad_sq, times, initial=0.0)
    return l2_sq + dissipation, l2_sq[0] + 2.0 * c1 * (times - times[0]), dissipation


def energy_v102(states: Sequence[StateField], grid: Grid1D, lambda0: float, model=None,
                c1: float | None = None) -> EnergyReport:
    """sup_t ||u||_2, lambda0 * int int |u_x|^2 and the energy inequality over every accepted step.

    ``states`` should be the per-step states (first one at the initial time).
    """
    if len(states) < 2:
        raise ValueError("need at least two states")
    if c1 is None:
        c1 = energy_constant(model, lambda0, grid) if model is not None else 0.0
    times = [s.t for s in states]
    l2_sq = [l2_norm(s, grid) ** 2 for s in states]
    grad_sq = [grad_l2_sq(s.values, grid.dx) for s in states]
    lhs, rhs, diss = energy_curves(times, l2_sq, grad_sq, lambda0, c1)
    k = 1 + int(np.argmax((lhs - rhs)[1:]))  # the first sample is an equality
    sup_l2 = math.sqrt(max(l2_sq))
    passed = bool(np.all(lhs <= rhs * (1 + ENERGY_RTOL)))
    return EnergyReport(sup_l2, float(diss[-1]), passed, float(lhs[k]), float(rhs[k]), c1,
                        float(max(l2_sq) + diss[-1]), float(rhs[-1]))


@dataclass
class GradLpResult:
    value: float
    times: np.ndarray
    integrand: np.ndarray
    cumulative: np.ndarray
    bounded: bool


def grad_lp(states: Sequence[StateField], grid: Grid1D, alpha: int, p: int, t_start: float | None = None,
            growth_factor: float = 2.0) -> GradLpResult:
    """int_{t_start}^t int |d_x u_alpha|^p dx dtau by central differences and the trapezoid rule.

    ``bounded`` compares the integrand over the last tenth of the samples with
    its maximum over the earlier ones.
    """
    if p < 2 or p % 2:
        raise ValueError("p must be an even integer >= 2")
    sel = [s for s in states if t_start is None or s.t >= t_start]
    times = np.array([s.t for s in sel])
    integrand = np.array([np.sum(np.abs(gradient(s.values[:, alpha], grid.dx)) ** p) * grid.dx for s in sel])
    if len(sel) >= 2:
        steps = 0.5 * (integrand[1:] + integrand[:-1]) * np.diff(times)
        cumulative = np.concatenate([[0.0], np.cumsum(steps)])
    else:
        cumulative = np.zeros(len(sel))
    tail = max(1, len(sel) // 10)
    if len(sel) > tail:
        bounded = bool(integrand[-tail:].max() <= growth_factor * max(integrand[:-tail].max(), 1e-300))
    else:
        bounded = bool(np.all(np.isfinite(integrand)))
    value = float(cumulative[-1]) if len(cumulative) else 0.0
    return GradLpResult(value, times, integrand, cumulative, bounded)


@dataclass
class PrecompactnessProxy:
    deltas: np.ndarray
    times: np.ndarray
    table: np.ndarray  # [time, delta]

    def nondecreasing_in_delta(self) -> bool:
        return bool(np.all(np.diff(self.table, axis=1) >= 0))

    def to_csv(self) -> str:
        head = "t," + ",".join(f"omega_{d!r}" for d in self.deltas.tolist())
        rows = [head] + [",".join([repr(float(t))] + [repr(float(v)) for v in row])
                         for t, row in zip(self.times, self.table)]
        return "\n".join(rows) + "\n"


def precompactness_proxy(states: Sequence[StateField], grid: Grid1D, deltas: Sequence[float],
                         t_min: float | None = None) -> PrecompactnessProxy:
    """omega(delta; t_k) for snapshots with t_k >= t_min (default 1% of the last time)."""
    if t_min is None:
        t_min = 0.01 * states[-1].t
    sel = [s for s in states if s.t >= t_min]
    deltas = np.asarray(deltas, dtype=float)
    table = np.array([[modulus_of_continuity(s, grid, d) for d in deltas] for s in sel])
    return PrecompactnessProxy(deltas, np.array([s.t for s in sel]), table.reshape(len(sel), len(deltas)))


# --- callbacks for the solver -------------------------------------------------------


@dataclass(frozen=True)
class Monitor:
    name: str
    fn: Callable = field(repr=False)

    def __call__(self, state: StateField, grid: Grid1D) -> float:
        return self.fn(state, grid)


def make_monitors(items: Sequence, N: int) -> list[Monitor]:
    """Build callbacks from the config list, e.g. ``["invariant", {"holder": {"gamma": 0.5}}]``."""
    out = []
    for item in items:
        name, opts = (item, {}) if isinstance(item, str) else next(iter(item.items()))
        opts = opts or {}
        if name == "invariant":
            out.append(Monitor("invariant", lambda s, g: invariant_violation(s)))
        elif name == "mass":
            for a in range(N):
                out.append(Monitor(f"mass_u{a + 1}", lambda s, g, a=a: mass_total(s, g, a)))
        elif name == "energy":
            out.append(Monitor("l2_squared", lambda s, g: l2_norm(s, g) ** 2))
            out.append(Monitor("grad_l2_squared", lambda s, g: grad_l2_sq(s.values, g.dx)))
        elif name == "grad_lp":
            a, p = int(opts.get("alpha", 2)) - 1, int(opts.get("p", 4))
            out.append(Monitor(f"grad_l{p}_u{a + 1}", lambda s, g, a=a, p=p:
                               float(np.sum(np.abs(gradient(s.values[:, a], g.dx)) ** p) * g.dx)))
        elif name == "holder":
            gam, r = float(opts.get("gamma", 0.5)), opts.get("r")
            out.append(Monitor("holder", lambda s, g, gam=gam, r=r: holder_seminorm(s, g, gam, r)))
        elif name == "omega":
            dl = float(opts.get("delta", 0.05))
            out.append(Monitor(f"omega_{dl:g}", lambda s, g, dl=dl: modulus_of_continuity(s, g, dl)))
        else:
            raise ValueError(f"unknown monitor {name!r}")
    return out
