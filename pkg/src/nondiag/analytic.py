"""Closed-form oracles: the John-Stara blow-up field and manufactured solutions."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .coeffmodel import CoefficientModel, model_from_catalog
from .grid import BoundarySpec, Grid1D, TimeController
from .monitors import PrecompactnessProxy, oscillation_within
from .solver import Discretization, solve


@dataclass(frozen=True)
class JohnStaraField:
    """u(t, x) = x / sqrt(kappa (1 - t) + |x|^2) on the closed unit ball, 0 <= t <= 1."""

    kappa: float = 1.0

    def __post_init__(self):
        if not 0 < self.kappa < 4:
            raise ValueError(f"kappa must lie in (0, 4), got {self.kappa}")

    def radius(self, t, x):
        x = np.asarray(x, dtype=float)
        return np.sqrt(self.kappa * (1.0 - np.asarray(t, dtype=float)) + np.sum(x * x, axis=-1))

    def __call__(self, t, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        t = np.asarray(t, dtype=float)
        if np.any(t > 1) or np.any(t < 0):
            raise ValueError("t must lie in [0, 1]")
        r = self.radius(t, x)
        if np.any(r == 0):
            raise ValueError("field undefined at (t, x) = (1, 0)")
        return x / r[..., None]

    def gradient(self, t, x) -> np.ndarray:
        """du_b/dx_k, shape (..., 3, 3) indexed [b, k]."""
        x = np.asarray(x, dtype=float)
        r = self.radius(t, x)[..., None, None]
        eye = np.eye(x.shape[-1])
        return eye / r - x[..., :, None] * x[..., None, :] / r ** 3

    def time_derivative(self, t, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        r = self.radius(t, x)[..., None]
        return 0.5 * self.kappa * x / r ** 3

    def initial(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return x / np.sqrt(self.kappa + np.sum(x * x, axis=-1))[..., None]

    def boundary(self, t, x) -> np.ndarray:
        """Data on |x| = 1."""
        x = np.asarray(x, dtype=float)
        return x / np.sqrt(self.kappa * (1.0 - np.asarray(t, dtype=float)) + 1.0)[..., None]

    def trace(self, t, s) -> np.ndarray:
        """First component along the e1 axis: s / sqrt(kappa (1 - t) + s^2)."""
        s = np.asarray(s, dtype=float)
        return s / np.sqrt(self.kappa * (1.0 - t) + s * s)


def john_stara_field(kappa: float, t, x) -> np.ndarray:
    return JohnStaraField(kappa)(t, x)


def js_residual(field_: JohnStaraField, A: Callable[[np.ndarray], np.ndarray], t: float, x, h: float = 1e-5):
    """Residual d_t u - div(A(u) grad u) at one interior point for a user-supplied A(u) -> (3, 3, 3, 3).

    The divergence is taken by central differences of the exact co-normal flux.
    """
    x = np.asarray(x, dtype=float)

    def flux(p):
        u = field_(t, p)
        return np.einsum("abjk,bk->aj", A(u), field_.gradient(t, p))

    div = np.zeros(3)
    for j in range(3):
        e = np.zeros(3)
        e[j] = h
        div += (flux(x + e)[:, j] - flux(x - e)[:, j]) / (2 * h)
    return field_.time_derivative(t, x) - div


def js_modulus_profile(kappa: float, deltas: Sequence[float], times: Sequence[float],
                       n_points: int = 10001) -> PrecompactnessProxy:
    """omega(delta; t) of the e1-axis trace on a uniform grid of [-1, 1].

    The default odd point count puts x = 0 and the symmetric pairs +-delta/2 on the grid.
    """
    f = JohnStaraField(kappa)
    times = np.asarray(times, dtype=float)
    if np.any(times < 0) or np.any(times >= 1):
        raise ValueError("times must lie in [0, 1)")
    s = np.linspace(-1.0, 1.0, n_points)
    spacing = 2.0 / (n_points - 1)
    deltas = np.asarray(deltas, dtype=float)
    table = np.array([[_trace_oscillation(f.trace(t, s), spacing, d) for d in deltas] for t in times])
    return PrecompactnessProxy(deltas, times, table.reshape(len(times), len(deltas)))


def _trace_oscillation(values, spacing, delta):
    # pair scan restricted to lags <= delta / spacing; bypasses the n <= 4096 thinning of the monitors
    lag = int(np.floor(delta / spacing + 1e-9))
    best = 0.0
    for k in range(1, min(lag, len(values) - 1) + 1):
        best = max(best, float(np.abs(values[k:] - values[:-k]).max()))
    return best


# --- manufactured solutions ----------------------------------------------------------


@dataclass(frozen=True)
class ManufacturedCase:
    name: str
    model: CoefficientModel
    exact: Callable[[float, np.ndarray], np.ndarray] = field(repr=False)
    forcing: Callable[[float, np.ndarray], np.ndarray] = field(repr=False)
    x_min: float = 0.0
    x_max: float = 1.0

    def boundary(self) -> BoundarySpec:
        lo = self.exact
        N = self.model.N
        left = [lambda t, a=a: float(lo(t, np.array([self.x_min]))[0, a]) for a in range(N)]
        right = [lambda t, a=a: float(lo(t, np.array([self.x_max]))[0, a]) for a in range(N)]
        return BoundarySpec.dirichlet(left, right)


def shipped_mms_case() -> ManufacturedCase:
    """u* = exp(-t) sin(pi x) in both components, A = I, phi = 0, forcing (pi^2 - 1) u*."""

    def exact(t, x):
        x = np.asarray(x, dtype=float).reshape(-1)
        col = np.exp(-t) * np.sin(np.pi * x)
        return np.stack([col, col], axis=-1)

    def forcing(t, x):
        return (np.pi ** 2 - 1.0) * exact(t, x)

    return ManufacturedCase("mms_sine", model_from_catalog("mms_sine"), exact, forcing)


def mms_forcing(case: ManufacturedCase, t: float, x) -> np.ndarray:
    return case.forcing(t, np.atleast_1d(np.asarray(x, dtype=float)))


def observed_order(sizes: Sequence[float], errors: Sequence[float]) -> float:
    """Least-squares slope of log(error) against log(size)."""
    slope, _ = np.polyfit(np.log(np.asarray(sizes, dtype=float)), np.log(np.asarray(errors, dtype=float)), 1)
    return float(slope)


@dataclass
class OrderReport:
    kind: str  # 'space' or 'time'
    sizes: list
    errors: list
    order: float
    pairwise: list
    monotone: bool
    T: float

    def to_dict(self) -> dict:
        return {"kind": self.kind, "sizes": self.sizes, "errors": self.errors, "order": self.order,
                "pairwise_orders": self.pairwise, "monotone": self.monotone, "T": self.T}


def mms_error(case: ManufacturedCase, n: int, dt: float, T: float, newton_tol: float = 1e-10) -> float:
    grid = Grid1D(n, case.x_min, case.x_max)
    disc = Discretization(case.model, case.boundary(), grid, source=case.forcing)
    u0 = case.exact(0.0, grid.centers)
    res = solve(disc, u0, T, TimeController.fixed(dt, newton_tol=newton_tol), check_compat=False)
    if res.status != "completed":
        raise RuntimeError(f"MMS run failed: {res.message}")
    return float(np.abs(res.final.values - case.exact(T, grid.centers)).max())


def convergence_study(case: ManufacturedCase, grids: Sequence[int], dts: Sequence[float], T: float = 0.1,
                      workers: int = 1, newton_tol: float = 1e-10) -> OrderReport:
    """Spatial study when several grids and one dt are given; temporal study for the converse."""
    grids, dts = list(grids), list(dts)
    if len(grids) >= 3 and len(dts) == 1:
        kind, points = "space", [(n, dts[0]) for n in grids]
        sizes = [(case.x_max - case.x_min) / n for n in grids]
    elif len(dts) >= 3 and len(grids) == 1:
        kind, points = "time", [(grids[0], dt) for dt in dts]
        sizes = list(dts)
    else:
        raise ValueError("need >= 3 grids with one dt, or >= 3 dts with one grid")
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            errors = list(pool.map(lambda p: mms_error(case, p[0], p[1], T, newton_tol), points))
    else:
        errors = [mms_error(case, n, dt, T, newton_tol) for n, dt in points]
    pairwise = [float(np.log(errors[i] / errors[i + 1]) / np.log(sizes[i] / sizes[i + 1]))
                for i in range(len(errors) - 1)]
    order_ = observed_order(sizes, errors)
    ranked = [e for _, e in sorted(zip(sizes, errors))]
    monotone = all(a <= b for a, b in zip(ranked, ranked[1:]))
    return OrderReport(kind, sizes, errors, order_, pairwise, monotone, T)
