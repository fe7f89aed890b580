"""Grid, state and boundary-condition types shared by the solver, checks and monitors."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Union

import numpy as np


@dataclass(frozen=True)
class Grid1D:
    n: int
    x_min: float = 0.0
    x_max: float = 1.0

    def __post_init__(self):
        if self.n < 4:
            raise ValueError(f"grid needs at least 4 cells, got {self.n}")
        if not self.x_max > self.x_min:
            raise ValueError("x_max must exceed x_min")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.n

    @cached_property
    def centers(self) -> np.ndarray:
        out = self.x_min + (np.arange(self.n) + 0.5) * self.dx
        out.flags.writeable = False
        return out

    @cached_property
    def faces(self) -> np.ndarray:
        out = self.x_min + np.arange(self.n + 1) * self.dx
        out.flags.writeable = False
        return out

    @property
    def length(self) -> float:
        return self.x_max - self.x_min


@dataclass(frozen=True)
class StateField:
    t: float
    values: np.ndarray  # (n, N) cell averages

    def __post_init__(self):
        if self.values.ndim != 2:
            raise ValueError("state values must be an (n, N) array")

    @property
    def N(self) -> int:
        return self.values.shape[1]


TimeFunction = Union[float, Callable[[float], float]]


def at_time(value: TimeFunction, t: float) -> float:
    return float(value(t)) if callable(value) else float(value)


@dataclass(frozen=True)
class Dirichlet:
    value: TimeFunction


@dataclass(frozen=True)
class ZeroFlux:
    pass


@dataclass(frozen=True)
class PrescribedFlux:
    """Outward co-normal flux f.n = value."""

    value: TimeFunction


@dataclass(frozen=True)
class RobinEps:
    """Regularised flux f.n = eps * sum_beta A_ab n n (u_beta - ref_beta); ``reference`` is the full boundary state."""

    epsilon: float
    reference: tuple  # per-component reference state u_b, each a TimeFunction


Condition = Union[Dirichlet, ZeroFlux, PrescribedFlux, RobinEps]


@dataclass(frozen=True)
class BoundarySpec:
    left: tuple
    right: tuple

    def __post_init__(self):
        if len(self.left) != len(self.right):
            raise ValueError("left and right boundary lists differ in length")
        for c in self.left + self.right:
            if not isinstance(c, (Dirichlet, ZeroFlux, PrescribedFlux, RobinEps)):
                raise TypeError(f"not a boundary condition: {c!r}")

    @property
    def N(self) -> int:
        return len(self.left)

    def side(self, name: str) -> tuple:
        return self.left if name == "left" else self.right

    @classmethod
    def zero_flux(cls, N: int) -> "BoundarySpec":
        return cls((ZeroFlux(),) * N, (ZeroFlux(),) * N)

    @classmethod
    def dirichlet(cls, left_values, right_values) -> "BoundarySpec":
        return cls(tuple(Dirichlet(v) for v in left_values), tuple(Dirichlet(v) for v in right_values))

    def flux_components(self) -> list[int]:
        """Components with a flux-type condition on both sides (the K-split of the mixed problem)."""
        return [a for a in range(self.N) if not isinstance(self.left[a], Dirichlet)
                and not isinstance(self.right[a], Dirichlet)]


@dataclass
class TimeController:
    dt_init: float = 1e-3
    dt_min: float = 1e-8
    dt_max: float = 1e-1
    newton_tol: float = 1e-10
    newton_max_iters: int = 25
    growth: float = 2.0
    shrink: float = 0.5
    grow_below_iters: int = 4

    def __post_init__(self):
        if not (0 < self.dt_min <= self.dt_init <= self.dt_max):
            raise ValueError("need 0 < dt_min <= dt_init <= dt_max")

    @classmethod
    def fixed(cls, dt: float, **kw) -> "TimeController":
        return cls(dt_init=dt, dt_min=dt, dt_max=dt, **kw)


@dataclass
class Snapshot:
    state: StateField
    dt_seed: float


@dataclass
class RunResult:
    snapshots: list = field(default_factory=list)  # list[Snapshot]
    series: dict = field(default_factory=dict)  # name -> MonitorSeries
    status: str = "completed"
    dt_history: list = field(default_factory=list)
    message: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def final(self) -> StateField:
        return self.snapshots[-1].state

    @property
    def t_stop(self) -> float:
        return self.snapshots[-1].state.t
