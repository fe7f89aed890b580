"""epsilon-regularised problem: penalised reaction, squeezed data, Robin boundary flux."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .coeffmodel import CoefficientModel
from .grid import BoundarySpec, Dirichlet, PrescribedFlux, RobinEps, ZeroFlux

B_DELTA_TOL = 1e-12


@dataclass(frozen=True)
class EpsilonScheme:
    epsilon: float
    v: tuple = (0.25, 0.25)

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError("epsilon must be non-negative")
        v1, v2 = self.v
        if not (v1 > 0 and v2 > 0 and v1 + v2 < 1):
            raise ValueError(f"v = {self.v} is not in the interior of the triangle")


def in_triangle(w, tol: float = B_DELTA_TOL) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    return (w[..., 0] >= -tol) & (w[..., 1] >= -tol) & (w[..., 0] + w[..., 1] <= 1 + tol)


def transform_data(scheme: EpsilonScheme, w) -> np.ndarray:
    """(1 - eps) (w + eps/2), mapping the triangle into its interior for 0 < eps < 1."""
    eps = scheme.epsilon
    if not eps < 1:
        raise ValueError("transform_data needs epsilon < 1")
    w = np.asarray(w, dtype=float)
    if not np.all(in_triangle(w)):
        raise ValueError("data outside the triangle B_Delta")
    return (1.0 - eps) * (w + eps / 2.0)


def transform_reaction(scheme: EpsilonScheme, model: CoefficientModel) -> CoefficientModel:
    """Model with reaction g + eps (v - u); diffusion and convection untouched."""
    if model.N != 2:
        raise ValueError("the regularised reaction is defined for N = 2")
    eps = scheme.epsilon
    if eps == 0:
        return model
    v = np.asarray(scheme.v, dtype=float)
    base_g, base_dg = model.g, model.dg_du

    def g(x, u):
        return base_g(x, u) + eps * (v - np.asarray(u, dtype=float))

    def dg_du(x, u):
        return base_dg(x, u) - eps * np.eye(2)

    return model.with_reaction(g, dg_du, name=f"{model.name}+eps{eps:g}")


def robin_flux(scheme: EpsilonScheme, model: CoefficientModel, x, n, u, u_b) -> np.ndarray:
    """Prescribed co-normal flux eps * A^{jk}_{ab} n^j n^k (u_beta - ub_beta) per component alpha.

    The direction paired with n in the second slot is taken equal to n itself.
    """
    eps = scheme.epsilon
    u = np.asarray(u, dtype=float)
    diff = u - np.asarray(u_b, dtype=float)
    if eps == 0:
        return np.zeros_like(diff)
    n = np.atleast_1d(np.asarray(n, dtype=float))
    x = np.atleast_1d(np.asarray(x, dtype=float))
    A = model.A(x, u)  # [a, b, j, k]
    Ann = np.einsum("abjk,j,k->ab", A, n, n)
    return eps * Ann @ diff


def regularize_boundary(scheme: EpsilonScheme, bc: BoundarySpec) -> BoundarySpec:
    """Squeeze Dirichlet data and attach epsilon to Robin conditions.

    Zero-flux and prescribed-flux conditions are kept as they are.
    """
    eps = scheme.epsilon

    def squeeze(value):
        if callable(value):
            return lambda t: (1.0 - eps) * (value(t) + eps / 2.0)
        return (1.0 - eps) * (float(value) + eps / 2.0)

    def convert(cond):
        if isinstance(cond, Dirichlet):
            return Dirichlet(squeeze(cond.value))
        if isinstance(cond, RobinEps):
            return RobinEps(eps, tuple(squeeze(r) for r in cond.reference))
        if isinstance(cond, (ZeroFlux, PrescribedFlux)):
            return cond
        raise TypeError(cond)

    if eps == 0:
        return bc
    return BoundarySpec(tuple(convert(c) for c in bc.left), tuple(convert(c) for c in bc.right))
