"""Coefficient triples (A, phi, g) with derivative access.

Array conventions for a batch of points ``x`` (..., d) and ``u`` (..., N):

* ``A(x, u)``       -> (..., N, N, d, d) indexed [alpha, beta, j, k]
* ``phi(x, u)``     -> (..., N, d)       indexed [alpha, j]
* ``g(x, u)``       -> (..., N)
* ``dA_du(x, u)``   -> (..., N, N, d, d, N), last axis is the u-component
* ``dphi_du(x, u)`` -> (..., N, d, N)
* ``dphi_dx(x, u)`` -> (..., N, d, d), last axis is the x-coordinate
* ``dg_du(x, u)``   -> (..., N, N)
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .expr import Expr, evaluate, parse_expr

FD_STEP = 1e-6

Evaluator = Callable[[np.ndarray, np.ndarray], np.ndarray]


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class CatalogEntry:
    name: str
    params: Mapping[str, float]
    doc: str
    builder: Callable = field(repr=False, compare=False)


@dataclass(frozen=True, eq=False)
class CoefficientModel:
    N: int
    d: int
    A: Evaluator
    phi: Evaluator
    g: Evaluator
    dA_du: Evaluator
    dphi_du: Evaluator
    dphi_dx: Evaluator
    dg_du: Evaluator
    name: str = "custom"
    params: Mapping[str, float] = field(default_factory=dict)
    analytic: bool = True
    x_box: tuple = ((0.0, 1.0),)
    u_region: str = "triangle"

    def sample_x(self, n: int) -> np.ndarray:
        """Tensor grid of ``n`` points per axis over the x box, shape (m, d)."""
        axes = [np.linspace(lo, hi, n) if n > 1 else np.array([0.5 * (lo + hi)]) for lo, hi in self.x_box]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def sample_u(self, n: int) -> np.ndarray:
        """Tensor grid over [0,1]^N, restricted to the triangle when ``u_region`` says so."""
        axis = np.linspace(0.0, 1.0, n) if n > 1 else np.array([1.0 / 3.0])
        mesh = np.meshgrid(*([axis] * self.N), indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=-1)
        if self.u_region == "triangle":
            pts = pts[pts.sum(axis=-1) <= 1.0 + 1e-12]
        return pts

    def with_reaction(self, g: Evaluator, dg_du: Evaluator, name: str | None = None) -> "CoefficientModel":
        return CoefficientModel(
            self.N, self.d, self.A, self.phi, g, self.dA_du, self.dphi_du, self.dphi_dx, dg_du,
            name=name or self.name, params=self.params, analytic=self.analytic,
            x_box=self.x_box, u_region=self.u_region,
        )


def _batch(x, u):
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    return x, u, np.broadcast_shapes(x.shape[:-1], u.shape[:-1])


def _zeros(shape):
    return lambda x, u: np.zeros(_batch(x, u)[2] + shape)


# --- catalog -----------------------------------------------------------------


def _identity(N: int = 2, d: int = 1, lam: float = 1.0, mu: float = 0.0, name="identity_diffusion"):
    N, d = int(N), int(d)
    eye = lam * np.einsum("ab,jk->abjk", np.eye(N), np.eye(d))
    if mu:
        coupling = np.zeros((N, N))
        coupling[0, 1] = 1.0
        eye = eye + mu * np.einsum("ab,jk->abjk", coupling, np.eye(d))

    def A(x, u):
        return np.broadcast_to(eye, _batch(x, u)[2] + eye.shape).copy()

    u_region = "triangle" if N == 2 else "box"
    return CoefficientModel(
        N, d, A, _zeros((N, d)), _zeros((N,)), _zeros((N, N, d, d, N)), _zeros((N, d, N)),
        _zeros((N, d, d)), _zeros((N, N)), name=name, params={"N": N, "d": d, "lam": lam, "mu": mu},
        x_box=((0.0, 1.0),) * d, u_region=u_region,
    )


def _perturbed_identity(lam: float = 1.0, mu: float = 0.0):
    if lam <= abs(mu) / 2:
        raise ModelError(f"perturbed_identity needs lam > |mu|/2 for ellipticity (lam={lam}, mu={mu})")
    model = _identity(2, 1, lam, mu, name="perturbed_identity")
    return model


def _capillary(q: float = 1.0, a: float = 1.0, c: float = 1.0, b21: float = 0.0, bfc: float = 0.0,
               name: str = "capillary_demo"):
    if a <= 0 or a <= abs(c) / 8:
        raise ModelError(f"{name}: need a > |c|/8 for ellipticity on the triangle (a={a}, c={c})")
    if b21 and a <= abs(c) / 8 + abs(b21) / 8:
        raise ModelError(f"{name}: b21 too large for ellipticity")

    def A(x, u):
        x, u, batch = _batch(x, u)
        u1, u2 = u[..., 0], u[..., 1]
        s = 1.0 - u1 - u2
        out = np.zeros(batch + (2, 2, 1, 1))
        out[..., 0, 0, 0, 0] = a
        out[..., 0, 1, 0, 0] = c * u1 * s
        out[..., 1, 1, 0, 0] = a
        if b21:
            out[..., 1, 0, 0, 0] = b21 * u2 * s
        return out

    def dA_du(x, u):
        x, u, batch = _batch(x, u)
        u1, u2 = u[..., 0], u[..., 1]
        out = np.zeros(batch + (2, 2, 1, 1, 2))
        out[..., 0, 1, 0, 0, 0] = c * (1.0 - 2.0 * u1 - u2)
        out[..., 0, 1, 0, 0, 1] = -c * u1
        if b21:
            out[..., 1, 0, 0, 0, 0] = -b21 * u2
            out[..., 1, 0, 0, 0, 1] = b21 * (1.0 - u1 - 2.0 * u2)
        return out

    def phi(x, u):
        x, u, batch = _batch(x, u)
        u1, u2 = u[..., 0], u[..., 1]
        out = np.zeros(batch + (2, 1))
        out[..., 0, 0] = q * u1 * (1.0 - u1 - u2)
        if bfc:
            xx = x[..., 0]
            out[..., 0, 0] += bfc * u2 * xx * (1.0 - xx)
        return out

    def dphi_du(x, u):
        x, u, batch = _batch(x, u)
        u1, u2 = u[..., 0], u[..., 1]
        out = np.zeros(batch + (2, 1, 2))
        out[..., 0, 0, 0] = q * (1.0 - 2.0 * u1 - u2)
        out[..., 0, 0, 1] = -q * u1
        if bfc:
            xx = x[..., 0]
            out[..., 0, 0, 1] += bfc * xx * (1.0 - xx)
        return out

    def dphi_dx(x, u):
        x, u, batch = _batch(x, u)
        out = np.zeros(batch + (2, 1, 1))
        if bfc:
            out[..., 0, 0, 0] = bfc * u[..., 1] * (1.0 - 2.0 * x[..., 0])
        return out

    # the broken-FC variant cancels gamma with an equal reaction so only FC fails
    def g(x, u):
        x, u, batch = _batch(x, u)
        out = np.zeros(batch + (2,))
        if bfc:
            out[..., 0] = bfc * u[..., 1] * (1.0 - 2.0 * x[..., 0])
        return out

    def dg_du(x, u):
        x, u, batch = _batch(x, u)
        out = np.zeros(batch + (2, 2))
        if bfc:
            out[..., 0, 1] = bfc * (1.0 - 2.0 * x[..., 0])
        return out

    params = {"q": q, "a": a, "c": c}
    if b21:
        params["b21"] = b21
    if bfc:
        params["bfc"] = bfc
    return CoefficientModel(2, 1, A, phi, g, dA_du, dphi_du, dphi_dx, dg_du, name=name, params=params)


def _mms_sine():
    return _identity(2, 1, name="mms_sine")


CATALOG: dict[str, CatalogEntry] = {
    e.name: e
    for e in [
        CatalogEntry("identity_diffusion", {"N": 2, "d": 1}, "A = identity, phi = g = 0.", _identity),
        CatalogEntry(
            "perturbed_identity", {"lam": 1.0, "mu": 0.0},
            "A = lam*I + mu*B, B couples u2 into the first equation.", _perturbed_identity,
        ),
        CatalogEntry(
            "capillary_demo", {"q": 1.0, "a": 1.0, "c": 1.0},
            "Triangular capillary-type system: A12 = c*u1*(1-u1-u2), phi1 = q*u1*(1-u1-u2).", _capillary,
        ),
        CatalogEntry(
            "capillary_broken_A21", {"q": 1.0, "a": 1.0, "c": 1.0, "b21": 0.4},
            "capillary_demo plus A21 = b21*u2*(1-u1-u2) (max 0.1 at the default), zero on the edges it touches.",
            lambda q=1.0, a=1.0, c=1.0, b21=0.4: _capillary(q, a, c, b21=b21, name="capillary_broken_A21"),
        ),
        CatalogEntry(
            "capillary_broken_FC", {"q": 1.0, "a": 1.0, "c": 1.0, "bfc": 1.0},
            "capillary_demo plus phi1 += bfc*u2*x(1-x) with compensating reaction; breaks FC only.",
            lambda q=1.0, a=1.0, c=1.0, bfc=1.0: _capillary(q, a, c, bfc=bfc, name="capillary_broken_FC"),
        ),
        CatalogEntry("mms_sine", {}, "A = identity (N=2, d=1), phi = g = 0; forcing supplied by the MMS case.", _mms_sine),
    ]
}


def model_from_catalog(name: str, params: Mapping[str, float] | None = None) -> CoefficientModel:
    try:
        entry = CATALOG[name]
    except KeyError:
        raise ModelError(f"unknown catalog model {name!r}; known: {sorted(CATALOG)}") from None
    params = dict(params or {})
    unknown = set(params) - set(entry.params)
    if unknown:
        raise ModelError(f"{name}: unknown parameters {sorted(unknown)}")
    merged = {**entry.params, **params}
    return entry.builder(**merged)


# --- expression models -----------------------------------------------------------


def _fd_wrt(f: Evaluator, n: int, which: str, h: float = FD_STEP) -> Evaluator:
    """Central-difference Jacobian of ``f`` w.r.t. ``x`` or ``u``; derivative axis appended last."""

    def deriv(x, u):
        x, u, batch = _batch(x, u)
        x = np.broadcast_to(x, batch + x.shape[-1:])
        u = np.broadcast_to(u, batch + u.shape[-1:])
        cols = []
        for m in range(n):
            step = np.zeros(n)
            step[m] = h
            if which == "u":
                cols.append((f(x, u + step) - f(x, u - step)) / (2 * h))
            else:
                cols.append((f(x + step, u) - f(x - step, u)) / (2 * h))
        return np.stack(cols, axis=-1)

    return deriv


def _as_tensor(exprs, shape):
    arr = np.empty(shape, dtype=object)
    for idx in np.ndindex(*shape):
        arr[idx] = exprs[idx]
    return arr


def model_from_expressions(
    A, phi, g, d: int, N: int, params: Mapping[str, float] | None = None,
    x_box=None, u_region: str | None = None, name: str = "expressions",
) -> CoefficientModel:
    """Build a model from nested lists of source strings.

    ``A`` is N x N (entries multiply the identity in x when d == 1) or N x N x d x d;
    ``phi`` is length N (d == 1) or N x d; ``g`` is length N.
    """
    params = dict(params or {})

    def parse(src):
        return parse_expr(str(src), d, N)

    A_arr = np.array(A, dtype=object)
    if A_arr.shape == (N, N) and d == 1:
        A_arr = A_arr.reshape(N, N, 1, 1)
    if A_arr.shape != (N, N, d, d):
        raise ModelError(f"A has shape {A_arr.shape}, expected {(N, N)} or {(N, N, d, d)}")
    phi_arr = np.array(phi, dtype=object)
    if phi_arr.shape == (N,) and d == 1:
        phi_arr = phi_arr.reshape(N, 1)
    if phi_arr.shape != (N, d):
        raise ModelError(f"phi has shape {phi_arr.shape}, expected {(N, d)}")
    g_arr = np.array(g, dtype=object)
    if g_arr.shape != (N,):
        raise ModelError(f"g has shape {g_arr.shape}, expected {(N,)}")

    A_e = _as_tensor(np.vectorize(parse, otypes=[object])(A_arr), A_arr.shape)
    phi_e = _as_tensor(np.vectorize(parse, otypes=[object])(phi_arr), phi_arr.shape)
    g_e = _as_tensor(np.vectorize(parse, otypes=[object])(g_arr), g_arr.shape)

    missing = set()
    for e in list(A_e.ravel()) + list(phi_e.ravel()) + list(g_e.ravel()):
        missing |= e.params() - set(params)
    if missing:
        raise ModelError(f"parameters without values: {sorted(missing)}")

    def make(table: np.ndarray) -> Evaluator:
        def ev(x, u):
            x, u, batch = _batch(x, u)
            out = np.empty(batch + table.shape)
            for idx in np.ndindex(*table.shape):
                out[(...,) + idx] = evaluate(table[idx], x, u, params)
            return out

        return ev

    A_f, phi_f, g_f = make(A_e), make(phi_e), make(g_e)
    if x_box is None:
        x_box = ((0.0, 1.0),) * d
    if u_region is None:
        u_region = "triangle" if N == 2 else "box"
    return CoefficientModel(
        N, d, A_f, phi_f, g_f,
        _fd_wrt(A_f, N, "u"), _fd_wrt(phi_f, N, "u"), _fd_wrt(phi_f, d, "x"), _fd_wrt(g_f, N, "u"),
        name=name, params=params, analytic=False, x_box=tuple(tuple(b) for b in x_box), u_region=u_region,
    )


def model_from_config(block: Mapping) -> CoefficientModel:
    if "catalog" in block:
        return model_from_catalog(block["catalog"], block.get("params"))
    ex = block["expressions"]
    return model_from_expressions(
        ex["A"], ex["phi"], ex["g"], int(block.get("d", 1)), int(block.get("N", 2)), block.get("params")
    )


# --- derivative access -----------------------------------------------------------


def derivative_u(model: CoefficientModel, target: str, indices: tuple, wrt: int) -> Evaluator:
    """Evaluator of d(target[indices])/du_wrt, zero-based indices.

    ``target`` is ``'A'`` (indices alpha, beta, j, k), ``'phi'`` (alpha, j) or ``'g'`` (alpha,).
    """
    indices = tuple(indices)
    full = {"A": model.dA_du, "phi": model.dphi_du, "g": model.dg_du}
    ranks = {"A": (model.N, model.N, model.d, model.d), "phi": (model.N, model.d), "g": (model.N,)}
    if target not in full:
        raise ModelError(f"unknown target {target!r}")
    shape = ranks[target]
    if len(indices) != len(shape) or any(not 0 <= i < n for i, n in zip(indices, shape)):
        raise ModelError(f"indices {indices} invalid for {target} with shape {shape}")
    if not 0 <= wrt < model.N:
        raise ModelError(f"wrt={wrt} out of range for N={model.N}")
    jac = full[target]
    return lambda x, u: jac(x, u)[(...,) + indices + (wrt,)]


def gamma_alpha(model: CoefficientModel, x, u) -> np.ndarray:
    """gamma_alpha = sum_j d phi^j_alpha / d x_j at frozen u; shape (..., N)."""
    return np.trace(model.dphi_dx(x, u), axis1=-2, axis2=-1)
