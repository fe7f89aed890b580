"""Numerical verification of the structural hypotheses on (A, phi, g).

All checks sample the coefficient domain Omega x B_Delta (or the model's
u-box for N != 2); nothing here claims global validity outside the samples.
The invariant-region checks work with the three edge functions of the
triangle B_Delta = {u1 >= 0, u2 >= 0, u1 + u2 <= 1}.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .coeffmodel import CoefficientModel, gamma_alpha
from .grid import BoundarySpec, Dirichlet, Grid1D, at_time

CONDITION_IDS = (
    "ellipticity",
    "triangular_A21",
    "cond1_dA22_du1",
    "cond2_dphi2_du1",
    "FC",
    "LC",
    "GGC",
    "FCB",
    "compatibility",
)
ANALYTIC_TOL = 1e-8
FD_TOL = 1e-5
POSITIVITY_FLOOR = 1e-6

# G_h(u) = c_h + grad_h . u ; B_Delta = {G_h <= 0}
EDGE_GRADIENTS = np.array([[-1.0, 0.0], [0.0, -1.0], [1.0, 1.0]])
EDGE_OFFSETS = np.array([0.0, 0.0, -1.0])


class ConditionError(ValueError):
    pass


def edge_functions(u) -> np.ndarray:
    """G_1, G_2, G_3 evaluated at ``u`` (..., 2); returns (..., 3)."""
    u = np.asarray(u, dtype=float)
    return u @ EDGE_GRADIENTS.T + EDGE_OFFSETS


def edge_points(h: int, n: int) -> np.ndarray:
    """``n`` uniform points on the edge {G_h = 0} of the triangle, h in 1..3."""
    s = np.linspace(0.0, 1.0, n)
    if h == 1:
        return np.stack([np.zeros(n), s], axis=-1)
    if h == 2:
        return np.stack([s, np.zeros(n)], axis=-1)
    return np.stack([s, 1.0 - s], axis=-1)


# --- eigenvalues ------------------------------------------------------------------


def jacobi_eigvalsh(M, tol: float = 1e-14, max_sweeps: int = 50) -> np.ndarray:
    """Eigenvalues of a batch of symmetric matrices by cyclic Jacobi rotations.

    ``M`` has shape (..., n, n); returns ascending eigenvalues (..., n).
    """
    A = np.array(M, dtype=float, copy=True)
    n = A.shape[-1]
    if n == 1:
        return A[..., 0, :].copy()
    scale = np.maximum(np.abs(A).max(axis=(-2, -1)), 1e-300)
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.triu(A, 1) ** 2, axis=(-2, -1)))
        if np.all(off <= tol * scale):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[..., p, q]
                app = A[..., p, p]
                aqq = A[..., q, q]
                active = np.abs(apq) > 1e-300
                with np.errstate(divide="ignore", invalid="ignore"):
                    tau = np.where(active, (aqq - app) / (2.0 * np.where(active, apq, 1.0)), 0.0)
                    t = np.where(
                        active, np.where(tau >= 0, 1.0, -1.0) / (np.abs(tau) + np.sqrt(1.0 + tau * tau)), 0.0
                    )
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                # A <- J^T A J with J = rotation in the (p, q) plane
                Ap = A[..., :, p].copy()
                Aq = A[..., :, q].copy()
                A[..., :, p] = c[..., None] * Ap - s[..., None] * Aq
                A[..., :, q] = s[..., None] * Ap + c[..., None] * Aq
                Ap = A[..., p, :].copy()
                Aq = A[..., q, :].copy()
                A[..., p, :] = c[..., None] * Ap - s[..., None] * Aq
                A[..., q, :] = s[..., None] * Ap + c[..., None] * Aq
    return np.sort(np.diagonal(A, axis1=-2, axis2=-1), axis=-1)


def form_matrix(A: np.ndarray) -> np.ndarray:
    """Symmetrised (N d) x (N d) matrix of xi -> A^{jk}_{ab} xi^j_a xi^k_b, row index (a, j)."""
    N, d = A.shape[-4], A.shape[-2]
    M = np.moveaxis(A, -3, -2)  # [..., a, j, b, k]
    M = M.reshape(A.shape[:-4] + (N * d, N * d))
    return 0.5 * (M + np.swapaxes(M, -1, -2))


# --- reports ------------------------------------------------------------------------


@dataclass
class EllipticityReport:
    lambda0: float
    lambda1: float
    cordes_ratio: float
    sample_counts: tuple
    argmin: dict = field(default_factory=dict)


@dataclass
class ConditionReport:
    condition_id: str
    passed: bool
    worst_residual: float
    worst_site: dict
    tolerance: float
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "condition_id": self.condition_id,
            "pass": bool(self.passed),
            "worst_residual": float(self.worst_residual),
            "worst_site": _jsonable(self.worst_site),
            "tolerance": float(self.tolerance),
            **({"details": _jsonable(self.details)} if self.details else {}),
        }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in np.asarray(obj).tolist()] if isinstance(obj, np.ndarray) else [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def default_tolerance(model: CoefficientModel) -> float:
    return ANALYTIC_TOL if model.analytic else FD_TOL


def _random_u(model: CoefficientModel, count: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    pts = rng.random((count, model.N))
    if model.u_region == "triangle":
        flip = pts.sum(axis=-1) > 1.0
        pts[flip] = 1.0 - pts[flip]
    return pts


def _domain_samples(model, x_samples, u_samples, random_samples=0, seed=0):
    xs = model.sample_x(x_samples)
    us = model.sample_u(u_samples)
    if random_samples:
        us = np.concatenate([us, _random_u(model, random_samples, seed)])
    X = np.repeat(xs, len(us), axis=0)
    U = np.tile(us, (len(xs), 1))
    return X, U


def estimate_ellipticity(model: CoefficientModel, x_samples: int = 32, u_samples: int = 64,
                         random_samples: int = 0, seed: int = 0) -> EllipticityReport:
    if x_samples < 1 or u_samples < 1:
        raise ConditionError("sample counts must be >= 1")
    X, U = _domain_samples(model, x_samples, u_samples, random_samples, seed)
    A = model.A(X, U)
    if not np.all(np.isfinite(A)):
        raise ConditionError("non-finite diffusion coefficient sampled")
    eig = jacobi_eigvalsh(form_matrix(A))
    lo, hi = eig[:, 0], eig[:, -1]
    i0 = int(np.argmin(lo))
    lam0, lam1 = float(lo[i0]), float(hi.max())
    ratio = lam0 / lam1 if lam1 > 0 else float("nan")
    return EllipticityReport(
        lam0, lam1, ratio, (x_samples, u_samples), {"x": X[i0].tolist(), "u": U[i0].tolist()}
    )


def _report(cid, residuals, sites, tol, details=None) -> ConditionReport:
    residuals = np.asarray(residuals, dtype=float)
    if residuals.size == 0:
        return ConditionReport(cid, True, 0.0, {}, tol, details or {})
    i = int(np.argmax(residuals))
    worst = float(residuals[i])
    site = {k: (np.asarray(v)[i].tolist() if np.ndim(v) else v) for k, v in sites.items()}
    return ConditionReport(cid, worst <= tol, worst, site, tol, details or {})


def _orth_residual(w: np.ndarray, grad: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Distance of each vector in ``w`` (..., N) from span(grad), and its coefficient on grad."""
    ghat = grad / np.linalg.norm(grad)
    along = w @ ghat
    resid = np.linalg.norm(w - along[..., None] * ghat, axis=-1)
    coeff = (w @ grad) / (grad @ grad)
    return resid, coeff


def _edge_samples(model, edge_samples, x_samples):
    out = []
    xs = model.sample_x(x_samples)
    for h in (1, 2, 3):
        us = edge_points(h, edge_samples)
        X = np.repeat(xs, len(us), axis=0)
        U = np.tile(us, (len(xs), 1))
        out.append((h, X, U))
    return out


def _check_fc(model, edge_samples, x_samples, tol):
    res, hs, Xs, Us, js = [], [], [], [], []
    lam_ranges = {}
    for h, X, U in _edge_samples(model, edge_samples, x_samples):
        grad = EDGE_GRADIENTS[h - 1]
        dphi = model.dphi_du(X, U)  # [m, a, j, b]
        w = np.einsum("majb,a->mjb", dphi, grad)
        r, lam = _orth_residual(w, grad)  # (m, d)
        jm = np.argmax(r, axis=1)
        res.append(r.max(axis=1))
        js.append(jm)
        hs.append(np.full(len(X), h))
        Xs.append(X)
        Us.append(U)
        lam_ranges[f"h{h}"] = [float(lam.min()), float(lam.max())]
    sites = {"x": np.concatenate(Xs), "u": np.concatenate(Us), "h": np.concatenate(hs), "j": np.concatenate(js)}
    return _report("FC", np.concatenate(res), sites, tol, {"lambda_range": lam_ranges})


def _check_lc(model, edge_samples, x_samples, tol):
    res, hs, Xs, Us, js, ks = [], [], [], [], [], []
    mu_ranges = {}
    d = model.d
    for h, X, U in _edge_samples(model, edge_samples, x_samples):
        grad = EDGE_GRADIENTS[h - 1]
        A = model.A(X, U)  # [m, a, b, j, k]
        w = np.einsum("mabjk,a->mjkb", A, grad)
        r, mu = _orth_residual(w, grad)  # (m, d, d)
        mu_sym = 0.5 * (mu + np.swapaxes(mu, -1, -2))
        mu_min = jacobi_eigvalsh(mu_sym)[:, 0]
        positivity = np.maximum(0.0, POSITIVITY_FLOOR - mu_min)
        flat = r.reshape(len(X), d * d)
        idx = np.argmax(flat, axis=1)
        res.append(np.maximum(flat.max(axis=1), positivity))
        js.append(idx // d)
        ks.append(idx % d)
        hs.append(np.full(len(X), h))
        Xs.append(X)
        Us.append(U)
        mu_ranges[f"h{h}"] = [float(mu_min.min()), float(mu.max())]
    sites = {"x": np.concatenate(Xs), "u": np.concatenate(Us), "h": np.concatenate(hs),
             "j": np.concatenate(js), "k": np.concatenate(ks)}
    return _report("LC", np.concatenate(res), sites, tol, {"mu_range": mu_ranges})


def _check_ggc(model, edge_samples, x_samples, tol):
    res, hs, Xs, Us = [], [], [], []
    for h, X, U in _edge_samples(model, edge_samples, x_samples):
        grad = EDGE_GRADIENTS[h - 1]
        val = (model.g(X, U) - gamma_alpha(model, X, U)) @ grad
        res.append(np.maximum(val, 0.0))
        hs.append(np.full(len(X), h))
        Xs.append(X)
        Us.append(U)
    sites = {"x": np.concatenate(Xs), "u": np.concatenate(Us), "h": np.concatenate(hs)}
    return _report("GGC", np.concatenate(res), sites, tol)


def boundary_points(model: CoefficientModel, x_samples: int):
    """Points on the faces of the x box with their outward unit normals."""
    pts, normals = [], []
    d = model.d
    for k, (lo, hi) in enumerate(model.x_box):
        sub = [b for i, b in enumerate(model.x_box) if i != k]
        if sub:
            axes = [np.linspace(a, b, x_samples) for a, b in sub]
            mesh = np.stack([m.ravel() for m in np.meshgrid(*axes, indexing="ij")], axis=-1)
        else:
            mesh = np.zeros((1, 0))
        for val, sign in ((lo, -1.0), (hi, 1.0)):
            p = np.insert(mesh, k, val, axis=1)
            n = np.zeros((len(p), d))
            n[:, k] = sign
            pts.append(p)
            normals.append(n)
    return np.concatenate(pts), np.concatenate(normals)


def _check_fcb(model, edge_samples, x_samples, tol, sum_edge):
    xb, nb = boundary_points(model, x_samples)
    res, Xs, Us, which = [], [], [], []
    edges = [(1, edge_points(1, edge_samples), "u1=0", np.array([1.0, 0.0])),
             (2, edge_points(2, edge_samples), "u2=0", np.array([0.0, 1.0]))]
    if sum_edge == "one":
        edges.append((3, edge_points(3, edge_samples), "u1+u2=1", np.array([1.0, 1.0])))
    elif sum_edge == "zero":
        edges.append((3, np.zeros((1, 2)), "u1+u2=0", np.array([1.0, 1.0])))
    else:
        raise ConditionError(f"sum_edge must be 'one' or 'zero', got {sum_edge!r}")
    for h, us, label, weights in edges:
        X = np.repeat(xb, len(us), axis=0)
        Nn = np.repeat(nb, len(us), axis=0)
        U = np.tile(us, (len(xb), 1))
        phi = model.phi(X, U)  # [m, a, j]
        flux = np.einsum("maj,mj,a->m", phi, Nn, weights)
        res.append(np.abs(flux))
        Xs.append(X)
        Us.append(U)
        which += [label] * len(X)
    sites = {"x": np.concatenate(Xs), "u": np.concatenate(Us), "edge": np.array(which)}
    edge_used = "u1+u2=1" if sum_edge == "one" else "u1+u2=0"
    return _report("FCB", np.concatenate(res), sites, tol, {"sum_edge": edge_used})


def check_structural(
    model: CoefficientModel,
    condition_id: str,
    edge_samples: int = 256,
    x_samples: int = 32,
    u_samples: int = 64,
    tol: float | None = None,
    sum_edge: str = "one",
    random_samples: int = 0,
    seed: int = 0,
) -> ConditionReport:
    """Run one structural check; see CONDITION_IDS.

    ``compatibility`` needs data and is handled by :func:`check_compatibility`;
    here it passes vacuously.
    """
    if condition_id not in CONDITION_IDS:
        raise ConditionError(f"unknown condition {condition_id!r}")
    tol = default_tolerance(model) if tol is None else tol
    if condition_id in ("FC", "LC", "GGC", "FCB", "triangular_A21", "cond1_dA22_du1", "cond2_dphi2_du1") \
            and model.N != 2:
        raise ConditionError(f"{condition_id} is defined for N = 2 only (model has N = {model.N})")

    if condition_id == "ellipticity":
        rep = estimate_ellipticity(model, x_samples, u_samples, random_samples, seed)
        resid = max(0.0, POSITIVITY_FLOOR - rep.lambda0)
        return ConditionReport(
            "ellipticity", resid <= tol, resid, rep.argmin, tol,
            {"lambda0": rep.lambda0, "lambda1": rep.lambda1, "cordes_ratio": rep.cordes_ratio},
        )
    if condition_id == "compatibility":
        return ConditionReport("compatibility", True, 0.0, {}, tol, {"note": "no boundary data supplied"})
    if condition_id == "FC":
        return _check_fc(model, edge_samples, x_samples, tol)
    if condition_id == "LC":
        return _check_lc(model, edge_samples, x_samples, tol)
    if condition_id == "GGC":
        return _check_ggc(model, edge_samples, x_samples, tol)
    if condition_id == "FCB":
        return _check_fcb(model, edge_samples, x_samples, tol, sum_edge)

    X, U = _domain_samples(model, x_samples, u_samples, random_samples, seed)
    if condition_id == "triangular_A21":
        vals = np.abs(model.A(X, U)[:, 1, 0]).reshape(len(X), -1).max(axis=1)
    elif condition_id == "cond1_dA22_du1":
        vals = np.abs(model.dA_du(X, U)[:, 1, 1, ..., 0]).reshape(len(X), -1).max(axis=1)
    else:
        vals = np.abs(model.dphi_du(X, U)[:, 1, :, 0]).reshape(len(X), -1).max(axis=1)
    return _report(condition_id, vals, {"x": X, "u": U}, tol)


def check_compatibility(u0, bc: BoundarySpec, grid: Grid1D, tol: float = 1e-12) -> ConditionReport:
    """Agreement of the initial data with Dirichlet data at t = 0.

    ``u0`` is a callable x -> (..., N) (evaluated exactly at the end points)
    or an (n, N) array of cell values (linearly extrapolated to the faces).
    """
    ends = {"left": grid.x_min, "right": grid.x_max}
    if callable(u0):
        vals = {side: np.asarray(u0(np.array([x])), dtype=float).reshape(-1) for side, x in ends.items()}
    else:
        u0 = np.asarray(u0, dtype=float)
        vals = {"left": 1.5 * u0[0] - 0.5 * u0[1], "right": 1.5 * u0[-1] - 0.5 * u0[-2]}
    residuals, sites = [], []
    for side in ("left", "right"):
        for a, cond in enumerate(bc.side(side)):
            if isinstance(cond, Dirichlet):
                residuals.append(abs(vals[side][a] - at_time(cond.value, 0.0)))
                sites.append({"side": side, "component": a + 1})
    if not residuals:
        return ConditionReport("compatibility", True, 0.0, {}, tol, {"note": "no Dirichlet components"})
    i = int(np.argmax(residuals))
    return ConditionReport("compatibility", residuals[i] <= tol, float(residuals[i]), sites[i], tol)


def check_all(model: CoefficientModel, u0=None, bc: BoundarySpec | None = None, grid: Grid1D | None = None,
              **kw) -> list[ConditionReport]:
    reports = []
    for cid in CONDITION_IDS:
        if cid == "compatibility" and u0 is not None and bc is not None and grid is not None:
            reports.append(check_compatibility(u0, bc, grid))
        else:
            reports.append(check_structural(model, cid, **kw))
    return reports
