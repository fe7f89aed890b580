import numpy as np
import pytest

from nondiag.coeffmodel import model_from_catalog, model_from_expressions
from nondiag.conditions import (CONDITION_IDS, ConditionError, check_all, check_compatibility,
                                check_structural, estimate_ellipticity, form_matrix, jacobi_eigvalsh)
from nondiag.grid import BoundarySpec, Dirichlet, Grid1D, ZeroFlux

STRUCTURAL = [c for c in CONDITION_IDS if c != "compatibility"]


def _const_model(A):
    return model_from_expressions(A, ["0", "0"], ["0", "0"], d=1, N=2)


def test_jacobi_matches_numpy(rng):
    M = rng.normal(size=(200, 4, 4))
    M = M + np.swapaxes(M, -1, -2)
    assert np.allclose(jacobi_eigvalsh(M), np.linalg.eigvalsh(M), atol=1e-12)


def test_ellipticity_identity():
    rep = estimate_ellipticity(model_from_catalog("identity_diffusion"))
    assert (rep.lambda0, rep.lambda1, rep.cordes_ratio) == pytest.approx((1.0, 1.0, 1.0), abs=1e-14)


def test_ellipticity_constant_nonsymmetric():
    rep = estimate_ellipticity(_const_model([["1", "0.5"], ["0", "1"]]))
    assert rep.lambda0 == pytest.approx(0.75, abs=1e-12)
    assert rep.lambda1 == pytest.approx(1.25, abs=1e-12)


def test_ellipticity_sample_count_invariant_for_constant_tensor():
    m = _const_model([["2", "0.3"], ["0", "1"]])
    a = estimate_ellipticity(m, x_samples=1)
    b = estimate_ellipticity(m, x_samples=100)
    assert (a.lambda0, a.lambda1, a.cordes_ratio) == (b.lambda0, b.lambda1, b.cordes_ratio)


def test_ellipticity_capillary_dense(capillary):
    rep = estimate_ellipticity(capillary, x_samples=4, u_samples=201)
    assert 0.874 <= rep.lambda0 <= 0.876
    assert 1.124 <= rep.lambda1 <= 1.126
    assert rep.lambda0 <= rep.lambda1 and 0 < rep.cordes_ratio <= 1


def test_form_matrix_symmetric(capillary):
    u = capillary.sample_u(9)
    M = form_matrix(capillary.A(np.zeros((len(u), 1)), u))
    assert np.array_equal(M, np.swapaxes(M, -1, -2))


@pytest.mark.parametrize("cid", STRUCTURAL)
def test_capillary_passes_every_check(capillary, cid):
    rep = check_structural(capillary, cid)
    assert rep.passed, rep
    assert rep.worst_residual <= 1e-8
    assert rep.passed == (rep.worst_residual <= rep.tolerance)


def test_broken_A21_fails_only_triangularity():
    m = model_from_catalog("capillary_broken_A21")
    reps = {r.condition_id: r for r in check_all(m, u_samples=65)}
    assert not reps["triangular_A21"].passed
    assert reps["triangular_A21"].worst_residual == pytest.approx(0.1, abs=1e-12)
    assert all(r.passed for cid, r in reps.items() if cid != "triangular_A21")


def test_broken_FC_fails_only_FC():
    m = model_from_catalog("capillary_broken_FC")
    reps = {r.condition_id: r for r in check_all(m)}
    assert not reps["FC"].passed
    assert all(r.passed for cid, r in reps.items() if cid != "FC")


def test_fc_fails_for_cross_flux():
    m = model_from_expressions([["1", "0"], ["0", "1"]], ["u2", "0"], ["0", "0"], d=1, N=2)
    rep = check_structural(m, "FC")
    assert not rep.passed
    assert rep.worst_residual == pytest.approx(1.0, abs=1e-6)
    assert rep.worst_site["h"] == 1


def test_fcb_records_sum_edge(capillary):
    assert check_structural(capillary, "FCB").details["sum_edge"] == "u1+u2=1"
    assert check_structural(capillary, "FCB", sum_edge="zero").details["sum_edge"] == "u1+u2=0"


def test_edge_checks_need_two_components():
    m = model_from_catalog("identity_diffusion", {"N": 3, "d": 1})
    with pytest.raises(ConditionError):
        check_structural(m, "FC")


@pytest.mark.parametrize("name", ["capillary_demo", "capillary_broken_A21", "capillary_broken_FC"])
def test_doubling_edge_samples_never_flips_pass(name):
    m = model_from_catalog(name)
    for cid in ["FC", "LC", "GGC", "FCB"]:
        if check_structural(m, cid, edge_samples=128).passed:
            assert check_structural(m, cid, edge_samples=256).passed


def test_compatibility_examples():
    grid = Grid1D(20)
    bc = BoundarySpec((Dirichlet(0.0), ZeroFlux()), (ZeroFlux(), ZeroFlux()))

    def u0(x):
        x = np.asarray(x, dtype=float).reshape(-1)
        return np.stack([x, np.zeros_like(x)], axis=-1)

    assert check_compatibility(u0, bc, grid).passed
    shifted = lambda x: u0(x) + np.array([0.2, 0.0])
    rep = check_compatibility(shifted, bc, grid)
    assert not rep.passed and rep.worst_residual == pytest.approx(0.2, abs=1e-15)
    rep = check_compatibility(shifted, BoundarySpec.zero_flux(2), grid)
    assert rep.passed and rep.worst_residual == 0.0
