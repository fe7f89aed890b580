import numpy as np
import pytest

from nondiag.coeffmodel import (CATALOG, ModelError, derivative_u, gamma_alpha, model_from_catalog,
                                model_from_config, model_from_expressions)
from nondiag.conditions import estimate_ellipticity


def test_catalog_contents():
    for name in ["identity_diffusion", "perturbed_identity", "capillary_demo", "capillary_broken_A21",
                 "capillary_broken_FC", "mms_sine"]:
        assert name in CATALOG
        assert CATALOG[name].doc


def test_capillary_definition(capillary):
    x = np.array([[0.3]])
    u = np.array([[0.2, 0.3]])
    A = capillary.A(x, u)[0, :, :, 0, 0]
    s = 0.2 * 0.5
    assert np.allclose(A, [[1.0, s], [0.0, 1.0]], atol=1e-15)
    assert np.allclose(capillary.phi(x, u)[0, :, 0], [s, 0.0])
    assert np.allclose(capillary.g(x, u), 0.0)


def test_unknown_name_and_bad_params():
    with pytest.raises(ModelError):
        model_from_catalog("nope")
    with pytest.raises(ModelError):
        model_from_catalog("capillary_demo", {"zz": 1})
    with pytest.raises(ModelError):
        model_from_catalog("capillary_demo", {"a": 0.1, "c": 1.0})  # a <= c/8


def test_perturbed_identity_is_identity_at_mu_zero():
    rep = estimate_ellipticity(model_from_catalog("perturbed_identity", {"lam": 1.0, "mu": 0.0}))
    assert rep.lambda0 == pytest.approx(1.0) and rep.lambda1 == pytest.approx(1.0)


def test_derivative_examples(capillary):
    m = model_from_expressions([["1", "0"], ["0", "1"]], ["u1^2", "0"], ["0", "0"], d=1, N=2)
    d = derivative_u(m, "phi", (0, 0), 0)
    assert float(d(np.array([0.0]), np.array([0.3, 0.1]))) == pytest.approx(0.6, abs=1e-8)
    dA22 = derivative_u(capillary, "A", (1, 1, 0, 0), 0)
    u = capillary.sample_u(20)
    assert np.all(dA22(np.zeros((len(u), 1)), u) == 0.0)
    dphi = derivative_u(capillary, "phi", (0, 0), 1)
    assert float(dphi(np.array([0.0]), np.array([0.5, 0.2]))) == pytest.approx(-0.5, abs=1e-14)


def test_derivative_bad_indices(capillary):
    with pytest.raises(ModelError):
        derivative_u(capillary, "A", (2, 0, 0, 0), 0)
    with pytest.raises(ModelError):
        derivative_u(capillary, "phi", (0, 0), 5)


def test_gamma_alpha_examples(capillary):
    assert np.allclose(gamma_alpha(capillary, np.array([0.4]), np.array([0.3, 0.3])), 0.0)
    m = model_from_expressions([["1", "0"], ["0", "1"]], ["x1*u1", "0"], ["0", "0"], d=1, N=2)
    assert gamma_alpha(m, np.array([0.2]), np.array([0.7, 0.1]))[0] == pytest.approx(0.7, abs=1e-8)
    mms = model_from_catalog("mms_sine")
    assert np.allclose(gamma_alpha(mms, np.array([0.2]), np.array([0.7, 0.1])), 0.0)


@pytest.mark.parametrize("name", sorted(CATALOG))
def test_analytic_derivatives_match_finite_differences(name, rng):
    m = model_from_catalog(name)
    h = 1e-6
    x = rng.uniform(0, 1, size=(100, m.d))
    u = rng.dirichlet([1.0, 1.0, 1.0], size=100)[:, :2]
    for f, df in [(m.A, m.dA_du), (m.phi, m.dphi_du), (m.g, m.dg_du)]:
        exact = df(x, u)
        for b in range(m.N):
            e = np.zeros(m.N)
            e[b] = h
            fd = (f(x, u + e) - f(x, u - e)) / (2 * h)
            assert np.max(np.abs(fd - exact[..., b])) < 1e-6
    ex = m.dphi_dx(x, u)
    for k in range(m.d):
        e = np.zeros(m.d)
        e[k] = h
        fd = (m.phi(x + e, u) - m.phi(x - e, u)) / (2 * h)
        assert np.max(np.abs(fd - ex[..., k])) < 1e-6


def test_expression_model_matches_catalog(capillary, rng):
    m = model_from_config({
        "expressions": {
            "A": [["a", "c*u1*(1-u1-u2)"], ["0", "a"]],
            "phi": ["q*u1*(1-u1-u2)", "0"],
            "g": ["0", "0"],
        },
        "d": 1, "N": 2, "params": {"a": 1.0, "c": 1.0, "q": 1.0},
    })
    assert not m.analytic
    x = rng.uniform(0, 1, size=(30, 1))
    u = rng.dirichlet([1.0, 1.0, 1.0], size=30)[:, :2]
    assert np.allclose(m.A(x, u), capillary.A(x, u), atol=1e-15)
    assert np.allclose(m.dphi_du(x, u), capillary.dphi_du(x, u), atol=1e-8)


def test_expression_model_missing_param():
    with pytest.raises(ModelError):
        model_from_expressions([["k", "0"], ["0", "1"]], ["0", "0"], ["0", "0"], d=1, N=2)


def test_sample_u_stays_in_triangle(capillary):
    u = capillary.sample_u(33)
    assert np.all(u >= 0) and np.all(u.sum(axis=1) <= 1 + 1e-12)
