import numpy as np
import pytest
from hypothesis import given, strategies as st

from lccmech import expr as E
from lccmech.calculus import Chart, KForm, LeeForm, VectorField, eval_expr, exterior_derivative
from lccmech.dynamics import HamiltonianSystem, hamiltonian_vf
from lccmech.geometry import (ConformalFactor, LCCStructure, NonClosedLeeForm, SingularStructure, build_cosymplectic,
                              build_lcc, build_lcs_cotangent, conformal_rescale, flat, flat_at, omega_bar_darboux,
                              reeb, reeb_closed_form, sharp, symplectize)

from helpers import random_lcc, random_potential


def comps(form):
    return {k: E.to_string(v) for k, v in form.components.items()}


# -- construction -------------------------------------------------------------

def test_cosymplectic_n1():
    s = build_cosymplectic(1)
    assert comps(s.eta) == {(2,): "1"}
    assert comps(s.omega) == {(0, 1): "1"}
    X = s.sample(20)
    assert np.allclose(np.abs(s.volume_coefficient(X)), 1.0)
    rep = s.validate()
    assert rep.ok and max(rep.residuals.values()) == 0.0


def test_zero_lee_matches_cosymplectic():
    a, b = build_lcc(2, LeeForm.zero(2)), build_cosymplectic(2)
    assert comps(a.eta) == comps(b.eta) and comps(a.omega) == comps(b.omega)


def test_lcc_n1_components():
    s = build_lcc(1, LeeForm.parse(["0.3"], "0.2"))
    X = s.sample(10)
    q, p, t = X.T
    e = s.eta_at(X)
    np.testing.assert_allclose(e[:, 0], -0.3 * t)
    np.testing.assert_allclose(e[:, 2], 1 - 0.2 * t)
    om = s.omega_at(X)
    np.testing.assert_allclose(om[:, 0, 1], 1.0)
    # 2 p Theta ^ dq = 2 p zeta dt ^ dq
    np.testing.assert_allclose(om[:, 2, 0], 2 * p * 0.2)


def test_psi_only_oscillator_forms():
    # Omega_{2 Theta} reduces to dq ^ dp and eta = dt - t psi dq for Theta = psi dq, n = 1
    s = build_lcc(1, LeeForm.parse(["0.05"], "0"))
    assert comps(s.omega) == {(0, 1): "1"}
    assert set(s.eta.components) == {(0,), (2,)}


def test_time_lee_form_d_eta():
    s = build_lcc(1, LeeForm.parse(["0"], "0.7"))
    assert s.report.residuals["d_theta_eta"] < 1e-10


def test_non_closed_lee_form():
    with pytest.raises(NonClosedLeeForm):
        build_lcc(1, LeeForm.parse(["0"], "q1"))


@given(st.integers(0, 10_000), st.integers(1, 3))
def test_random_structure_valid(seed, n):
    s = random_lcc(np.random.default_rng(seed), n)
    assert s.report.ok, s.report


# -- musical maps --------------------------------------------------------------

def test_flat_examples():
    s = build_cosymplectic(1)
    assert comps(flat(s, VectorField.coordinate(s.chart, "t"))) == {(2,): "1"}
    assert comps(flat(s, VectorField.coordinate(s.chart, "q1"))) == {(1,): "1"}


def test_sharp_dt_is_dt():
    s = build_cosymplectic(2)
    X = s.sample(5)
    np.testing.assert_allclose(sharp(s, KForm.dx(s.chart, "t"), X), np.tile([0, 0, 0, 0, 1.0], (5, 1)))


def test_reeb_time_lee_form():
    c = 0.4
    s = build_lcc(1, LeeForm.parse(["0"], str(c)))
    X = s.sample(20)
    q, p, t = X.T
    R = reeb(s)(X)
    np.testing.assert_allclose(R[:, 2], 1 / (1 - t * c), rtol=1e-12)
    np.testing.assert_allclose(R[:, 1], 2 * p * c / (1 - t * c), rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(R, reeb_closed_form(s).evaluate(X), atol=1e-10)


def test_reeb_psi_only_is_dt():
    s = build_lcc(2, LeeForm.parse(["sin(q2)", "q1*cos(q2)"], "0"))
    X = s.sample(20)
    np.testing.assert_allclose(reeb(s)(X), np.tile([0, 0, 0, 0, 1.0], (20, 1)), atol=1e-12)


def test_sharp_against_dense_inverse():
    s = build_lcc(1, LeeForm.parse(["0.1"], "0"))
    x = np.array([[1.0, 2.0, 0.5]])
    mu = np.array([[0.3, -1.2, 0.7]])
    # independent oracle: build M by hand and invert
    psi, t = 0.1, 0.5
    eta = np.array([-t * psi, 0.0, 1.0])
    Om = np.array([[0, 1.0, 0], [-1.0, 0, 0], [0, 0, 0]])
    M = Om + np.outer(eta, eta)
    expected = np.linalg.inv(M.T) @ mu[0]
    np.testing.assert_allclose(sharp(s, mu, x)[0], expected, atol=1e-12)


def test_singular_structure():
    s = LCCStructure(1, LeeForm.parse(["0"], "1"))
    with pytest.raises(SingularStructure):
        sharp(s, np.array([[0, 0, 1.0]]), np.array([[0.2, 0.3, 1.0]]))


@given(st.integers(0, 10_000), st.integers(1, 3))
def test_musical_roundtrip(seed, n):
    rng = np.random.default_rng(seed)
    s = random_lcc(rng, n)
    X = s.sample(30, seed)
    V = rng.standard_normal(X.shape)
    assert np.max(np.abs(sharp(s, flat_at(s, X, V), X) - V)) < 1e-10
    mu = rng.standard_normal(X.shape)
    assert np.max(np.abs(flat_at(s, X, sharp(s, mu, X)) - mu)) < 1e-10


@given(st.integers(0, 10_000))
def test_reeb_uniqueness(seed):
    s = random_lcc(np.random.default_rng(seed), 2)
    X = s.sample(20, seed)
    R = reeb(s)(X)
    assert np.max(np.abs(np.einsum("na,na->n", R, s.eta_at(X)) - 1)) < 1e-10
    assert np.max(np.abs(np.einsum("na,nab->nb", R, s.omega_at(X)))) < 1e-10


# -- symplectization -----------------------------------------------------------

def test_symplectize_cosymplectic_n1():
    lcs = symplectize(build_cosymplectic(1))
    assert comps(lcs.omega) == {(0, 1): "1", (2, 3): "1"}
    assert lcs.theta.is_zero


@given(st.integers(0, 10_000), st.integers(1, 2))
def test_symplectize_lcs_and_darboux(seed, n):
    s = random_lcc(np.random.default_rng(seed), n)
    lcs = symplectize(s)
    assert lcs.report.ok, lcs.report
    X = lcs.sample(20, seed)
    assert (lcs.omega - omega_bar_darboux(s)).max_abs(X) < 1e-10


def test_lcs_cotangent():
    lcs = build_lcs_cotangent(2, [E.parse("q2", ("q1", "q2")), E.parse("q1", ("q1", "q2"))])
    assert lcs.report.ok
    with pytest.raises(ValueError):
        build_lcs_cotangent(1, [E.parse("p1", ("p1",))])


# -- conformal rescaling ---------------------------------------------------------

def test_rescale_sigma_zero_identity():
    s = build_lcc(1, LeeForm.zero(1))
    sys_ = HamiltonianSystem(s, "p1^2/2 + q1^2*t")
    loc = conformal_rescale(s, sys_.H, hamiltonian_vf(sys_), ConformalFactor(E.ZERO))
    X = s.sample(10)
    np.testing.assert_allclose(loc.eta.evaluate(X), s.eta_at(X))
    np.testing.assert_allclose(loc.X(X), hamiltonian_vf(sys_)(X))


@given(st.integers(0, 10_000))
def test_rescale_gives_cosymplectic(seed):
    rng = np.random.default_rng(seed)
    sigma = random_potential(rng, 1)
    s = build_lcc(1, LeeForm.from_potential(sigma, 1))
    sys_ = HamiltonianSystem(s, "p1^2/2 + q1*t")
    loc = conformal_rescale(s, sys_.H, hamiltonian_vf(sys_), ConformalFactor(sigma))
    res = loc.residuals(s.sample(20, seed))
    assert res["d_eta"] < 1e-10 and res["d_omega"] < 1e-10
    assert res["iX_eta"] < 1e-10 and res["iR_eta"] < 1e-10 and res["iR_omega"] < 1e-10


def test_rescale_hamilton_equations():
    sigma = E.parse("0.3*q1 + 0.1*t^2", ("q1", "t"))
    s = build_lcc(1, LeeForm.from_potential(sigma, 1))
    sys_ = HamiltonianSystem(s, "p1^2/2 + q1^2")
    loc = conformal_rescale(s, sys_.H, hamiltonian_vf(sys_), ConformalFactor(sigma))
    res = loc.residuals(s.sample(20))
    assert res["iX_omega"] < 1e-10


def test_cocycle():
    base = ("q1", "t")
    fa, fb, fc = (ConformalFactor(E.parse(x, base)) for x in ("q1*t", "sin(q1)", "t^2 - q1"))
    X = np.random.default_rng(0).uniform(-1, 1, (20, 2))
    env = Chart(1, "base").env(X)
    ev = lambda e: eval_expr(e, env, None, (20,))  # noqa: E731
    # kappa_{ca} = kappa_{cb} kappa_{ba}
    lhs = ev(fa.kappa(fc))
    rhs = ev(fb.kappa(fc)) * ev(fa.kappa(fb))
    np.testing.assert_allclose(lhs, rhs, rtol=1e-12)
    np.testing.assert_allclose(ev(fa.lam(fc)), ev(fa.kappa(fc)) ** 2, rtol=1e-12)


def test_structure_d_omega_for_lcs_cotangent():
    lcs = build_lcs_cotangent(1, [E.parse("0.5", ())])
    X = lcs.sample(10)
    assert exterior_derivative(lcs.omega).max_abs(X) == 0.0
