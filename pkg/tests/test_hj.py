import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lccmech import displays as D
from lccmech import expr as E
from lccmech.calculus import LeeForm, SingularPoint
from lccmech.dynamics import HamiltonianSystem
from lccmech.geometry import build_cosymplectic, build_lcc, build_lcs_cotangent
from lccmech.hj import (RegimeMismatch, SDependsOnP, build_candidate, default_grid, equivalence_verdict, hj_residual,
                        project_fields, regime_of, relatedness_residual, vertical_lift_residual)

from helpers import oscillator

TOL = 1e-8


def cos_sys(H, n=1):
    return HamiltonianSystem(build_cosymplectic(n), H)


def lcc_sys(H, psi="0.5", zeta="0"):
    return HamiltonianSystem(build_lcc(1, LeeForm.parse([psi], zeta)), H)


def lcs_sys(H, theta="0"):
    return HamiltonianSystem(build_lcs_cotangent(1, [E.parse(theta, ("q1",))]), H)


def random_qt(n=20, seed=0):
    rng = np.random.default_rng(seed)
    return np.column_stack([rng.uniform(-1, 1, n), rng.uniform(0.2, 1.2, n)])


# -- candidates ------------------------------------------------------------------

def test_grid_shape():
    Q = default_grid(2)
    assert Q.shape == (1000, 3)
    assert Q[:, 2].min() == pytest.approx(0.2) and Q[:, 2].max() == pytest.approx(1.2)
    assert default_grid(1, with_t=False).shape == (10, 1)


def test_build_candidate_sections():
    cand = build_candidate("q1^2/(2*t)", cos_sys("p1^2/2"))
    Q = random_qt(5)
    q, t = Q.T
    np.testing.assert_allclose(cand.gamma(Q), np.column_stack([q, q / t, t]), rtol=1e-14)
    np.testing.assert_allclose(cand.gamma_tilde(Q)[:, 3], -q ** 2 / (2 * t ** 2), rtol=1e-14)


@pytest.mark.parametrize("S", ["q1*p1", "s + q1", "p1"])
def test_s_depends_on_p(S):
    with pytest.raises(SDependsOnP):
        build_candidate(S, cos_sys("p1^2/2"))


def test_lcs_candidate_is_time_independent():
    sys_ = lcs_sys("p1")
    cand = build_candidate("exp(q1)", sys_)
    assert not cand.time_dependent
    with pytest.raises(E.UnknownIdentifierError):
        build_candidate("q1*t", sys_)


def test_closedness_psi_forces_static_S():
    lee = LeeForm.parse(["0.3*q1 + 1"], "0")
    sys_ = HamiltonianSystem(build_lcc(1, lee), "p1^2/2")
    Q = random_qt()
    assert build_candidate("sin(q1)", sys_).closedness(lee, Q).max == 0.0
    assert build_candidate("sin(q1) + t^2", sys_).closedness(lee, Q).max > 1e-2


def test_closedness_zeta_forces_S_constant_in_q():
    lee = LeeForm.parse(["0"], "0.4*t")
    sys_ = HamiltonianSystem(build_lcc(1, lee), "p1^2/2")
    Q = random_qt()
    assert build_candidate("exp(t)", sys_).closedness(lee, Q).max == 0.0
    assert build_candidate("exp(t) + q1", sys_).closedness(lee, Q).max > 1e-2


def test_regime_of():
    assert regime_of(cos_sys("p1")) == "cosymplectic"
    assert regime_of(lcc_sys("p1")) == "lcc"
    assert regime_of(lcs_sys("p1")) == "symplectic"


# -- projected fields ------------------------------------------------------------

def test_projected_fields_cosymplectic():
    sys_ = cos_sys("p1^2/2 + q1^2*t")
    cand = build_candidate("q1^3 + t*q1", sys_)
    Q = random_qt()
    Xg, Eg, res = project_fields(sys_, cand, Q)
    q, t = Q.T
    expected = np.column_stack([3 * q ** 2 + t, np.ones_like(q)])  # d/dt + H_p|_{p=S_q} d/dq
    np.testing.assert_allclose(Xg, expected, atol=1e-12)
    assert res < 1e-12


def test_projected_fields_zero_hamiltonian():
    sys_ = cos_sys("0")
    _, Eg, _ = project_fields(sys_, build_candidate("sin(q1)*t", sys_), random_qt())
    np.testing.assert_allclose(Eg, np.tile([0.0, 1.0], (20, 1)), atol=1e-14)


@pytest.mark.parametrize("zeta", ["0", "0.3"])
def test_projected_fields_coincide_lcc(zeta):
    sys_ = lcc_sys("p1^2/2 + q1*t", "0.5", zeta)
    cand = build_candidate("q1^2 + exp(t)*q1", sys_)
    assert project_fields(sys_, cand, random_qt(20, 1))[2] < 1e-8


def test_projected_fields_singular():
    sys_ = lcc_sys("p1", "0", "1")
    with pytest.raises(SingularPoint):
        project_fields(sys_, build_candidate("q1", sys_), np.array([[0.3, 1.0]]))


# -- relatedness -----------------------------------------------------------------

def test_relatedness_free_particle():
    sys_ = cos_sys("p1^2/2")
    assert np.max(np.abs(relatedness_residual(sys_, build_candidate("q1^2/(2*t)", sys_)).residuals)) < 1e-10


def test_relatedness_oscillator_cot():
    sys_ = cos_sys("(p1^2 + q1^2)/2")
    good = relatedness_residual(sys_, build_candidate("q1^2/2*cos(t)/sin(t)", sys_))
    assert np.max(np.abs(good.residuals)) < 1e-10
    bad = relatedness_residual(sys_, build_candidate("q1^2/2*cos(t)/sin(t) + 0.1*q1^3", sys_))
    assert np.max(np.abs(bad.residuals)) > 1e-3


def test_relatedness_symplectic():
    sys_ = lcs_sys("p1^2/2")
    assert np.max(np.abs(relatedness_residual(sys_, build_candidate("0.7*q1", sys_)).residuals)) < 1e-14


# -- HJ residuals ----------------------------------------------------------------

def test_symplectic_free_particle():
    sys_ = lcs_sys("p1^2/2")
    rep = hj_residual(sys_, build_candidate("0.7*q1", sys_))
    assert rep.regime == "symplectic" and rep.max == 0.0


def test_lcs_exponential_solution():
    sys_ = lcs_sys("p1", "0.5")
    rep = hj_residual(sys_, build_candidate("exp(0.5*q1)", sys_))
    assert rep.max < 1e-14
    assert np.max(np.abs(rep.relatedness)) < 1e-14


def test_cosymplectic_cot():
    sys_ = cos_sys("(p1^2 + q1^2)/2")
    rep = hj_residual(sys_, build_candidate("q1^2/2*cos(t)/sin(t)", sys_))
    assert rep.regime == "cosymplectic"
    assert rep.max < 1e-10 and np.max(np.abs(rep.classical)) < 1e-10
    assert rep.residuals.shape == (100, 1)


def test_cosymplectic_classical_is_informational():
    # S_t + H = f(t) with f != 0 still solves the derived PDE
    sys_ = cos_sys("p1^2/2")
    rep = hj_residual(sys_, build_candidate("q1 - t/2 + t^3", sys_))
    assert rep.max < 1e-12
    assert np.max(np.abs(rep.classical)) > 1e-2


def test_cosymplectic_regime_mismatch():
    with pytest.raises(RegimeMismatch):
        hj_residual(lcc_sys("p1"), build_candidate("q1", lcc_sys("p1")), regime="cosymplectic")


LCC_SOLUTIONS = [
    # (H, S, psi, zeta)
    ("p1", "exp(0.5*q1)/0.5", "0.5", "0"),
    ("p1^2/2", "(2/0.5)*exp(0.25*q1)", "0.5", "0"),
    ("p1*t^0.4", "exp(0.3*q1)/0.3", "0.5", "0"),
    ("p1 + t", "sin(t)", "0", "0.3"),
]
LCC_NON_SOLUTIONS = [
    ("p1", "exp(0.5*q1)/0.5 + 0.1*q1^3", "0.5", "0"),
    ("p1^2/2", "q1^2", "0.5", "0"),
    ("p1*t^0.4", "exp(0.5*q1)", "0.5", "0"),
    ("p1^2/2", "exp(0.3*q1 + 0.2*t)", "0.3", "0.2"),
]


@pytest.mark.parametrize("H,S,psi,zeta", LCC_SOLUTIONS)
def test_lcc_analytic_solutions(H, S, psi, zeta):
    sys_ = lcc_sys(H, psi, zeta)
    rep = hj_residual(sys_, build_candidate(S, sys_))
    assert rep.max < TOL
    assert np.max(np.abs(rep.span)) < TOL
    assert np.max(np.abs(rep.relatedness)) < TOL
    assert rep.closedness.max < 1e-12
    assert rep.extra["lagrangian_max"] < 1e-12


@pytest.mark.parametrize("H,S", [("-(0.2/0.3)*p1", "exp(0.3*q1 + 0.2*t)"), ("-(0.2/0.3)*p1", "(0.3*q1 + 0.2*t)^2")])
def test_mixed_lee_form_breaks_equivalence(H, S):
    # Theta = a dq + b dt, dS parallel to Theta: LdR-closed and F + S_t = 0 solves the
    # PDE identically, yet E_H^p = p b/(1 - t b) != 0 so E_H is not tangent to im gamma.
    # The missing hypothesis is that im gamma~ be Lagrangian in the symplectization.
    sys_ = lcc_sys(H, "0.3", "0.2")
    rep = hj_residual(sys_, build_candidate(S, sys_))
    assert rep.max < 1e-14 and rep.closedness.max < 1e-14
    assert np.max(np.abs(rep.relatedness)) > 1e-2
    assert rep.extra["lagrangian_max"] > 1e-2
    assert equivalence_verdict(rep.max, np.max(np.abs(rep.relatedness))) == "inconsistent"
    Q = random_qt(10)
    g = build_candidate(S, sys_).gamma(Q)
    from lccmech.dynamics import evolution_vf
    np.testing.assert_allclose(evolution_vf(sys_)(g)[:, 1], g[:, 1] * 0.2 / (1 - 0.2 * Q[:, 1]), rtol=1e-12)


@pytest.mark.parametrize("H,S,psi,zeta", LCC_NON_SOLUTIONS)
def test_lcc_non_solutions(H, S, psi, zeta):
    sys_ = lcc_sys(H, psi, zeta)
    rep = hj_residual(sys_, build_candidate(S, sys_))
    assert rep.max > 1e-3
    assert np.max(np.abs(rep.relatedness)) > 1e-3
    assert equivalence_verdict(rep.max, np.max(np.abs(rep.relatedness))) == "consistent"


@settings(max_examples=15)
@given(st.integers(0, 10_000))
def test_span_matches_colon_residual(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.uniform(-0.5, 0.5, 2)
    sys_ = lcc_sys(f"p1^2/2 + {rng.uniform(-1, 1):.4f}*q1*t", f"{a:.4f}", f"{b:.4f}")
    cand = build_candidate(f"{rng.uniform(-1, 1):.4f}*q1^2 + sin(t)*q1", sys_)
    rep = hj_residual(sys_, cand, Q=random_qt(20, seed) * [0.5, 1.0])
    assert np.max(np.abs(rep.span - rep.residuals)) < 1e-8


def test_lcc_reduces_to_cosymplectic():
    sys_ = cos_sys("p1^2/2 + q1^2*t")
    cand = build_candidate("q1^3*t + cos(t)", sys_)
    a = hj_residual(sys_, cand, regime="lcc").residuals
    b = hj_residual(sys_, cand, regime="cosymplectic").residuals
    assert np.max(np.abs(a - b)) < 1e-12


def test_lcc_singular_denominator():
    sys_ = lcc_sys("p1", "0", "1")
    with pytest.raises(SingularPoint):
        hj_residual(sys_, build_candidate("t", sys_), Q=np.array([[0.1, 1.0]]), with_relatedness=False)


def test_preset_S_is_not_a_solution():
    sys_ = oscillator()
    rep = hj_residual(sys_, build_candidate("q1^2/2", sys_))
    assert rep.max > 1e-2
    assert equivalence_verdict(rep.max, np.max(np.abs(rep.relatedness))) == "consistent"


# -- oscillator reference display ------------------------------------------------

@pytest.mark.parametrize("S", ["q1^2/2", "exp(0.3*q1) + q1^2", "sin(q1)"])
def test_oscillator_display_corrected_agrees(S):
    sys_ = oscillator()
    cand = build_candidate(S, sys_)
    Q = random_qt(30, 3)
    res = hj_residual(sys_, cand, Q=Q, with_relatedness=False).residuals[:, 0]
    corrected = cand._ev(D.oscillator_hj_display(S, corrected=True), Q)
    printed = cand._ev(D.oscillator_hj_display(S), Q)
    assert np.max(np.abs(corrected - res)) < 1e-8
    assert np.max(np.abs(printed - res)) > 1e-2


# -- vertical lift ---------------------------------------------------------------

def test_vertical_lift_free_particle():
    sys_ = cos_sys("p1^2/2")
    assert vertical_lift_residual(sys_, build_candidate("q1^2/(2*t)", sys_)).max < 1e-10


def test_vertical_lift_potential_only():
    sys_ = cos_sys("q1^2")
    assert vertical_lift_residual(sys_, build_candidate("-t*q1^2", sys_)).max < 1e-14
    Q = random_qt()
    rep = vertical_lift_residual(sys_, build_candidate("q1^2", sys_), Q)
    np.testing.assert_allclose(rep.residuals[:, 0], -2 * Q[:, 0], atol=1e-14)


def test_vertical_lift_time_frozen():
    sys_ = cos_sys("p1^2/2")
    assert vertical_lift_residual(sys_, build_candidate("0.3*q1", sys_)).max == 0.0


@pytest.mark.parametrize("S", ["q1^2/(2*t)", "q1^2", "q1*t + q1^3"])
def test_vertical_lift_matches_relatedness(S):
    sys_ = cos_sys("p1^2/2 + q1*t")
    cand = build_candidate(S, sys_)
    vl = vertical_lift_residual(sys_, cand).max
    rel = float(np.max(np.abs(relatedness_residual(sys_, cand).residuals)))
    assert (vl < TOL) == (rel < TOL)


def test_vertical_lift_regime_mismatch():
    sys_ = lcc_sys("p1")
    with pytest.raises(RegimeMismatch):
        vertical_lift_residual(sys_, build_candidate("q1", sys_))


# -- theorem equivalence ---------------------------------------------------------

COS_CASES = [("(p1^2 + q1^2)/2", "q1^2/2*cos(t)/sin(t)", True), ("p1^2/2", "q1^2/(2*t)", True),
             ("p1^2/2", "0.5*q1 - t/8", True), ("p1^2/2", "q1^3", False),
             ("(p1^2 + q1^2)/2", "q1^2/2*cos(t)/sin(t) + 0.1*q1^3", False), ("p1^2/2 + q1*t", "q1^2", False)]
SYM_CASES = [("p1^2/2", "0.7*q1", "0", True), ("p1", "exp(0.5*q1)", "0.5", True),
             ("p1^2/2", "(2/0.5)*exp(0.25*q1)", "0.5", True), ("p1^2/2", "q1^2", "0", False),
             ("p1", "exp(q1)", "0.5", False), ("p1^2/2 + q1", "q1", "0", False)]


@pytest.mark.parametrize("H,S,solves", COS_CASES)
def test_equivalence_cosymplectic(H, S, solves):
    sys_ = cos_sys(H)
    rep = hj_residual(sys_, build_candidate(S, sys_))
    rel = float(np.max(np.abs(rep.relatedness)))
    assert (rep.max < TOL) == solves and (rel < TOL) == solves


@pytest.mark.parametrize("H,S,theta,solves", SYM_CASES)
def test_equivalence_symplectic(H, S, theta, solves):
    sys_ = lcs_sys(H, theta)
    rep = hj_residual(sys_, build_candidate(S, sys_))
    rel = float(np.max(np.abs(rep.relatedness)))
    assert (rep.max < TOL) == solves and (rel < TOL) == solves


def test_report_summary():
    sys_ = lcc_sys("p1")
    rep = hj_residual(sys_, build_candidate("exp(0.5*q1)/0.5", sys_))
    s = rep.summary()
    assert s["regime"] == "lcc" and {"max", "rms", "span_max", "relatedness_max", "closedness_max"} <= set(s)
