"""Dynamics on LCC and LCS structures.

Every vector field is defined by its contraction identities and obtained by a
pointwise solve (the normative path). Coordinate closed forms are provided as
symbolic cross-checks only.

LCC (mu = d_Theta H, R the Reeb field, c = <mu, R>)::

    X_H    = sharp(mu) - c R          i_X eta = 0, i_X Omega = mu - c eta
    E_H    = R + X_H                  i_E eta = 1
    grad H = sharp(mu)

LCS: i_X omega = d_theta H, Lee vector field i_Z omega = theta.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from . import expr as E
from .calculus import (Chart, KForm, SingularPoint, VectorField, eval_expr, exterior_derivative, fd_jacobian,
                       ldr_differential, wedge)
from .expr import Expr
from .geometry import (DET_EPS, LCCStructure, LCSStructure, SingularStructure, musical_solve, reeb, sharp,
                       symplectize)

__all__ = [
    "HamiltonianSystem", "ScalarFn", "Trajectory", "BracketReport",
    "hamiltonian_vf", "evolution_vf", "gradient_vf", "field_residuals", "energy_residual",
    "hamiltonian_vf_closed_form", "evolution_vf_closed_form", "gradient_vf_closed_form",
    "lcs_hamiltonian_vf", "lee_vf", "extended_lift", "pi_relatedness_residual",
    "poisson_bracket_symbolic", "jacobi_vector_lcc", "bivector_lcc", "jacobi_bracket_lcc",
    "jacobi_bracket_lcs", "lcs_bracket_via_fields", "jacobi_identity_residual", "bracket_report",
    "oneform_bracket_lcs", "oneform_bracket_lcc", "oneform_bracket_lcs_sym", "oneform_bracket_lcc_sym",
    "oneform_bracket_from_commutator", "anchor_residual", "anchor_leibniz_residual",
    "lie_derivative_oneform", "commutator", "HamiltonPoincare", "hamilton_poincare", "integrate",
]

Field = Callable[[np.ndarray], np.ndarray]


def _pts(X) -> np.ndarray:
    return np.atleast_2d(np.asarray(X, dtype=float))


def _dot(a, b):
    return np.einsum("na,na->n", a, b)


# ------------------------------------------------------------------- systems

class HamiltonianSystem:
    """A Hamiltonian on an LCC or LCS structure.

    ``dynamics_lee`` overrides the one-form used in ``d_theta H`` on LCS
    structures (the lifted LCC system uses pi*Theta rather than the Lee form
    2 pi*Theta of omega_bar; see :func:`extended_lift`).
    """

    def __init__(self, structure: LCCStructure | LCSStructure, hamiltonian: Expr | str,
                 constants: Mapping[str, float] | None = None, dynamics_lee: KForm | None = None):
        self.structure = structure
        self.constants = {**structure.constants, **dict(constants or {})}
        if isinstance(hamiltonian, str):
            hamiltonian = E.parse(hamiltonian, structure.chart.variables, self.constants)
        bad = hamiltonian.free_variables - set(structure.chart.variables)
        if bad:
            raise ValueError(f"Hamiltonian references unknown variables {sorted(bad)}")
        self.H = hamiltonian
        self.chart = structure.chart
        self.lee = dynamics_lee if dynamics_lee is not None else structure.theta
        self.d_theta_H = ldr_differential(self.lee, KForm.scalar(self.chart, hamiltonian))
        self.base_system: HamiltonianSystem | None = None

    @property
    def is_lcc(self) -> bool:
        return isinstance(self.structure, LCCStructure)

    @property
    def n(self) -> int:
        return self.structure.n

    def H_at(self, X) -> np.ndarray:
        X = _pts(X)
        return eval_expr(self.H, self.chart.env(X), self.constants, X.shape[:-1])

    def mu_at(self, X) -> np.ndarray:
        return self.d_theta_H.evaluate(_pts(X), self.constants)

    def with_hamiltonian(self, H: Expr) -> "HamiltonianSystem":
        return HamiltonianSystem(self.structure, H, self.constants,
                                 None if self.lee is self.structure.theta else self.lee)


def _require_lcc(sys: HamiltonianSystem):
    if not sys.is_lcc:
        raise TypeError("operation requires an LCC (cosymplectic-chart) system")


# ----------------------------------------------------------- LCC vector fields

def _lcc_parts(sys: HamiltonianSystem, X):
    s = sys.structure
    X = _pts(X)
    M = s.structure_matrix(X)
    mu = sys.mu_at(X)
    R = musical_solve(M, s.eta_at(X))
    G = musical_solve(M, mu)
    return G, R, _dot(mu, R)


def hamiltonian_vf(sys: HamiltonianSystem) -> Field:
    _require_lcc(sys)

    def f(X):
        G, R, c = _lcc_parts(sys, X)
        return G - c[:, None] * R
    return f


def evolution_vf(sys: HamiltonianSystem) -> Field:
    _require_lcc(sys)

    def f(X):
        G, R, c = _lcc_parts(sys, X)
        return G - c[:, None] * R + R
    return f


def gradient_vf(sys: HamiltonianSystem) -> Field:
    _require_lcc(sys)
    return lambda X: sharp(sys.structure, sys.d_theta_H, X)


def field_residuals(sys: HamiltonianSystem, kind: str, X) -> dict:
    """Max residuals of the defining contractions for kind in {hamiltonian, evolution, gradient}."""
    _require_lcc(sys)
    X = _pts(X)
    s = sys.structure
    et, om, mu = s.eta_at(X), s.omega_at(X), sys.mu_at(X)
    R = reeb(s)(X)
    c = _dot(mu, R)
    V = {"hamiltonian": hamiltonian_vf, "evolution": evolution_vf, "gradient": gradient_vf}[kind](sys)(X)
    target_eta = {"hamiltonian": np.zeros_like(c), "evolution": np.ones_like(c), "gradient": c}[kind]
    iom = np.einsum("na,nab->nb", V, om)
    return {
        "i_eta": float(np.max(np.abs(_dot(V, et) - target_eta))),
        "i_omega": float(np.max(np.abs(iom - (mu - c[:, None] * et)))),
    }


def energy_residual(sys: HamiltonianSystem, X) -> np.ndarray:
    """|<d_Theta H, X_H>| pointwise."""
    X = _pts(X)
    return np.abs(_dot(sys.mu_at(X), hamiltonian_vf(sys)(X)))


# ------------------------------------------------------ closed coordinate forms

def _derivs(sys: HamiltonianSystem):
    H = sys.H
    n = sys.n
    Hq = [H.diff(f"q{i + 1}") for i in range(n)]
    Hp = [H.diff(f"p{i + 1}") for i in range(n)]
    return H, Hq, Hp, H.diff("t")


def _sum(terms) -> Expr:
    out = E.ZERO
    for t in terms:
        out = E.add(out, t)
    return out


def hamiltonian_vf_closed_form(sys: HamiltonianSystem, evolution: bool = False) -> VectorField:
    """Coordinate expression of X_H (or E_H) for Theta = psi_i dq^i + zeta dt."""
    _require_lcc(sys)
    n = sys.n
    H, Hq, Hp, Ht = _derivs(sys)
    psi, zeta = sys.structure.lee.psi, sys.structure.lee.zeta
    t = E.Var("t")
    p = [E.Var(f"p{i + 1}") for i in range(n)]
    D = E.sub(E.ONE, E.mul(t, zeta))
    two = E.Num(2.0)
    comps = {}
    for i in range(n):
        comps[f"q{i + 1}"] = Hp[i]
        pi = _sum([
            E.neg(Hq[i]),
            E.div(E.mul(psi[i], H), D),
            _sum(E.mul(E.div(E.mul(two, E.sub(E.mul(p[i], psi[j]), E.mul(p[j], psi[i]))), D), Hp[j]) for j in range(n)),
            E.neg(E.mul(E.div(E.mul(t, psi[i]), D), Ht)),
        ])
        if evolution:
            pi = E.add(pi, E.div(E.mul(E.mul(two, p[i]), zeta), D))
        comps[f"p{i + 1}"] = pi
    tp = _sum(E.mul(E.mul(t, psi[i]), Hp[i]) for i in range(n))
    comps["t"] = E.div(E.add(E.ONE, tp), D) if evolution else E.div(tp, D)
    return VectorField.from_dict(sys.chart, comps)


def evolution_vf_closed_form(sys: HamiltonianSystem) -> VectorField:
    return hamiltonian_vf_closed_form(sys, evolution=True)


def gradient_vf_closed_form(sys: HamiltonianSystem, pp_coefficient: float = 4.0) -> VectorField:
    """Coordinate expression of grad H = X_H + <d_Theta H, R> R.

    ``pp_coefficient`` multiplies p_i p_j zeta^2/(1 - t zeta)^2 H_{p_j}; the
    defining identities give 4 (see DISCREPANCIES.md for the transcribed 2).
    """
    _require_lcc(sys)
    n = sys.n
    H, Hq, Hp, Ht = _derivs(sys)
    psi, zeta = sys.structure.lee.psi, sys.structure.lee.zeta
    t = E.Var("t")
    p = [E.Var(f"p{i + 1}") for i in range(n)]
    D = E.sub(E.ONE, E.mul(t, zeta))
    D2 = E.power(D, E.Num(2.0))
    two = E.Num(2.0)
    z2 = E.power(zeta, E.Num(2.0))
    comps = {}
    for i in range(n):
        comps[f"q{i + 1}"] = Hp[i]
        hp_terms = []
        for j in range(n):
            coeff = E.add(E.div(E.mul(two, E.sub(E.mul(p[i], psi[j]), E.mul(p[j], psi[i]))), D),
                          E.div(E.mul(E.mul(E.Num(pp_coefficient), E.mul(p[i], p[j])), z2), D2))
            hp_terms.append(E.mul(coeff, Hp[j]))
        comps[f"p{i + 1}"] = _sum([
            E.neg(Hq[i]),
            E.div(E.mul(psi[i], H), D),
            E.neg(E.div(E.mul(E.mul(E.mul(two, p[i]), H), z2), D2)),
            _sum(hp_terms),
            E.mul(E.sub(E.div(E.mul(E.mul(two, p[i]), zeta), D2), E.div(E.mul(t, psi[i]), D)), Ht),
        ])
    comps["t"] = _sum([
        _sum(E.mul(E.add(E.div(E.mul(E.mul(two, p[i]), zeta), D2), E.div(E.mul(t, psi[i]), D)), Hp[i])
             for i in range(n)),
        E.div(Ht, D2),
        E.neg(E.div(E.mul(H, zeta), D2)),
    ])
    return VectorField.from_dict(sys.chart, comps)


# ------------------------------------------------------------------ LCS fields

def lcs_hamiltonian_vf(sys: HamiltonianSystem) -> Field:
    """Solve i_X omega = d_theta H pointwise."""
    s = sys.structure
    return lambda X: musical_solve(s.structure_matrix(_pts(X)), sys.mu_at(_pts(X)))


def lee_vf(s: LCSStructure) -> Field:
    """Z_theta with i_Z omega = theta."""
    return lambda X: musical_solve(s.structure_matrix(_pts(X)), s.theta_at(_pts(X)))


def extended_lift(sys: HamiltonianSystem, *, validate: bool = True) -> HamiltonianSystem:
    """H^s = H + s on the symplectization, with dynamics i_X omega_bar = d_{pi*Theta} H^s.

    With this choice the first 2n+1 components of X_{H^s} equal E_H for every s.
    """
    _require_lcc(sys)
    lcs = symplectize(sys.structure, validate=validate)
    Hs = E.add(sys.H, E.Var("s"))
    lifted = HamiltonianSystem(lcs, Hs, sys.constants, dynamics_lee=sys.structure.theta.pulled_to(lcs.chart))
    lifted.base_system = sys
    return lifted


def pi_relatedness_residual(sys: HamiltonianSystem, X, s_values, lifted: HamiltonianSystem | None = None) -> float:
    """max |T pi (X_{H^s}) - E_H o pi| at points (X, s)."""
    X = _pts(X)
    lifted = lifted or extended_lift(sys)
    Xe = np.column_stack([X, np.broadcast_to(np.asarray(s_values, dtype=float), (X.shape[0],))])
    up = lcs_hamiltonian_vf(lifted)(Xe)[:, : X.shape[1]]
    return float(np.max(np.abs(up - evolution_vf(sys)(X))))


# -------------------------------------------------------------- scalar functions

class ScalarFn:
    """A pointwise scalar function with a gradient (exact for expressions, FD otherwise)."""

    def __init__(self, value: Callable[[np.ndarray], np.ndarray],
                 grad: Callable[[np.ndarray], np.ndarray] | None = None):
        self._value = value
        self._grad = grad

    def __call__(self, X) -> np.ndarray:
        return self._value(_pts(X))

    def grad(self, X) -> np.ndarray:
        X = _pts(X)
        if self._grad is not None:
            return self._grad(X)
        return fd_jacobian(self._value, X)

    @classmethod
    def coerce(cls, sys_or_structure, F) -> "ScalarFn":
        if isinstance(F, ScalarFn):
            return F
        s = sys_or_structure.structure if isinstance(sys_or_structure, HamiltonianSystem) else sys_or_structure
        chart, consts = s.chart, (sys_or_structure.constants if hasattr(sys_or_structure, "constants") else {})
        if isinstance(F, str):
            F = E.parse(F, chart.variables, consts)
        if isinstance(F, (int, float)):
            F = E.Num(float(F))
        if isinstance(F, Expr):
            dF = exterior_derivative(KForm.scalar(chart, F))
            return cls(lambda X: eval_expr(F, chart.env(X), consts, X.shape[:-1]),
                       lambda X: dF.evaluate(X, consts))
        if callable(F):
            return cls(F)
        raise TypeError(f"cannot use {type(F).__name__} as a scalar function")

    def __mul__(self, other: "ScalarFn") -> "ScalarFn":
        return ScalarFn(lambda X: self(X) * other(X),
                        lambda X: self(X)[:, None] * other.grad(X) + other(X)[:, None] * self.grad(X))


def poisson_bracket_symbolic(n: int, F: Expr, G: Expr) -> Expr:
    """Cosymplectic bracket {F, G} = F_q G_p - F_p G_q (Theta = 0)."""
    out = E.ZERO
    for i in range(n):
        q, p = f"q{i + 1}", f"p{i + 1}"
        out = E.add(out, E.sub(E.mul(F.diff(q), G.diff(p)), E.mul(F.diff(p), G.diff(q))))
    return out


def bivector_lcc(s, X, mu: np.ndarray, nu: np.ndarray) -> np.ndarray:
    """Lambda(mu, nu) = Omega(sharp mu, sharp nu) (omega for LCS structures)."""
    M = s.structure_matrix(X)
    A, B = musical_solve(M, mu), musical_solve(M, nu)
    return np.einsum("na,nab,nb->n", A, s.omega_at(X), B)


def jacobi_vector_lcc(s: LCCStructure) -> Field:
    """V with V(G) = Lambda(dG, 2 Theta), i.e. V = sharp(2 Theta) - 2 Theta(R) R."""
    def f(X):
        X = _pts(X)
        M = s.structure_matrix(X)
        th2 = 2.0 * s.theta_at(X)
        R = musical_solve(M, s.eta_at(X))
        return musical_solve(M, th2) - _dot(th2, R)[:, None] * R
    return f


def _bracket(s, F: ScalarFn, G: ScalarFn, V: Field) -> ScalarFn:
    def value(X):
        X = _pts(X)
        dF, dG = F.grad(X), G.grad(X)
        Vx = V(X)
        return bivector_lcc(s, X, dF, dG) + F(X) * _dot(dG, Vx) - G(X) * _dot(dF, Vx)
    return ScalarFn(value)


def jacobi_bracket_lcc(sys: HamiltonianSystem | LCCStructure, F, G) -> ScalarFn:
    """{F, G} = Lambda(dF, dG) + F V(G) - G V(F)."""
    s = sys.structure if isinstance(sys, HamiltonianSystem) else sys
    return _bracket(s, ScalarFn.coerce(sys, F), ScalarFn.coerce(sys, G), jacobi_vector_lcc(s))


def jacobi_bracket_lcs(sys: HamiltonianSystem | LCSStructure, F, G) -> ScalarFn:
    """{F, G} = Lambda(dF, dG) + F Z_theta(G) - G Z_theta(F)."""
    s = sys.structure if isinstance(sys, HamiltonianSystem) else sys
    return _bracket(s, ScalarFn.coerce(sys, F), ScalarFn.coerce(sys, G), lee_vf(s))


def lcs_bracket_via_fields(sys: HamiltonianSystem | LCSStructure, F, G) -> ScalarFn:
    """omega(X_F, X_G) with i_{X_F} omega = dF - F theta."""
    s = sys.structure if isinstance(sys, HamiltonianSystem) else sys
    F, G = ScalarFn.coerce(sys, F), ScalarFn.coerce(sys, G)

    def value(X):
        X = _pts(X)
        th = s.theta_at(X)
        M = s.structure_matrix(X)
        XF = musical_solve(M, F.grad(X) - F(X)[:, None] * th)
        XG = musical_solve(M, G.grad(X) - G(X)[:, None] * th)
        return np.einsum("na,nab,nb->n", XF, s.omega_at(X), XG)
    return ScalarFn(value)


def jacobi_identity_residual(bracket: Callable, F, G, K, X) -> float:
    """max |{F,{G,K}} + {G,{K,F}} + {K,{F,G}}| with inner brackets differentiated by FD."""
    X = _pts(X)
    total = (bracket(F, bracket(G, K))(X) + bracket(G, bracket(K, F))(X) + bracket(K, bracket(F, G))(X))
    return float(np.max(np.abs(total)))


@dataclass
class BracketReport:
    values: np.ndarray
    antisymmetry: float
    jacobi: float | None = None
    leibniz: float | None = None

    def as_dict(self) -> dict:
        return {"antisymmetry": self.antisymmetry, "jacobi": self.jacobi, "leibniz": self.leibniz}


def bracket_report(sys: HamiltonianSystem | LCCStructure | LCSStructure, F, G, X, K=None) -> BracketReport:
    """Bracket values plus antisymmetry, Leibniz and (if K is given) Jacobi residuals."""
    s = sys.structure if isinstance(sys, HamiltonianSystem) else sys
    brk = (lambda a, b: jacobi_bracket_lcc(sys, a, b)) if isinstance(s, LCCStructure) \
        else (lambda a, b: jacobi_bracket_lcs(sys, a, b))
    X = _pts(X)
    Ff, Gf = ScalarFn.coerce(sys, F), ScalarFn.coerce(sys, G)
    vals = brk(Ff, Gf)(X)
    anti = float(np.max(np.abs(vals + brk(Gf, Ff)(X))))
    rep = BracketReport(vals, anti)
    if K is not None:
        Kf = ScalarFn.coerce(sys, K)
        rep.jacobi = jacobi_identity_residual(brk, Ff, Gf, Kf, X)
        lhs = brk(Ff, Gf * Kf)(X)
        rep.leibniz = float(np.max(np.abs(lhs - Gf(X) * brk(Ff, Kf)(X) - Kf(X) * brk(Ff, Gf)(X))))
    return rep


# ------------------------------------------------------------- one-form algebra

OneForm = Callable[[np.ndarray], np.ndarray]


def _oneform(s, mu) -> OneForm:
    if isinstance(mu, KForm):
        if mu.degree != 1:
            raise ValueError("expected a one-form")
        return lambda X: mu.evaluate(_pts(X), s.constants)
    if callable(mu):
        return mu
    raise TypeError(f"cannot use {type(mu).__name__} as a one-form")


def _sharp_of(s, mu: OneForm) -> Field:
    return lambda X: musical_solve(s.structure_matrix(_pts(X)), mu(_pts(X)))


def lie_derivative_oneform(Y: Field, nu: OneForm, X) -> np.ndarray:
    """(L_Y nu)_b = Y^a d_a nu_b + nu_a d_b Y^a, derivatives by central differences."""
    X = _pts(X)
    Jn = fd_jacobian(nu, X)   # [n, b, a] = d_a nu_b
    JY = fd_jacobian(Y, X)    # [n, a, b] = d_b Y^a
    return np.einsum("na,nba->nb", Y(X), Jn) + np.einsum("na,nab->nb", nu(X), JY)


def commutator(A: Field, B: Field, X) -> np.ndarray:
    """[A, B]^a = A^b d_b B^a - B^b d_b A^a."""
    X = _pts(X)
    return np.einsum("nb,nab->na", A(X), fd_jacobian(B, X)) - np.einsum("nb,nab->na", B(X), fd_jacobian(A, X))


def _d_scalar(g: Callable, X) -> np.ndarray:
    return fd_jacobian(g, X)


def oneform_bracket_lcs(sys, mu, nu, theta_scale: float = 1.0) -> OneForm:
    """L_A nu - theta(A) nu - L_B mu + theta(B) mu + d_theta omega(A, B), A = sharp mu, B = sharp nu."""
    s = sys.structure if isinstance(sys, HamiltonianSystem) else sys
    mu, nu = _oneform(s, mu), _oneform(s, nu)
    A, B = _sharp_of(s, mu), _sharp_of(s, nu)

    def g(X):
        X = _pts(X)
        return np.einsum("na,nab,nb->n", A(X), s.omega_at(X), B(X))

    def f(X):
        X = _pts(X)
        th = theta_scale * s.theta_at(X)
        a, b = A(X), B(X)
        return (lie_derivative_oneform(A, nu, X) - _dot(th, a)[:, None] * nu(X)
                - lie_derivative_oneform(B, mu, X) + _dot(th, b)[:, None] * mu(X)
                + _d_scalar(g, X) - g(X)[:, None] * th)
    return f


def oneform_bracket_lcs_sym(sys, mu, nu) -> OneForm:
    """theta = 0 form: L_A nu - L_B mu + d omega(A, B)."""
    return oneform_bracket_lcs(sys, mu, nu, theta_scale=0.0)


def oneform_bracket_lcc(sys, mu, nu, theta_scale: float = 2.0) -> OneForm:
    """One-form bracket on an LCC structure (Lee weight ``theta_scale`` * Theta, 2 by default)."""
    s = sys.structure if isinstance(sys, HamiltonianSystem) else sys
    mu, nu = _oneform(s, mu), _oneform(s, nu)
    A, B = _sharp_of(s, mu), _sharp_of(s, nu)
    eta = lambda X: s.eta_at(_pts(X))  # noqa: E731

    def g(X):
        X = _pts(X)
        return np.einsum("na,nab,nb->n", A(X), s.omega_at(X), B(X))

    def eta_of(V):
        return lambda X: _dot(eta(X), V(_pts(X)))

    def f(X):
        X = _pts(X)
        th = theta_scale * s.theta_at(X)
        a, b, et = A(X), B(X), eta(X)
        thA, thB = _dot(th, a), _dot(th, b)
        etA, etB = _dot(et, a), _dot(et, b)
        out = (lie_derivative_oneform(A, nu, X) - thA[:, None] * nu(X)
               - lie_derivative_oneform(B, mu, X) + thB[:, None] * mu(X)
               + _d_scalar(g, X) - g(X)[:, None] * th)
        out += etA[:, None] * (lie_derivative_oneform(B, eta, X) - thB[:, None] * et)
        out -= etB[:, None] * (lie_derivative_oneform(A, eta, X) - thA[:, None] * et)
        scal = (_dot(et, commutator(A, B, X))
                - _dot(a, _d_scalar(eta_of(B), X)) + _dot(b, _d_scalar(eta_of(A), X)))
        return out + scal[:, None] * et
    return f


def oneform_bracket_lcc_sym(sys, mu, nu) -> OneForm:
    """Theta = 0 form of the LCC one-form bracket."""
    return oneform_bracket_lcc(sys, mu, nu, theta_scale=0.0)


def oneform_bracket_from_commutator(sys, mu, nu) -> OneForm:
    """flat([sharp mu, sharp nu]) - the defining property of the bracket."""
    s = sys.structure if isinstance(sys, HamiltonianSystem) else sys
    mu, nu = _oneform(s, mu), _oneform(s, nu)
    A, B = _sharp_of(s, mu), _sharp_of(s, nu)
    return lambda X: np.einsum("na,nab->nb", commutator(A, B, _pts(X)), s.structure_matrix(_pts(X)))


def _pick_bracket(s):
    return oneform_bracket_lcc if isinstance(s, LCCStructure) else oneform_bracket_lcs


def anchor_residual(sys, mu, nu, X) -> float:
    """max |sharp{mu, nu} - [sharp mu, sharp nu]|."""
    s = sys.structure if isinstance(sys, HamiltonianSystem) else sys
    X = _pts(X)
    br = _pick_bracket(s)(s, mu, nu)(X)
    lhs = musical_solve(s.structure_matrix(X), br)
    rhs = commutator(_sharp_of(s, _oneform(s, mu)), _sharp_of(s, _oneform(s, nu)), X)
    return float(np.max(np.abs(lhs - rhs)))


def anchor_leibniz_residual(sys, mu, nu, F, X) -> float:
    """max |{mu, F nu} - F {mu, nu} - (sharp mu)(F) nu|."""
    s = sys.structure if isinstance(sys, HamiltonianSystem) else sys
    X = _pts(X)
    Ff = ScalarFn.coerce(s, F)
    muf, nuf = _oneform(s, mu), _oneform(s, nu)
    Fnu = lambda Y: Ff(Y)[:, None] * nuf(Y)  # noqa: E731
    brk = _pick_bracket(s)
    lhs = brk(s, muf, Fnu)(X)
    rhs = Ff(X)[:, None] * brk(s, muf, nuf)(X) + _dot(_sharp_of(s, muf)(X), Ff.grad(X))[:, None] * nuf(X)
    return float(np.max(np.abs(lhs - rhs)))


# ------------------------------------------------------- Hamilton-Poincare forms

@dataclass
class HamiltonPoincare:
    theta_H: KForm
    omega_H: KForm
    system: HamiltonianSystem

    def reeb(self) -> Field:
        """R_H: i_R eta = 1, i_R Omega_H = 0."""
        s = self.system.structure

        def f(X):
            X = _pts(X)
            et = s.eta_at(X)
            M = self.omega_H.evaluate(X, s.constants) + et[:, :, None] * et[:, None, :]
            return musical_solve(M, et)
        return f

    def residuals(self, X) -> dict:
        X = _pts(X)
        s = self.system.structure
        two_theta = s.theta.scale(E.Num(2.0))
        exact = self.omega_H + ldr_differential(two_theta, self.theta_H)
        RH = self.reeb()(X)
        return {
            "omega_H_exact": exact.max_abs(X, s.constants),
            "R_H_vs_E_H": float(np.max(np.abs(RH - evolution_vf(self.system)(X)))),
        }


def hamilton_poincare(sys: HamiltonianSystem) -> HamiltonPoincare:
    """Theta_H = p_i dq^i - H d_Theta t, Omega_H = Omega + d_Theta H ^ d_Theta t."""
    _require_lcc(sys)
    s = sys.structure
    liouville = KForm.one_form(s.chart, {f"q{i + 1}": E.Var(f"p{i + 1}") for i in range(s.n)})
    theta_H = liouville - s.eta.scale(sys.H)
    omega_H = s.omega + wedge(sys.d_theta_H, s.eta)
    return HamiltonPoincare(theta_H, omega_H, sys)


# ------------------------------------------------------------------ integration

@dataclass
class Trajectory:
    tau: np.ndarray
    points: np.ndarray
    H: np.ndarray
    energy_residual: np.ndarray
    eta_residual: np.ndarray
    method: str
    dt: float
    steps: int
    field: str = "evolution"
    error: str | None = None
    chart: Chart | None = None

    @property
    def truncated(self) -> bool:
        return self.error is not None

    def columns(self) -> list[str]:
        return ["tau", *self.chart.variables, "H", "energy_residual", "eta_residual"]

    def rows(self) -> np.ndarray:
        return np.column_stack([self.tau, self.points, self.H, self.energy_residual, self.eta_residual])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns())
        for row in self.rows():
            w.writerow([f"{v:.17g}" for v in row])
        return buf.getvalue()


class _PointKernel:
    """Single-point evaluation of eta, Omega, d_Theta H, H and 1 - t zeta in one compiled call.

    Integration evaluates the same handful of expressions thousands of times at
    one point each; going through the array API there costs ~30x more.
    """

    def __init__(self, sys: HamiltonianSystem):
        s = sys.structure
        self.names = s.chart.variables
        self.dim = len(self.names)
        self.constants = sys.constants
        self._eta = sorted(s.eta.components.items())
        self._omega = sorted(s.omega.components.items())
        self._mu = sorted(sys.d_theta_H.components.items())
        exprs = [v for _, v in self._eta] + [v for _, v in self._omega] + [v for _, v in self._mu]
        self._fn = E.compile_many(exprs + [sys.H, s.reeb_denominator])

    def __call__(self, x: np.ndarray):
        """(eta, M, mu, H, den) at the point x; M = Omega + eta eta^T."""
        V = dict(zip(self.names, map(float, x)))
        with np.errstate(all="ignore"):
            vals = self._fn(V, self.constants)
        d = self.dim
        eta, om, mu = np.zeros(d), np.zeros((d, d)), np.zeros(d)
        k = 0
        for (a,), _ in self._eta:
            eta[a] = vals[k]
            k += 1
        for (a, b), _ in self._omega:
            om[a, b] = vals[k]
            om[b, a] = -vals[k]
            k += 1
        for (a,), _ in self._mu:
            mu[a] = vals[k]
            k += 1
        return eta, om + np.outer(eta, eta), mu, float(vals[k]), float(vals[k + 1])

    def fields(self, x: np.ndarray):
        """(eta, mu, H, den, sharp mu, R) at x."""
        eta, M, mu, H, den = self(x)
        det = np.linalg.det(M)
        if not np.isfinite(det) or abs(det) <= DET_EPS:
            raise SingularStructure("musical matrix is singular at an evaluation point")
        sol = np.linalg.solve(M.T, np.column_stack([mu, eta]))
        return eta, mu, H, den, sol[:, 0], sol[:, 1]


def _kernel_field(kind: str, G: np.ndarray, R: np.ndarray, mu: np.ndarray) -> np.ndarray:
    if kind == "gradient":
        return G
    c = float(mu @ R)
    return G - c * R + (R if kind == "evolution" else 0.0)


_FIELDS = {"evolution": evolution_vf, "hamiltonian": hamiltonian_vf, "gradient": gradient_vf}


def integrate(sys: HamiltonianSystem, x0: Sequence[float], steps: int, dt: float, method: str = "rk4",
              field: str = "evolution") -> Trajectory:
    """Fixed-step integration of x' = E_H(x) (or X_H / grad H); stops early at singular points."""
    _require_lcc(sys)
    if dt <= 0 or steps < 1:
        raise ValueError("need dt > 0 and steps >= 1")
    if method not in ("rk4", "euler"):
        raise ValueError(f"unknown method {method!r}")
    if field not in _FIELDS:
        raise ValueError(f"unknown field {field!r}")
    s = sys.structure
    kern = _PointKernel(sys)
    x = np.asarray(x0, dtype=float).reshape(-1)
    if x.shape[0] != s.chart.dim:
        raise ValueError(f"x0 must have {s.chart.dim} coordinates")
    target_eta = {"evolution": 1.0, "hamiltonian": 0.0}.get(field)

    pts, Hs, er, eta_r = [], [], [], []
    error = None
    side = 1.0 if kern(x)[4] >= 0 else -1.0

    def guarded(y):
        # a stage landing on, or across, 1 - t zeta = 0 is singular
        eta, mu, H, den, G, R = kern.fields(y)
        if side * den <= 1e-12:
            raise SingularPoint("1 - t zeta vanishes")
        v = _kernel_field(field, G, R, mu)
        if not np.all(np.isfinite(v)):
            raise SingularPoint("non-finite vector field value")
        return v, (eta, mu, H, G, R)

    def record(y, parts):
        eta, mu, H, G, R = parts
        xh = _kernel_field("hamiltonian", G, R, mu)
        v = _kernel_field(field, G, R, mu)
        pts.append(y.copy())
        Hs.append(H)
        er.append(abs(float(mu @ xh)))
        eta_val = float(eta @ v)
        eta_r.append(abs(eta_val - target_eta) if target_eta is not None else abs(eta_val - float(mu @ R)))

    try:
        k1, parts = guarded(x)
        record(x, parts)
    except (SingularPoint, SingularStructure, E.DomainError) as exc:
        raise SingularPoint(f"initial point is singular: {exc}") from exc
    for k in range(steps):
        try:
            if method == "euler":
                x_new = x + dt * k1
            else:
                k2 = guarded(x + 0.5 * dt * k1)[0]
                k3 = guarded(x + 0.5 * dt * k2)[0]
                k4 = guarded(x + dt * k3)[0]
                x_new = x + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            k1, parts = guarded(x_new)
            record(x_new, parts)
            x = x_new
        except (SingularPoint, SingularStructure, E.DomainError) as exc:
            error = f"singular at step {k + 1}: {exc}"
            break
    m = len(pts)
    return Trajectory(np.arange(m) * dt, np.array(pts), np.array(Hs), np.array(er), np.array(eta_r),
                      method, dt, steps, field, error, s.chart)
