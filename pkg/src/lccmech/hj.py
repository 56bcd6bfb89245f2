"""Hamilton-Jacobi checks for generating functions S(q, t).

The section gamma(q, t) = (q, S_q, t) solves the Hamilton-Jacobi problem when
the evolution field E_H is tangent to its image. Three equivalent residuals
are provided per regime:

* relatedness: T gamma(E^gamma) - E_H o gamma (p-components);
* the regime's PDE (cosymplectic: H_{q_i} + H_{p_j} S_{q_j q_i} + S_{q_i t};
  LCC: (H o gamma)_{:i} + (S_t)_{:i});
* for LCC, the d_Psi q-coefficients of d_Psi(H^s o gamma~) (span check).

The equivalence of these residuals presumes im gamma~ is Lagrangian in the
symplectization; :func:`lagrangian_residual` reports that hypothesis, which can
fail for LdR-closed dS when the Lee form has both dq and dt parts.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from . import expr as E
from .calculus import (Chart, ClosednessReport, LeeForm, SingularPoint, check_denominator, eval_expr,
                       ldr_closedness_residual, ldr_function_coefficients, ldr_oneform_decompose)
from .dynamics import HamiltonianSystem, evolution_vf, extended_lift, lcs_hamiltonian_vf
from .expr import Expr
from .geometry import LCCStructure, LCSStructure, symplectize

__all__ = [
    "SDependsOnP", "RegimeMismatch", "HJCandidate", "HJReport", "build_candidate", "default_grid",
    "project_fields", "relatedness_residual", "lagrangian_residual", "hj_residual", "vertical_lift_residual", "regime_of",
    "equivalence_verdict",
]

TOL = 1e-8


class SDependsOnP(ValueError):
    pass


class RegimeMismatch(ValueError):
    pass


def default_grid(n: int, per_axis: int = 10, q_range=(-1.0, 1.0), t_range=(0.2, 1.2),
                 with_t: bool = True) -> np.ndarray:
    """Lattice on [-1, 1]^n x [0.2, 1.2] (columns q1..qn[, t])."""
    axes = [np.linspace(*q_range, per_axis)] * n
    if with_t:
        axes.append(np.linspace(*t_range, per_axis))
    return np.array(list(itertools.product(*axes)), dtype=float)


def regime_of(sys: HamiltonianSystem) -> str:
    if isinstance(sys.structure, LCSStructure):
        return "symplectic"
    return "cosymplectic" if sys.structure.lee.is_zero else "lcc"


@dataclass
class HJCandidate:
    S: Expr
    n: int
    time_dependent: bool
    constants: dict

    @property
    def base_chart(self) -> Chart:
        return Chart(self.n, "base" if self.time_dependent else "cotangent")

    @property
    def gamma_bar(self) -> list[Expr]:
        return [self.S.diff(f"q{i + 1}") for i in range(self.n)]

    @property
    def gamma_barbar(self) -> Expr:
        return self.S.diff("t")

    def _ev(self, e: Expr, Q: np.ndarray) -> np.ndarray:
        names = [f"q{i + 1}" for i in range(self.n)] + (["t"] if self.time_dependent else [])
        env = {v: Q[:, a] for a, v in enumerate(names)}
        return eval_expr(e, env, self.constants, Q.shape[:1])

    def gamma(self, Q: np.ndarray) -> np.ndarray:
        """(q, S_q, t) for base points Q = (q, t) (or (q, S_q) without t)."""
        Q = np.atleast_2d(Q)
        ps = np.column_stack([self._ev(g, Q) for g in self.gamma_bar])
        cols = [Q[:, : self.n], ps]
        if self.time_dependent:
            cols.append(Q[:, self.n:self.n + 1])
        return np.column_stack(cols)

    def gamma_tilde(self, Q: np.ndarray) -> np.ndarray:
        """(q, S_q, t, S_t)."""
        Q = np.atleast_2d(Q)
        return np.column_stack([self.gamma(Q), self._ev(self.gamma_barbar, Q)])

    def closedness(self, lee: LeeForm, Q: np.ndarray) -> ClosednessReport:
        """LdR-closedness of dS: psi_i S_j = psi_j S_i and S_t psi_i = zeta S_i."""
        return ldr_closedness_residual(self.gamma_bar, self.gamma_barbar, lee, Q, self.constants)


def build_candidate(S: Expr | str, sys: HamiltonianSystem) -> HJCandidate:
    time_dep = sys.is_lcc
    n = sys.n
    names = [f"q{i + 1}" for i in range(n)] + (["t"] if time_dep else [])
    if isinstance(S, str):
        try:
            S = E.parse(S, names, sys.constants)
        except E.UnknownIdentifierError as exc:
            if exc.name.startswith("p") or exc.name == "s":
                raise SDependsOnP(f"S must not depend on {exc.name}") from exc
            raise
    bad = S.free_variables - set(names)
    if bad:
        raise SDependsOnP(f"S depends on {sorted(bad)}; only {names} are allowed")
    return HJCandidate(S, n, time_dep, dict(sys.constants))


@dataclass
class HJReport:
    regime: str
    residuals: np.ndarray                  # (N, n)
    relatedness: np.ndarray | None = None  # (N, n)
    span: np.ndarray | None = None         # (N, n)
    classical: np.ndarray | None = None    # (N,)
    closedness: ClosednessReport | None = None
    extra: dict = field(default_factory=dict)

    @property
    def max(self) -> float:
        return float(np.max(np.abs(self.residuals))) if self.residuals.size else 0.0

    @property
    def rms(self) -> float:
        return float(np.sqrt(np.mean(self.residuals ** 2))) if self.residuals.size else 0.0

    def summary(self) -> dict:
        out = {"regime": self.regime, "max": self.max, "rms": self.rms}
        if self.relatedness is not None:
            out["relatedness_max"] = float(np.max(np.abs(self.relatedness)))
        if self.span is not None:
            out["span_max"] = float(np.max(np.abs(self.span)))
        if self.classical is not None:
            out["classical_max"] = float(np.max(np.abs(self.classical)))
        if self.closedness is not None:
            out["closedness_max"] = self.closedness.max
        out.update(self.extra)
        return out


def _grid(cand: HJCandidate, Q):
    if Q is None:
        Q = default_grid(cand.n, with_t=cand.time_dependent)
    return np.atleast_2d(np.asarray(Q, dtype=float))


def _subs_p(e: Expr, cand: HJCandidate) -> Expr:
    return E.substitute(e, {f"p{i + 1}": g for i, g in enumerate(cand.gamma_bar)})


def _check_gamma(sys: HamiltonianSystem, pts: np.ndarray):
    s = sys.structure
    if isinstance(s, LCCStructure):
        den = eval_expr(s.reeb_denominator, s.chart.env(pts), s.constants, pts.shape[:1])
        if np.any(np.abs(den) <= 1e-12):
            raise SingularPoint("1 - t zeta vanishes along gamma")


def project_fields(sys: HamiltonianSystem, cand: HJCandidate, Q=None):
    """(X^gamma~_{H^s}, E^gamma_H, coincidence residual) on (q, t)-space."""
    Q = _grid(cand, Q)
    n = sys.n
    g = cand.gamma(Q)
    _check_gamma(sys, g)
    keep = list(range(n)) + [2 * n]
    Eg = evolution_vf(sys)(g)[:, keep]
    lifted = extended_lift(sys)
    Xg = lcs_hamiltonian_vf(lifted)(cand.gamma_tilde(Q))[:, keep]
    return Xg, Eg, float(np.max(np.abs(Xg - Eg)))


def lagrangian_residual(sys: HamiltonianSystem, cand: HJCandidate, Q=None) -> float:
    """max |gamma~* omega_bar| over base-coordinate pairs.

    LdR-closedness of dS is necessary but, once psi and zeta are both nonzero,
    not sufficient for im gamma~ to be Lagrangian in the symplectization; the
    equivalence HJ <=> relatedness needs the latter.
    """
    if not isinstance(sys.structure, LCCStructure):
        raise RegimeMismatch("Lagrangian check applies to LCC/cosymplectic systems")
    Q = _grid(cand, Q)
    n = sys.n
    lcs = symplectize(sys.structure)
    om = lcs.omega_at(cand.gamma_tilde(Q))
    base = [f"q{i + 1}" for i in range(n)] + ["t"]
    # columns of T gamma~ in (q, p, t, s) order
    T = np.zeros((len(Q), 2 * n + 2, n + 1))
    for a, x in enumerate(base):
        T[:, a if a < n else 2 * n, a] = 1.0
        for j in range(n):
            T[:, n + j, a] = cand._ev(cand.gamma_bar[j].diff(x), Q)
        T[:, 2 * n + 1, a] = cand._ev(cand.gamma_barbar.diff(x), Q)
    pull = np.einsum("nai,nab,nbj->nij", T, om, T)
    return float(np.max(np.abs(pull)))


def relatedness_residual(sys: HamiltonianSystem, cand: HJCandidate, Q=None) -> HJReport:
    """p-components of T gamma(E^gamma) - E_H o gamma (q, t components agree by construction)."""
    Q = _grid(cand, Q)
    n = sys.n
    g = cand.gamma(Q)
    _check_gamma(sys, g)
    if regime_of(sys) == "symplectic":
        V = lcs_hamiltonian_vf(sys)(g)
        vq, vt = V[:, :n], None
    else:
        V = evolution_vf(sys)(g)
        vq, vt = V[:, :n], V[:, 2 * n]
    res = np.zeros((len(Q), n))
    for i in range(n):
        Si = cand.gamma_bar[i]
        acc = sum(cand._ev(Si.diff(f"q{j + 1}"), Q) * vq[:, j] for j in range(n))
        if vt is not None:
            acc = acc + cand._ev(Si.diff("t"), Q) * vt
        res[:, i] = acc - V[:, n + i]
    return HJReport(regime_of(sys), res, relatedness=res)


def hj_residual(sys: HamiltonianSystem, cand: HJCandidate, regime: str | None = None, Q=None,
                with_relatedness: bool = True) -> HJReport:
    """Per-q-direction residual of the regime's Hamilton-Jacobi equation."""
    regime = regime or regime_of(sys)
    Q = _grid(cand, Q)
    n = sys.n
    H = sys.H
    if regime == "symplectic":
        theta = [sys.lee.coefficient(f"q{i + 1}") for i in range(n)]
        F = _subs_p(H, cand)
        res = np.column_stack([cand._ev(E.sub(F.diff(f"q{i + 1}"), E.mul(theta[i], F)), Q) for i in range(n)])
        rep = HJReport(regime, res)
    elif regime == "cosymplectic":
        if not (isinstance(sys.structure, LCCStructure) and sys.structure.lee.is_zero):
            raise RegimeMismatch("cosymplectic regime requires Theta = 0")
        cols = []
        for i in range(n):
            e = _subs_p(H.diff(f"q{i + 1}"), cand)
            for j in range(n):
                e = E.add(e, E.mul(_subs_p(H.diff(f"p{j + 1}"), cand), cand.gamma_bar[j].diff(f"q{i + 1}")))
            e = E.add(e, cand.gamma_bar[i].diff("t"))
            cols.append(cand._ev(e, Q))
        classical = cand._ev(E.add(cand.gamma_barbar, _subs_p(H, cand)), Q)
        rep = HJReport(regime, np.column_stack(cols), classical=classical)
        rep.closedness = cand.closedness(sys.structure.lee, Q)
    elif regime == "lcc":
        if not isinstance(sys.structure, LCCStructure):
            raise RegimeMismatch("LCC regime requires an LCC structure")
        lee = sys.structure.lee
        check_denominator(lee, Q, sys.constants)
        F = _subs_p(H, cand)
        G = cand.gamma_barbar
        Fc, _ = ldr_function_coefficients(F, lee)
        Gc, _ = ldr_function_coefficients(G, lee)
        res = np.column_stack([cand._ev(E.add(Fc[i], Gc[i]), Q) for i in range(n)])
        # span check: d_Psi(H^s o gamma~) in the basis (d_Psi q^i, d_Psi t)
        K = E.add(F, G)
        bar = [E.sub(K.diff(f"q{i + 1}"), E.mul(lee.psi[i], K)) for i in range(n)]
        barbar = E.sub(K.diff("t"), E.mul(lee.zeta, K))
        hat, _ = ldr_oneform_decompose(bar, barbar, lee)
        span = np.column_stack([cand._ev(h, Q) for h in hat])
        rep = HJReport(regime, res, span=span)
        rep.closedness = cand.closedness(lee, Q)
        rep.extra["lagrangian_max"] = lagrangian_residual(sys, cand, Q)
    else:
        raise ValueError(f"unknown regime {regime!r}")
    if with_relatedness:
        rep.relatedness = relatedness_residual(sys, cand, Q).residuals
    return rep


def vertical_lift_residual(sys: HamiltonianSystem, cand: HJCandidate, Q=None) -> HJReport:
    """[d(H o gamma^t)]^V - d gamma/dt in fiber coordinates (cosymplectic only).

    The vertical lift of alpha = F_i dq^i through dq ^ dp is -F_i d/dp_i.
    """
    if not (isinstance(sys.structure, LCCStructure) and sys.structure.lee.is_zero):
        raise RegimeMismatch("vertical-lift form requires Theta = 0")
    Q = _grid(cand, Q)
    n = sys.n
    F = _subs_p(sys.H, cand)
    res = np.column_stack([
        cand._ev(E.sub(E.neg(F.diff(f"q{i + 1}")), cand.gamma_bar[i].diff("t")), Q) for i in range(n)
    ])
    return HJReport("cosymplectic", res)


def equivalence_verdict(hj_max: float, relatedness_max: float, tol: float = TOL) -> str:
    """'consistent' when both residuals agree on solution/non-solution status."""
    return "consistent" if (hj_max < tol) == (relatedness_max < tol) else "inconsistent"
