"""Cosymplectic, LCC and LCS structures on Darboux charts.

An LCC structure on ``(q, p, t)`` is determined by a closed Lee form
Theta(q, t)::

    eta   = d_Theta t = dt - t Theta
    Omega = dq^i ^ dp_i + 2 p_i Theta ^ dq^i       (= -d_{2 Theta}(p_i dq^i))

so that ``d eta = Theta ^ eta`` and ``d Omega = 2 Theta ^ Omega``. Musical maps
use ``flat(X) = i_X Omega + eta(X) eta``; ``sharp`` is a pointwise dense solve.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from . import expr as E
from .calculus import (Chart, KForm, LeeForm, VectorField, eval_expr,
                       exterior_derivative, interior_product, ldr_denominator, ldr_differential,
                       sample_points, wedge)
from .expr import Expr

__all__ = [
    "SingularStructure", "NonClosedLeeForm", "ValidationReport",
    "LCCStructure", "LCSStructure", "ConformalFactor", "LocalChartData",
    "build_cosymplectic", "build_lcc", "build_lcs_cotangent", "symplectize", "omega_bar_darboux",
    "flat", "flat_at", "sharp", "sharp_field", "reeb", "reeb_closed_form", "conformal_rescale",
    "musical_solve", "DET_EPS", "SAMPLE_REJECT",
]

DET_EPS = 1e-12
SAMPLE_REJECT = 0.1   # declared denominators must exceed this at sample points
VOLUME_EPS = 1e-9

Field = Callable[[np.ndarray], np.ndarray]


class SingularStructure(ArithmeticError):
    """The musical matrix is not invertible at an evaluation point."""


class NonClosedLeeForm(ValueError):
    pass


@dataclass
class ValidationReport:
    """Max-abs residuals over the sample set (``min_volume`` is a minimum)."""

    residuals: dict = field(default_factory=dict)
    min_volume: float = float("nan")
    tolerance: float = 1e-10
    samples: int = 0

    @property
    def ok(self) -> bool:
        return all(v < self.tolerance for v in self.residuals.values()) and self.min_volume > VOLUME_EPS


def _top_power(omega: KForm, k: int) -> KForm:
    out = omega
    for _ in range(k - 1):
        out = wedge(out, omega)
    return out


def musical_solve(M: np.ndarray, mu: np.ndarray) -> np.ndarray:
    """Solve X^a M_ab = mu_b pointwise (``M`` shape (N, d, d), ``mu`` (N, d))."""
    M = np.asarray(M, dtype=float)
    mu = np.asarray(mu, dtype=float)
    det = np.linalg.det(M)
    if np.any(~np.isfinite(det)) or np.any(np.abs(det) <= DET_EPS):
        raise SingularStructure("musical matrix is singular at an evaluation point")
    MT = np.swapaxes(M, -1, -2)
    X = np.linalg.solve(MT, mu[..., None])[..., 0]
    res = np.linalg.norm(np.einsum("nab,nb->na", MT, X) - mu, axis=-1)
    scale = np.maximum(np.linalg.norm(mu, axis=-1), 1e-300)
    if np.any(res > 1e-12 * scale * max(1.0, float(np.max(np.abs(M))))):
        # one step of iterative refinement before giving up on the contract
        X = X + np.linalg.solve(MT, (mu - np.einsum("nab,nb->na", MT, X))[..., None])[..., 0]
    return X


# --------------------------------------------------------------------- LCC

class LCCStructure:
    """(eta, Omega, Theta) on the chart (q, p, t); Theta = 0 is the cosymplectic case."""

    def __init__(self, n: int, lee: LeeForm, constants: Mapping[str, float] | None = None):
        if lee.n != n:
            raise ValueError("Lee form dimension does not match n")
        self.n = n
        self.chart = Chart(n, "cosymplectic")
        self.lee = lee
        self.constants = dict(constants or {})
        c = self.chart
        self.theta = lee.form(c)
        t = E.Var("t")
        self.eta = ldr_differential(self.theta, KForm.scalar(c, t))
        liouville = KForm.one_form(c, {f"q{i + 1}": E.Var(f"p{i + 1}") for i in range(n)})
        self.omega = KForm(c, 2, {(i, n + i): E.ONE for i in range(n)})
        # 2 p_i Theta ^ dq^i
        self.omega = self.omega + wedge(self.theta.scale(E.Num(2.0)), liouville)
        self.report = ValidationReport()

    # -- denominators and sampling
    @property
    def reeb_denominator(self) -> Expr:
        return E.sub(E.ONE, E.mul(E.Var("t"), self.lee.zeta))

    def denominators(self) -> list[Expr]:
        dens = [self.reeb_denominator]
        if not self.lee.is_zero:
            dens.append(ldr_denominator(self.lee))
        return dens

    def reject(self, X: np.ndarray, threshold: float = SAMPLE_REJECT) -> np.ndarray:
        env = self.chart.env(X)
        bad = np.zeros(X.shape[0], dtype=bool)
        for d in self.denominators():
            try:
                v = eval_expr(d, env, self.constants, X.shape[:-1])
            except E.DomainError:
                return np.ones(X.shape[0], dtype=bool) if X.shape[0] == 1 else self._reject_rowwise(X, threshold)
            bad |= ~np.isfinite(v) | (np.abs(v) < threshold)
        return bad

    def _reject_rowwise(self, X, threshold):
        return np.array([bool(self.reject(X[i:i + 1], threshold)[0]) for i in range(X.shape[0])])

    def sample(self, count: int = 100, seed: int = 42) -> np.ndarray:
        return sample_points(self.chart.dim, count, seed, self.reject)

    # -- pointwise data
    def eta_at(self, X: np.ndarray) -> np.ndarray:
        return self.eta.evaluate(X, self.constants)

    def omega_at(self, X: np.ndarray) -> np.ndarray:
        return self.omega.evaluate(X, self.constants)

    def theta_at(self, X: np.ndarray) -> np.ndarray:
        return self.theta.evaluate(X, self.constants)

    def structure_matrix(self, X: np.ndarray) -> np.ndarray:
        """M_ab = Omega_ab + eta_a eta_b."""
        X = np.atleast_2d(X)
        et = self.eta_at(X)
        return self.omega_at(X) + et[:, :, None] * et[:, None, :]

    def volume_coefficient(self, X: np.ndarray) -> np.ndarray:
        vol = wedge(self.eta, _top_power(self.omega, self.n))
        key = tuple(range(self.chart.dim))
        X = np.atleast_2d(X)
        return vol.values(X, self.constants).get(key, np.zeros(X.shape[0]))

    def validate(self, samples: int = 100, seed: int = 42, tol: float = 1e-10) -> ValidationReport:
        X = self.sample(samples, seed)
        Xb = X[:, [base_idx for base_idx in self._base_columns()]]
        res = {
            "d_theta": self.lee.closedness_residual(Xb, self.constants),
            "d_theta_eta": ldr_differential(self.theta, self.eta).max_abs(X, self.constants),
            "d_2theta_omega": ldr_differential(self.theta.scale(E.Num(2.0)), self.omega).max_abs(X, self.constants),
        }
        rep = ValidationReport(res, float(np.min(np.abs(self.volume_coefficient(X)))), tol, len(X))
        self.report = rep
        return rep

    def _base_columns(self) -> list[int]:
        return [self.chart.index(v) for v in Chart(self.n, "base").variables]

    def __repr__(self) -> str:
        return f"LCCStructure(n={self.n}, psi={[str(x) for x in self.lee.psi]}, zeta={self.lee.zeta})"


def build_cosymplectic(n: int, constants: Mapping[str, float] | None = None) -> LCCStructure:
    s = LCCStructure(n, LeeForm.zero(n), constants)
    s.report = ValidationReport({"d_theta": 0.0, "d_theta_eta": 0.0, "d_2theta_omega": 0.0}, 1.0, 1e-10, 0)
    return s


def build_lcc(n: int, lee: LeeForm, constants: Mapping[str, float] | None = None, *,
              samples: int = 100, seed: int = 42, tol: float = 1e-10) -> LCCStructure:
    """Build and validate; raises :class:`NonClosedLeeForm` if d Theta does not vanish."""
    s = LCCStructure(n, lee, constants)
    rep = s.validate(samples, seed, tol)
    if rep.residuals["d_theta"] >= tol:
        raise NonClosedLeeForm(f"d Theta residual {rep.residuals['d_theta']:.3e} exceeds {tol:g}")
    return s


# ------------------------------------------------------------------ musical

def flat(s: LCCStructure, X: VectorField) -> KForm:
    """Symbolic flat: i_X Omega + eta(X) eta."""
    return interior_product(X, s.omega) + s.eta.scale(interior_product(X, s.eta).scalar_value)


def flat_at(s, X: np.ndarray, V: np.ndarray) -> np.ndarray:
    """Pointwise flat of vectors ``V`` at points ``X``."""
    return np.einsum("na,nab->nb", np.atleast_2d(V), s.structure_matrix(X))


def _mu_values(s, mu, X):
    if isinstance(mu, KForm):
        return mu.evaluate(X, s.constants)
    if callable(mu):
        return np.asarray(mu(X))
    return np.broadcast_to(np.asarray(mu, dtype=float), X.shape).copy()


def sharp(s, mu, at: np.ndarray) -> np.ndarray:
    """Solve X^a M_ab = mu_b at the points ``at``; ``mu`` is a KForm, callable or array."""
    X = np.atleast_2d(np.asarray(at, dtype=float))
    return musical_solve(s.structure_matrix(X), _mu_values(s, mu, X))


def sharp_field(s, mu) -> Field:
    return lambda X: sharp(s, mu, X)


def reeb(s: LCCStructure) -> Field:
    """R = sharp(eta)."""
    return sharp_field(s, s.eta)


def reeb_closed_form(s: LCCStructure) -> VectorField:
    """R = 1/(1 - t zeta) d_t + 2 p_i zeta/(1 - t zeta) d_{p_i}."""
    D = s.reeb_denominator
    comps = {"t": E.div(E.ONE, D)}
    for i in range(s.n):
        comps[f"p{i + 1}"] = E.div(E.mul(E.mul(E.Num(2.0), E.Var(f"p{i + 1}")), s.lee.zeta), D)
    return VectorField.from_dict(s.chart, comps)


# --------------------------------------------------------------------- LCS

class LCSStructure:
    """Almost symplectic omega with d omega = theta ^ omega on an even-dimensional chart."""

    def __init__(self, chart: Chart, omega: KForm, lee: KForm, constants: Mapping[str, float] | None = None,
                 u: KForm | None = None, parent: LCCStructure | None = None):
        if chart.dim % 2:
            raise ValueError("LCS chart must be even dimensional")
        self.chart = chart
        self.n = chart.n
        self.omega = omega
        self.theta = lee
        self.u = u
        self.parent = parent
        self.constants = dict(constants or {})
        self.report = ValidationReport()

    def reject(self, X: np.ndarray, threshold: float = SAMPLE_REJECT) -> np.ndarray:
        if self.parent is None:
            return np.zeros(X.shape[0], dtype=bool)
        cols = [self.chart.index(v) for v in self.parent.chart.variables]
        return self.parent.reject(X[:, cols], threshold)

    def sample(self, count: int = 100, seed: int = 42) -> np.ndarray:
        return sample_points(self.chart.dim, count, seed, self.reject)

    def omega_at(self, X):
        return self.omega.evaluate(X, self.constants)

    def theta_at(self, X):
        return self.theta.evaluate(X, self.constants)

    def structure_matrix(self, X):
        return self.omega_at(np.atleast_2d(X))

    def top_coefficient(self, X) -> np.ndarray:
        top = _top_power(self.omega, self.chart.dim // 2)
        X = np.atleast_2d(X)
        return top.values(X, self.constants).get(tuple(range(self.chart.dim)), np.zeros(X.shape[0]))

    def validate(self, samples: int = 100, seed: int = 42, tol: float = 1e-10) -> ValidationReport:
        X = self.sample(samples, seed)
        res = {
            "d_theta": exterior_derivative(self.theta).max_abs(X, self.constants),
            "d_omega_minus_theta_omega": ldr_differential(self.theta, self.omega).max_abs(X, self.constants),
        }
        self.report = ValidationReport(res, float(np.min(np.abs(self.top_coefficient(X)))), tol, len(X))
        return self.report


def symplectize(s: LCCStructure, *, samples: int = 100, seed: int = 42, tol: float = 1e-10,
                validate: bool = True) -> LCSStructure:
    """omega_bar = pi*Omega + pi*eta ^ u, u = ds - s pi*Theta; Lee form 2 pi*Theta."""
    ext = s.chart.extended()
    theta = s.theta.pulled_to(ext)
    u = KForm.dx(ext, "s") - theta.scale(E.Var("s"))
    omega_bar = s.omega.pulled_to(ext) + wedge(s.eta.pulled_to(ext), u)
    lcs = LCSStructure(ext, omega_bar, theta.scale(E.Num(2.0)), s.constants, u=u, parent=s)
    if validate:
        lcs.validate(samples, seed, tol)
    return lcs


def omega_bar_darboux(s: LCCStructure) -> KForm:
    """-d_{2 Theta}(p_i dq^i + (s dt - t ds)/2), the Darboux expansion of omega_bar."""
    ext = s.chart.extended()
    coeffs: dict = {f"q{i + 1}": E.Var(f"p{i + 1}") for i in range(s.n)}
    coeffs["t"] = E.mul(E.Num(0.5), E.Var("s"))
    coeffs["s"] = E.mul(E.Num(-0.5), E.Var("t"))
    return -ldr_differential(s.theta.pulled_to(ext).scale(E.Num(2.0)), KForm.one_form(ext, coeffs))


def build_lcs_cotangent(n: int, psi, constants: Mapping[str, float] | None = None, *,
                        samples: int = 100, seed: int = 42, tol: float = 1e-10) -> LCSStructure:
    """omega_theta = dq^i ^ dp_i + theta ^ (p_i dq^i) on T*Q with semi-basic theta = psi_i(q) dq^i."""
    chart = Chart(n, "cotangent")
    psi = tuple(E._lift(x) for x in psi)
    for c in psi:
        if c.free_variables - {f"q{i + 1}" for i in range(n)}:
            raise ValueError("theta must be semi-basic and depend on q only")
    theta = KForm.one_form(chart, {f"q{i + 1}": c for i, c in enumerate(psi)})
    liouville = KForm.one_form(chart, {f"q{i + 1}": E.Var(f"p{i + 1}") for i in range(n)})
    omega = KForm(chart, 2, {(i, n + i): E.ONE for i in range(n)}) + wedge(theta, liouville)
    lcs = LCSStructure(chart, omega, theta, constants)
    lcs.validate(samples, seed, tol)
    return lcs


# -------------------------------------------------------- conformal rescaling

@dataclass(frozen=True)
class ConformalFactor:
    sigma: Expr

    def kappa(self, other: "ConformalFactor") -> Expr:
        """kappa_{other,self} = exp(-(sigma_other - sigma_self))."""
        return E.call("exp", E.neg(E.sub(other.sigma, self.sigma)))

    def lam(self, other: "ConformalFactor") -> Expr:
        return E.call("exp", E.mul(E.Num(-2.0), E.sub(other.sigma, self.sigma)))


@dataclass
class LocalChartData:
    """Locally rescaled cosymplectic data on one chart."""

    eta: KForm
    omega: KForm
    hamiltonian: Expr
    X: Field
    R: Field
    constants: dict

    def residuals(self, X: np.ndarray) -> dict:
        """Local cosymplectic Hamilton equations and closedness of (eta_a, Omega_a)."""
        X = np.atleast_2d(X)
        c = self.constants
        Xa, Ra = self.X(X), self.R(X)
        et, om = self.eta.evaluate(X, c), self.omega.evaluate(X, c)
        dH = exterior_derivative(KForm.scalar(self.eta.chart, self.hamiltonian)).evaluate(X, c)
        RH = np.einsum("na,na->n", dH, Ra)
        lhs = np.einsum("na,nab->nb", Xa, om)
        rhs = dH - RH[:, None] * et
        return {
            "iX_eta": float(np.max(np.abs(np.einsum("na,na->n", Xa, et)))),
            "iX_omega": float(np.max(np.abs(lhs - rhs))),
            "iR_eta": float(np.max(np.abs(np.einsum("na,na->n", Ra, et) - 1.0))),
            "iR_omega": float(np.max(np.abs(np.einsum("na,nab->nb", Ra, om)))),
            "d_eta": exterior_derivative(self.eta).max_abs(X, c),
            "d_omega": exterior_derivative(self.omega).max_abs(X, c),
        }


def conformal_rescale(s: LCCStructure, H: Expr, X: Field, sigma: ConformalFactor,
                      R: Field | None = None) -> LocalChartData:
    """eta_a = e^{-sigma} eta, Omega_a = e^{-2 sigma} Omega, H_a = e^{-sigma} H, X_a = e^{sigma} X_H, R_a = e^{sigma} R."""
    R = R or reeb(s)
    es = E.call("exp", sigma.sigma)
    ems = E.call("exp", E.neg(sigma.sigma))
    em2s = E.call("exp", E.mul(E.Num(-2.0), sigma.sigma))
    chart = s.chart

    def factor(Y):
        return eval_expr(es, chart.env(Y), s.constants, Y.shape[:-1])[:, None]

    return LocalChartData(
        eta=s.eta.scale(ems), omega=s.omega.scale(em2s), hamiltonian=E.mul(ems, H),
        X=lambda Y: factor(np.atleast_2d(Y)) * X(np.atleast_2d(Y)),
        R=lambda Y: factor(np.atleast_2d(Y)) * R(np.atleast_2d(Y)),
        constants=s.constants,
    )
