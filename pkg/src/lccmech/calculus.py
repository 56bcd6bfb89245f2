"""Exterior calculus on a single coordinate chart.

Forms carry symbolic components (``Expr``) keyed by strictly increasing index
tuples; identities are checked by evaluating components at sample points.
Conventions: ``dx^a ^ dx^b (X, Y) = X^a Y^b - X^b Y^a``, the interior product
contracts the first slot, and ``d_theta a = da - theta ^ a``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from . import expr as E
from .expr import Expr

__all__ = [
    "Chart", "KForm", "VectorField", "LeeForm", "SingularPoint", "SamplingError", "ChartMismatch",
    "wedge", "exterior_derivative", "interior_product", "lie_derivative", "ldr_differential",
    "ldr_denominator", "ldr_function_coefficients", "ldr_oneform_decompose", "ldr_oneform_recompose",
    "ldr_closedness_residual", "ClosednessReport", "check_denominator",
    "eval_expr", "sample_points", "fd_jacobian", "fd_steps",
]

DENOM_EPS = 1e-12


class SingularPoint(ArithmeticError):
    """A declared denominator vanishes (or nearly so) at an evaluation point."""


class SamplingError(RuntimeError):
    """Could not find enough admissible sample points."""


class ChartMismatch(ValueError):
    pass


# ----------------------------------------------------------------------- charts

_KINDS = {
    "base": ("q", "t"),
    "cotangent": ("q", "p"),
    "cosymplectic": ("q", "p", "t"),
    "extended": ("q", "p", "t", "s"),
}


@dataclass(frozen=True)
class Chart:
    """Darboux-type chart. ``kind`` selects the variable list:

    base (q, t), cotangent (q, p), cosymplectic (q, p, t), extended (q, p, t, s).
    """

    n: int
    kind: str = "cosymplectic"

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.kind not in _KINDS:
            raise ValueError(f"unknown chart kind {self.kind!r}")

    @property
    def variables(self) -> tuple[str, ...]:
        out: list[str] = []
        for block in _KINDS[self.kind]:
            if block in ("q", "p"):
                out += [f"{block}{i}" for i in range(1, self.n + 1)]
            else:
                out.append(block)
        return tuple(out)

    @property
    def dim(self) -> int:
        return len(self.variables)

    def index(self, name: str) -> int:
        try:
            return self.variables.index(name)
        except ValueError:
            raise ChartMismatch(f"{name!r} is not a variable of {self}") from None

    def q(self, i: int) -> str:
        return f"q{i + 1}"

    def p(self, i: int) -> str:
        return f"p{i + 1}"

    def env(self, X: np.ndarray) -> dict[str, np.ndarray]:
        X = np.asarray(X, dtype=float)
        return {v: X[..., a] for a, v in enumerate(self.variables)}

    def extended(self) -> "Chart":
        return Chart(self.n, "extended")

    def base(self) -> "Chart":
        return Chart(self.n, "base")


def eval_expr(e: Expr, env: Mapping[str, np.ndarray], constants: Mapping[str, float] | None,
              shape: tuple[int, ...]) -> np.ndarray:
    """Evaluate and broadcast to ``shape`` (constant expressions become full arrays)."""
    val = E.evaluate(e, env, constants)
    return np.broadcast_to(np.asarray(val, dtype=float), shape).copy()


# ------------------------------------------------------------------------ forms

def _sort_sign(idx: Sequence[int]) -> tuple[int, tuple[int, ...]]:
    """Sign of the permutation sorting ``idx`` and the sorted tuple (sign 0 on repeats)."""
    idx = list(idx)
    if len(set(idx)) != len(idx):
        return 0, ()
    sign = 1
    for i in range(len(idx)):
        for j in range(len(idx) - 1 - i):
            if idx[j] > idx[j + 1]:
                idx[j], idx[j + 1] = idx[j + 1], idx[j]
                sign = -sign
    return sign, tuple(idx)


class KForm:
    """A differential k-form: increasing index tuple -> Expr (zeros dropped)."""

    __slots__ = ("chart", "degree", "components")

    def __init__(self, chart: Chart, degree: int, components: Mapping[tuple, Expr] | None = None):
        if degree < 0:
            raise ValueError("negative degree")
        self.chart = chart
        self.degree = degree
        comps: dict[tuple[int, ...], Expr] = {}
        if degree <= chart.dim:
            for key, val in (components or {}).items():
                key = tuple(key)
                if len(key) != degree:
                    raise ValueError(f"index tuple {key} does not match degree {degree}")
                sign, skey = _sort_sign(key)
                if sign == 0:
                    continue
                val = E._lift(val)
                val = val if sign > 0 else E.neg(val)
                comps[skey] = E.add(comps[skey], val) if skey in comps else val
        self.components = {k: v for k, v in comps.items() if not v.is_zero}

    # constructors ---------------------------------------------------------
    @classmethod
    def scalar(cls, chart: Chart, f: Expr | float) -> "KForm":
        return cls(chart, 0, {(): E._lift(f)})

    @classmethod
    def zero(cls, chart: Chart, degree: int) -> "KForm":
        return cls(chart, degree, {})

    @classmethod
    def one_form(cls, chart: Chart, coeffs: Mapping[str, Expr | float]) -> "KForm":
        return cls(chart, 1, {(chart.index(k),): v for k, v in coeffs.items()})

    @classmethod
    def dx(cls, chart: Chart, name: str) -> "KForm":
        return cls(chart, 1, {(chart.index(name),): E.ONE})

    # algebra --------------------------------------------------------------
    def _same(self, other: "KForm"):
        if not isinstance(other, KForm):
            raise TypeError(f"expected KForm, got {type(other).__name__}")
        if other.chart != self.chart:
            raise ChartMismatch(f"{self.chart} vs {other.chart}")
        if other.degree != self.degree:
            raise ValueError("degree mismatch")

    def __add__(self, other: "KForm") -> "KForm":
        self._same(other)
        comps = dict(self.components)
        for k, v in other.components.items():
            comps[k] = E.add(comps[k], v) if k in comps else v
        return KForm(self.chart, self.degree, comps)

    def __neg__(self) -> "KForm":
        return KForm(self.chart, self.degree, {k: E.neg(v) for k, v in self.components.items()})

    def __sub__(self, other: "KForm") -> "KForm":
        return self + (-other)

    def scale(self, f: Expr | float) -> "KForm":
        f = E._lift(f)
        return KForm(self.chart, self.degree, {k: E.mul(f, v) for k, v in self.components.items()})

    def __mul__(self, f):
        return self.scale(f)

    __rmul__ = __mul__

    def __xor__(self, other: "KForm") -> "KForm":
        return wedge(self, other)

    def component(self, *names_or_idx) -> Expr:
        idx = [self.chart.index(x) if isinstance(x, str) else int(x) for x in names_or_idx]
        sign, key = _sort_sign(idx)
        if sign == 0 or key not in self.components:
            return E.ZERO
        v = self.components[key]
        return v if sign > 0 else E.neg(v)

    def coefficient(self, name: str) -> Expr:
        """Coefficient of ``d name`` for one-forms."""
        return self.component(name)

    @property
    def scalar_value(self) -> Expr:
        if self.degree != 0:
            raise ValueError("not a 0-form")
        return self.components.get((), E.ZERO)

    @property
    def is_zero(self) -> bool:
        return not self.components

    def pulled_to(self, chart: Chart) -> "KForm":
        """Reinterpret on ``chart`` by variable name (pullback along a coordinate projection)."""
        if chart == self.chart:
            return self
        mapping = {a: chart.index(v) for a, v in enumerate(self.chart.variables)}
        for e in self.components.values():
            missing = e.free_variables - set(chart.variables)
            if missing:
                raise ChartMismatch(f"component depends on {sorted(missing)} absent from {chart}")
        return KForm(chart, self.degree, {tuple(mapping[a] for a in k): v for k, v in self.components.items()})

    # evaluation -----------------------------------------------------------
    def values(self, X: np.ndarray, constants: Mapping[str, float] | None = None) -> dict:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        env = self.chart.env(X)
        return {k: eval_expr(v, env, constants, X.shape[:-1]) for k, v in self.components.items()}

    def evaluate(self, X: np.ndarray, constants: Mapping[str, float] | None = None) -> np.ndarray:
        """Dense antisymmetric array of shape ``(N,) + (dim,) * degree``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.degree > 3:
            raise ValueError("dense evaluation supported up to degree 3; use values()")
        N = X.shape[0]
        out = np.zeros((N,) + (self.chart.dim,) * self.degree)
        for key, val in self.values(X, constants).items():
            for perm in itertools.permutations(range(self.degree)):
                sign, _ = _sort_sign(perm)
                out[(slice(None),) + tuple(key[i] for i in perm)] = sign * val
        return out

    def max_abs(self, X: np.ndarray, constants: Mapping[str, float] | None = None) -> float:
        vals = self.values(X, constants)
        return max((float(np.max(np.abs(v))) for v in vals.values()), default=0.0)

    def __repr__(self) -> str:
        names = self.chart.variables
        terms = [f"({v})*" + "^".join("d" + names[a] for a in k) for k, v in sorted(self.components.items())]
        return f"KForm[{self.degree}](" + (" + ".join(terms) or "0") + ")"


@dataclass(frozen=True)
class VectorField:
    """X = X^a d/dx^a with symbolic components."""

    chart: Chart
    components: tuple

    def __post_init__(self):
        comps = tuple(E._lift(c) for c in self.components)
        if len(comps) != self.chart.dim:
            raise ValueError("component count must equal chart dimension")
        object.__setattr__(self, "components", comps)

    @classmethod
    def from_dict(cls, chart: Chart, comps: Mapping[str, Expr | float]) -> "VectorField":
        vals = [E.ZERO] * chart.dim
        for k, v in comps.items():
            vals[chart.index(k)] = E._lift(v)
        return cls(chart, tuple(vals))

    @classmethod
    def coordinate(cls, chart: Chart, name: str) -> "VectorField":
        return cls.from_dict(chart, {name: 1.0})

    def __getitem__(self, name: str) -> Expr:
        return self.components[self.chart.index(name)]

    def __add__(self, other: "VectorField") -> "VectorField":
        return VectorField(self.chart, tuple(E.add(a, b) for a, b in zip(self.components, other.components)))

    def __sub__(self, other: "VectorField") -> "VectorField":
        return VectorField(self.chart, tuple(E.sub(a, b) for a, b in zip(self.components, other.components)))

    def scale(self, f: Expr | float) -> "VectorField":
        f = E._lift(f)
        return VectorField(self.chart, tuple(E.mul(f, c) for c in self.components))

    def apply(self, f: Expr) -> Expr:
        """Directional derivative X(f)."""
        out = E.ZERO
        for name, c in zip(self.chart.variables, self.components):
            if not c.is_zero and name in f.free_variables:
                out = E.add(out, E.mul(c, f.diff(name)))
        return out

    def evaluate(self, X: np.ndarray, constants: Mapping[str, float] | None = None) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        env = self.chart.env(X)
        return np.stack([eval_expr(c, env, constants, X.shape[:-1]) for c in self.components], axis=-1)


# ------------------------------------------------------------------- operations

def _as_form(chart: Chart, a) -> KForm:
    if isinstance(a, KForm):
        return a
    return KForm.scalar(chart, a)


def wedge(a: KForm, b: KForm) -> KForm:
    if a.chart != b.chart:
        raise ChartMismatch(f"{a.chart} vs {b.chart}")
    k = a.degree + b.degree
    if k > a.chart.dim:
        return KForm.zero(a.chart, k)
    comps: dict = {}
    for I, f in a.components.items():
        for J, g in b.components.items():
            sign, key = _sort_sign(I + J)
            if sign == 0:
                continue
            term = E.mul(f, g)
            term = term if sign > 0 else E.neg(term)
            comps[key] = E.add(comps[key], term) if key in comps else term
    return KForm(a.chart, k, comps)


def exterior_derivative(a: KForm | Expr) -> KForm:
    if not isinstance(a, KForm):
        raise TypeError("pass a KForm (use KForm.scalar for functions)")
    names = a.chart.variables
    comps: dict = {}
    for I, f in a.components.items():
        for v in range(a.chart.dim):
            if v in I or names[v] not in f.free_variables:
                continue
            sign, key = _sort_sign((v,) + I)
            term = f.diff(names[v])
            term = term if sign > 0 else E.neg(term)
            comps[key] = E.add(comps[key], term) if key in comps else term
    return KForm(a.chart, a.degree + 1, comps)


def interior_product(X: VectorField, a: KForm) -> KForm:
    """Contract the first slot: (i_X a)(Y, ...) = a(X, Y, ...)."""
    if X.chart != a.chart:
        raise ChartMismatch(f"{X.chart} vs {a.chart}")
    if a.degree == 0:
        raise ValueError("interior product of a 0-form")
    comps: dict = {}
    for I, f in a.components.items():
        for j, idx in enumerate(I):
            c = X.components[idx]
            if c.is_zero:
                continue
            key = I[:j] + I[j + 1:]
            term = E.mul(c, f)
            term = term if j % 2 == 0 else E.neg(term)
            comps[key] = E.add(comps[key], term) if key in comps else term
    return KForm(a.chart, a.degree - 1, comps)


def lie_derivative(X: VectorField, T):
    """L_X T for forms (Cartan formula) or vector fields (commutator)."""
    if isinstance(T, VectorField):
        if T.chart != X.chart:
            raise ChartMismatch("chart mismatch")
        return VectorField(X.chart, tuple(E.sub(X.apply(ya), T.apply(xa)) for xa, ya in zip(X.components, T.components)))
    T = _as_form(X.chart, T)
    if T.degree == 0:
        return KForm.scalar(X.chart, X.apply(T.scalar_value))
    out = interior_product(X, exterior_derivative(T))
    if T.degree >= 1:
        out = out + exterior_derivative(interior_product(X, T))
    return out


def ldr_differential(theta: KForm, a: KForm) -> KForm:
    """d_theta a = da - theta ^ a."""
    if theta.degree != 1:
        raise ValueError("theta must be a one-form")
    a = _as_form(theta.chart, a)
    if theta.chart != a.chart:
        raise ChartMismatch(f"{theta.chart} vs {a.chart}")
    return exterior_derivative(a) - wedge(theta, a)


# ------------------------------------------------------------------- Lee forms

@dataclass(frozen=True)
class LeeForm:
    """Theta = psi_i(q, t) dq^i + zeta(q, t) dt (identified with its pullback)."""

    psi: tuple
    zeta: Expr = E.ZERO

    def __post_init__(self):
        psi = tuple(E._lift(x) for x in self.psi)
        object.__setattr__(self, "psi", psi)
        object.__setattr__(self, "zeta", E._lift(self.zeta))
        if not psi:
            raise ValueError("psi must have n >= 1 entries")
        for c in psi + (self.zeta,):
            bad = {v for v in c.free_variables if v.startswith("p") or v == "s"}
            if bad:
                raise ValueError(f"Lee form component depends on {sorted(bad)}")

    @property
    def n(self) -> int:
        return len(self.psi)

    @classmethod
    def zero(cls, n: int) -> "LeeForm":
        return cls((E.ZERO,) * n, E.ZERO)

    @classmethod
    def from_potential(cls, sigma: Expr, n: int) -> "LeeForm":
        """Exact Lee form Theta = d sigma for sigma(q, t)."""
        return cls(tuple(sigma.diff(f"q{i + 1}") for i in range(n)), sigma.diff("t"))

    @classmethod
    def parse(cls, psi: Sequence[str], zeta: str, constants: Iterable[str] = ()) -> "LeeForm":
        n = len(psi)
        names = Chart(n, "base").variables
        return cls(tuple(E.parse(s, names, constants) for s in psi), E.parse(zeta, names, constants))

    @property
    def is_zero(self) -> bool:
        return all(c.is_zero for c in self.psi) and self.zeta.is_zero

    def form(self, chart: Chart) -> KForm:
        coeffs = {f"q{i + 1}": c for i, c in enumerate(self.psi)}
        if "t" in chart.variables:
            coeffs["t"] = self.zeta
        elif not self.zeta.is_zero:
            raise ChartMismatch("zeta != 0 on a chart without t")
        return KForm.one_form(chart, coeffs)

    def scaled(self, c: float) -> "LeeForm":
        return LeeForm(tuple(E.mul(E.Num(c), x) for x in self.psi), E.mul(E.Num(c), self.zeta))

    def closedness_residual(self, X: np.ndarray, constants: Mapping[str, float] | None = None,
                            chart: Chart | None = None) -> float:
        chart = chart or Chart(self.n, "base")
        return exterior_derivative(self.form(chart)).max_abs(X, constants)


# --------------------------------------------------------------- LdR on Q x R

def ldr_denominator(lee: LeeForm) -> Expr:
    """1 - q^k psi_k - t zeta (basis d_Psi x^a = dx^a - x^a Psi)."""
    s = E.ZERO
    for i, c in enumerate(lee.psi):
        s = E.add(s, E.mul(E.Var(f"q{i + 1}"), c))
    s = E.add(s, E.mul(E.Var("t"), lee.zeta))
    return E.sub(E.ONE, s)


def check_denominator(lee: LeeForm, X: np.ndarray, constants=None, chart: Chart | None = None,
                      eps: float = DENOM_EPS) -> np.ndarray:
    chart = chart or Chart(lee.n, "base")
    X = np.atleast_2d(X)
    den = eval_expr(ldr_denominator(lee), chart.env(X), constants, X.shape[:-1])
    if np.any(np.abs(den) <= eps):
        raise SingularPoint("1 - q.psi - t zeta vanishes at an evaluation point")
    return den


def _homogeneity_bracket(F: Expr, n: int) -> Expr:
    """q^j F_{,j} + t F_{,t} - F."""
    s = E.ZERO
    for i in range(n):
        s = E.add(s, E.mul(E.Var(f"q{i + 1}"), F.diff(f"q{i + 1}")))
    s = E.add(s, E.mul(E.Var("t"), F.diff("t")))
    return E.sub(s, F)


def ldr_function_coefficients(F: Expr, lee: LeeForm) -> tuple[list[Expr], Expr]:
    """Colon coefficients of d_Psi F in the basis (d_Psi q^i, d_Psi t).

    F_{:i} = F_{,i} + psi_i/D (q^j F_{,j} + t F_{,t} - F), F_{:t} likewise with zeta.
    """
    n = lee.n
    D = ldr_denominator(lee)
    br = E.div(_homogeneity_bracket(F, n), D)
    coeffs = [E.add(F.diff(f"q{i + 1}"), E.mul(lee.psi[i], br)) for i in range(n)]
    return coeffs, E.add(F.diff("t"), E.mul(lee.zeta, br))


def ldr_oneform_decompose(bar: Sequence[Expr], barbar: Expr, lee: LeeForm) -> tuple[list[Expr], Expr]:
    """Coefficients in (dq^i, dt) -> coefficients in (d_Psi q^i, d_Psi t)."""
    n = lee.n
    s = E.ZERO
    for i in range(n):
        s = E.add(s, E.mul(E.Var(f"q{i + 1}"), bar[i]))
    s = E.add(s, E.mul(E.Var("t"), barbar))
    frac = E.div(s, ldr_denominator(lee))
    return [E.add(bar[i], E.mul(frac, lee.psi[i])) for i in range(n)], E.add(barbar, E.mul(frac, lee.zeta))


def ldr_oneform_recompose(hat: Sequence[Expr], hathat: Expr, lee: LeeForm) -> tuple[list[Expr], Expr]:
    """Inverse of :func:`ldr_oneform_decompose`."""
    n = lee.n
    s = E.ZERO
    for i in range(n):
        s = E.add(s, E.mul(E.Var(f"q{i + 1}"), hat[i]))
    s = E.add(s, E.mul(E.Var("t"), hathat))
    return [E.sub(hat[i], E.mul(lee.psi[i], s)) for i in range(n)], E.sub(hathat, E.mul(lee.zeta, s))


@dataclass
class ClosednessReport:
    spatial: float   # max |v_{i,j} + psi_i v_j - v_{j,i} - psi_j v_i|
    temporal: float  # max |v_{i,t} + vv psi_i - vv_{,i} - zeta v_i|

    @property
    def max(self) -> float:
        return max(self.spatial, self.temporal)

    def ok(self, tol: float) -> bool:
        return self.max < tol


def ldr_closedness_residual(bar: Sequence[Expr], barbar: Expr, lee: LeeForm, X: np.ndarray,
                            constants=None) -> ClosednessReport:
    """Residuals of d_Psi v = 0 for v = bar_i dq^i + barbar dt, sampled at base points X."""
    n = lee.n
    chart = Chart(n, "base")
    X = np.atleast_2d(X)
    env, shape = chart.env(X), X.shape[:-1]
    ev = lambda e: eval_expr(e, env, constants, shape)  # noqa: E731
    spatial = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            r = E.sub(E.add(bar[i].diff(f"q{j + 1}"), E.mul(lee.psi[i], bar[j])),
                      E.add(bar[j].diff(f"q{i + 1}"), E.mul(lee.psi[j], bar[i])))
            spatial = max(spatial, float(np.max(np.abs(ev(r)))))
    temporal = 0.0
    for i in range(n):
        r = E.sub(E.add(bar[i].diff("t"), E.mul(barbar, lee.psi[i])),
                  E.add(barbar.diff(f"q{i + 1}"), E.mul(lee.zeta, bar[i])))
        temporal = max(temporal, float(np.max(np.abs(ev(r)))))
    return ClosednessReport(spatial, temporal)


# ------------------------------------------------------------------- numerics

def sample_points(dim: int, count: int, seed: int = 42, reject: Callable[[np.ndarray], np.ndarray] | None = None,
                  low: Sequence[float] | float = -1.0, high: Sequence[float] | float = 1.0,
                  max_batches: int = 200) -> np.ndarray:
    """Uniform points in a box; ``reject(X)`` returns a boolean mask of inadmissible rows."""
    rng = np.random.default_rng(seed)
    got: list[np.ndarray] = []
    total = 0
    for _ in range(max_batches):
        X = rng.uniform(low, high, size=(max(count, 16), dim))
        if reject is not None:
            with np.errstate(all="ignore"):
                bad = np.asarray(reject(X), dtype=bool)
            X = X[~bad]
        got.append(X)
        total += len(X)
        if total >= count:
            return np.concatenate(got)[:count]
    raise SamplingError(f"found only {total} admissible points out of {count} requested")


def fd_steps(X: np.ndarray, rel: float = 1e-5) -> np.ndarray:
    return rel * np.maximum(1.0, np.abs(X))


def fd_jacobian(f: Callable[[np.ndarray], np.ndarray], X: np.ndarray, rel: float = 1e-5) -> np.ndarray:
    """Central differences: result[..., a] = d f / d x^a, shape ``f(X).shape + (dim,)``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    N, dim = X.shape
    h = fd_steps(X, rel)
    # batch all perturbations into one call
    P = np.repeat(X[None], 2 * dim, axis=0)
    for a in range(dim):
        P[2 * a, :, a] += h[:, a]
        P[2 * a + 1, :, a] -= h[:, a]
    vals = np.asarray(f(P.reshape(-1, dim)))
    vals = vals.reshape((2 * dim, N) + vals.shape[1:])
    cols = [(vals[2 * a] - vals[2 * a + 1]) / (2 * h[:, a].reshape((N,) + (1,) * (vals.ndim - 2)))
            for a in range(dim)]
    return np.stack(cols, axis=-1)
