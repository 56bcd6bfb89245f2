"""Command line interface: ``lccmech validate|simulate|hj-check|bracket``.

stdout carries machine output only (JSON report or CSV); diagnostics go to
stderr. Exit codes: 0 pass, 1 parse/schema/usage error, 2 check failure
(including a non-closed Lee form or failed HJ closedness), 3 no admissible
sample points, 4 singularity during integration.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__, presets
from . import expr as E
from .calculus import LeeForm, SamplingError, SingularPoint, check_denominator
from .dynamics import (HamiltonianSystem, ScalarFn, energy_residual, evolution_vf, evolution_vf_closed_form,
                       gradient_vf, gradient_vf_closed_form, hamiltonian_vf, hamiltonian_vf_closed_form, integrate,
                       jacobi_bracket_lcc, jacobi_identity_residual)
from .geometry import VOLUME_EPS, LCCStructure, flat_at, reeb, reeb_closed_form, sharp
from .hj import build_candidate, default_grid, equivalence_verdict, hj_residual, project_fields

SCHEMA_VERSION = 1
DEFAULT_SEED = 42

EXIT_OK, EXIT_PARSE, EXIT_FAIL, EXIT_SAMPLING, EXIT_SINGULAR = 0, 1, 2, 3, 4


class ModelError(ValueError):
    """Schema or expression error in a model document; ``field`` names the offending key."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass
class ModelFile:
    n: int
    constants: dict
    psi: list
    zeta: str
    hamiltonian: str
    lee: LeeForm
    H: E.Expr
    S: str | None = None
    method: str = "rk4"
    dt: float = 1e-3
    steps: int = 1000
    initial: list | None = None
    seed: int | None = None
    samples: int = 100
    tolerance: float = 1e-10
    document: dict = field(default_factory=dict)

    @property
    def digest(self) -> str:
        canon = json.dumps(self.document, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()

    def structure(self) -> LCCStructure:
        return LCCStructure(self.n, self.lee, self.constants)

    def system(self) -> HamiltonianSystem:
        return HamiltonianSystem(self.structure(), self.H, self.constants)


def _num(doc, key, where, kind=float):
    v = doc[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or (kind is int and not float(v).is_integer()):
        raise ModelError(where, f"expected {'an integer' if kind is int else 'a number'}, got {v!r}")
    return kind(v)


def _expr(text, where, names, constants) -> E.Expr:
    if not isinstance(text, str):
        raise ModelError(where, f"expected an expression string, got {text!r}")
    try:
        return E.parse(text, names, constants)
    except E.ExprSyntaxError as exc:
        raise ModelError(where, f"parse error: {exc}") from exc
    except E.UnknownIdentifierError as exc:
        raise ModelError(where, f"unknown identifier {exc.name!r}") from exc


def parse_model(doc: dict) -> ModelFile:
    """Cross-validate a model document and compile its expressions."""
    if not isinstance(doc, dict):
        raise ModelError("<root>", "model must be a JSON object")
    for key in ("n", "lee", "hamiltonian"):
        if key not in doc:
            raise ModelError(key, "missing required field")
    n = _num(doc, "n", "n", int)
    if n < 1:
        raise ModelError("n", "must be >= 1")
    constants = doc.get("constants", {})
    if not isinstance(constants, dict):
        raise ModelError("constants", "expected an object name -> number")
    for k in constants:
        _num(constants, k, f"constants.{k}")
    constants = {k: float(v) for k, v in constants.items()}
    lee = doc["lee"]
    if not isinstance(lee, dict) or "psi" not in lee:
        raise ModelError("lee.psi", "missing required field")
    psi = lee["psi"]
    if not isinstance(psi, list) or len(psi) != n:
        raise ModelError("lee.psi", f"expected an array of {n} expression strings")
    zeta = lee.get("zeta", "0")
    base = [f"q{i + 1}" for i in range(n)] + ["t"]
    psi_e = [_expr(s, f"lee.psi[{i}]", base, constants) for i, s in enumerate(psi)]
    zeta_e = _expr(zeta, "lee.zeta", base, constants)
    chart = [f"q{i + 1}" for i in range(n)] + [f"p{i + 1}" for i in range(n)] + ["t"]
    H = _expr(doc["hamiltonian"], "hamiltonian", chart, constants)
    m = ModelFile(n, constants, list(psi), zeta, doc["hamiltonian"], LeeForm(tuple(psi_e), zeta_e), H,
                  document=doc)
    if "hj" in doc:
        hj = doc["hj"]
        if not isinstance(hj, dict) or "S" not in hj:
            raise ModelError("hj.S", "missing required field")
        _expr(hj["S"], "hj.S", base, constants)
        m.S = hj["S"]
    if "integrator" in doc:
        it = doc["integrator"]
        if not isinstance(it, dict):
            raise ModelError("integrator", "expected an object")
        m.method = it.get("method", "rk4")
        if m.method not in ("rk4", "euler"):
            raise ModelError("integrator.method", f"expected 'rk4' or 'euler', got {m.method!r}")
        if "dt" in it:
            m.dt = _num(it, "dt", "integrator.dt")
            if m.dt <= 0:
                raise ModelError("integrator.dt", "must be > 0")
        if "steps" in it:
            m.steps = _num(it, "steps", "integrator.steps", int)
            if m.steps < 1:
                raise ModelError("integrator.steps", "must be >= 1")
    if "initial" in doc:
        x0 = doc["initial"]
        if not isinstance(x0, list) or len(x0) != 2 * n + 1:
            raise ModelError("initial", f"expected an array of {2 * n + 1} numbers (q, p, t)")
        m.initial = [_num(x0, i, f"initial[{i}]") for i in range(len(x0))]
    if "seed" in doc:
        m.seed = _num(doc, "seed", "seed", int)
    if "samples" in doc:
        m.samples = _num(doc, "samples", "samples", int)
        if m.samples < 1:
            raise ModelError("samples", "must be >= 1")
    if "tolerance" in doc:
        m.tolerance = _num(doc, "tolerance", "tolerance")
    return m


def load_model(path: str | os.PathLike) -> ModelFile:
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelError("<root>", f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return parse_model(doc)


# ---------------------------------------------------------------- reporting

def _clean(v):
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    if isinstance(v, dict):
        return {k: _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, np.generic):
        return _clean(v.item())
    return v


class Report:
    def __init__(self, command: str, model: ModelFile):
        self.data: dict = {"schema": SCHEMA_VERSION, "command": command, "model_digest": model.digest,
                           "engine_version": __version__, "checks": []}
        self._t0 = time.perf_counter()

    def check(self, name: str, residual: float, tolerance: float, mode: str = "max") -> bool:
        """mode 'max': pass iff residual < tolerance; mode 'min': pass iff residual > tolerance."""
        residual = float(residual)
        ok = residual < tolerance if mode == "max" else residual > tolerance
        ok = bool(ok and math.isfinite(residual))
        entry = {"name": name, "residual": residual, "tolerance": tolerance, "pass": ok}
        if mode != "max":
            entry["mode"] = mode
        self.data["checks"].append(entry)
        return ok

    @property
    def passed(self) -> bool:
        return all(c["pass"] for c in self.data["checks"])

    def render(self, timestamp: bool) -> str:
        out = dict(self.data)
        out["pass"] = self.passed
        if timestamp:
            out["wall_time"] = time.perf_counter() - self._t0
        return json.dumps(_clean(out), indent=2) + "\n"


def _chunked(fn: Callable[[np.ndarray], np.ndarray], X: np.ndarray, jobs: int) -> np.ndarray:
    """Evaluate a row-wise function on X in ``jobs`` ordered chunks."""
    if jobs <= 1 or len(X) < 2 * jobs:
        return fn(X)
    parts = np.array_split(X, jobs)
    with ThreadPoolExecutor(max_workers=jobs) as ex:
        return np.concatenate(list(ex.map(fn, parts)))


def _seed(args, model: ModelFile) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("LCCMECH_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ModelError("LCCMECH_SEED", f"expected an integer, got {env!r}") from None
    return model.seed if model.seed is not None else DEFAULT_SEED


# ----------------------------------------------------------------- commands

def cmd_validate(model: ModelFile, args) -> tuple[int, str]:
    rep = Report("validate", model)
    tol = model.tolerance
    s = model.structure()
    seed = _seed(args, model)
    v = s.validate(model.samples, seed, tol)
    for k in ("d_theta", "d_theta_eta", "d_2theta_omega"):
        rep.check(k, v.residuals[k], tol)
    rep.check("nondegeneracy_min_volume", v.min_volume, VOLUME_EPS, mode="min")
    if v.residuals["d_theta"] >= tol:
        print(f"non-closed Lee form: d Theta residual {v.residuals['d_theta']:.3e}", file=sys.stderr)
        return EXIT_FAIL, rep.render(not args.no_timestamp)
    X = s.sample(model.samples, seed)
    rng = np.random.default_rng(seed)
    V = rng.standard_normal(X.shape)
    mu = rng.standard_normal(X.shape)
    rt1 = _chunked(lambda Y: sharp(s, flat_at(s, Y[:, 0, :], Y[:, 1, :]), Y[:, 0, :]), np.stack([X, V], 1), args.jobs)
    rep.check("sharp_flat_roundtrip", np.max(np.abs(rt1 - V)), tol)
    rt2 = _chunked(lambda Y: flat_at(s, Y[:, 0, :], sharp(s, Y[:, 1, :], Y[:, 0, :])), np.stack([X, mu], 1), args.jobs)
    rep.check("flat_sharp_roundtrip", np.max(np.abs(rt2 - mu)), tol)
    sys_ = HamiltonianSystem(s, model.H, model.constants)
    pairs = [
        ("closed_form_reeb", reeb(s), reeb_closed_form(s)),
        ("closed_form_hamiltonian_vf", hamiltonian_vf(sys_), hamiltonian_vf_closed_form(sys_)),
        ("closed_form_evolution_vf", evolution_vf(sys_), evolution_vf_closed_form(sys_)),
        ("closed_form_gradient_vf", gradient_vf(sys_), gradient_vf_closed_form(sys_)),
    ]
    for name, solve, closed in pairs:
        diff = _chunked(lambda Y, a=solve, b=closed: a(Y) - b.evaluate(Y, model.constants), X, args.jobs)
        rep.check(name, np.max(np.abs(diff)), 1e-8)
    rep.check("energy_identity", np.max(_chunked(lambda Y: energy_residual(sys_, Y), X, args.jobs)), tol)
    return (EXIT_OK if rep.passed else EXIT_FAIL), rep.render(not args.no_timestamp)


def _parse_x0(text: str, n: int) -> list[float]:
    try:
        vals = [float(x) for x in text.split(",")]
    except ValueError:
        raise ModelError("--x0", f"expected comma-separated numbers, got {text!r}") from None
    if len(vals) != 2 * n + 1:
        raise ModelError("--x0", f"expected {2 * n + 1} values (q, p, t)")
    return vals


def cmd_simulate(model: ModelFile, args) -> tuple[int, str, str]:
    """Returns (exit code, JSON report, CSV)."""
    rep = Report("simulate", model)
    x0 = _parse_x0(args.x0, model.n) if args.x0 else model.initial
    if x0 is None:
        raise ModelError("initial", "no initial point (set 'initial' in the model or pass --x0)")
    dt = args.dt if args.dt is not None else model.dt
    steps = args.steps if args.steps is not None else model.steps
    method = args.method or model.method
    if dt <= 0:
        raise ModelError("--dt", "must be > 0")
    if steps < 1:
        raise ModelError("--steps", "must be >= 1")
    sys_ = model.system()
    traj = integrate(sys_, x0, steps, dt, method, args.field)
    rep.data.update({"method": method, "dt": dt, "steps": steps, "field": args.field,
                     "rows": int(len(traj.tau)), "x0": list(x0)})
    rep.check("max_energy_residual", float(np.max(traj.energy_residual)), 1e-8)
    rep.check("max_eta_residual", float(np.max(traj.eta_residual)), 1e-8)
    rep.data["truncated"] = traj.truncated
    # steps not taken; nonzero only when a singular point cut the run short
    rep.check("steps_missing", steps + 1 - len(traj.tau), 0.5)
    if traj.truncated:
        rep.data["error"] = traj.error
        print(f"trajectory truncated: {traj.error}", file=sys.stderr)
        return EXIT_SINGULAR, rep.render(not args.no_timestamp), traj.to_csv()
    return (EXIT_OK if rep.passed else EXIT_FAIL), rep.render(not args.no_timestamp), traj.to_csv()


def cmd_hj_check(model: ModelFile, args) -> tuple[int, str]:
    if model.S is None:
        raise ModelError("hj.S", "hj-check requires a generating function")
    rep = Report("hj-check", model)
    sys_ = model.system()
    cand = build_candidate(model.S, sys_)
    Q = default_grid(model.n)
    s = sys_.structure
    regime = "cosymplectic" if s.lee.is_zero else "lcc"
    rep.data["regime"] = regime
    tol = args.hj_tol
    try:
        check_denominator(s.lee, Q, model.constants)
    except SingularPoint as exc:
        raise SamplingError(f"HJ grid meets a singular point: {exc}") from exc
    clo = cand.closedness(s.lee, Q)
    ok_s = rep.check("closedness_spatial", clo.spatial, model.tolerance)
    ok_t = rep.check("closedness_temporal", clo.temporal, model.tolerance)
    r = hj_residual(sys_, cand, regime, Q)
    rep.check("hj_residual", r.max, tol)
    if r.span is not None:
        rep.check("span_residual", float(np.max(np.abs(r.span))), tol)
    rel = float(np.max(np.abs(r.relatedness)))
    rep.check("relatedness_residual", rel, tol)
    _, _, coinc = project_fields(sys_, cand, Q)
    rep.check("projected_fields_coincide", coinc, 1e-8)
    if r.classical is not None:
        # S_t + H o gamma = f(t); informational, not part of the pass conjunction
        rep.data["classical_hj_max"] = float(np.max(np.abs(r.classical)))
    if "lagrangian_max" in r.extra:
        # HJ <=> relatedness presumes im gamma~ Lagrangian in the symplectization
        rep.data["lagrangian_max"] = r.extra["lagrangian_max"]
    rep.data["equivalence"] = equivalence_verdict(r.max, rel, tol)
    rep.data["grid_points"] = int(len(Q))
    if not (ok_s and ok_t):
        print("S fails the LdR-closedness prerequisite", file=sys.stderr)
    return (EXIT_OK if rep.passed else EXIT_FAIL), rep.render(not args.no_timestamp)


def cmd_bracket(model: ModelFile, args) -> tuple[int, str]:
    rep = Report("bracket", model)
    s = model.structure()
    names = list(s.chart.variables)
    f = _expr(args.f, "--f", names, model.constants)
    g = _expr(args.g, "--g", names, model.constants)
    k = _expr(args.k, "--k", names, model.constants) if args.k else model.H
    X = s.sample(model.samples, _seed(args, model))
    F, G, K = (ScalarFn.coerce(s, e) for e in (f, g, k))
    brk = lambda a, b: jacobi_bracket_lcc(s, a, b)  # noqa: E731
    vals = _chunked(brk(F, G), X, args.jobs)
    rep.check("antisymmetry", np.max(np.abs(vals + _chunked(brk(G, F), X, args.jobs))), 1e-10)
    rep.check("jacobi_identity", jacobi_identity_residual(brk, F, G, K, X), 1e-6)
    if s.lee.is_zero:
        lhs = brk(F, G * K)(X)
        rep.check("leibniz", np.max(np.abs(lhs - G(X) * brk(F, K)(X) - K(X) * brk(F, G)(X))), 1e-10)
    rep.data.update({"f": args.f, "g": args.g, "k": args.k or model.hamiltonian,
                     "variables": names, "points": X.tolist(), "values": np.asarray(vals).tolist()})
    return (EXIT_OK if rep.passed else EXIT_FAIL), rep.render(not args.no_timestamp)


# --------------------------------------------------------------------- main

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lccmech", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"lccmech {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("model", nargs="?", help="model JSON file")
        sp.add_argument("--preset", choices=presets.names(), help="use a built-in model instead of a file")
        sp.add_argument("--out", help="write the primary output here instead of stdout")
        sp.add_argument("--seed", type=int, help="sampling seed (overrides LCCMECH_SEED and the model)")
        sp.add_argument("--jobs", type=int, default=1, help="parallel chunks for sample-grid evaluation")
        sp.add_argument("--no-timestamp", action="store_true", help="omit wall_time for reproducible reports")
        return sp

    common(sub.add_parser("validate", help="structure and closed-form checks"))
    sp = common(sub.add_parser("simulate", help="integrate E_H and write a CSV trajectory"))
    sp.add_argument("--dt", type=float)
    sp.add_argument("--steps", type=int)
    sp.add_argument("--method", choices=["rk4", "euler"])
    sp.add_argument("--x0", help="initial point q1..qn,p1..pn,t (comma separated)")
    sp.add_argument("--field", choices=["evolution", "hamiltonian", "gradient"], default="evolution")
    sp.add_argument("--report", help="also write the JSON report here")
    sp = common(sub.add_parser("hj-check", help="Hamilton-Jacobi residuals for the model's S"))
    sp.add_argument("--hj-tol", type=float, default=1e-8)
    sp = common(sub.add_parser("bracket", help="Jacobi bracket of two functions on the sample grid"))
    sp.add_argument("--f", required=True)
    sp.add_argument("--g", required=True)
    sp.add_argument("--k", help="third function for the Jacobi identity (default: the Hamiltonian)")
    return p


def _write(path: str | None, text: str):
    if path:
        Path(path).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_PARSE if exc.code else EXIT_OK
    try:
        if args.preset:
            model = parse_model(presets.preset(args.preset))
        elif args.model:
            model = load_model(args.model)
        else:
            raise ModelError("model", "give a model file or --preset")
        if args.jobs < 1:
            raise ModelError("--jobs", "must be >= 1")
        if args.command == "simulate":
            code, report, csv_text = cmd_simulate(model, args)
            if args.out:
                _write(args.out, csv_text)
                sys.stdout.write(report)
            else:
                sys.stdout.write(csv_text)
            if args.report:
                _write(args.report, report)
            return code
        cmd = {"validate": cmd_validate, "hj-check": cmd_hj_check, "bracket": cmd_bracket}[args.command]
        code, report = cmd(model, args)
        _write(args.out, report)
        return code
    except ModelError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (OSError, UnicodeDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except SamplingError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SAMPLING
    except SingularPoint as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SINGULAR
    except ValueError as exc:  # e.g. S depending on p, Lee form depending on p
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())
