"""Print every reference-display discrepancy with printed vs corrected deviations from the solve."""
import numpy as np

from lccmech import displays as D
from lccmech import presets
from lccmech.calculus import LeeForm, eval_expr
from lccmech.cli import parse_model
from lccmech.dynamics import HamiltonianSystem, evolution_vf, gradient_vf, oneform_bracket_lcs, jacobi_bracket_lcs
from lccmech.geometry import build_lcc, build_lcs_cotangent
from lccmech.hj import build_candidate, hj_residual, project_fields
from lccmech import expr as E

S = "exp(0.3*q1) + q1^2"


def oscillator_points(n=50, seed=0):
    rng = np.random.default_rng(seed)
    return np.column_stack([rng.uniform(-1, 1, n), rng.uniform(-1, 1, n), rng.uniform(0.2, 1.2, n)])


def gradient_pp():
    s = build_lcc(2, LeeForm.parse(["0.3*q2", "0.3*q1 + 0.1"], "0.2"))
    sys_ = HamiltonianSystem(s, "p1^2/2 + p2*q1 + q2*t + p1*p2")
    X = s.sample(50, 1)
    G = gradient_vf(sys_)(X)
    return [float(np.max(np.abs(D.gradient_display(sys_, c).evaluate(X) - G))) for c in (False, True)]


def tdot():
    sys_ = parse_model(presets.preset("oscillator")).system()
    X = oscillator_points()
    Ev = evolution_vf(sys_)(X)[:, 2]
    env = sys_.chart.env(X)
    return [float(np.max(np.abs(eval_expr(D.oscillator_evolution_display("0.05", c)["t"], env, sys_.constants, (50,))
                                - Ev))) for c in (False, True)]


def projected():
    sys_ = parse_model(presets.preset("oscillator")).system()
    cand = build_candidate(S, sys_)
    Q = oscillator_points()[:, [0, 2]]
    _, Eg, _ = project_fields(sys_, cand, Q)
    env = sys_.chart.env(cand.gamma(Q))
    return [float(np.max(np.abs(eval_expr(D.oscillator_projected_display(S, "0.05", c)["t"], env, sys_.constants,
                                          (50,)) - Eg[:, 1]))) for c in (False, True)]


def hj_psi():
    sys_ = parse_model(presets.preset("oscillator")).system()
    cand = build_candidate(S, sys_)
    Q = oscillator_points()[:, [0, 2]]
    res = hj_residual(sys_, cand, Q=Q, with_relatedness=False).residuals[:, 0]
    return [float(np.max(np.abs(cand._ev(D.oscillator_hj_display(S, "0.05", c), Q) - res))) for c in (False, True)]


def exact_bracket():
    from lccmech.calculus import KForm, fd_jacobian, ldr_differential
    lcs = build_lcs_cotangent(1, [E.Num(0.3)])
    names = lcs.chart.variables
    F, G = (E.parse(x, names) for x in ("q1*p1^2", "p1 + q1^3"))
    dF, dG = (ldr_differential(lcs.theta, KForm.scalar(lcs.chart, e)) for e in (F, G))
    X = lcs.sample(20)
    lhs = oneform_bracket_lcs(lcs, dF, dG)(X)
    FG = jacobi_bracket_lcs(lcs, F, G)
    d_FG = fd_jacobian(FG, X) - FG(X)[:, None] * lcs.theta_at(X)
    return [float(np.max(np.abs(lhs - d_FG))), float(np.max(np.abs(lhs + d_FG)))]


CHECKS = {
    "gradient-pp-coefficient": gradient_pp,
    "oscillator-tdot-exponent": tdot,
    "oscillator-projected-field": projected,
    "oscillator-hj-psi-factor": hj_psi,
    "exact-oneform-bracket-sign": exact_bracket,
}


def main():
    print(f"{'display term':32} {'printed':>10} {'corrected':>10}")
    for d in D.DISCREPANCIES:
        printed, corrected = CHECKS[d.key]()
        print(f"{d.key:32} {printed:10.2e} {corrected:10.2e}")
        print(f"    printed:   {d.printed}\n    corrected: {d.corrected}")


if __name__ == "__main__":
    main()
