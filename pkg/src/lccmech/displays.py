"""Reference coordinate displays, transcribed as printed, and their corrections.

The engine never uses these for dynamics: every field comes from a pointwise
solve of its defining identities. The transcriptions exist so that printed
formulas can be compared against the solve term by term. Where they disagree,
the mismatch is recorded in :data:`DISCREPANCIES` together with the corrected
term; ``corrected`` variants must agree with the solve to round-off.

Oscillator conventions: ``m`` in the displays is the constant ``m0`` (the time
dependence of the mass is carried by the explicit ``e^{+-G t}`` factors), and
the Lee form is ``psi(q) dq``.
"""
from __future__ import annotations

from dataclasses import dataclass

from . import expr as E
from .dynamics import HamiltonianSystem, gradient_vf_closed_form
from .expr import Expr

__all__ = [
    "Discrepancy", "DISCREPANCIES", "oscillator_evolution_display", "oscillator_projected_display",
    "oscillator_hj_display", "gradient_display",
]

_CHART = ("q1", "p1", "t")
_CONSTS = ("m0", "G")


def _p(text: str, psi: str) -> Expr:
    return E.parse(text.replace("PSI", f"({psi})"), _CHART, _CONSTS)


def oscillator_evolution_display(psi: str = "0.05", corrected: bool = False) -> dict[str, Expr]:
    """E_H components for the oscillator (keys q1, p1, t).

    As printed the t-component reads 1 + t psi (p/m) e^{G t}; the defining
    identities give 1 + t psi H_p = 1 + t psi (p/m) e^{-G t}.
    """
    sign = "-" if corrected else ""
    return {
        "q1": _p("p1/m0*exp(-G*t)", psi),
        "p1": _p("-m0*exp(G*t)*q1 + PSI*(p1^2/(2*m0)*exp(-G*t) + m0/2*exp(G*t)*q1^2)"
                 " - t*PSI*G*(m0/2*exp(G*t)*q1^2 - p1^2/(2*m0)*exp(-G*t))", psi),
        "t": _p(f"1 + t*PSI*p1/m0*exp({sign}G*t)", psi),
    }


def oscillator_projected_display(S: str, psi: str = "0.05", corrected: bool = False) -> dict[str, Expr]:
    """E^gamma_H on (q, t)-space for gamma = (q, S_q, t).

    As printed the t-component keeps the fiber coordinate p and e^{G t}; on
    the section p must be S_q and the exponent is -G t.
    """
    S_e = E.parse(S, ("q1", "t"), _CONSTS)
    Sq = E.to_string(S_e.diff("q1"))
    q_comp = _p(f"({Sq})/m0*exp(-G*t)", psi)
    if corrected:
        t_comp = _p(f"1 + t*PSI*({Sq})/m0*exp(-G*t)", psi)
    else:
        t_comp = _p("1 + t*PSI*p1/m0*exp(G*t)", psi)
    return {"q1": q_comp, "t": t_comp}


def oscillator_hj_display(S: str, psi: str = "0.05", corrected: bool = False) -> Expr:
    """Final oscillator HJ equation written as LHS - RHS (a function of q1, t).

    Printed: F_q/(1 - q psi) = (1 + G t) S_q^2/(2m) e^{-G t} + (1 - G t)(m/2) e^{G t} q^2
    with F = H o gamma. Expanding F_{:q} with the colon formula gives instead
    F_q/(1 - q psi) - psi RHS/(1 - q psi), i.e. the RHS is missing the factor psi/(1 - q psi).
    """
    S_e = E.parse(S, ("q1", "t"), _CONSTS)
    Sq = E.to_string(S_e.diff("q1"))
    Sqq = E.to_string(S_e.diff("q1").diff("q1"))
    lhs = f"1/(1 - q1*PSI)*(1/m0*({Sq})*({Sqq})*exp(-G*t) + m0*exp(G*t)*q1)"
    rhs = f"(1 + G*t)*({Sq})^2/(2*m0)*exp(-G*t) + (1 - G*t)*m0/2*exp(G*t)*q1^2"
    if corrected:
        return _p(f"{lhs} - PSI/(1 - q1*PSI)*({rhs})", psi)
    return _p(f"{lhs} - ({rhs})", psi)


def gradient_display(sys: HamiltonianSystem, corrected: bool = False):
    """Coordinate gradient field; as printed the p_i p_j zeta^2/(1 - t zeta)^2 H_{p_j} coefficient is 2."""
    return gradient_vf_closed_form(sys, pp_coefficient=4.0 if corrected else 2.0)


@dataclass(frozen=True)
class Discrepancy:
    key: str
    display: str
    printed: str
    corrected: str
    evidence: str


DISCREPANCIES: tuple[Discrepancy, ...] = (
    Discrepancy(
        "gradient-pp-coefficient",
        "coordinate form of grad H, d/dp_i component",
        "2 p_i p_j zeta^2/(1 - t zeta)^2 H_{p_j}",
        "4 p_i p_j zeta^2/(1 - t zeta)^2 H_{p_j}",
        "grad H = X_H + <d_Theta H, R> R; the R^{p_i} = 2 p_i zeta/(1 - t zeta) factor enters twice "
        "(once through <d_Theta H, R>). Pointwise solve agrees with 4 to ~1e-16, disagrees with 2 by O(1).",
    ),
    Discrepancy(
        "oscillator-tdot-exponent",
        "oscillator E_H and Hamilton equations, t-component",
        "1 + t psi (p/m) e^{G t}",
        "1 + t psi (p/m) e^{-G t}",
        "E^t = (1 + t psi_i H_{p_i})/(1 - t zeta) and H_p = (p/m) e^{-G t}; the q-component "
        "printed alongside already uses e^{-G t}.",
    ),
    Discrepancy(
        "oscillator-projected-field",
        "projected field E^gamma_H, t-component",
        "1 + t psi (p/m) e^{G t}",
        "1 + t psi (S_q/m) e^{-G t}",
        "same exponent as above; on the section gamma the fiber coordinate p equals S_q "
        "(the printed q-component already substitutes S_q).",
    ),
    Discrepancy(
        "oscillator-hj-psi-factor",
        "final oscillator HJ equation",
        "F_q/(1 - q psi) = RHS",
        "F_q/(1 - q psi) = psi RHS/(1 - q psi), i.e. F_q = psi RHS",
        "F_{:q} = F_q + psi/(1 - q psi)(q F_q + t F_t - F) and t F_t - F = -RHS; the printed form "
        "drops psi. It agrees with the colon-derivative residual only where RHS (1 - psi/(1 - q psi)) = 0.",
    ),
    Discrepancy(
        "exact-oneform-bracket-sign",
        "LCS one-form bracket on LdR exact forms",
        "{d_theta F, d_theta H} = d_theta {F, H}",
        "{d_theta F, d_theta H} = -d_theta {F, H}",
        "the bracket's own reduction gives d_theta omega(X_H, X_F) while {F, H} = omega(X_F, X_H); "
        "exact forms still close under the bracket, with the sign flipped. Checked numerically to ~1e-9.",
    ),
)
