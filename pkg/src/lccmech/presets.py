"""Built-in model documents (same shape as a model JSON file)."""
from __future__ import annotations

import copy

OSCILLATOR_H = "p1^2/(2*m0*exp(G*t)) + (m0*exp(G*t)/2)*q1^2"

_PRESETS = {
    # damped oscillator with accreting mass m0 e^{G t} and Lee form psi dq
    "oscillator": {
        "n": 1,
        "constants": {"m0": 1.0, "G": 0.1},
        "lee": {"psi": ["0.05"], "zeta": "0"},
        "hamiltonian": OSCILLATOR_H,
        "hj": {"S": "q1^2/2"},
        "integrator": {"method": "rk4", "dt": 1e-3, "steps": 1000},
        "initial": [1.0, 0.0, 0.0],
        "seed": 42,
    },
}


def preset(name: str) -> dict:
    try:
        return copy.deepcopy(_PRESETS[name])
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; available: {sorted(_PRESETS)}") from None


def names() -> list[str]:
    return sorted(_PRESETS)
