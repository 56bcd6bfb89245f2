"""Random model generators shared by the test modules."""
from __future__ import annotations

import itertools

import numpy as np

from lccmech import expr as E
from lccmech.calculus import LeeForm
from lccmech.dynamics import HamiltonianSystem
from lccmech.geometry import LCCStructure, build_lcc


def monomials(names, degree):
    for d in range(1, degree + 1):
        yield from itertools.combinations_with_replacement(names, d)


def random_poly(rng, names, degree=2, scale=0.3, terms=4, const=True) -> str:
    monos = list(monomials(names, degree))
    pick = rng.choice(len(monos), size=min(terms, len(monos)), replace=False)
    parts = [f"{rng.uniform(-scale, scale):.6f}*" + "*".join(monos[i]) for i in pick]
    if const:
        parts.append(f"{rng.uniform(-scale, scale):.6f}")
    return " + ".join(parts)


def random_potential(rng, n, degree=3, scale=0.15) -> E.Expr:
    """sigma(q, t) of degree <= 3, so Theta = d sigma has psi, zeta of degree <= 2."""
    names = [f"q{i + 1}" for i in range(n)] + ["t"]
    return E.parse(random_poly(rng, names, degree, scale, terms=5, const=False), names)


def random_lcc(rng, n, degree=3) -> LCCStructure:
    return build_lcc(n, LeeForm.from_potential(random_potential(rng, n, degree), n))


def random_hamiltonian(rng, n, degree=3) -> E.Expr:
    names = [f"q{i + 1}" for i in range(n)] + [f"p{i + 1}" for i in range(n)] + ["t"]
    return E.parse(random_poly(rng, names, degree, 1.0, terms=6), names)


def random_models(count=20, seed=0):
    """(structure, system) pairs with n cycling over 1, 2, 3."""
    rng = np.random.default_rng(seed)
    out = []
    for k in range(count):
        n = 1 + k % 3
        s = random_lcc(rng, n)
        out.append((s, HamiltonianSystem(s, random_hamiltonian(rng, n))))
    return out


def oscillator(psi="0.05", G=0.1, m0=1.0):
    from lccmech.presets import OSCILLATOR_H
    s = LCCStructure(1, LeeForm.parse([psi], "0"), {"m0": m0, "G": G})
    return HamiltonianSystem(s, OSCILLATOR_H)
