"""Damped oscillator on an LCC chart: how the Lee form psi bends the flow.

Integrates E_H from the preset's initial point for a few psi values and prints
end states, the energy identity and the drift of t away from tau.

    python3 scripts/oscillator_demo.py [--steps 2000] [--csv-dir out/]
"""
import argparse
from pathlib import Path

import numpy as np

from lccmech import presets
from lccmech.cli import parse_model
from lccmech.dynamics import integrate


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=2000)
    ap.add_argument("--dt", type=float, default=1e-3)
    ap.add_argument("--psi", nargs="+", default=["0", "0.05", "0.2", "0.1*q1"])
    ap.add_argument("--csv-dir", type=Path)
    args = ap.parse_args()

    print(f"{'psi':>8} {'q(T)':>10} {'p(T)':>10} {'t(T)-T':>10} {'H(T)':>10} {'max|<dH,X_H>|':>14}")
    for psi in args.psi:
        doc = presets.preset("oscillator")
        doc["lee"]["psi"] = [psi]
        sys_ = parse_model(doc).system()
        tr = integrate(sys_, doc["initial"], args.steps, args.dt)
        q, p, t = tr.points[-1]
        T = tr.tau[-1]
        print(f"{psi:>8} {q:10.6f} {p:10.6f} {t - T:10.2e} {tr.H[-1]:10.6f} {np.max(tr.energy_residual):14.2e}")
        if args.csv_dir:
            args.csv_dir.mkdir(parents=True, exist_ok=True)
            (args.csv_dir / f"oscillator_psi_{psi.replace('*', '')}.csv").write_text(tr.to_csv())


if __name__ == "__main__":
    main()
