"""Compare the observed <t>^{1/3} sup-norm ratio with the computed constant M_V.

    python3 scripts/theorem_bound.py [--count 10] [--seed 202] [--tmax 200]
"""
from __future__ import annotations

import argparse

import numpy as np

from perdisp.evolve import sup_norm_decay
from perdisp.potential import PeriodicPotential
from perdisp.propagator import WavePacket, dispersive_constant


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--count", type=int, default=10)
    ap.add_argument("--seed", type=int, default=202)
    ap.add_argument("--tmax", type=float, default=200.0)
    ap.add_argument("--samples", type=int, default=401)
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)
    times = np.linspace(0, args.tmax, args.samples)
    print(f"{'potential':<44} {'delta':>9} {'M_V':>9} {'max ratio':>10} {'slack':>8}")
    for i in range(args.count):
        p = (2, 3, 4)[i % 3]
        V = PeriodicPotential(np.round(rng.uniform(-2, 2, p), 6))
        dc = dispersive_constant(V)
        r = sup_norm_decay(V, WavePacket.delta(0), times, fit_window=None).ratio.max()
        label = "[" + ", ".join(f"{v:+.3f}" for v in V.values) + "]"
        print(f"{label:<44} {dc.delta:9.4f} {dc.M_V:9.2f} {r:10.4f} {dc.M_V / r:8.1f}")


if __name__ == "__main__":
    main()
