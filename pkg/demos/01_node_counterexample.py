#!/usr/bin/env python3
"""The symmetric trajectory that runs into a wavefunction node.

The state is a superposition of the harmonic-oscillator ground state and
second excited state (hbar = m = omega = 1).  Its guidance velocity field
is odd in q, so the trajectory started at q0 = 0 stays at the origin -- and
the wavefunction at the origin vanishes at t = pi/2, where the velocity
field blows up.  The killed process stops the trajectory when |psi| drops
to the node threshold epsilon; as epsilon shrinks the stopping time climbs
to pi/2.

Run:  python demos/01_node_counterexample.py [--plot]
"""

import argparse
import math
from pathlib import Path

import numpy as np

from bohmlab import DomainSpec, HermiteSuperposition1D, StoppingRegions
from bohmlab.trajectory import integrate

OUT = Path("demo_output")


def main(plot=False):
    model = HermiteSuperposition1D.counterexample()
    spec = DomainSpec(d=1)
    print(__doc__)
    print(f"normalization constant (computed by quadrature): "
          f"{model.normalization_constant:.12f}")
    print("\nepsilon      stop cause   stop time        pi/2 - stop time")
    rows = []
    for eps in (1e-1, 1e-2, 1e-3, 1e-4, 1e-5):
        reg = StoppingRegions(epsilon=eps, ball_radius=6.0, horizon=3.0)
        p = integrate(model, model.params, spec, reg, 0.0)
        gap = math.pi / 2 - p.stop_time
        rows.append((eps, p.stop_time, gap))
        print(f"{eps:8.0e}   {p.stop_cause.value:10s}   {p.stop_time:.9f}    {gap:.3e}")
    print("\nThe gap scales like epsilon / (2C |sin t|): each factor of 10 in")
    print("epsilon buys a factor of 10 in the distance to the node time.")

    # neighbours are mirror images and survive (they swerve around the node)
    reg = StoppingRegions(epsilon=1e-4, ball_radius=6.0, horizon=3.0)
    pa = integrate(model, model.params, spec, reg, 0.4)
    pb = integrate(model, model.params, spec, reg, -0.4)
    ts = np.linspace(0, 3.0, 61)
    mirror = max(abs(pa.position_at(t)[0] + pb.position_at(t)[0]) for t in ts)
    print(f"\ntrajectories from +-0.4 reach the horizon ({pa.stop_cause.value}, "
          f"{pb.stop_cause.value}) and mirror each other to {mirror:.1e}")

    OUT.mkdir(exist_ok=True)
    with open(OUT / "node_counterexample.csv", "w") as fh:
        fh.write("epsilon,stop_time,gap_to_half_pi\n")
        for eps, st, gap in rows:
            fh.write(f"{eps:.17g},{st:.17g},{gap:.17g}\n")
    print(f"wrote {OUT/'node_counterexample.csv'}")

    if plot:
        import matplotlib.pyplot as plt

        ts = np.linspace(0, 2.9, 400)
        for q0 in (-1.6, -0.8, -0.4, 0.4, 0.8, 1.6):
            p = integrate(model, model.params, spec, reg, q0)
            tt = ts[ts <= p.stop_time]
            plt.plot(tt, [p.position_at(t)[0] for t in tt], lw=1)
        plt.axhline(0, color="k", lw=2, label="trapped trajectory q0=0")
        plt.scatter([math.pi / 2], [0], color="r", zorder=5, label="node (0, pi/2)")
        plt.xlabel("t"), plt.ylabel("Q_t"), plt.legend()
        plt.title("guided trajectories around the node at (0, pi/2)")
        plt.savefig(OUT / "node_counterexample.png", dpi=130)
        print(f"wrote {OUT/'node_counterexample.png'}")


if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--plot", action="store_true")
    main(**vars(ap.parse_args()))
