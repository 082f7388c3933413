#!/usr/bin/env python3
"""Absolute flux integrals bound crossing and stopping probabilities.

Three boundary families control the killed process: the ball boundary
|q| = n (flux I(n)), the singular tubes dist(q, S) = delta (flux S(delta)),
and the faces of a cube cover of the nodal set (flux N(eps)).  This script
measures each against Monte Carlo trajectory statistics:

  * spreading 2D packet vs spheres: empirical crossings track I(n) almost
    exactly and respect the Cauchy-Schwarz bound mu * I~(n);
  * oscillator ensemble: the full stopping-probability table with the
    bound sum I + S + N + initial-excluded-mass per schedule row.

Run:  python demos/05_flux_bounds.py [--samples N]
"""

import argparse
from pathlib import Path

import numpy as np

from bohmlab import DomainSpec, FreeGaussianPacket, StoppingRegions
from bohmlab.flux import crossing_bound_check, infinity_integral
from bohmlab.scenarios import existence_entries, flux_rows, load_scenario, simulate_rows
from bohmlab.stats import global_existence_report
from bohmlab.trajectory import IntegratorConfig, run_ensemble
from bohmlab.wavefunction import sample_initial

OUT = Path("demo_output")


def main(samples=6000):
    print(__doc__)
    g = FreeGaussianPacket(sigma0=[1.0, 1.0])
    spec = DomainSpec(d=2)
    reg = StoppingRegions(epsilon=1e-12, ball_radius=8.0, horizon=2.0)
    print(f"2D packet: {samples} trajectories to T = 2 ...")
    paths = run_ensemble(g, g.params, spec, reg,
                         sample_initial(g, samples, seed=90817),
                         config=IntegratorConfig(max_step=0.05))
    print("  n    P(cross)    I(n)       mu*I~(n)   verdict")
    for n in (3.0, 4.0, 5.0):
        inf = infinity_integral(g, g.params, n, 2.0)
        rep = crossing_bound_check(paths, lambda q, n=n: float(np.linalg.norm(q) - n),
                                   inf.value)
        print(f" {n:3.0f}   {rep.p_hat:.4f}     {inf.value:.4f}    "
              f"{inf.bound:.4f}    {'PASS' if rep.passes else 'FAIL'}")

    print("\noscillator scenario: stopping probability vs the bound sum")
    sc = load_scenario("paper-ho-superposition").override("samples", samples)
    sim, _, _ = simulate_rows(sc)
    flx = flux_rows(sc)
    report = global_existence_report(existence_entries(sim, flx, sc))
    print("  eps      n    P_hat      excluded     N(eps)      I(n)        sum")
    for r in report.rows:
        print(f" {r.epsilon:7.0e} {r.n:4.0f}  {r.p_hat:8.2e}  {r.initial_excluded:.3e}"
              f"   {r.nodal:.3e}   {r.infinity:.3e}   {r.bound_sum:.3e}")
    print(f"bound sums decreasing: {report.sums_decreasing}; "
          f"all rows pass the 3-sigma comparison: {report.all_pass}")
    OUT.mkdir(exist_ok=True)
    with open(OUT / "existence_report.csv", "w") as fh:
        fh.write("epsilon,n,p_hat,excluded,nodal,infinity,bound_sum\n")
        for r in report.rows:
            fh.write(f"{r.epsilon:.17g},{r.n:.17g},{r.p_hat:.17g},"
                     f"{r.initial_excluded:.17g},{r.nodal:.17g},"
                     f"{r.infinity:.17g},{r.bound_sum:.17g}\n")
    print(f"wrote {OUT/'existence_report.csv'}")


if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--samples", type=int, default=6000)
    main(**vars(ap.parse_args()))
