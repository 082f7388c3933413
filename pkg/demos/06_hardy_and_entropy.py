#!/usr/bin/env python3
"""Two analytic workhorses: the Hardy inequality and the entropy bound.

Hardy's inequality int |psi|^2 / (4 dist^2) <= int |grad psi|^2 is what
keeps the absolute flux near a codimension-3 singular point integrable;
the script tabulates the ratio for several 3D states.

The entropy functional D_T = log|psi(Q_stop)| - log|psi_0(q_0)| measures
how far a trajectory ascends or descends the wavefunction's modulus; its
Monte Carlo mean is controlled by a space-time quadrature bound.  States
with stationary modulus give exactly D = 0.

Run:  python demos/06_hardy_and_entropy.py
"""

from pathlib import Path

from bohmlab import (
    CylindricalHO3D,
    DomainSpec,
    FreeGaussianPacket,
    HermiteSuperposition1D,
    PlaneWaveCircle,
    SingularHyperplane,
    StoppingRegions,
)
from bohmlab.flux import hardy_check_model
from bohmlab.stats import entropy_functional
from bohmlab.trajectory import run_ensemble
from bohmlab.wavefunction import sample_initial

OUT = Path("demo_output")


def main():
    print(__doc__)
    point = SingularHyperplane.point_in_3d((0.0, 0.0, 0.0))
    states = [
        ("off-center gaussian", FreeGaussianPacket(sigma0=[0.8] * 3,
                                                   center=[1.0, 0.5, 0.0]),
         ((-4, 6), (-4.5, 5.5), (-5, 5))),
        ("cylindrical oscillator", CylindricalHO3D(), ((-6, 6),) * 3),
        ("anisotropic gaussian", FreeGaussianPacket(sigma0=[0.6, 1.0, 1.4],
                                                    center=[0.8, -0.5, 0.3]),
         ((-3.5, 5.1), (-6.5, 5.5), (-8.1, 8.7))),
    ]
    print("Hardy check (singular point at the origin):")
    print("  state                     lhs        rhs       ratio   shell bound")
    for name, model, box in states:
        rep = hardy_check_model(model, 0.0, box, (128, 128, 128), point)
        print(f"  {name:24s} {rep.lhs:9.5f}  {rep.rhs:8.4f}  {rep.ratio:6.3f}"
              f"   {rep.shell_bound:.2e}")
    print("  (cylindrical state: exact values lhs = 1/6, rhs = 5/2)")

    print("\nEntropy functional over [0, T=1]:")
    spec = DomainSpec(d=1)
    ho = HermiteSuperposition1D.counterexample()
    reg = StoppingRegions(epsilon=1e-4, ball_radius=6.0, horizon=1.0)
    paths = run_ensemble(ho, ho.params, spec, reg, sample_initial(ho, 4000, seed=11))
    rep = entropy_functional(paths, ho, ho.params, 1.0)
    print(f"  oscillator superposition: E|D| = {rep.mean_abs_d:.4f} <= bound "
          f"{rep.bound:.4f}  (time term {rep.time_term:.3f} + gradient term "
          f"{rep.gradient_term:.3f})")
    eig = HermiteSuperposition1D([0.0, 1.0])
    epaths = run_ensemble(eig, eig.params, spec,
                          StoppingRegions(epsilon=1e-8, ball_radius=8.0, horizon=1.0),
                          sample_initial(eig, 500, seed=3))
    erep = entropy_functional(epaths, eig, eig.params, 1.0)
    pw = PlaneWaveCircle({1: 1.0})
    ppaths = run_ensemble(pw, pw.params, spec,
                          StoppingRegions(epsilon=1e-8, ball_radius=40.0, horizon=1.0),
                          sample_initial(pw, 500, seed=4))
    prep = entropy_functional(ppaths, pw, pw.params, 1.0)
    print(f"  stationary eigenstate:   max|D| = {erep.max_abs_d:.2e}  (exact 0)")
    print(f"  plane wave:              max|D| = {prep.max_abs_d:.2e}  (exact 0:")
    print("  the particles move, but |psi| is uniform so log|psi| cannot change)")


if __name__ == "__main__":
    main()
