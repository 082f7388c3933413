#!/usr/bin/env python3
"""Transport on the circle: trajectories that jump across the boundary.

On the periodic unit interval a self-adjoint evolution can carry a net
boundary current j(0, t): probability flows out at one end and back in at
the other.  Levels of the shifted CDF F~(q,t) = (F(q,t) - int_0^t j_s(0) ds)
mod 1 define the dynamics; when a level wraps past an integer the
trajectory jumps to the other end.  The pushforward of the initial density
still matches |psi_t|^2 exactly.

Run:  python demos/07_circle_transport.py
"""

from pathlib import Path

import math

import numpy as np

from bohmlab import PlaneWaveCircle
from bohmlab.transport1d import (
    boundary_current_integral,
    build_cdf_table,
    circle_transport_many,
    circle_transport_path,
)
from bohmlab.wavefunction import sample_initial

OUT = Path("demo_output")


def main():
    print(__doc__)
    pw = PlaneWaveCircle({0: math.sqrt(0.7), 1: math.sqrt(0.3)})
    print("two-mode state: c_0 = sqrt(0.7), c_1 = sqrt(0.3)")
    for t in (0.25, 0.5, 1.0):
        print(f"  accumulated boundary current c({t}) = "
              f"{boundary_current_integral(pw, t):.6f}")

    times = np.linspace(0.0, 1.0, 41)
    OUT.mkdir(exist_ok=True)
    with open(OUT / "circle_paths.csv", "w") as fh:
        fh.write("q0,t,Q_t\n")
        for q0 in (0.1, 0.35, 0.6, 0.85):
            pos, jumps = circle_transport_path(pw, q0, times)
            for t, q in zip(times, pos):
                fh.write(f"{q0:.17g},{t:.17g},{q:.17g}\n")
            print(f"  trajectory from q0 = {q0}: {jumps} boundary jump(s) on [0, 1]")
    print(f"wrote {OUT/'circle_paths.csv'}")

    n = 10_000
    q0 = sample_initial(pw, n, seed=411).configurations[:, 0]
    t = 1.0
    mapped = circle_transport_many(pw, q0, t)
    table = build_cdf_table(pw, t)
    F = np.interp(np.sort(mapped), table.grid, table.F)
    i = np.arange(1, n + 1)
    ks = float(np.max(np.maximum(np.abs(F - i / n), np.abs(F - (i - 1) / n))))
    print(f"\npushforward of {n} samples at t = {t}: KS vs |psi_t|^2 = {ks:.4f}")
    print("(pure sampling noise is ~ 1.36/sqrt(n) = %.4f: the density is"
          % (1.36 / math.sqrt(n)))
    print(" transported exactly, jumps and all)")


if __name__ == "__main__":
    main()
