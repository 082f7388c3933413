"""Monotone CDF transport in one dimension.

For a 1D wavefunction the map

    Q_t(q0) = min { q : F(q, t) = F(q0, 0) },     F(q, t) = int_-inf^q |psi_t|^2

pushes the initial |psi_0|^2 distribution to |psi_t|^2 for every t, extends
the guided trajectories through nodes, and is monotone in q0.  Where psi_t
vanishes on an interval F has a plateau and the minimum picks its left
endpoint.  On the periodic unit interval the same construction applies to
F~(q, t) = (F(q, t) - int_0^t j_s(0) ds) mod 1; trajectories jump across
the boundary when their level wraps.  (The non-jumping alternative dynamics
dQ/dt = (j - j_t(0)) / |psi|^2 exists but is not implemented here.)

Near a node of order k the transported trajectory leaves the node like
|on t|^(2/(2k+1)); `node_scaling_fit` measures that exponent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .wavefunction import WavefunctionModel

__all__ = [
    "CdfTable",
    "LevelOutOfRange",
    "DegenerateWindow",
    "NodeScalingFit",
    "build_cdf_table",
    "cdf",
    "transport_level",
    "transport_map",
    "transport_map_many",
    "boundary_current",
    "boundary_current_integral",
    "circle_transport",
    "circle_transport_many",
    "circle_transport_path",
    "node_scaling_fit",
]

_PLATEAU_DENSITY = 1e-14
_LEVEL_FLOOR = 1e-13


class LevelOutOfRange(Exception):
    """Requested CDF level outside (0, 1)."""


class DegenerateWindow(Exception):
    """Too few usable points for a scaling fit."""


# Gauss-Legendre nodes/weights on (-1, 1)
_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)
_GL24_X, _GL24_W = np.polynomial.legendre.leggauss(24)


@dataclass
class CdfTable:
    """Monotone table of F(., t) on a grid, with detected plateau intervals."""

    t: float
    grid: np.ndarray
    F: np.ndarray
    plateaus: tuple

    def bracket(self, level: float) -> tuple[float, float, float]:
        """Leftmost cell [a, b] with F(a) < level <= F(b); returns (a, b, F(a))."""
        idx = int(np.searchsorted(self.F, level, side="left"))
        idx = min(max(idx, 1), len(self.F) - 1)
        return float(self.grid[idx - 1]), float(self.grid[idx]), float(self.F[idx - 1])


def _density(model: WavefunctionModel, t: float):
    def rho(q):
        return model.abs2(np.asarray(q, dtype=float), t)
    return rho


def build_cdf_table(model: WavefunctionModel, t: float, n_cells: int = 4096,
                    bounds: tuple[float, float] | None = None) -> CdfTable:
    """Cumulative quadrature of |psi_t|^2 with per-cell Gauss-Legendre rule."""
    lo, hi = bounds if bounds is not None else model.quad_support(t)
    edges = np.linspace(lo, hi, n_cells + 1)
    half = 0.5 * (edges[1] - edges[0])
    mids = 0.5 * (edges[:-1] + edges[1:])
    nodes = mids[:, None] + half * _GL_X[None, :]
    dens = model.abs2(nodes.reshape(-1), t).reshape(n_cells, -1)
    cell_mass = half * dens @ _GL_W
    F = np.concatenate([[0.0], np.cumsum(cell_mass)])
    total = F[-1]
    if not (1.0 - 1e-6 < total < 1.0 + 1e-6):
        raise ValueError(f"|psi_t|^2 mass on [{lo}, {hi}] is {total:.8f}, not ~1")
    cell_max = dens.max(axis=1)
    plateaus = []
    in_run, start = False, 0
    for i, flat in enumerate(cell_max < _PLATEAU_DENSITY):
        if flat and not in_run:
            in_run, start = True, i
        elif not flat and in_run:
            plateaus.append((float(edges[start]), float(edges[i])))
            in_run = False
    if in_run:
        plateaus.append((float(edges[start]), float(edges[-1])))
    return CdfTable(t=t, grid=edges, F=F, plateaus=tuple(plateaus))


def cdf(model: WavefunctionModel, q: float, t: float, *, epsabs: float = 1e-12) -> float:
    """F(q, t) by adaptive quadrature from the left end of the support."""
    lo, hi = model.quad_support(t)
    if q <= lo:
        return 0.0
    rho = _density(model, t)
    val = quad(rho, lo, min(q, hi), epsabs=epsabs, epsrel=1e-12, limit=400)[0]
    if q >= hi:
        return min(val, 1.0)
    return min(max(val, 0.0), 1.0)


def transport_level(model: WavefunctionModel, level: float, t: float,
                    table: CdfTable | None = None, tol: float = 1e-10) -> float:
    """Leftmost q with F(q, t) = level, by bracketed bisection + Newton polish.

    The bisection keeps the invariant F(a) < level <= F(b), which converges
    to the left endpoint of a plateau when the level sits on one.
    """
    if not (0.0 < level < 1.0):
        raise LevelOutOfRange(f"level {level} outside (0, 1)")
    if table is None or table.t != t:
        table = build_cdf_table(model, t)
    a, b, Fa = table.bracket(level)
    rho = _density(model, t)

    def F_from(x0, F0, x1):
        # sub-cell smooth integrand: fixed GL-24 is machine precise here
        half = 0.5 * (x1 - x0)
        if half <= 0.0:
            return F0
        nodes = 0.5 * (x0 + x1) + half * _GL24_X
        return F0 + half * float(rho(nodes) @ _GL24_W)

    ga = Fa - level                      # < 0 by bracket construction
    for _ in range(200):
        mid = 0.5 * (a + b)
        gm = F_from(a, ga + level, mid) - level
        if gm < 0.0:
            a, ga = mid, gm
        else:
            b = mid
        if b - a < tol:
            break
        # Newton acceleration from the left edge where the density allows
        dens_a = float(rho(a))
        if dens_a > 1e-12 and ga < 0.0:
            step = -ga / dens_a
            cand = a + step
            if a < cand < b:
                gc = F_from(a, ga + level, cand) - level
                if gc < 0.0:
                    a, ga = cand, gc
                else:
                    b = cand
        if b - a < tol:
            break
    # a level sitting on a plateau resolves to the plateau's left endpoint
    for qa, qb in table.plateaus:
        if qa < b <= qb:
            return qa
    return b


def transport_map(model: WavefunctionModel, q0: float, t: float,
                  table: CdfTable | None = None) -> float:
    """Q_t(q0) = min{q : F(q,t) = F(q0,0)}; -inf/+inf sentinels at levels 0/1."""
    level = cdf(model, q0, 0.0)
    if level <= _LEVEL_FLOOR:
        return -math.inf
    if level >= 1.0 - _LEVEL_FLOOR:
        return math.inf
    return transport_level(model, level, t, table=table)


def _invert_table(table: CdfTable, levels: np.ndarray) -> np.ndarray:
    """Vectorized leftmost table inversion with linear in-cell correction."""
    idx = np.searchsorted(table.F, levels, side="left")
    idx = np.clip(idx, 1, len(table.F) - 1)
    F0 = table.F[idx - 1]
    F1 = table.F[idx]
    q0 = table.grid[idx - 1]
    q1 = table.grid[idx]
    dF = F1 - F0
    frac = np.where(dF > 0, (levels - F0) / np.where(dF > 0, dF, 1.0), 0.0)
    return q0 + np.clip(frac, 0.0, 1.0) * (q1 - q0)


def transport_map_many(model: WavefunctionModel, q0s, t: float,
                       n_cells: int = 8192) -> np.ndarray:
    """Table-based transport of many initial points (accuracy ~ table cell)."""
    q0s = np.asarray(q0s, dtype=float)
    t0_table = build_cdf_table(model, 0.0, n_cells=n_cells)
    levels = np.interp(q0s, t0_table.grid, t0_table.F)
    tt = build_cdf_table(model, t, n_cells=n_cells)
    out = _invert_table(tt, levels)
    out[levels <= _LEVEL_FLOOR] = -np.inf
    out[levels >= 1.0 - _LEVEL_FLOOR] = np.inf
    return out


def boundary_current(model: WavefunctionModel, t) -> np.ndarray | float:
    """Probability current j(0, t) at the periodic boundary."""
    s = model.evaluate(0.0, t)
    hbar = model.params.hbar
    mass = model.params.mass_per_coordinate[0]
    j = (hbar / mass) * (np.conj(s.psi) * np.asarray(s.grad)[..., 0]).imag
    return j


def boundary_current_integral(model: WavefunctionModel, t: float,
                              epsabs: float = 1e-10) -> float:
    """c(t) = int_0^t j_s(0) ds, by adaptive quadrature of the smooth current."""
    if t == 0.0:
        return 0.0
    val = quad(lambda s: float(boundary_current(model, s)), 0.0, t,
               epsabs=epsabs, epsrel=1e-10, limit=400)[0]
    return val


def circle_transport(model: WavefunctionModel, q0: float, t: float,
                     c_t: float | None = None, table: CdfTable | None = None) -> float:
    """Transport on the periodic unit interval with boundary jumps.

    Levels follow F~(q,t) = (F(q,t) - c(t)) mod 1, so the image point solves
    F(q, t) = (F(q0, 0) + c(t)) mod 1.
    """
    if not model.periodic:
        raise ValueError("circle_transport needs a periodic model")
    if c_t is None:
        c_t = boundary_current_integral(model, t)
    level0 = cdf(model, q0, 0.0)
    target = (level0 + c_t) % 1.0
    if target <= _LEVEL_FLOOR or target >= 1.0 - _LEVEL_FLOOR:
        return 0.0
    return transport_level(model, target, t, table=table)


def circle_transport_many(model: WavefunctionModel, q0s, t: float,
                          n_cells: int = 8192) -> np.ndarray:
    q0s = np.asarray(q0s, dtype=float)
    c_t = boundary_current_integral(model, t)
    t0_table = build_cdf_table(model, 0.0, n_cells=n_cells)
    levels = (np.interp(q0s, t0_table.grid, t0_table.F) + c_t) % 1.0
    tt = build_cdf_table(model, t, n_cells=n_cells)
    return _invert_table(tt, levels)


def circle_transport_path(model: WavefunctionModel, q0: float, times) -> tuple[np.ndarray, int]:
    """Positions Q_s(q0) along `times` plus the number of boundary jumps."""
    times = np.asarray(times, dtype=float)
    level0 = cdf(model, q0, 0.0)
    cs = np.empty_like(times)
    acc, prev = 0.0, 0.0
    for i, s in enumerate(times):
        acc += 0.0 if s == prev else quad(
            lambda u: float(boundary_current(model, u)), prev, s,
            epsabs=1e-10, epsrel=1e-10, limit=200)[0]
        cs[i] = acc
        prev = s
    positions = np.empty_like(times)
    for i, s in enumerate(times):
        table = build_cdf_table(model, float(s), n_cells=2048)
        target = (level0 + cs[i]) % 1.0
        if target <= _LEVEL_FLOOR or target >= 1.0 - _LEVEL_FLOOR:
            positions[i] = 0.0
        else:
            positions[i] = transport_level(model, target, float(s), table=table)
    jumps = int(np.abs(np.diff(np.floor(level0 + cs))).sum())
    return positions, jumps


@dataclass
class NodeScalingFit:
    """Log-log fit of the escape |Q_{t*+s}(q*) - q*| ~ prefactor * s^slope."""

    slope: float
    prefactor: float
    expected_slope: float
    n_points: int
    not_a_node: bool
    s_values: np.ndarray
    x_values: np.ndarray


def node_scaling_fit(model: WavefunctionModel, node: tuple[float, float], order: int,
                     t_window: tuple[float, float] = (1e-4, 1e-2),
                     n_points: int = 12) -> NodeScalingFit:
    """Measure the escape exponent of the transport map at a node of order k.

    The expected exponent is 2/(2k+1).  A smooth (non-node) point transports
    differentiably, the fit comes out with slope ~ 1 and is flagged
    `not_a_node`.
    """
    q_star, t_star = node
    level = cdf(model, q_star, t_star)
    if not (0.0 < level < 1.0):
        raise LevelOutOfRange("node level sits at the edge of the distribution")
    svals = np.geomspace(t_window[0], t_window[1], n_points)
    xvals = np.empty(n_points)
    for i, s in enumerate(svals):
        q_s = transport_level(model, level, t_star + float(s), tol=1e-12)
        xvals[i] = q_s - q_star
    usable = np.abs(xvals) > 1e-8
    if usable.sum() < 8:
        raise DegenerateWindow(f"only {int(usable.sum())} usable points")
    logs = np.log(svals[usable])
    logx = np.log(np.abs(xvals[usable]))
    slope, intercept = np.polyfit(logs, logx, 1)
    return NodeScalingFit(
        slope=float(slope), prefactor=float(math.exp(intercept)),
        expected_slope=2.0 / (2 * order + 1), n_points=int(usable.sum()),
        not_a_node=abs(slope - 1.0) < 0.1,
        s_values=svals[usable], x_values=xvals[usable])
