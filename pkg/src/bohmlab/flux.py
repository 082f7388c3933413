"""Absolute-flux surface integrals over stopping-region boundaries.

The probability that a trajectory of the stopped process crosses a surface
in configuration-space-time is bounded by the absolute flux
int |J . U| dsigma with J = (j, |psi|^2).  Three surface families matter:

  * the lateral boundary of the ball, |q| = n, over (0, T)      -> I(n)
  * the singular tubes dist(q, S_l) = delta_l over (0, T)       -> S(delta)
  * the exterior faces of a cube cover of the nodal set         -> N(eps, delta, n)

All surfaces are quadrature node sets with space-time unit normals; every
integral is computed at two refinement levels and reported with the
difference as its error estimate.

Node detection for the cube cover is necessarily heuristic (the exact nodal
set is unknown): cubes are retained on a sign-change test of Re/Im psi over
corners+center or when a local minimization of |psi| started from the best
corner drops below a threshold, and the per-cube evidence is recorded so
false negatives are auditable.  For small cube sides the cover is built by
aligned hierarchical refinement with a Lipschitz-style pruning bound.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .domain import DomainSpec, PhysicalParams, SingularHyperplane
from .trajectory import KilledPath
from .wavefunction import WavefunctionModel, current

__all__ = [
    "FluxSurface",
    "FluxResult",
    "QuadratureDivergence",
    "NotApplicable",
    "GridTooCoarse",
    "sphere_lateral",
    "singular_tube",
    "time_slice",
    "absolute_flux",
    "surface_integral",
    "signed_flux",
    "infinity_integral",
    "InfinityIntegral",
    "singular_integral",
    "SingularIntegral",
    "NodalCubeCover",
    "build_nodal_cover",
    "cover_dump_csv",
    "nodal_integral",
    "crossing_bound_check",
    "CrossingReport",
    "hardy_check",
    "hardy_check_model",
    "HardyReport",
    "continuity_balance",
]


class QuadratureDivergence(Exception):
    """Refinement failed to stabilize the surface integral."""


class NotApplicable(Exception):
    pass


class GridTooCoarse(Exception):
    pass


@dataclass
class FluxSurface:
    """Quadrature nodes on a space-time surface with unit normals.

    `points` are spatial positions (M, d), `times` their time coordinates,
    `normals` space-time unit vectors (M, d+1), `weights` the surface
    measure attached to each node.
    """

    kind: str
    points: np.ndarray
    times: np.ndarray
    normals: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        norms = np.linalg.norm(self.normals, axis=1)
        if not np.allclose(norms, 1.0, atol=1e-9):
            raise ValueError("surface normals must be unit length")
        if np.any(self.weights < 0):
            raise ValueError("quadrature weights must be positive")


@dataclass
class FluxResult:
    value: float
    error_estimate: float
    coarse_value: float
    kind: str

    def __float__(self):
        return self.value


def _gl(n):
    return np.polynomial.legendre.leggauss(n)


def _time_nodes(t_range, n_panels, gl_order=8):
    """Composite Gauss-Legendre nodes/weights on (t0, t1)."""
    t0, t1 = t_range
    edges = np.linspace(t0, t1, n_panels + 1)
    x, w = _gl(gl_order)
    half = 0.5 * (edges[1] - edges[0])
    mids = 0.5 * (edges[:-1] + edges[1:])
    nodes = (mids[:, None] + half * x[None, :]).reshape(-1)
    weights = np.tile(half * w, n_panels)
    return nodes, weights


def _sphere_nodes(d, radius, n_ang):
    """Quadrature on the sphere |q| = radius in d = 1, 2, 3 dimensions."""
    if d == 1:
        pts = np.array([[-radius], [radius]])
        w = np.array([1.0, 1.0])
        normals = np.array([[-1.0], [1.0]])
    elif d == 2:
        ang = 2.0 * np.pi * np.arange(n_ang) / n_ang
        normals = np.column_stack([np.cos(ang), np.sin(ang)])
        pts = radius * normals
        w = np.full(n_ang, radius * 2.0 * np.pi / n_ang)
    elif d == 3:
        n_pol = max(4, n_ang // 2)
        cth, wth = _gl(n_pol)
        phi = 2.0 * np.pi * np.arange(n_ang) / n_ang
        cth_g, phi_g = np.meshgrid(cth, phi, indexing="ij")
        sth = np.sqrt(1.0 - cth_g**2)
        normals = np.column_stack([
            (sth * np.cos(phi_g)).ravel(),
            (sth * np.sin(phi_g)).ravel(),
            cth_g.ravel()])
        pts = radius * normals
        w = (radius**2 * np.outer(wth, np.full(n_ang, 2.0 * np.pi / n_ang))).ravel()
    else:
        raise NotImplementedError("sphere quadrature implemented for d <= 3")
    return pts, normals, w


def sphere_lateral(d: int, radius: float, t_range, n_ang: int = 64,
                   n_time: int = 16) -> FluxSurface:
    """Lateral boundary {|q| = radius} x (t0, t1); normals are spatial."""
    pts, nrm, w = _sphere_nodes(d, radius, n_ang)
    tn, tw = _time_nodes(t_range, n_time)
    M, K = pts.shape[0], tn.size
    points = np.repeat(pts, K, axis=0)
    times = np.tile(tn, M)
    normals = np.hstack([np.repeat(nrm, K, axis=0), np.zeros((M * K, 1))])
    weights = (w[:, None] * tw[None, :]).reshape(-1)
    return FluxSurface("sphere_lateral", points, times, normals, weights)


def singular_tube(hyperplane: SingularHyperplane, delta: float, d: int,
                  t_range, ball_radius: float | None = None, n_ang: int = 32,
                  n_time: int = 16, n_axis: int = 8) -> FluxSurface:
    """The tube boundary {q : |y_l(q) - a_l| = delta} x (t0, t1).

    In d = 3 the tube is a sphere around the singular point.  For d > 3 the
    sphere in the three normal coordinates is crossed with a Gauss grid of
    the orthogonal coordinates, clipped to the ball |q| <= ball_radius.
    """
    y_pts, y_nrm, y_w = _sphere_nodes(3, delta, n_ang)
    base = hyperplane.offset + y_pts  # sphere in normal coordinates
    P = hyperplane.normals  # (3, d)
    q_sphere = base @ P
    u_sphere = y_nrm @ P
    if d == 3:
        pts, nrm, w = q_sphere, u_sphere, y_w
    else:
        if ball_radius is None:
            raise ValueError("d > 3 tube needs a ball radius for clipping")
        comp = _complement_basis(P, d)
        x, wx = _gl(n_axis)
        axes = [ball_radius * x for _ in range(d - 3)]
        wts = [ball_radius * wx for _ in range(d - 3)]
        grids = np.meshgrid(*axes, indexing="ij")
        zw = np.ones(grids[0].size)
        for wgt, g in zip(np.meshgrid(*wts, indexing="ij"), grids):
            zw = zw * wgt.ravel()
        z = np.column_stack([g.ravel() for g in grids]) @ comp
        pts = (q_sphere[:, None, :] + z[None, :, :]).reshape(-1, d)
        nrm = np.repeat(u_sphere, z.shape[0], axis=0)
        w = (y_w[:, None] * zw[None, :]).reshape(-1)
        keep = np.linalg.norm(pts, axis=1) <= ball_radius
        pts, nrm, w = pts[keep], nrm[keep], w[keep]
    tn, tw = _time_nodes(t_range, n_time)
    M, K = pts.shape[0], tn.size
    points = np.repeat(pts, K, axis=0)
    times = np.tile(tn, M)
    normals = np.hstack([np.repeat(nrm, K, axis=0), np.zeros((M * K, 1))])
    weights = (w[:, None] * tw[None, :]).reshape(-1)
    return FluxSurface("singular_tube", points, times, normals, weights)


def _complement_basis(P: np.ndarray, d: int) -> np.ndarray:
    """Orthonormal basis of the orthogonal complement of the rows of P."""
    full = np.vstack([P, np.eye(d)])
    q, _ = np.linalg.qr(full.T)
    return q[:, 3:d].T


def time_slice(box, t: float, n_per_axis: int = 32) -> FluxSurface:
    """A fixed-time box slice; the normal is the pure time direction."""
    d = len(box)
    x, w = _gl(n_per_axis)
    axes, wts = [], []
    for lo, hi in box:
        half = 0.5 * (hi - lo)
        axes.append(0.5 * (lo + hi) + half * x)
        wts.append(half * w)
    grids = np.meshgrid(*axes, indexing="ij")
    points = np.column_stack([g.ravel() for g in grids])
    weights = np.ones(points.shape[0])
    for wg in np.meshgrid(*wts, indexing="ij"):
        weights = weights * wg.ravel()
    normals = np.zeros((points.shape[0], d + 1))
    normals[:, -1] = 1.0
    times = np.full(points.shape[0], float(t))
    return FluxSurface("time_slice", points, times, normals, weights)


def surface_integral(model: WavefunctionModel, params: PhysicalParams,
                     surface: FluxSurface, integrand) -> float:
    """Sum of integrand(sample, normals) over the surface quadrature."""
    s = model.evaluate(surface.points, surface.times)
    vals = integrand(s, surface.normals)
    return float(np.dot(np.asarray(vals), surface.weights))


def _abs_JU(params):
    def f(sample, normals):
        j, J = current(sample, params)
        return np.abs(np.einsum("mk,mk->m", J, normals))
    return f


def _signed_JU(params):
    def f(sample, normals):
        j, J = current(sample, params)
        return np.einsum("mk,mk->m", J, normals)
    return f


def _psi_gradpsi(params):
    def f(sample, normals):
        psi = np.atleast_1d(sample.psi)
        grad = np.asarray(sample.grad)
        return np.abs(psi) * np.linalg.norm(grad, axis=-1)
    return f


def absolute_flux(model: WavefunctionModel, params: PhysicalParams, builder,
                  divergence_tol: float = 0.05) -> FluxResult:
    """int |J . U| dsigma with a two-level refinement error estimate.

    `builder(level)` returns the surface at refinement level 0 (coarse) or
    1 (fine).  Raises QuadratureDivergence when the two levels disagree by
    more than `divergence_tol` relative (with an absolute floor for
    near-zero integrals).
    """
    coarse_s, fine_s = builder(0), builder(1)
    coarse = surface_integral(model, params, coarse_s, _abs_JU(params))
    fine = surface_integral(model, params, fine_s, _abs_JU(params))
    err = abs(fine - coarse)
    if err > divergence_tol * max(abs(fine), 1e-12):
        raise QuadratureDivergence(
            f"surface integral unstable: coarse={coarse:.6e} fine={fine:.6e}")
    return FluxResult(value=fine, error_estimate=err, coarse_value=coarse,
                      kind=fine_s.kind)


def signed_flux(model: WavefunctionModel, params: PhysicalParams,
                surface: FluxSurface) -> float:
    return surface_integral(model, params, surface, _signed_JU(params))


@dataclass
class InfinityIntegral:
    """I(n) together with its Cauchy-Schwarz bound mu * Itilde(n)."""

    n: float
    value: float
    error_estimate: float
    bound: float  # mu * int |psi| |grad psi|

    @property
    def satisfies_bound(self) -> bool:
        return self.value <= self.bound * (1.0 + 1e-9) + 1e-15


def infinity_integral(model: WavefunctionModel, params: PhysicalParams, n: float,
                      T: float, n_ang: int = 64, n_time: int = 24) -> InfinityIntegral:
    """Absolute flux through {|q| = n} x (0, T) and the |psi||grad psi| bound."""
    def builder(level):
        f = 2 if level else 1
        return sphere_lateral(model.d, n, (0.0, T), n_ang * f, n_time * f)
    res = absolute_flux(model, params, builder)
    tilde = surface_integral(model, params, builder(1), _psi_gradpsi(params))
    return InfinityIntegral(n=n, value=res.value, error_estimate=res.error_estimate,
                            bound=params.mu * tilde)


@dataclass
class SingularIntegral:
    delta: tuple
    value: float
    per_hyperplane: tuple
    error_estimate: float


def singular_integral(model: WavefunctionModel, params: PhysicalParams,
                      spec: DomainSpec, delta, n: float, T: float,
                      n_ang: int = 32, n_time: int = 16) -> SingularIntegral:
    """Absolute flux through the tube boundaries, summed over hyperplanes."""
    if spec.d < 3 or spec.m == 0:
        raise NotApplicable("singular integral needs d >= 3 and a nonempty singular set")
    delta = np.broadcast_to(np.asarray(delta, dtype=float), (spec.m,))
    vals, errs = [], []
    for h, dl in zip(spec.hyperplanes, delta):
        def builder(level, h=h, dl=dl):
            f = 2 if level else 1
            return singular_tube(h, float(dl), spec.d, (0.0, T), ball_radius=n,
                                 n_ang=n_ang * f, n_time=n_time * f)
        res = absolute_flux(model, params, builder)
        vals.append(res.value)
        errs.append(res.error_estimate)
    return SingularIntegral(delta=tuple(delta), value=float(np.sum(vals)),
                            per_hyperplane=tuple(vals), error_estimate=float(np.sum(errs)))


# -- nodal cube cover ------------------------------------------------------

@dataclass
class CubeRecord:
    index: tuple
    min_point: tuple
    min_abs_psi: float
    sign_change: bool
    min_criterion: bool


@dataclass
class NodalCubeCover:
    """Retained side-epsilon cubes of the space-time partition around nodes."""

    epsilon: float
    d: int
    region: tuple  # ((lo, hi) per spatial axis, (t0, t1) last)
    cubes: set = field(default_factory=set)
    records: dict = field(default_factory=dict)

    @property
    def measure(self) -> float:
        return len(self.cubes) * self.epsilon ** (self.d + 1)

    def corners_of(self, k: tuple) -> np.ndarray:
        base = np.asarray(k, dtype=float) * self.epsilon
        offs = np.array(list(itertools.product((0.0, 1.0), repeat=self.d + 1)))
        return base + offs * self.epsilon


def _eval_abs_prime(model, pts):
    """|psi| and |(grad psi, dpsi/dt)| at flat space-time points (B, d+1)."""
    s = model.evaluate(pts[:, :-1], pts[:, -1])
    psi = np.atleast_1d(s.psi)
    grad = np.asarray(s.grad).reshape(pts.shape[0], -1)
    dpsi = np.atleast_1d(s.dpsi_dt)
    prime = np.sqrt(np.linalg.norm(grad, axis=1) ** 2 + np.abs(dpsi) ** 2)
    return np.abs(psi), prime, psi


def build_nodal_cover(model: WavefunctionModel, epsilon: float, region,
                      theta: float = 1e-3, coarse_side: float | None = None,
                      prune_margin: float = 1.5) -> NodalCubeCover:
    """Cube cover of the nodal set inside `region` (spatial box x time range).

    The partition is anchored at the origin with side `epsilon`.  Cubes are
    found by hierarchical halving from an aligned coarse grid: a cube is
    discarded when min sampled |psi| > prune_margin * max sampled |psi'| *
    half-diagonal (so it cannot contain a zero under the sampled Lipschitz
    scale).  At the final level the retention test is the sign-change /
    local-minimization criterion, with per-cube evidence recorded.
    """
    region = tuple((float(a), float(b)) for a, b in region)
    dim = len(region)
    d = dim - 1
    if d != model.d:
        raise ValueError("region dimension must be model.d + 1")
    # choose the number of halvings so the coarse side is ~ coarse_side
    target = coarse_side if coarse_side is not None else max(
        epsilon, min(b - a for a, b in region) / 8.0)
    levels = max(0, int(round(math.log2(max(target / epsilon, 1.0)))))
    side0 = epsilon * 2**levels

    def cubes_in_region(side):
        los = [int(math.floor(a / side)) for a, _ in region]
        his = [int(math.ceil(b / side)) for _, b in region]
        ranges = [range(lo, hi) for lo, hi in zip(los, his)]
        return [k for k in itertools.product(*ranges)]

    def sample_points(ks, side):
        ks_arr = np.asarray(ks, dtype=float) * side
        offs = np.array(list(itertools.product((0.0, 1.0), repeat=dim)) + [[0.5] * dim])
        pts = ks_arr[:, None, :] + offs[None, :, :] * side
        return pts

    current_side = side0
    cand = cubes_in_region(side0)
    for level in range(levels + 1):
        pts = sample_points(cand, current_side)
        flat = pts.reshape(-1, dim)
        abspsi, prime, psi = _eval_abs_prime(model, flat)
        npts = pts.shape[1]
        abspsi = abspsi.reshape(-1, npts)
        prime = prime.reshape(-1, npts)
        psi = psi.reshape(-1, npts)
        half_diag = 0.5 * current_side * math.sqrt(dim)
        reach = prune_margin * prime.max(axis=1) * half_diag
        keep = abspsi.min(axis=1) <= np.maximum(reach, 1e-300)
        if level == levels:
            final_kept = [c for c, k in zip(cand, keep) if k]
            final_abspsi = abspsi[keep]
            final_prime = prime[keep]
            final_psi = psi[keep]
            break
        next_cand = []
        for c, k in zip(cand, keep):
            if not k:
                continue
            base = tuple(2 * x for x in c)
            for off in itertools.product((0, 1), repeat=dim):
                next_cand.append(tuple(b + o for b, o in zip(base, off)))
        cand = next_cand
        current_side *= 0.5
        if not cand:
            final_kept, final_abspsi, final_prime, final_psi = [], np.empty((0, 0)), None, None
            break

    cover = NodalCubeCover(epsilon=epsilon, d=d, region=region)
    for i, k in enumerate(final_kept):
        vals = final_psi[i]
        sign_change = (vals.real.max() > 0 > vals.real.min()) and \
                      (vals.imag.max() > 0 > vals.imag.min())
        # local minimization of |psi| from the best sampled point
        j0 = int(np.argmin(final_abspsi[i]))
        offs = np.array(list(itertools.product((0.0, 1.0), repeat=dim)) + [[0.5] * dim])
        x0 = (np.asarray(k, dtype=float) + offs[j0]) * epsilon
        lo = np.asarray(k, dtype=float) * epsilon
        hi = lo + epsilon

        def f(x):
            xc = np.clip(x, lo, hi)
            a, _, _ = _eval_abs_prime(model, xc[None, :])
            return float(a[0])

        res = minimize(f, x0, method="Nelder-Mead",
                       options={"xatol": 1e-4 * epsilon, "fatol": 0.0, "maxiter": 200})
        min_pt = np.clip(res.x, lo, hi)
        min_val = float(res.fun)
        threshold = theta * final_prime[i].max() * epsilon
        min_crit = min_val <= threshold
        if sign_change or min_crit:
            cover.cubes.add(tuple(k))
            cover.records[tuple(k)] = CubeRecord(
                index=tuple(k), min_point=tuple(min_pt), min_abs_psi=min_val,
                sign_change=bool(sign_change), min_criterion=bool(min_crit))
    return cover


def cover_dump_csv(cover: NodalCubeCover, path) -> None:
    """Write the retained cubes with their detection evidence as CSV."""
    dim = cover.d + 1
    with open(path, "w") as fh:
        kcols = ",".join(f"k{a}" for a in range(dim))
        pcols = ",".join([f"min_q{a}" for a in range(dim - 1)] + ["min_t"])
        fh.write(f"{kcols},{pcols},min_abs_psi,sign_change,min_criterion\n")
        for k in sorted(cover.cubes):
            rec = cover.records[k]
            fh.write(",".join(str(x) for x in k) + ","
                     + ",".join(format(x, ".17g") for x in rec.min_point) + ","
                     + f"{rec.min_abs_psi:.17g},{rec.sign_change},{rec.min_criterion}\n")


def _face_quadrature(cover: NodalCubeCover, k: tuple, axis: int, side: int,
                     gl_order: int):
    """Quadrature nodes/weights on one face of cube k (axis, side in 0/1)."""
    dim = cover.d + 1
    eps = cover.epsilon
    lo = np.asarray(k, dtype=float) * eps
    x, w = _gl(gl_order)
    axes, wts = [], []
    for a in range(dim):
        if a == axis:
            continue
        axes.append(lo[a] + 0.5 * eps * (x + 1.0))
        wts.append(0.5 * eps * w)
    if axes:
        grids = np.meshgrid(*axes, indexing="ij")
        pts_other = np.column_stack([g.ravel() for g in grids])
        weights = np.ones(pts_other.shape[0])
        for wg in np.meshgrid(*wts, indexing="ij"):
            weights = weights * wg.ravel()
    else:
        pts_other = np.zeros((1, 0))
        weights = np.ones(1)
    coord = lo[axis] + side * eps
    pts = np.empty((pts_other.shape[0], dim))
    cols = [a for a in range(dim) if a != axis]
    pts[:, cols] = pts_other
    pts[:, axis] = coord
    return pts, weights


def nodal_integral(model: WavefunctionModel, params: PhysicalParams,
                   cover: NodalCubeCover, gl_orders=(4, 8),
                   divergence_tol: float = 0.25) -> FluxResult:
    """Absolute flux through the exterior faces of the cube cover.

    Faces shared by two retained cubes are interior and excluded; faces on
    the region's open time boundary belong to the initial/final slices and
    are excluded as well.
    """
    dim = cover.d + 1
    eps = cover.epsilon
    t0, t1 = cover.region[-1]
    values = []
    for gl_order in gl_orders:
        total = 0.0
        for k in cover.cubes:
            for axis in range(dim):
                for side_ in (0, 1):
                    nb = tuple(x + (1 if side_ else -1) * (1 if a == axis else 0)
                               for a, x in enumerate(k))
                    if nb in cover.cubes:
                        continue
                    coord = (k[axis] + side_) * eps
                    if axis == dim - 1 and (abs(coord - t0) < 1e-12 or abs(coord - t1) < 1e-12):
                        continue
                    pts, w = _face_quadrature(cover, k, axis, side_, gl_order)
                    s = model.evaluate(pts[:, :-1], pts[:, -1])
                    j, J = current(s, params)
                    if axis == dim - 1:
                        vals = np.abs(np.atleast_1d(s.abs2))
                    else:
                        vals = np.abs(np.atleast_2d(j)[:, axis])
                    total += float(vals @ w)
        values.append(total)
    coarse, fine = values
    err = abs(fine - coarse)
    if err > divergence_tol * max(abs(fine), 1e-14):
        raise QuadratureDivergence(
            f"nodal face integral unstable: coarse={coarse:.3e} fine={fine:.3e}")
    return FluxResult(value=fine, error_estimate=err, coarse_value=coarse,
                      kind="nodal_cover_faces")


@dataclass
class CrossingReport:
    p_hat: float
    sigma: float
    mean_crossings: float
    flux_value: float
    n_paths: int

    @property
    def passes(self) -> bool:
        return self.p_hat - 3.0 * self.sigma <= self.flux_value + 1e-12


def crossing_bound_check(paths: list[KilledPath], surface_fn, flux_value: float,
                         dense: int = 4) -> CrossingReport:
    """Empirical crossing probability of {surface_fn(q) = 0} vs the flux bound.

    Crossings are counted by sign changes of surface_fn along each path,
    sampled at the stored steps plus `dense` dense-output points per step.
    PASS means p_hat - 3 sigma <= flux.
    """
    n = len(paths)
    crossed = 0
    total_crossings = 0
    thetas = np.linspace(0.0, 1.0, dense + 1)[1:]
    for p in paths:
        g_prev = surface_fn(p.q[0])
        count = 0
        for i in range(len(p.t) - 1):
            h = p.t[i + 1] - p.t[i]
            for th in thetas:
                h00 = (1 + 2 * th) * (1 - th) ** 2
                h10 = th * (1 - th) ** 2
                h01 = th * th * (3 - 2 * th)
                h11 = th * th * (th - 1)
                qq = h00 * p.q[i] + h10 * h * p.v[i] + h01 * p.q[i + 1] + h11 * h * p.v[i + 1]
                g = surface_fn(qq)
                if g_prev * g < 0 or (g == 0 and g_prev != 0):
                    count += 1
                g_prev = g
        crossed += count > 0
        total_crossings += count
    p_hat = crossed / n if n else 0.0
    sigma = math.sqrt(max(p_hat * (1 - p_hat), 1e-300) / n) if n else 0.0
    return CrossingReport(p_hat=p_hat, sigma=sigma,
                          mean_crossings=total_crossings / n if n else 0.0,
                          flux_value=flux_value, n_paths=n)


@dataclass
class HardyReport:
    lhs: float
    rhs: float
    shell_bound: float
    shell_radius: float

    @property
    def ratio(self) -> float:
        return self.lhs / self.rhs if self.rhs else math.inf

    @property
    def passes(self) -> bool:
        return self.lhs <= self.rhs * (1.0 + 1e-6)


def _hardy_from_arrays(abs2: np.ndarray, grad_sq: np.ndarray, dist: np.ndarray,
                       cell_volume: float, shell_radius: float) -> HardyReport:
    shell = dist < shell_radius
    lhs = float(np.sum(abs2[~shell] / (4.0 * dist[~shell] ** 2))) * cell_volume
    safe = np.maximum(dist[shell], 0.5 * shell_radius)
    shell_bound = float(np.sum(abs2[shell] / (4.0 * safe**2))) * cell_volume
    rhs = float(np.sum(grad_sq)) * cell_volume
    if shell_bound > 0.05 * max(lhs, 1e-300):
        raise GridTooCoarse(
            f"excluded shell contributes {shell_bound:.3e} (> 5% of lhs {lhs:.3e})")
    return HardyReport(lhs=lhs, rhs=rhs, shell_bound=shell_bound,
                       shell_radius=shell_radius)


def hardy_check(psi_grid: np.ndarray, grid_spec, hyperplane: SingularHyperplane) -> HardyReport:
    """Hardy inequality int |psi|^2 / (4 dist^2) <= int |grad psi|^2 on a grid.

    The singular shell dist < max grid spacing is excluded from the left
    side; its clipped contribution is reported and must stay below 5%.
    Gradients are spectral.
    """
    from .propagator import GridState, gradient_spectral

    state = GridState(t=0.0, psi=np.asarray(psi_grid, dtype=complex), spec=grid_spec)
    grads = gradient_spectral(state)
    grad_sq = np.sum(np.abs(grads) ** 2, axis=0).ravel()
    mesh = grid_spec.mesh()
    pts = np.column_stack([g.ravel() for g in mesh])
    dist = hyperplane.distance(pts)
    abs2 = np.abs(state.psi.ravel()) ** 2
    h = max((hi - lo) / n for (lo, hi), n in zip(grid_spec.box, grid_spec.points))
    return _hardy_from_arrays(abs2, grad_sq, dist, grid_spec.cell_volume, h)


def hardy_check_model(model: WavefunctionModel, t: float, box, points,
                      hyperplane: SingularHyperplane) -> HardyReport:
    """Hardy check with analytic gradients, evaluated on a product grid."""
    axes = [np.linspace(lo, hi, n, endpoint=False) + 0.5 * (hi - lo) / n
            for (lo, hi), n in zip(box, points)]
    grids = np.meshgrid(*axes, indexing="ij")
    pts = np.column_stack([g.ravel() for g in grids])
    s = model.evaluate(pts, t)
    abs2 = np.atleast_1d(s.abs2)
    grad_sq = np.sum(np.abs(np.asarray(s.grad)) ** 2, axis=-1)
    dist = hyperplane.distance(pts)
    cell = 1.0
    for (lo, hi), n in zip(box, points):
        cell *= (hi - lo) / n
    h = max((hi - lo) / n for (lo, hi), n in zip(box, points))
    return _hardy_from_arrays(abs2, grad_sq, dist, cell, h)


def continuity_balance(model: WavefunctionModel, params: PhysicalParams, box,
                       t: float, n_per_axis: int = 64, dt: float = 1e-5):
    """Integral continuity check on a box: boundary outflow vs -d/dt mass.

    Returns (boundary_signed_flux, minus_dmass_dt); they agree within the
    quadrature error for smooth states.
    """
    d = len(box)
    x, w = _gl(n_per_axis)
    total = 0.0
    for axis in range(d):
        for side_, sign in ((0, -1.0), (1, 1.0)):
            axes, wts = [], []
            for a in range(d):
                if a == axis:
                    continue
                lo, hi = box[a]
                half = 0.5 * (hi - lo)
                axes.append(0.5 * (lo + hi) + half * x)
                wts.append(half * w)
            if axes:
                grids = np.meshgrid(*axes, indexing="ij")
                pts_other = np.column_stack([g.ravel() for g in grids])
                weights = np.ones(pts_other.shape[0])
                for wg in np.meshgrid(*wts, indexing="ij"):
                    weights = weights * wg.ravel()
            else:
                pts_other = np.zeros((1, 0))
                weights = np.ones(1)
            pts = np.empty((pts_other.shape[0], d))
            cols = [a for a in range(d) if a != axis]
            pts[:, cols] = pts_other
            pts[:, axis] = box[axis][side_]
            s = model.evaluate(pts, t)
            j, _ = current(s, params)
            total += sign * float(np.atleast_2d(j)[:, axis] @ weights)

    def mass(tt):
        axes = []
        wts = []
        for lo, hi in box:
            half = 0.5 * (hi - lo)
            axes.append(0.5 * (lo + hi) + half * x)
            wts.append(half * w)
        grids = np.meshgrid(*axes, indexing="ij")
        pts = np.column_stack([g.ravel() for g in grids])
        weights = np.ones(pts.shape[0])
        for wg in np.meshgrid(*wts, indexing="ij"):
            weights = weights * wg.ravel()
        return float(np.atleast_1d(model.abs2(pts, tt)) @ weights)

    dmass = (mass(t + dt) - mass(t - dt)) / (2.0 * dt)
    return total, -dmass
