"""Configuration-space geometry and the stopping-region classifier.

A system of N particles in nu spatial dimensions lives on configuration
space R^d, d = nu*N, possibly minus a singular set S (potential
singularities).  S is modelled as a finite union of codimension-3
hyperplanes, each written as {q : y_l(q) = a_l} for three orthonormal
normal vectors.  Trajectories are stopped when they come too close to a
node of the wavefunction (|psi| <= epsilon), too close to S (distance
<= delta_l), or leave a large ball (|q| >= n).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

__all__ = [
    "RegionClass",
    "PhysicalParams",
    "SingularHyperplane",
    "DomainSpec",
    "StoppingRegions",
    "dist_to_singular",
    "classify",
    "classify_batch",
]

_ORTHO_TOL = 1e-12


class RegionClass(IntEnum):
    """Classification of a configuration point against the stopping regions."""

    INTERIOR = 0
    NODE_REGION = 1
    SINGULAR_REGION = 2
    OUTSIDE_BALL = 3


@dataclass(frozen=True)
class PhysicalParams:
    """Masses, spatial dimension per particle and the action scale hbar.

    All bundled scenarios use dimensionless units (hbar = m = 1), but the
    velocity and current fields carry the general per-particle factors
    hbar/m_k.  `mu` is the constant hbar / min(m_k) appearing in the
    pointwise bound |v| <= mu |grad psi / psi|.
    """

    masses: tuple[float, ...]
    nu: int = 1
    hbar: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "masses", tuple(float(m) for m in self.masses))
        if not self.masses or any(m <= 0 for m in self.masses):
            raise ValueError("all masses must be positive")
        if self.hbar <= 0:
            raise ValueError("hbar must be positive")
        if self.nu < 1:
            raise ValueError("nu must be >= 1")

    @property
    def N(self) -> int:
        return len(self.masses)

    @property
    def d(self) -> int:
        return self.nu * self.N

    @property
    def mu(self) -> float:
        return self.hbar / min(self.masses)

    @property
    def mass_per_coordinate(self) -> np.ndarray:
        """Mass attached to each of the d configuration coordinates."""
        return np.repeat(np.asarray(self.masses, dtype=float), self.nu)


def _as_points(q, d: int) -> tuple[np.ndarray, tuple[int, ...]]:
    """Normalize q to shape (B, d); returns the flat array and batch shape."""
    arr = np.asarray(q, dtype=float)
    if d == 1 and (arr.ndim == 0 or arr.shape[-1] != 1):
        arr = arr[..., np.newaxis]
    if arr.shape[-1] != d:
        raise ValueError(f"expected points with last axis {d}, got shape {arr.shape}")
    batch = arr.shape[:-1]
    return arr.reshape(-1, d), batch


@dataclass(frozen=True)
class SingularHyperplane:
    """A (d-3)-dimensional hyperplane {q : y_l(q) = a_l}.

    `normals` holds the three orthonormal d-vectors defining the map
    y_l(q) = (q.y1, q.y2, q.y3); `offset` is a_l in R^3.  The distance of a
    configuration point to the hyperplane is |y_l(q) - a_l|.
    """

    normals: np.ndarray
    offset: np.ndarray

    def __post_init__(self):
        normals = np.array(self.normals, dtype=float)
        offset = np.array(self.offset, dtype=float)
        if normals.ndim != 2 or normals.shape[0] != 3:
            raise ValueError("normals must have shape (3, d)")
        if offset.shape != (3,):
            raise ValueError("offset must have shape (3,)")
        gram = normals @ normals.T
        if not np.allclose(gram, np.eye(3), atol=_ORTHO_TOL):
            raise ValueError("normals must be pairwise orthogonal unit vectors")
        normals.setflags(write=False)
        offset.setflags(write=False)
        object.__setattr__(self, "normals", normals)
        object.__setattr__(self, "offset", offset)

    @property
    def d(self) -> int:
        return self.normals.shape[1]

    def coords(self, q) -> np.ndarray:
        """The normal coordinates y_l(q), shape (..., 3)."""
        pts, batch = _as_points(q, self.d)
        return (pts @ self.normals.T).reshape(batch + (3,))

    def distance(self, q) -> np.ndarray | float:
        pts, batch = _as_points(q, self.d)
        dist = np.linalg.norm(pts @ self.normals.T - self.offset, axis=-1)
        return float(dist[0]) if batch == () else dist.reshape(batch)

    @classmethod
    def point_in_3d(cls, location=(0.0, 0.0, 0.0)) -> "SingularHyperplane":
        """The codimension-3 'hyperplane' of d=3: a single point."""
        return cls(normals=np.eye(3), offset=np.asarray(location, dtype=float))


@dataclass(frozen=True)
class DomainSpec:
    """Configuration dimension, singular hyperplanes, optional periodic box."""

    d: int
    hyperplanes: tuple[SingularHyperplane, ...] = ()
    periodic: tuple[float, float] | None = None

    def __post_init__(self):
        object.__setattr__(self, "hyperplanes", tuple(self.hyperplanes))
        if self.d < 1:
            raise ValueError("d must be >= 1")
        if self.d < 3 and self.hyperplanes:
            raise ValueError("codimension-3 hyperplanes require d >= 3")
        for h in self.hyperplanes:
            if h.d != self.d:
                raise ValueError("hyperplane dimension does not match domain")
        if self.periodic is not None:
            lo, hi = self.periodic
            if not hi > lo:
                raise ValueError("periodic box must have hi > lo")

    @property
    def m(self) -> int:
        return len(self.hyperplanes)


def dist_to_singular(spec: DomainSpec, q):
    """Distances of q to every singular hyperplane and their minimum.

    Returns (distances, minimum).  For a batch of points the arrays have
    shape (..., m) and (...).  With no hyperplanes the distance array is
    empty and the minimum is +inf (so d < 3 scenarios need no special case).
    """
    pts, batch = _as_points(q, spec.d)
    if not np.all(np.isfinite(pts)):
        raise ValueError("q must be finite")
    if spec.m == 0:
        dists = np.empty(batch + (0,))
        minimum = np.full(batch, np.inf)
    else:
        cols = [np.linalg.norm(pts @ h.normals.T - h.offset, axis=-1) for h in spec.hyperplanes]
        dists = np.stack(cols, axis=-1).reshape(batch + (spec.m,))
        minimum = dists.min(axis=-1)
    if batch == ():
        return dists.reshape(spec.m), float(minimum)
    return dists, minimum


@dataclass(frozen=True)
class StoppingRegions:
    """Thresholds (epsilon, delta, n, T) defining the killed process.

    The node region {|psi| <= epsilon} and the singular tubes
    {dist(q, S_l) <= delta_l} are closed; the ball {|q| < n} is open, so a
    point with |q| = n already counts as outside.
    """

    epsilon: float
    ball_radius: float
    horizon: float
    delta: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "delta", tuple(float(x) for x in self.delta))
        if self.epsilon <= 0 or self.ball_radius <= 0 or self.horizon <= 0:
            raise ValueError("epsilon, ball radius and horizon must be positive")
        if any(x <= 0 for x in self.delta):
            raise ValueError("all delta entries must be positive")

    @property
    def n(self) -> float:
        return self.ball_radius

    def delta_for(self, spec: DomainSpec) -> np.ndarray:
        """Per-hyperplane tube radii, broadcasting a single delta to all."""
        if spec.m == 0:
            if self.delta:
                raise ValueError("delta given but the domain has no singular set")
            return np.empty(0)
        if len(self.delta) == spec.m:
            return np.asarray(self.delta)
        if len(self.delta) == 1:
            return np.full(spec.m, self.delta[0])
        raise ValueError(f"expected {spec.m} tube radii, got {len(self.delta)}")


def classify_batch(spec: DomainSpec, regions: StoppingRegions, q, psi_abs) -> np.ndarray:
    """Vectorized classifier; returns RegionClass integer codes.

    Priority when regions overlap: SingularRegion > OutsideBall >
    NodeRegion > Interior, so stop causes are unambiguous.
    """
    pts, batch = _as_points(q, spec.d)
    psi_abs = np.broadcast_to(np.asarray(psi_abs, dtype=float), batch or (1,)).reshape(-1)
    if np.any(psi_abs < 0):
        raise ValueError("psi_abs must be nonnegative")
    out = np.full(pts.shape[0], RegionClass.INTERIOR, dtype=np.int64)
    node = psi_abs <= regions.epsilon
    out[node] = RegionClass.NODE_REGION
    outside = np.linalg.norm(pts, axis=-1) >= regions.ball_radius
    out[outside] = RegionClass.OUTSIDE_BALL
    if spec.m > 0:
        dists, _ = dist_to_singular(spec, pts)
        singular = np.any(dists <= regions.delta_for(spec), axis=-1)
        out[singular] = RegionClass.SINGULAR_REGION
    return out.reshape(batch) if batch else out.reshape(())


def classify(spec: DomainSpec, regions: StoppingRegions, q, psi_abs: float) -> RegionClass:
    """Classify a single configuration point (see `classify_batch`)."""
    code = classify_batch(spec, regions, q, psi_abs)
    return RegionClass(int(code))
