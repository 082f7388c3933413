"""Wavefunction models and the fields they generate.

Each model evaluates psi, grad psi and dpsi/dt in closed form (grid-backed
models interpolate stored frames; see `bohmlab.propagator`).  From a sample
the guidance velocity v_k = (hbar/m_k) Im(grad_k psi / psi) and the
probability current j_k = (hbar/m_k) Im(psi* grad_k psi) are derived;
J = (j, |psi|^2) is the space-time current whose absolute surface integrals
bound crossing probabilities.

Evaluation is batch-friendly: `q` may be a single point, a 1D array of
points (for d = 1), or an (..., d) array; `t` broadcasts against the batch
shape.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad

from .domain import PhysicalParams

__all__ = [
    "NODE_FLOOR",
    "NodeEvaluation",
    "OutOfDomain",
    "EnvelopeFailure",
    "WavefieldSample",
    "WavefunctionModel",
    "HermiteSuperposition1D",
    "FreeGaussianPacket",
    "CylindricalHO3D",
    "PlaneWaveCircle",
    "velocity",
    "current",
    "EnsembleSample",
    "sample_initial",
    "field_grid_csv",
    "hermite_functions",
]

# |psi|^2 floor below which the velocity is treated as undefined.  The
# stopping logic uses region thresholds epsilon >> NODE_FLOOR, so this only
# guards the division against overflow.
NODE_FLOOR = 1e-300


class NodeEvaluation(Exception):
    """Velocity requested where |psi|^2 is at the node floor."""


class OutOfDomain(Exception):
    """Grid-backed evaluation outside the stored box or time range."""


class EnvelopeFailure(Exception):
    """Rejection sampling acceptance rate collapsed; envelope misconfigured."""


@dataclass
class WavefieldSample:
    """psi, grad psi and dpsi/dt at one point or a batch of points."""

    psi: np.ndarray
    grad: np.ndarray
    dpsi_dt: np.ndarray

    @property
    def abs2(self) -> np.ndarray:
        return (self.psi.real**2 + self.psi.imag**2) if isinstance(self.psi, np.ndarray) \
            else abs(self.psi) ** 2


def _broadcast_qt(q, t, d: int):
    """Normalize (q, t) to flat (B, d) and (B,) arrays plus the batch shape."""
    qa = np.asarray(q, dtype=float)
    if d == 1 and (qa.ndim == 0 or qa.shape[-1] != 1):
        qa = qa[..., np.newaxis]
    if qa.shape[-1] != d:
        raise ValueError(f"expected q with last axis {d}, got shape {qa.shape}")
    ta = np.asarray(t, dtype=float)
    batch = np.broadcast_shapes(qa.shape[:-1], ta.shape)
    qa = np.broadcast_to(qa, batch + (d,)).reshape(-1, d)
    ta = np.broadcast_to(ta, batch).reshape(-1)
    return qa, ta, batch


def _pack(psi, grad, dpsi_dt, batch, d: int) -> WavefieldSample:
    if batch == ():
        return WavefieldSample(complex(psi[0]), grad[0].copy(), complex(dpsi_dt[0]))
    return WavefieldSample(
        psi.reshape(batch), grad.reshape(batch + (d,)), dpsi_dt.reshape(batch)
    )


class WavefunctionModel:
    """Base class: concrete models implement `_evaluate(q, t)` on flat batches."""

    d: int = 1
    params: PhysicalParams
    periodic: bool = False

    def evaluate(self, q, t) -> WavefieldSample:
        qa, ta, batch = _broadcast_qt(q, t, self.d)
        psi, grad, dpsi = self._evaluate(qa, ta)
        return _pack(psi, grad, dpsi, batch, self.d)

    def _evaluate(self, q: np.ndarray, t: np.ndarray):
        raise NotImplementedError

    def abs2(self, q, t) -> np.ndarray:
        return self.evaluate(q, t).abs2

    def quad_support(self, t: float) -> tuple[float, float]:
        """Interval carrying all but a negligible tail of |psi_t|^2 (1D only)."""
        raise NotImplementedError


def hermite_functions(n_max: int, q: np.ndarray):
    """Normalized harmonic-oscillator eigenfunctions and their derivatives.

    Returns (phi, dphi) with shape (n_max+1, *q.shape) using the stable
    recurrence phi_k = sqrt(2/k) q phi_{k-1} - sqrt((k-1)/k) phi_{k-2} and
    phi_k' = -q phi_k + sqrt(2k) phi_{k-1}.
    """
    q = np.asarray(q, dtype=float)
    phi = np.empty((n_max + 1,) + q.shape)
    phi[0] = np.pi ** (-0.25) * np.exp(-0.5 * q * q)
    if n_max >= 1:
        phi[1] = math.sqrt(2.0) * q * phi[0]
    for k in range(2, n_max + 1):
        phi[k] = math.sqrt(2.0 / k) * q * phi[k - 1] - math.sqrt((k - 1) / k) * phi[k - 2]
    dphi = np.empty_like(phi)
    dphi[0] = -q * phi[0]
    for k in range(1, n_max + 1):
        dphi[k] = -q * phi[k] + math.sqrt(2.0 * k) * phi[k - 1]
    return phi, dphi


class HermiteSuperposition1D(WavefunctionModel):
    """Superposition of 1D harmonic-oscillator eigenstates (hbar = m = omega = 1).

    psi(q, t) = sum_k c_k phi_k(q) exp(-i (k + 1/2) t).

    `normalize` rescales the coefficients so the L2 norm is 1; "exact" uses
    the coefficient norm, "quadrature" integrates |psi_0|^2 numerically (the
    rescaling constant is kept in `normalization_constant` either way).
    """

    d = 1

    def __init__(self, coefficients, params: PhysicalParams | None = None,
                 normalize: str | bool = "exact"):
        self.params = params or PhysicalParams(masses=(1.0,), nu=1)
        if self.params.d != 1:
            raise ValueError("HermiteSuperposition1D needs d = 1 params")
        c = np.asarray(coefficients, dtype=complex)
        if c.ndim != 1 or c.size == 0:
            raise ValueError("coefficients must be a nonempty 1D sequence")
        self.normalization_constant = 1.0
        if normalize:
            if normalize == "quadrature":
                raw = _RawHermite(c)
                lo, hi = -self._support_radius(c.size - 1), self._support_radius(c.size - 1)
                norm2 = quad(lambda x: abs(raw(x)) ** 2, lo, hi, limit=200)[0]
            else:
                norm2 = float(np.sum(np.abs(c) ** 2))
            self.normalization_constant = 1.0 / math.sqrt(norm2)
            c = c * self.normalization_constant
        self.coefficients = c
        self.energies = np.arange(c.size) + 0.5

    @staticmethod
    def _support_radius(k_max: int) -> float:
        # classical turning point sqrt(2E) plus a wide Gaussian-tail margin
        return math.sqrt(2.0 * (k_max + 0.5)) + 10.0

    @classmethod
    def counterexample(cls, params: PhysicalParams | None = None) -> "HermiteSuperposition1D":
        """Ground state plus second excited state, with nodes at (0, (n+1/2)pi).

        Raw form exp(-q^2/2) e^{-it/2} [1 + (1 - 2 q^2) e^{-2it}], i.e.
        pi^{1/4} (phi_0 - sqrt(2) phi_2 e^{-2it}) up to the global phase; the
        normalization constant is computed by quadrature and recorded.
        """
        raw = math.pi ** 0.25 * np.array([1.0, 0.0, -math.sqrt(2.0)])
        return cls(raw, params=params, normalize="quadrature")

    def quad_support(self, t: float) -> tuple[float, float]:
        r = self._support_radius(self.coefficients.size - 1)
        return (-r, r)

    def _evaluate(self, q: np.ndarray, t: np.ndarray):
        x = q[:, 0]
        phi, dphi = hermite_functions(self.coefficients.size - 1, x)
        phases = np.exp(-1j * np.outer(self.energies, t))
        terms = self.coefficients[:, None] * phases
        psi = (terms * phi).sum(axis=0)
        dpsi = (terms * dphi).sum(axis=0)
        dpsi_dt = (-1j * self.energies[:, None] * terms * phi).sum(axis=0)
        return psi, dpsi[:, None], dpsi_dt


class _RawHermite:
    """Unnormalized Hermite superposition at t = 0 (for quadrature norming)."""

    def __init__(self, c):
        self.c = np.asarray(c, dtype=complex)

    def __call__(self, x):
        phi, _ = hermite_functions(self.c.size - 1, np.asarray(x, dtype=float))
        return np.tensordot(self.c, phi, axes=(0, 0))


class FreeGaussianPacket(WavefunctionModel):
    """Freely evolving Gaussian packet in any dimension (product of axes).

    Per axis: psi = (2 pi s^2)^(-1/4) alpha^(-1/2)
        exp(-(x - x0 - p0 t / m)^2 / (4 s^2 alpha) + i (p0 (x - x0) - p0^2 t / (2m)) / hbar)
    with alpha = 1 + i hbar t / (2 m s^2); |psi_0|^2 has standard deviation s.
    """

    def __init__(self, sigma0, center=None, momentum=None,
                 params: PhysicalParams | None = None, d: int | None = None):
        if params is None:
            if d is None:
                d = np.atleast_1d(np.asarray(sigma0, dtype=float)).size
            params = PhysicalParams(masses=(1.0,), nu=d)
        self.params = params
        self.d = params.d
        self.sigma0 = np.broadcast_to(np.asarray(sigma0, dtype=float), (self.d,)).copy()
        if np.any(self.sigma0 <= 0):
            raise ValueError("sigma0 must be positive")
        self.center = np.zeros(self.d) if center is None else \
            np.broadcast_to(np.asarray(center, dtype=float), (self.d,)).copy()
        self.momentum = np.zeros(self.d) if momentum is None else \
            np.broadcast_to(np.asarray(momentum, dtype=float), (self.d,)).copy()

    def sigma_t(self, t: float) -> np.ndarray:
        hbar = self.params.hbar
        m = self.params.mass_per_coordinate
        alpha = 1.0 + 1j * hbar * t / (2.0 * m * self.sigma0**2)
        return self.sigma0 * np.abs(alpha)

    def quad_support(self, t: float) -> tuple[float, float]:
        if self.d != 1:
            raise NotImplementedError("quad_support is for 1D models")
        m = self.params.mass_per_coordinate[0]
        c = self.center[0] + self.momentum[0] * t / m
        w = 12.0 * float(self.sigma_t(t)[0])
        return (c - w, c + w)

    def _evaluate(self, q: np.ndarray, t: np.ndarray):
        hbar = self.params.hbar
        m = self.params.mass_per_coordinate
        s2 = self.sigma0**2
        alpha = 1.0 + 1j * hbar * t[:, None] / (2.0 * m * s2)
        u = q - self.center - (self.momentum / m) * t[:, None]
        gauss = -(u**2) / (4.0 * s2 * alpha)
        phase = (self.momentum * (q - self.center) - self.momentum**2 * t[:, None] / (2.0 * m)) / hbar
        log_axis = gauss + 1j * phase - 0.5 * np.log(alpha) - 0.25 * np.log(2.0 * np.pi * s2)
        psi = np.exp(np.sum(log_axis, axis=1))
        dlog = -u / (2.0 * s2 * alpha) + 1j * self.momentum / hbar
        grad = psi[:, None] * dlog
        # d/dt of the per-axis log: -alpha'/(2 alpha) + d(gauss)/dt - i E0/hbar
        dalpha = 1j * hbar / (2.0 * m * s2)
        v0 = self.momentum / m
        dgauss = (2.0 * u * v0) / (4.0 * s2 * alpha) + u**2 * dalpha / (4.0 * s2 * alpha**2)
        dlog_t = -dalpha / (2.0 * alpha) + dgauss - 1j * self.momentum**2 / (2.0 * m * hbar)
        dpsi_dt = psi * np.sum(dlog_t, axis=1)
        return psi, grad, dpsi_dt


class CylindricalHO3D(WavefunctionModel):
    """The 3D oscillator state r e^{-(r^2+z^2)/2} e^{i phi} e^{-5it/2}.

    Vanishes exactly on the z-axis; the guidance field circles particles
    around the axis with angular velocity 1/r^2 at constant radius.
    Fixed units hbar = m = omega = 1; normalization pi^{-3/4}.
    """

    d = 3

    def __init__(self):
        self.params = PhysicalParams(masses=(1.0,), nu=3)
        self.norm = math.pi ** (-0.75)

    def _evaluate(self, q: np.ndarray, t: np.ndarray):
        x, y, z = q[:, 0], q[:, 1], q[:, 2]
        w = x + 1j * y
        envelope = self.norm * np.exp(-0.5 * np.sum(q**2, axis=1) - 2.5j * t)
        psi = envelope * w
        grad = np.empty((q.shape[0], 3), dtype=complex)
        grad[:, 0] = envelope * (1.0 - x * w)
        grad[:, 1] = envelope * (1j - y * w)
        grad[:, 2] = envelope * (-z * w)
        return psi, grad, -2.5j * psi


class PlaneWaveCircle(WavefunctionModel):
    """Superposition of momentum modes e^{2 pi i k q} on the periodic unit interval.

    Phases advance as exp(-i E_k t / hbar) with E_k = (2 pi k hbar)^2 / (2m).
    Evaluation works for any real q (the modes are automatically periodic),
    which is how trajectories "lifted to the line" are integrated.
    """

    d = 1
    periodic = True

    def __init__(self, modes: dict[int, complex], params: PhysicalParams | None = None,
                 normalize: bool = True):
        self.params = params or PhysicalParams(masses=(1.0,), nu=1)
        if not modes:
            raise ValueError("need at least one mode")
        self.ks = np.array(sorted(modes), dtype=float)
        cs = np.array([modes[int(k)] for k in self.ks], dtype=complex)
        if normalize:
            cs = cs / math.sqrt(float(np.sum(np.abs(cs) ** 2)))
        self.cs = cs
        hbar, m = self.params.hbar, self.params.mass_per_coordinate[0]
        self.omega = hbar * (2.0 * np.pi * self.ks) ** 2 / (2.0 * m)

    def quad_support(self, t: float) -> tuple[float, float]:
        return (0.0, 1.0)

    def _evaluate(self, q: np.ndarray, t: np.ndarray):
        x = q[:, 0]
        phase = np.exp(1j * (2.0 * np.pi * np.outer(self.ks, x) - np.outer(self.omega, t)))
        terms = self.cs[:, None] * phase
        psi = terms.sum(axis=0)
        dpsi = (2j * np.pi * self.ks[:, None] * terms).sum(axis=0)
        dpsi_dt = (-1j * self.omega[:, None] * terms).sum(axis=0)
        return psi, dpsi[:, None], dpsi_dt


def velocity(sample: WavefieldSample, params: PhysicalParams,
             floor: float = NODE_FLOOR) -> np.ndarray:
    """Guidance velocity v_k = (hbar/m_k) Im(grad_k psi / psi).

    Raises NodeEvaluation when |psi|^2 <= floor anywhere in the batch; the
    caller must stop/kill the trajectory rather than clamp the field.
    """
    psi = np.asarray(sample.psi)
    abs2 = psi.real**2 + psi.imag**2
    if np.any(abs2 <= floor):
        raise NodeEvaluation("velocity undefined at a node (|psi|^2 at floor)")
    grad = np.asarray(sample.grad)
    scale = params.hbar / params.mass_per_coordinate
    ratio = grad * (np.conj(psi) / abs2)[..., np.newaxis]
    return scale * ratio.imag


def current(sample: WavefieldSample, params: PhysicalParams):
    """Probability current j_k = (hbar/m_k) Im(psi* grad_k psi) and J = (j, |psi|^2).

    Well defined at nodes (bilinear in psi); j = v |psi|^2 wherever the
    velocity exists.
    """
    psi = np.asarray(sample.psi)
    grad = np.asarray(sample.grad)
    scale = params.hbar / params.mass_per_coordinate
    j = scale * (np.conj(psi)[..., np.newaxis] * grad).imag
    abs2 = psi.real**2 + psi.imag**2
    J = np.concatenate([j, abs2[..., np.newaxis]], axis=-1)
    return j, J


@dataclass
class EnsembleSample:
    """i.i.d. draws from |psi_0|^2 with the method and seed recorded."""

    configurations: np.ndarray
    seed: int
    method: str
    metadata: dict = field(default_factory=dict)

    @property
    def count(self) -> int:
        return self.configurations.shape[0]


def _inverse_cdf_table_1d(model, count: int, rng: np.random.Generator,
                          table_size: int = 2**14 + 1) -> np.ndarray:
    lo, hi = model.quad_support(0.0)
    grid = np.linspace(lo, hi, table_size)
    dens = model.abs2(grid, 0.0)
    cdf = np.concatenate([[0.0], np.cumsum((dens[1:] + dens[:-1]) * 0.5 * np.diff(grid))])
    total = cdf[-1]
    if not (0.99 < total < 1.01):
        raise ValueError(f"|psi_0|^2 mass on the table is {total:.6f}, not ~1")
    cdf /= total
    u = rng.random(count)
    return np.interp(u, cdf, grid)[:, None]


def _rejection_gaussian(model: FreeGaussianPacket, count: int,
                        rng: np.random.Generator, inflate: float = 1.05):
    """Rejection sampling of |psi_0|^2 under an inflated-Gaussian envelope."""
    sig_env = inflate * model.sigma0
    log_m = model.d * math.log(inflate)  # sup of target/envelope, at the center
    out = np.empty((count, model.d))
    got, proposed, accepted = 0, 0, 0
    while got < count:
        n_prop = max(2 * (count - got), 256)
        x = model.center + sig_env * rng.standard_normal((n_prop, model.d))
        log_t = -0.5 * np.sum(((x - model.center) / model.sigma0) ** 2, axis=1)
        log_e = -0.5 * np.sum(((x - model.center) / sig_env) ** 2, axis=1)
        keep = np.log(rng.random(n_prop)) < log_t - log_e - log_m
        proposed += n_prop
        accepted += int(keep.sum())
        take = min(int(keep.sum()), count - got)
        out[got:got + take] = x[keep][:take]
        got += take
        if proposed > 4096 and accepted / proposed < 1e-4:
            raise EnvelopeFailure(
                f"acceptance rate {accepted / proposed:.2e} below 1e-4")
    return out, accepted / proposed


def _metropolis_grid(model, count: int, rng: np.random.Generator,
                     burn_in: int = 1000, thin: int = 10) -> np.ndarray:
    box = model.box
    lo = np.array([b[0] for b in box])
    hi = np.array([b[1] for b in box])
    step = 0.15 * (hi - lo)
    x = 0.5 * (lo + hi)
    p = float(model.abs2(x, model.times[0]))
    out = np.empty((count, model.d))
    kept = 0
    total = burn_in + thin * count
    for i in range(total):
        prop = x + step * rng.standard_normal(model.d)
        prop = np.clip(prop, lo, hi - 1e-12 * (hi - lo))
        p_new = float(model.abs2(prop, model.times[0]))
        if p_new >= p or rng.random() < p_new / max(p, 1e-300):
            x, p = prop, p_new
        if i >= burn_in and (i - burn_in) % thin == 0 and kept < count:
            out[kept] = x
            kept += 1
    return out


def field_grid_csv(model: WavefunctionModel, params: PhysicalParams, path,
                   q_grid, times) -> None:
    """Dump psi and the guidance field on a grid as CSV for plotting.

    Columns: q..., t, re_psi, im_psi, abs2, v... (velocity left blank at
    node-floor points).
    """
    q_grid = np.asarray(q_grid, dtype=float)
    if q_grid.ndim == 1:
        q_grid = q_grid[:, None]
    d = q_grid.shape[1]
    with open(path, "w") as fh:
        qcols = ",".join(f"q{k}" for k in range(d))
        vcols = ",".join(f"v{k}" for k in range(d))
        fh.write(f"{qcols},t,re_psi,im_psi,abs2,{vcols}\n")
        for t in np.atleast_1d(times):
            s = model.evaluate(q_grid, float(t))
            psi = np.atleast_1d(s.psi)
            abs2 = psi.real**2 + psi.imag**2
            grad = np.asarray(s.grad).reshape(-1, d)
            scale = params.hbar / params.mass_per_coordinate
            with np.errstate(invalid="ignore", divide="ignore"):
                v = scale * (np.conj(psi)[:, None] * grad).imag / abs2[:, None]
            for i in range(q_grid.shape[0]):
                qtxt = ",".join(format(x, ".17g") for x in q_grid[i])
                if abs2[i] > NODE_FLOOR:
                    vtxt = ",".join(format(x, ".17g") for x in v[i])
                else:
                    vtxt = ",".join([""] * d)
                fh.write(f"{qtxt},{t:.17g},{psi[i].real:.17g},{psi[i].imag:.17g},"
                         f"{abs2[i]:.17g},{vtxt}\n")


def sample_initial(model: WavefunctionModel, count: int, seed: int) -> EnsembleSample:
    """Draw `count` i.i.d. initial configurations from |psi_0|^2.

    The sampling method is fixed per model family and recorded:
    1D models use an inverse-CDF table; multi-dimensional Gaussian packets
    use rejection under an analytic envelope; the cylindrical oscillator
    state is sampled exactly (z normal, phi uniform, r^2 ~ Gamma(2));
    grid-backed models in d >= 2 use Metropolis with fixed burn-in/thinning.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    meta: dict = {}
    if isinstance(model, CylindricalHO3D):
        method = "exact-cylindrical"
        z = rng.normal(0.0, math.sqrt(0.5), count)
        phi = rng.uniform(0.0, 2.0 * np.pi, count)
        r = np.sqrt(rng.gamma(2.0, 1.0, count))
        conf = np.column_stack([r * np.cos(phi), r * np.sin(phi), z])
    elif isinstance(model, FreeGaussianPacket) and model.d >= 2:
        method = "rejection-gaussian-envelope"
        conf, rate = _rejection_gaussian(model, count, rng)
        meta["acceptance_rate"] = rate
    elif model.d == 1:
        method = "inverse-cdf-table"
        conf = _inverse_cdf_table_1d(model, count, rng)
    elif hasattr(model, "box") and hasattr(model, "times"):
        method = "metropolis-fixed"
        conf = _metropolis_grid(model, count, rng)
        meta["burn_in"], meta["thin"] = 1000, 10
    else:
        raise NotImplementedError(f"no sampler for {type(model).__name__} in d={model.d}")
    return EnsembleSample(configurations=conf, seed=seed, method=method, metadata=meta)
