"""Grid-based Schrödinger propagation by Strang-split spectral steps.

One step applies exp(-i V dt / 2 hbar) . exp(-i H0 dt / hbar) .
exp(-i V dt / 2 hbar), with the kinetic factor diagonal in Fourier space;
each factor is unitary so the norm is preserved to FFT roundoff and the
global error is second order in dt.  Smooth potentials only; singular-set
geometry is covered by the analytic model families instead.

Boxes are treated as periodic.  Runs that model unbounded problems on a
padded box monitor the probability mass near the box edge and abort above
1e-6 so that downstream flux bookkeeping never sees an artificial sink.

Stored frames (`FrameStore`) can be written to a little-endian binary file
and reopened as a `GridBacked` wavefunction model, which interpolates
spectrally in space and with cubic Lagrange polynomials in time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .domain import PhysicalParams
from .wavefunction import OutOfDomain, WavefunctionModel

__all__ = [
    "GridSpec",
    "GridState",
    "UnstableStep",
    "InsufficientFrames",
    "SplitStepPropagator",
    "gradient_spectral",
    "kinetic_action",
    "KineticActionReport",
    "FrameStore",
    "GridBacked",
]

_MAGIC = b"BHMFRM01"  # 8 bytes: format tag + version


class UnstableStep(Exception):
    """Norm drift or boundary spill beyond budget; the run is aborted."""


class InsufficientFrames(Exception):
    pass


@dataclass(frozen=True)
class GridSpec:
    """Axis-aligned periodic grid with a fixed step size for propagation."""

    box: tuple[tuple[float, float], ...]
    points: tuple[int, ...]
    dt: float
    periodic: bool = True
    frame_stride: int = 1

    def __post_init__(self):
        object.__setattr__(self, "box", tuple((float(a), float(b)) for a, b in self.box))
        object.__setattr__(self, "points", tuple(int(n) for n in self.points))
        if len(self.box) != len(self.points):
            raise ValueError("box and points must have the same length")
        if any(n < 16 for n in self.points):
            raise ValueError("need at least 16 points per axis")
        if any(b <= a for a, b in self.box):
            raise ValueError("box must have positive extent")
        if self.dt <= 0 or self.frame_stride < 1:
            raise ValueError("dt must be positive and frame_stride >= 1")

    @property
    def d(self) -> int:
        return len(self.points)

    def axes(self) -> list[np.ndarray]:
        return [lo + (hi - lo) * np.arange(n) / n
                for (lo, hi), n in zip(self.box, self.points)]

    def mesh(self) -> list[np.ndarray]:
        return list(np.meshgrid(*self.axes(), indexing="ij"))

    def k_axes(self) -> list[np.ndarray]:
        return [2.0 * np.pi * np.fft.fftfreq(n, d=(hi - lo) / n)
                for (lo, hi), n in zip(self.box, self.points)]

    @property
    def cell_volume(self) -> float:
        vol = 1.0
        for (lo, hi), n in zip(self.box, self.points):
            vol *= (hi - lo) / n
        return vol


@dataclass
class GridState:
    t: float
    psi: np.ndarray
    spec: GridSpec

    def norm(self) -> float:
        return math.sqrt(float(np.sum(np.abs(self.psi) ** 2)) * self.spec.cell_volume)


class SplitStepPropagator:
    """Strang split-step propagator for a smooth potential on a GridSpec."""

    def __init__(self, spec: GridSpec, potential=None,
                 params: PhysicalParams | None = None):
        self.spec = spec
        self.params = params or PhysicalParams(masses=(1.0,), nu=spec.d)
        if self.params.d != spec.d:
            raise ValueError("params dimension does not match the grid")
        hbar = self.params.hbar
        mesh = spec.mesh()
        if potential is None:
            self.V = np.zeros(spec.points)
        elif callable(potential):
            self.V = np.asarray(potential(*mesh), dtype=float)
        else:
            self.V = np.asarray(potential, dtype=float)
        if self.V.shape != tuple(spec.points):
            raise ValueError("potential shape does not match the grid")
        mass = self.params.mass_per_coordinate
        k2 = np.zeros(spec.points)
        for a, k in enumerate(spec.k_axes()):
            shape = [1] * spec.d
            shape[a] = k.size
            k2 = k2 + (hbar * k.reshape(shape)) ** 2 / (2.0 * mass[a])
        self._kin_phase = np.exp(-1j * k2 * spec.dt / hbar)
        self._pot_half = np.exp(-0.5j * self.V * spec.dt / hbar)
        self._k2_over_hbar = k2  # hbar^2 k^2 / 2m, for energy diagnostics
        self._edge_mask = self._make_edge_mask()

    def _make_edge_mask(self) -> np.ndarray:
        mask = np.zeros(self.spec.points, dtype=bool)
        for a, n in enumerate(self.spec.points):
            width = max(1, n // 20)
            sl = [slice(None)] * self.spec.d
            sl[a] = slice(0, width)
            mask[tuple(sl)] = True
            sl[a] = slice(n - width, n)
            mask[tuple(sl)] = True
        return mask

    def initial_state(self, psi0) -> GridState:
        mesh = self.spec.mesh()
        psi = np.asarray(psi0(*mesh) if callable(psi0) else psi0, dtype=complex)
        if psi.shape != tuple(self.spec.points):
            raise ValueError("initial state shape does not match the grid")
        return GridState(t=0.0, psi=psi, spec=self.spec)

    def step(self, state: GridState) -> GridState:
        """One Strang step; raises UnstableStep if the norm drifts > 1e-10."""
        n0 = state.norm()
        psi = self._pot_half * state.psi
        psi = np.fft.ifftn(self._kin_phase * np.fft.fftn(psi))
        psi = self._pot_half * psi
        out = GridState(t=state.t + self.spec.dt, psi=psi, spec=self.spec)
        if abs(out.norm() - n0) > 1e-10:
            raise UnstableStep(f"norm drift {abs(out.norm() - n0):.2e} in one step at t={out.t}")
        return out

    def edge_mass(self, state: GridState) -> float:
        return float(np.sum(np.abs(state.psi[self._edge_mask]) ** 2)) * self.spec.cell_volume

    def energy(self, state: GridState) -> float:
        """(psi, H psi) via the spectral kinetic form plus the potential term."""
        psi_hat = np.fft.fftn(state.psi)
        scale = self.spec.cell_volume / psi_hat.size
        kin = float(np.sum(self._k2_over_hbar * np.abs(psi_hat) ** 2)) * scale
        pot = float(np.sum(self.V * np.abs(state.psi) ** 2)) * self.spec.cell_volume
        return kin + pot

    def run(self, psi0, n_steps: int, monitor_edges: bool = False,
            edge_budget: float = 1e-6) -> "FrameStore":
        """Propagate n_steps, storing every frame_stride-th frame (and the last)."""
        state = self.initial_state(psi0)
        times = [state.t]
        frames = [state.psi.copy()]
        for i in range(n_steps):
            state = self.step(state)
            if monitor_edges and self.edge_mass(state) > edge_budget:
                raise UnstableStep(
                    f"boundary mass {self.edge_mass(state):.2e} above {edge_budget:.0e} "
                    f"at t={state.t}; enlarge the box")
            if (i + 1) % self.spec.frame_stride == 0 or i == n_steps - 1:
                times.append(state.t)
                frames.append(state.psi.copy())
        return FrameStore(spec=self.spec, times=np.asarray(times),
                          frames=np.asarray(frames), params=self.params)


def gradient_spectral(state: GridState) -> np.ndarray:
    """Per-axis spectral derivative, shape (d, *grid)."""
    spec = state.spec
    psi_hat = np.fft.fftn(state.psi)
    out = np.empty((spec.d,) + tuple(spec.points), dtype=complex)
    for a, k in enumerate(spec.k_axes()):
        shape = [1] * spec.d
        shape[a] = k.size
        out[a] = np.fft.ifftn(1j * k.reshape(shape) * psi_hat)
    return out


@dataclass
class KineticActionReport:
    """Time integrals of ||grad psi||^2 and of the kinetic form (psi, H0 psi)."""

    grad_sq_integral: float
    h0_form_integral: float
    times: np.ndarray
    grad_sq_series: np.ndarray
    h0_form_series: np.ndarray


def kinetic_action(store: "FrameStore", T: float,
                   params: PhysicalParams | None = None) -> KineticActionReport:
    """Trapezoidal time integral of ||grad psi_t||^2 over stored frames in [0, T]."""
    params = params or store.params
    sel = store.times <= T + 1e-12
    if sel.sum() < 2 or store.times[sel][-1] < T - 1e-9:
        raise InsufficientFrames(f"stored frames do not cover [0, {T}]")
    times = store.times[sel]
    spec = store.spec
    k2 = np.zeros(spec.points)
    hbar = params.hbar
    mass = params.mass_per_coordinate
    k2_plain = np.zeros(spec.points)
    for a, k in enumerate(spec.k_axes()):
        shape = [1] * spec.d
        shape[a] = k.size
        k2_plain = k2_plain + k.reshape(shape) ** 2
        k2 = k2 + (hbar * k.reshape(shape)) ** 2 / (2.0 * mass[a])
    grad_sq = np.empty(times.size)
    h0_form = np.empty(times.size)
    for i in range(times.size):
        psi_hat = np.fft.fftn(store.frames[i])
        scale = spec.cell_volume / psi_hat.size
        grad_sq[i] = float(np.sum(k2_plain * np.abs(psi_hat) ** 2)) * scale
        h0_form[i] = float(np.sum(k2 * np.abs(psi_hat) ** 2)) * scale
    return KineticActionReport(
        grad_sq_integral=float(np.trapezoid(grad_sq, times)),
        h0_form_integral=float(np.trapezoid(h0_form, times)),
        times=times, grad_sq_series=grad_sq, h0_form_series=h0_form)


@dataclass
class FrameStore:
    """Propagated frames plus their grid, written as a documented binary file.

    File layout, all little-endian, in order:
      8 bytes   magic b"BHMFRM01" (format + version)
      u32       d (number of axes)
      u8        periodic flag
      per axis: u64 points, f64 lo, f64 hi
      f64       dt
      u64       frame stride
      u64       frame count F
      f64[F]    times
      c128      frames, C order, shape (F, *points)
    """

    spec: GridSpec
    times: np.ndarray
    frames: np.ndarray
    params: PhysicalParams = field(default_factory=lambda: PhysicalParams(masses=(1.0,)))

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(np.uint32(self.spec.d).astype("<u4").tobytes())
            fh.write(np.uint8(1 if self.spec.periodic else 0).tobytes())
            for (lo, hi), n in zip(self.spec.box, self.spec.points):
                fh.write(np.uint64(n).astype("<u8").tobytes())
                fh.write(np.float64(lo).astype("<f8").tobytes())
                fh.write(np.float64(hi).astype("<f8").tobytes())
            fh.write(np.float64(self.spec.dt).astype("<f8").tobytes())
            fh.write(np.uint64(self.spec.frame_stride).astype("<u8").tobytes())
            fh.write(np.uint64(self.times.size).astype("<u8").tobytes())
            fh.write(self.times.astype("<f8").tobytes())
            fh.write(self.frames.astype("<c16").tobytes())

    @classmethod
    def load(cls, path, params: PhysicalParams | None = None) -> "FrameStore":
        with open(path, "rb") as fh:
            if fh.read(8) != _MAGIC:
                raise ValueError("not a frame store file (bad magic)")
            d = int(np.frombuffer(fh.read(4), "<u4")[0])
            periodic = bool(np.frombuffer(fh.read(1), "u1")[0])
            box, points = [], []
            for _ in range(d):
                n = int(np.frombuffer(fh.read(8), "<u8")[0])
                lo, hi = np.frombuffer(fh.read(16), "<f8")
                box.append((lo, hi))
                points.append(n)
            dt = float(np.frombuffer(fh.read(8), "<f8")[0])
            stride = int(np.frombuffer(fh.read(8), "<u8")[0])
            nframes = int(np.frombuffer(fh.read(8), "<u8")[0])
            times = np.frombuffer(fh.read(8 * nframes), "<f8").copy()
            count = nframes * int(np.prod(points))
            frames = np.frombuffer(fh.read(16 * count), "<c16").copy()
        spec = GridSpec(box=tuple(box), points=tuple(points), dt=dt, periodic=periodic,
                        frame_stride=stride)
        frames = frames.reshape((nframes,) + tuple(points))
        return cls(spec=spec, times=times, frames=frames,
                   params=params or PhysicalParams(masses=(1.0,), nu=d))

    def to_model(self) -> "GridBacked":
        return GridBacked(self)


class GridBacked(WavefunctionModel):
    """Wavefunction model backed by stored frames.

    Space is interpolated spectrally (trigonometric sums on the periodic
    box); time by a cubic Lagrange polynomial through the four nearest
    frames, whose analytic derivative supplies dpsi/dt.  Queries outside
    the stored box or time range raise OutOfDomain.
    """

    def __init__(self, store: FrameStore):
        self.store = store
        self.params = store.params
        self.d = store.spec.d
        # the storage box is periodic as a numerical device; the physical
        # problem it approximates is not, so circle dynamics never apply
        self.periodic = False
        self._hat_cache: dict[int, np.ndarray] = {}
        self._k = store.spec.k_axes()
        self._lo = np.array([b[0] for b in store.spec.box])
        self._hi = np.array([b[1] for b in store.spec.box])

    @property
    def box(self):
        return self.store.spec.box

    @property
    def times(self):
        return self.store.times

    def quad_support(self, t: float) -> tuple[float, float]:
        if self.d != 1:
            raise NotImplementedError
        return (float(self._lo[0]), float(self._hi[0]))

    def _hat(self, i: int) -> np.ndarray:
        if i not in self._hat_cache:
            self._hat_cache[i] = np.fft.fftn(self.store.frames[i])
        return self._hat_cache[i]

    def _frame_window(self, t: float):
        times = self.store.times
        if t < times[0] - 1e-9 or t > times[-1] + 1e-9:
            raise OutOfDomain(f"t={t} outside stored range [{times[0]}, {times[-1]}]")
        j = int(np.searchsorted(times, t)) if times.size > 1 else 0
        i0 = min(max(j - 2, 0), max(times.size - 4, 0))
        idx = np.arange(i0, min(i0 + 4, times.size))
        return idx

    @staticmethod
    def _lagrange_weights(ts: np.ndarray, t: float):
        n = ts.size
        w = np.ones(n)
        dw = np.zeros(n)
        for i in range(n):
            others = [k for k in range(n) if k != i]
            denom = np.prod([ts[i] - ts[k] for k in others])
            w[i] = np.prod([t - ts[k] for k in others]) / denom
            s = 0.0
            for j_ in others:
                s += np.prod([t - ts[k] for k in others if k != j_])
            dw[i] = s / denom
        return w, dw

    def _eval_frames_points(self, hats: np.ndarray, pts: np.ndarray):
        """Trigonometric interpolation of stacked frames at flat points.

        `hats` has shape (F, modes); the e^{i k.(x-lo)} basis is built once
        per point chunk and applied to every frame in a single product.
        Returns psi (B, F) and grad (B, d, F).
        """
        B = pts.shape[0]
        F, npts = hats.shape
        psi = np.zeros((B, F), dtype=complex)
        grad = np.zeros((B, self.d, F), dtype=complex)
        kgrids = np.meshgrid(*self._k, indexing="ij")
        kflat = [kg.reshape(-1) for kg in kgrids]
        hats_t = hats.T / npts  # (modes, F)
        dk_hats = [1j * kflat[a][:, None] * hats_t for a in range(self.d)]
        chunk = max(1, int(4e6 // max(npts, 1)))
        for lo_i in range(0, B, chunk):
            sl = slice(lo_i, min(lo_i + chunk, B))
            x = pts[sl] - self._lo
            expo = np.outer(x[:, 0], kflat[0])
            for a in range(1, self.d):
                expo = expo + np.outer(x[:, a], kflat[a])
            basis = np.exp(1j * expo)
            psi[sl] = basis @ hats_t
            for a in range(self.d):
                grad[sl, a] = basis @ dk_hats[a]
        return psi, grad

    def _evaluate(self, q: np.ndarray, t: np.ndarray):
        inside = np.all((q >= self._lo - 1e-9) & (q <= self._hi + 1e-9), axis=1)
        if not np.all(inside):
            raise OutOfDomain("configuration outside the stored box")
        psi = np.zeros(q.shape[0], dtype=complex)
        grad = np.zeros((q.shape[0], self.d), dtype=complex)
        dpsi = np.zeros(q.shape[0], dtype=complex)
        for tv in np.unique(t):
            sel = t == tv
            idx = self._frame_window(float(tv))
            w, dw = self._lagrange_weights(self.store.times[idx], float(tv))
            hats = np.stack([self._hat(int(i)).reshape(-1) for i in idx])
            pv, gv = self._eval_frames_points(hats, q[sel])
            psi[sel] = pv @ w
            grad[sel] = gv @ w
            dpsi[sel] = pv @ dw
        return psi, grad, dpsi
