"""Scenario configuration: TOML schema, bundled library, experiment runners.

A scenario fixes the wavefunction model, domain geometry, stopping-region
schedule, integrator settings, sample count and the master seed.  All
randomness derives from that one seed (ensemble draws use it directly;
auxiliary draws spawn children), so identical configs reproduce bit-equal
outputs.  The bundled library:

  paper-ho-superposition   ground + second excited oscillator state
  free-gaussian-2d         spreading packet, crossing/flux experiments
  cylindrical-ho-3d        circling state with a singular-point geometry
  plane-wave-circle        two-mode state on the periodic unit interval
  halfline-dirichlet       packet on (0, inf), Dirichlet wall by odd extension
  two-bump-free            free evolution towards a disconnected density
"""

from __future__ import annotations

import importlib.resources as resources
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # py3.10
    import tomli as tomllib

from .domain import DomainSpec, PhysicalParams, SingularHyperplane, StoppingRegions
from .propagator import FrameStore, GridSpec, SplitStepPropagator
from .trajectory import IntegratorConfig, run_ensemble, stopping_statistics
from .wavefunction import (
    CylindricalHO3D,
    FreeGaussianPacket,
    HermiteSuperposition1D,
    PlaneWaveCircle,
    sample_initial,
)

__all__ = [
    "Scenario",
    "ScenarioError",
    "BUNDLED",
    "load_scenario",
    "loads_scenario",
    "bundled_path",
    "build_params",
    "build_model",
    "build_domain",
    "region_schedule",
    "build_integrator",
    "simulate_rows",
    "flux_rows",
    "existence_entries",
]


class ScenarioError(Exception):
    """Configuration rejected; the message carries the offending key path."""


_FAMILIES = ("hermite1d", "free-gaussian", "cylindrical-ho-3d",
             "plane-wave-circle", "halfline-dirichlet", "two-bump-free")


@dataclass
class Scenario:
    name: str
    seed: int
    samples: int
    horizon: float
    model: dict
    domain: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    regions: dict = field(default_factory=dict)
    integrator: dict = field(default_factory=dict)
    flux: dict = field(default_factory=dict)
    transport: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)

    def override(self, key: str, value) -> "Scenario":
        """Return a copy with a dotted key replaced (e.g. 'regions.epsilon')."""
        import copy

        data = copy.deepcopy(self.__dict__)
        parts = key.split(".")
        if len(parts) == 1:
            if parts[0] not in data:
                raise ScenarioError(f"{key}: unknown top-level field")
            data[parts[0]] = value
        else:
            node = data
            for p in parts[:-1]:
                if p not in node or not isinstance(node[p], dict):
                    raise ScenarioError(f"{key}: unknown section '{p}'")
                node = node[p]
            node[parts[-1]] = value
        return Scenario(**data)


def _err(path, msg):
    raise ScenarioError(f"{path}: {msg}")


def _require(cfg, key, types, path):
    if key not in cfg:
        _err(f"{path}.{key}" if path else key, "missing required field")
    val = cfg[key]
    if not isinstance(val, types):
        tname = "/".join(t.__name__ for t in (types if isinstance(types, tuple) else (types,)))
        _err(f"{path}.{key}" if path else key, f"expected {tname}, got {type(val).__name__}")
    return val


def _positive_list(val, path, allow_empty=False):
    if not isinstance(val, list) or (not allow_empty and not val):
        _err(path, "expected a nonempty list")
    for i, x in enumerate(val):
        if not isinstance(x, (int, float)) or isinstance(x, bool) or x <= 0:
            _err(f"{path}[{i}]", "must be a positive number")
    return [float(x) for x in val]


def loads_scenario(text: str) -> Scenario:
    try:
        cfg = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ScenarioError(f"TOML parse error: {exc}") from exc
    return _validate(cfg)


def load_scenario(path_or_name: str) -> Scenario:
    """Load a scenario from a TOML file path or the bundled library by name."""
    p = Path(path_or_name)
    if p.suffix == ".toml" or p.exists():
        return loads_scenario(p.read_text())
    if path_or_name in BUNDLED:
        return loads_scenario(bundled_path(path_or_name).read_text())
    raise ScenarioError(
        f"scenario: '{path_or_name}' is neither a file nor one of {sorted(BUNDLED)}")


def bundled_path(name: str) -> Path:
    return Path(str(resources.files("bohmlab").joinpath(f"scenarios/{name}.toml")))


def _validate(cfg: dict) -> Scenario:
    name = _require(cfg, "name", str, "")
    seed = cfg.get("seed")
    if not isinstance(seed, int) or isinstance(seed, bool):
        _err("seed", "a mandatory integer seed is required (no entropy-source defaults)")
    samples = _require(cfg, "samples", int, "")
    if samples < 0:
        _err("samples", "must be >= 0")
    horizon = _require(cfg, "horizon", (int, float), "")
    if horizon <= 0:
        _err("horizon", "must be > 0")

    model = _require(cfg, "model", dict, "")
    family = _require(model, "family", str, "model")
    if family not in _FAMILIES:
        _err("model.family", f"unknown family '{family}', expected one of {_FAMILIES}")

    regions = cfg.get("regions", {})
    if regions:
        eps = _positive_list(_require(regions, "epsilon", list, "regions"), "regions.epsilon")
        nb = _positive_list(_require(regions, "ball_radius", list, "regions"),
                            "regions.ball_radius")
        if len(nb) not in (1, len(eps)):
            _err("regions.ball_radius", f"length must be 1 or {len(eps)}")
        if "delta" in regions:
            dl = regions["delta"]
            if not isinstance(dl, list):
                _err("regions.delta", "expected a list of per-row tube-radius lists")
            if len(dl) not in (1, len(eps)):
                _err("regions.delta", f"length must be 1 or {len(eps)}")
            for i, row in enumerate(dl):
                _positive_list(row, f"regions.delta[{i}]")

    integ = cfg.get("integrator", {})
    for k in integ:
        if k not in ("rel_tol", "abs_tol", "max_step", "first_step", "event_tol",
                     "max_event_bisection_iters", "max_steps"):
            _err(f"integrator.{k}", "unknown integrator option")

    dom = cfg.get("domain", {})
    if "hyperplanes" in dom:
        for i, h in enumerate(dom["hyperplanes"]):
            if "normals" not in h or "offset" not in h:
                _err(f"domain.hyperplanes[{i}]", "needs 'normals' and 'offset'")

    return Scenario(
        name=name, seed=seed, samples=samples, horizon=float(horizon),
        model=model, domain=dom, params=cfg.get("params", {}),
        regions=regions, integrator=integ, flux=cfg.get("flux", {}),
        transport=cfg.get("transport", {}), output=cfg.get("output", {}))


# -- builders ---------------------------------------------------------------

def build_params(sc: Scenario, d_default: int = 1) -> PhysicalParams:
    p = sc.params
    if not p:
        fam = sc.model["family"]
        nu = {"cylindrical-ho-3d": 3}.get(fam, d_default)
        if fam == "free-gaussian":
            nu = len(sc.model.get("sigma0", [1.0]))
        return PhysicalParams(masses=(1.0,), nu=nu)
    return PhysicalParams(masses=tuple(p.get("masses", [1.0])),
                          nu=int(p.get("nu", d_default)),
                          hbar=float(p.get("hbar", 1.0)))


def _bump(u):
    out = np.zeros_like(u)
    inside = np.abs(u) < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - u[inside] ** 2))
    return out


def build_model(sc: Scenario):
    """Instantiate the scenario's wavefunction model (and its params)."""
    m = sc.model
    fam = m["family"]
    if fam == "hermite1d":
        params = build_params(sc, 1)
        if m.get("counterexample", False):
            return HermiteSuperposition1D.counterexample(params=params), params
        re = m.get("coefficients_re")
        if re is None:
            _err("model.coefficients_re", "required for hermite1d")
        im = m.get("coefficients_im", [0.0] * len(re))
        if len(im) != len(re):
            _err("model.coefficients_im", "length must match coefficients_re")
        coeffs = np.asarray(re, dtype=float) + 1j * np.asarray(im, dtype=float)
        model = HermiteSuperposition1D(coeffs, params=params,
                                       normalize=m.get("normalize", "exact"))
        return model, params
    if fam == "free-gaussian":
        sigma0 = m.get("sigma0", [1.0])
        params = build_params(sc, len(sigma0))
        model = FreeGaussianPacket(sigma0=sigma0, center=m.get("center"),
                                   momentum=m.get("momentum"), params=params)
        return model, params
    if fam == "cylindrical-ho-3d":
        model = CylindricalHO3D()
        return model, model.params
    if fam == "plane-wave-circle":
        modes_cfg = m.get("modes")
        if not modes_cfg:
            _err("model.modes", "required: list of [k, re, im] rows")
        modes = {int(row[0]): complex(row[1], row[2] if len(row) > 2 else 0.0)
                 for row in modes_cfg}
        params = build_params(sc, 1)
        return PlaneWaveCircle(modes, params=params), params
    if fam == "halfline-dirichlet":
        return _build_halfline(sc)
    if fam == "two-bump-free":
        return _build_two_bump(sc)
    raise ScenarioError(f"model.family: unhandled family {fam}")


def _build_halfline(sc: Scenario):
    """Dirichlet wall at 0 via odd extension on a doubled periodic grid.

    The stored frames live on (-L, L); the odd symmetry keeps psi(0) = 0
    exactly, which realizes one self-adjoint extension of the half-line
    problem (the psi'(0)/psi(0) = a family is not implemented).
    """
    m = sc.model
    L = float(m.get("box_half", 24.0))
    npts = int(m.get("points", 1024))
    dt = float(m.get("dt", 2e-3))
    stride = int(m.get("frame_stride", 2))
    t_max = float(m.get("t_max", sc.horizon * 1.05 + 0.1))
    x0 = float(m.get("center", 4.0))
    sig = float(m.get("sigma0", 0.8))
    p0 = float(m.get("momentum", -2.0))
    params = PhysicalParams(masses=(1.0,), nu=1)
    spec = GridSpec(box=((-L, L),), points=(npts,), dt=dt, frame_stride=stride)
    x = spec.axes()[0]
    packet = FreeGaussianPacket(sigma0=sig, center=[x0], momentum=[p0], params=params)
    base = np.asarray(packet.evaluate(x, 0.0).psi)
    mirrored = np.asarray(packet.evaluate(-x, 0.0).psi)
    psi0 = base - mirrored  # odd extension
    psi0 /= math.sqrt(float(np.sum(np.abs(psi0) ** 2)) * spec.cell_volume)
    prop = SplitStepPropagator(spec, potential=None, params=params)
    store = prop.run(psi0, n_steps=int(round(t_max / dt)), monitor_edges=True)
    return store.to_model(), params


def _build_two_bump(sc: Scenario):
    """Free packet that refocuses into two disjoint bumps at time t1.

    The target state (even, real, positive, C-infinity, supported on
    [-b,-a] u [a,b]) is evolved backward by the exact free propagator; the
    stored run then covers [0, t1 + margin] forward, so at t = t1 the
    density has an exact gap and the transport map must jump across it.
    """
    m = sc.model
    a = float(m.get("a", 1.0))
    b = float(m.get("b", 3.0))
    t1 = float(m.get("t1", 0.5))
    L = float(m.get("box_half", 32.0))
    npts = int(m.get("points", 2048))
    dt = float(m.get("dt", 1e-3))
    stride = int(m.get("frame_stride", 5))
    params = PhysicalParams(masses=(1.0,), nu=1)
    spec = GridSpec(box=((-L, L),), points=(npts,), dt=dt, frame_stride=stride)
    x = spec.axes()[0]
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    target = _bump((np.abs(x) - mid) / half)
    target = target / math.sqrt(float(np.sum(target**2)) * spec.cell_volume)
    k = spec.k_axes()[0]
    psi0 = np.fft.ifft(np.exp(1j * k**2 * t1 / 2.0) * np.fft.fft(target))
    prop = SplitStepPropagator(spec, potential=None, params=params)
    t_end = float(m.get("t_max", t1 * 1.2 + 0.1))
    store = prop.run(psi0, n_steps=int(round(t_end / dt)), monitor_edges=True)
    return store.to_model(), params


def build_domain(sc: Scenario, model=None) -> DomainSpec:
    dom = sc.domain
    d = int(dom.get("dimension", model.d if model is not None else 1))
    hyps = []
    for h in dom.get("hyperplanes", []):
        hyps.append(SingularHyperplane(normals=np.asarray(h["normals"], dtype=float),
                                       offset=np.asarray(h["offset"], dtype=float)))
    periodic = tuple(dom["periodic_box"]) if "periodic_box" in dom else None
    return DomainSpec(d=d, hyperplanes=tuple(hyps), periodic=periodic)


def region_schedule(sc: Scenario) -> list[StoppingRegions]:
    r = sc.regions
    if not r:
        raise ScenarioError("regions: section is required to build a schedule")
    eps = [float(x) for x in r["epsilon"]]
    nb = [float(x) for x in r["ball_radius"]]
    if len(nb) == 1:
        nb = nb * len(eps)
    deltas = r.get("delta", [[]])
    if len(deltas) == 1:
        deltas = deltas * len(eps)
    return [StoppingRegions(epsilon=e, ball_radius=n, horizon=sc.horizon,
                            delta=tuple(dl))
            for e, n, dl in zip(eps, nb, deltas)]


def build_integrator(sc: Scenario) -> IntegratorConfig:
    return IntegratorConfig(**sc.integrator) if sc.integrator else IntegratorConfig()


# -- runners ----------------------------------------------------------------

def simulate_rows(sc: Scenario, model=None, params=None):
    """Run the ensemble once per schedule row; returns (rows, paths_of_row0).

    The same seed-derived draw is reused across rows so the schedule only
    varies the stopping regions.
    """
    if model is None:
        model, params = build_model(sc)
    spec = build_domain(sc, model)
    schedule = region_schedule(sc)
    config = build_integrator(sc)
    ensemble = sample_initial(model, sc.samples, seed=sc.seed)
    rows = []
    first_paths = None
    for regions in schedule:
        paths = run_ensemble(model, params, spec, regions, ensemble, config=config)
        stats = stopping_statistics(paths)
        taus = sorted(p.stop_time for p in paths
                      if p.status == "ok" and not p.immediate
                      and p.stop_cause is not None and p.stop_cause.value != "horizon")
        quantiles = {}
        if taus:
            for qq in (0.1, 0.5, 0.9):
                quantiles[f"q{int(qq*100)}"] = float(np.quantile(taus, qq))
        rows.append({
            "regions": {"epsilon": regions.epsilon, "ball_radius": regions.ball_radius,
                        "delta": list(regions.delta), "horizon": regions.horizon},
            "stats": stats.as_dict(),
            "tau_quantiles": quantiles,
        })
        if first_paths is None:
            first_paths = paths
    meta = {"sampling_method": ensemble.method, "sampling_metadata": ensemble.metadata}
    if hasattr(model, "normalization_constant"):
        meta["normalization_constant"] = model.normalization_constant
    return rows, first_paths, meta


def flux_rows(sc: Scenario, model=None, params=None, return_covers: bool = False):
    """Per schedule row: I(n), S(delta), N(eps, delta, n), initial excluded mass."""
    from .flux import build_nodal_cover, infinity_integral, nodal_integral, singular_integral
    from .stats import initial_excluded_mass

    if model is None:
        model, params = build_model(sc)
    spec = build_domain(sc, model)
    schedule = region_schedule(sc)
    T = sc.horizon
    fx = sc.flux
    nodal_box = fx.get("nodal_region")
    rows = []
    covers = []
    for regions in schedule:
        inf = infinity_integral(model, params, regions.ball_radius, T,
                                n_ang=int(fx.get("sphere_angles", 64)),
                                n_time=int(fx.get("time_panels", 24)))
        if spec.m > 0 and spec.d >= 3:
            sing = singular_integral(model, params, spec, regions.delta_for(spec),
                                     regions.ball_radius, T)
            s_val, s_parts = sing.value, list(sing.per_hyperplane)
        else:
            s_val, s_parts = 0.0, []
        cover = None
        if nodal_box is not None:
            region = tuple((float(a), float(b)) for a, b in nodal_box) + ((0.0, T),)
            cover = build_nodal_cover(model, regions.epsilon, region,
                                      theta=float(fx.get("theta", 1e-3)))
            if cover.cubes:
                nres = nodal_integral(model, params, cover)
                nval, nerr = nres.value, nres.error_estimate
            else:
                nval, nerr = 0.0, 0.0
            ncubes = len(cover.cubes)
        else:
            nval, nerr, ncubes, cover = 0.0, 0.0, 0, None
        excl = initial_excluded_mass(model, spec, regions)
        rows.append({
            "regions": {"epsilon": regions.epsilon, "ball_radius": regions.ball_radius,
                        "delta": list(regions.delta), "horizon": regions.horizon},
            "infinity": inf.value,
            "infinity_error": inf.error_estimate,
            "infinity_bound_mu_tilde": inf.bound,
            "singular": s_val,
            "singular_per_hyperplane": s_parts,
            "nodal": nval,
            "nodal_error": nerr,
            "nodal_cover_cubes": ncubes,
            "initial_excluded": excl["total"],
        })
        covers.append(cover)
    return (rows, covers) if return_covers else rows


def existence_entries(sim_rows, flx_rows, sc: Scenario):
    """Zip simulate/flux outputs into global_existence_report entries."""
    from .stats import FluxBundle
    from .trajectory import StoppingStats

    if len(sim_rows) != len(flx_rows):
        from .stats import MismatchedParameters

        raise MismatchedParameters(
            f"{len(sim_rows)} simulate rows vs {len(flx_rows)} flux rows")
    entries = []
    for srow, frow in zip(sim_rows, flx_rows):
        r = srow["regions"]
        regions = StoppingRegions(epsilon=r["epsilon"], ball_radius=r["ball_radius"],
                                  horizon=r["horizon"], delta=tuple(r["delta"]))
        st = srow["stats"]
        stats = StoppingStats(
            n_paths=st["n_paths"], n_immediate=st["n_immediate"],
            n_underflow=st["n_underflow"], counts=st["counts"],
            p_hat=st["p_hat"], p_sigma=st["p_sigma"],
            ci95=tuple(st["ci95"]), immediate_fraction=st["immediate_fraction"])
        fr = frow["regions"]
        bundle = FluxBundle(
            epsilon=fr["epsilon"], delta=tuple(fr["delta"]), n=fr["ball_radius"],
            horizon=fr["horizon"], nodal=frow["nodal"], singular=frow["singular"],
            infinity=frow["infinity"], initial_excluded=frow["initial_excluded"])
        entries.append((regions, stats, bundle))
    return entries


BUNDLED = {
    "paper-ho-superposition", "free-gaussian-2d", "cylindrical-ho-3d",
    "plane-wave-circle", "halfline-dirichlet", "two-bump-free",
}
