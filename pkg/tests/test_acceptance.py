"""Acceptance suite: one test per criterion, printed as a pass line each.

Run with `pytest -v -s tests/test_acceptance.py` to see the per-criterion
lines.  Tolerances are fixed here, not calibrated elsewhere.
"""

import math
import time

import numpy as np
import pytest

from bohmlab import (
    CylindricalHO3D,
    DomainSpec,
    FreeGaussianPacket,
    HermiteSuperposition1D,
    PlaneWaveCircle,
    SingularHyperplane,
    StoppingRegions,
)
from bohmlab.flux import (
    build_nodal_cover,
    crossing_bound_check,
    hardy_check,
    hardy_check_model,
    infinity_integral,
    nodal_integral,
    singular_integral,
)
from bohmlab.propagator import GridSpec, GridState, SplitStepPropagator
from bohmlab.scenarios import existence_entries, flux_rows, load_scenario, simulate_rows
from bohmlab.stats import entropy_functional, equivariance_test, global_existence_report
from bohmlab.trajectory import (
    IntegratorConfig,
    StopCause,
    integrate,
    run_ensemble,
)
from bohmlab.transport1d import (
    build_cdf_table,
    circle_transport_many,
    circle_transport_path,
    node_scaling_fit,
    transport_map,
)
from bohmlab.wavefunction import sample_initial


@pytest.fixture(scope="module")
def ho():
    return HermiteSuperposition1D.counterexample()


@pytest.fixture(scope="module")
def ho_ensemble(ho):
    """10^4-path ensemble of the oscillator scenario at eps = 1e-4, T = 2."""
    spec = DomainSpec(d=1)
    reg = StoppingRegions(epsilon=1e-4, ball_radius=6.0, horizon=2.0)
    t0 = time.perf_counter()
    paths = run_ensemble(ho, ho.params, spec, reg,
                         sample_initial(ho, 10_000, seed=20260809))
    return paths, reg, spec, time.perf_counter() - t0


def test_criterion_01_node_counterexample(ho):
    t0 = time.perf_counter()
    spec = DomainSpec(d=1)
    gaps = []
    for eps in (1e-2, 1e-3, 1e-4):
        reg = StoppingRegions(epsilon=eps, ball_radius=6.0, horizon=3.0)
        p = integrate(ho, ho.params, spec, reg, 0.0)
        assert p.stop_cause is StopCause.NODE
        pre_node = p.q[p.t < math.pi / 2 - 1e-12]
        assert np.max(np.abs(pre_node)) <= 1e-8
        gaps.append(abs(p.stop_time - math.pi / 2))
    elapsed = time.perf_counter() - t0
    assert gaps[0] > gaps[1] > gaps[2], "stop time must converge to pi/2"
    assert gaps[2] <= 1e-3
    assert elapsed < 10.0
    print(f"\n[criterion 1] PASS node counterexample: stop gaps to pi/2 = "
          f"{gaps[0]:.2e} > {gaps[1]:.2e} > {gaps[2]:.2e} (< 1e-3), "
          f"|Q| <= 1e-8 before the node, cause=Node, {elapsed:.1f}s")


def test_criterion_02_cube_root_scaling(ho):
    t0 = time.perf_counter()
    fit = node_scaling_fit(ho, (1.0, 0.0), order=1)
    elapsed = time.perf_counter() - t0
    expected_pref = (3.0 / 4.0) ** (1.0 / 3.0)
    assert fit.slope == pytest.approx(2.0 / 3.0, abs=0.02)
    assert fit.prefactor == pytest.approx(expected_pref, rel=0.05)
    assert elapsed < 30.0
    print(f"\n[criterion 2] PASS cube-root scaling: exponent {fit.slope:.4f} "
          f"(2/3 +- 0.02), prefactor {fit.prefactor:.4f} vs (3/4)^(1/3) = "
          f"{expected_pref:.4f} (+-5%), {elapsed:.1f}s")


def test_criterion_03_circling_state():
    c = CylindricalHO3D()
    spec = DomainSpec(d=3)
    cfg = IntegratorConfig(rel_tol=1e-11, abs_tol=1e-13, max_step=0.2)
    lines = []
    for r in (1.0, 2.0):
        period = 2 * math.pi * r**2
        reg = StoppingRegions(epsilon=1e-8, ball_radius=10.0, horizon=period)
        p = integrate(c, c.params, spec, reg, [r, 0.0, 0.2], config=cfg)
        assert p.stop_cause is StopCause.HORIZON
        radius = np.linalg.norm(p.q[:, :2], axis=1)
        drift = float(np.max(np.abs(radius - r)))
        angle = np.unwrap(np.arctan2(p.q[:, 1], p.q[:, 0]))
        omega = angle[-1] / p.t[-1]
        assert drift <= 1e-6
        assert omega == pytest.approx(1.0 / r**2, abs=1e-4)
        lines.append(f"r={r:g}: drift={drift:.1e}, omega={omega:.8f} vs {1/r**2:g}")
    print("\n[criterion 3] PASS circling state: " + "; ".join(lines))


def test_criterion_04_equivariance(ho, ho_ensemble):
    paths, reg, spec, t_build = ho_ensemble
    t0 = time.perf_counter()
    kss = []
    for t in (0.5, 1.0, 2.0):
        rep = equivariance_test(paths, ho, t, spec=spec, regions=reg)
        assert rep.ks <= 0.02
        assert rep.killed_mass < 0.01
        kss.append(rep.ks)
    neg = equivariance_test(paths, ho, 1.0, spec=spec, regions=reg,
                            reference_time=0.0)
    assert neg.ks >= 3 * 0.02
    elapsed = time.perf_counter() - t0 + t_build
    assert elapsed < 120.0
    print(f"\n[criterion 4] PASS equivariance: KS(t=0.5,1,2) = "
          f"{kss[0]:.4f}, {kss[1]:.4f}, {kss[2]:.4f} (<= 0.02), killed < 1%, "
          f"negative control KS = {neg.ks:.3f} >= 3x0.02, {elapsed:.0f}s")


@pytest.fixture(scope="module")
def gaussian2d_setup():
    g = FreeGaussianPacket(sigma0=[1.0, 1.0])
    spec = DomainSpec(d=2)
    reg = StoppingRegions(epsilon=1e-12, ball_radius=8.0, horizon=2.0)
    paths = run_ensemble(g, g.params, spec, reg,
                         sample_initial(g, 10_000, seed=90817),
                         config=IntegratorConfig(max_step=0.05))
    return g, paths


def test_criterion_05_crossing_bound(gaussian2d_setup):
    g, paths = gaussian2d_setup
    lines = []
    for n in (3.0, 4.0, 5.0):
        inf = infinity_integral(g, g.params, n, 2.0)
        assert inf.satisfies_bound, "I(n) <= mu Itilde(n) must hold"
        rep = crossing_bound_check(
            paths, lambda q, n=n: float(np.linalg.norm(q) - n), inf.value)
        assert rep.passes
        lines.append(f"n={n:g}: p_hat={rep.p_hat:.4f} <= I={inf.value:.4f}"
                     f"+3s={3*rep.sigma:.4f}, I<=muI~={inf.bound:.4f}")
    print("\n[criterion 5] PASS crossing bound: " + "; ".join(lines))


def test_criterion_06_flux_decay_sweeps(ho, gaussian2d_setup):
    g, _ = gaussian2d_setup
    # I(n) strictly decreasing over n in {3..6}
    ivals = [infinity_integral(g, g.params, n, 2.0).value for n in (3, 4, 5, 6)]
    assert all(b < a for a, b in zip(ivals, ivals[1:]))
    # S(delta) strictly decreasing for the cylindrical state (off-axis probe;
    # the on-axis tube flux is exactly zero because the current is azimuthal)
    c = CylindricalHO3D()
    off = SingularHyperplane.point_in_3d((1.2, 0.0, 0.4))
    spec3 = DomainSpec(d=3, hyperplanes=(off,))
    svals = [singular_integral(c, c.params, spec3, (d,), 8.0, 3.0).value
             for d in (0.2, 0.1, 0.05)]
    assert svals[0] > svals[1] > svals[2] > 0
    # N(eps, delta, n) strictly decreasing for the oscillator state
    nvals = []
    for eps in (0.1, 0.05, 0.025):
        cover = build_nodal_cover(ho, eps, region=((-3.0, 3.0), (0.0, 2.0)))
        nvals.append(nodal_integral(ho, ho.params, cover).value)
    assert nvals[0] > nvals[1] > nvals[2] > 0
    # joint-schedule stopping report: decreasing bound sums, p_hat <= sum
    sc = load_scenario("paper-ho-superposition")
    model, params = sc_build_model_cached(sc)
    sim, _, _ = simulate_rows(sc, model=model, params=params)
    flx = flux_rows(sc, model=model, params=params)
    report = global_existence_report(existence_entries(sim, flx, sc))
    assert report.sums_decreasing
    assert report.all_pass
    sums = [r.bound_sum for r in report.rows]
    phats = [r.p_hat for r in report.rows]
    print("\n[criterion 6] PASS flux decay sweeps:"
          f"\n  I(3..6) = {['%.3e' % v for v in ivals]} strictly decreasing"
          f"\n  S(0.2,0.1,0.05) = {['%.3e' % v for v in svals]} strictly decreasing"
          f"\n  N(0.1,0.05,0.025) = {['%.3e' % v for v in nvals]} strictly decreasing"
          f"\n  report rows: p_hat = {['%.1e' % p for p in phats]} <= sums = "
          f"{['%.3e' % s for s in sums]} (3-sigma rule), sums decreasing")


_model_cache = {}


def sc_build_model_cached(sc):
    from bohmlab.scenarios import build_model

    if sc.name not in _model_cache:
        _model_cache[sc.name] = build_model(sc)
    return _model_cache[sc.name]


def test_criterion_07_hardy_inequality():
    point = SingularHyperplane.point_in_3d((0.0, 0.0, 0.0))
    from test_flux import PStateMix

    states = [
        ("off-center gaussian", FreeGaussianPacket(sigma0=[0.8] * 3, center=[1.0, 0.5, 0.0]),
         ((-4, 6), (-4.5, 5.5), (-5, 5))),
        ("moving gaussian", FreeGaussianPacket(sigma0=[1.0] * 3, center=[1.5, 0.0, 0.5],
                                               momentum=[0.5, 0.3, 0.0]),
         ((-4.5, 7.5), (-6, 6), (-5.5, 6.5))),
        ("cylindrical oscillator", CylindricalHO3D(), ((-6, 6),) * 3),
        ("p-state mix", PStateMix(), ((-6.5, 6.5),) * 3),
        ("anisotropic gaussian", FreeGaussianPacket(sigma0=[0.6, 1.0, 1.4],
                                                    center=[0.8, -0.5, 0.3]),
         ((-3.5, 5.1), (-6.5, 5.5), (-8.1, 8.7))),
    ]
    lines = []
    for name, model, box in states:
        rep = hardy_check_model(model, 0.0, box, (128, 128, 128), point)
        assert rep.passes, f"Hardy inequality failed for {name}"
        lines.append(f"{name}: ratio={rep.ratio:.3f}")
    # scaling invariance of the ratio under psi -> c psi (spectral-grid path)
    spec = GridSpec(box=((-6.0, 6.0),) * 3, points=(64, 64, 64), dt=1e-3)
    mesh = spec.mesh()
    psi = np.exp(-0.5 * ((mesh[0] - 1.2) ** 2 + mesh[1] ** 2 + mesh[2] ** 2))
    r1 = hardy_check(psi, spec, point)
    r2 = hardy_check(2.7 * psi, spec, point)
    assert r2.ratio == pytest.approx(r1.ratio, rel=1e-12)
    print("\n[criterion 7] PASS Hardy inequality (lhs <= rhs for 5 states): "
          + "; ".join(lines) + f"; ratio scale-invariant to 1e-12")


def test_criterion_08_entropy_bound(ho):
    spec = DomainSpec(d=1)
    reg = StoppingRegions(epsilon=1e-4, ball_radius=6.0, horizon=1.0)
    paths = run_ensemble(ho, ho.params, spec, reg,
                         sample_initial(ho, 10_000, seed=20260809))
    rep = entropy_functional(paths, ho, ho.params, 1.0)
    assert rep.passes  # mean - 3 sem <= bound
    eig = HermiteSuperposition1D([0.0, 1.0])
    epaths = run_ensemble(eig, eig.params, spec,
                          StoppingRegions(epsilon=1e-8, ball_radius=8.0, horizon=1.0),
                          sample_initial(eig, 500, seed=3))
    eig_rep = entropy_functional(epaths, eig, eig.params, 1.0)
    assert eig_rep.max_abs_d < 1e-12
    pw = PlaneWaveCircle({1: 1.0})
    ppaths = run_ensemble(pw, pw.params, spec,
                          StoppingRegions(epsilon=1e-8, ball_radius=40.0, horizon=1.0),
                          sample_initial(pw, 500, seed=4))
    pw_rep = entropy_functional(ppaths, pw, pw.params, 1.0)
    assert pw_rep.max_abs_d < 1e-12
    print(f"\n[criterion 8] PASS entropy bound: E|D| = {rep.mean_abs_d:.4f} "
          f"(+3sem {3*rep.sem:.4f}) <= bound {rep.bound:.4f} at 10^4 samples; "
          f"eigenstate max|D| = {eig_rep.max_abs_d:.1e}, plane wave max|D| = "
          f"{pw_rep.max_abs_d:.1e} (exact zeros)")


def test_criterion_09_transport_vs_ode(ho):
    spec = DomainSpec(d=1)
    reg = StoppingRegions(epsilon=1e-4, ball_radius=8.0, horizon=1.0)
    cfg = IntegratorConfig(rel_tol=1e-11, abs_tol=1e-13)
    table0 = build_cdf_table(ho, 0.0)
    levels = np.linspace(0.03, 0.97, 100)
    q0s = np.interp(levels, table0.F, table0.grid)
    paths = run_ensemble(ho, ho.params, spec, reg, q0s[:, None], config=cfg)
    times = (0.25, 0.5, 0.75, 1.0)
    tables = {t: build_cdf_table(ho, t) for t in times}
    max_dev = 0.0
    n_used = 0
    mono_ok = True
    for t in times:
        Qs = []
        for p, q0 in zip(paths, q0s):
            if p.stop_cause is not StopCause.HORIZON:
                continue  # stays away from nodes by construction
            Q_map = transport_map(ho, float(q0), t, table=tables[t])
            max_dev = max(max_dev, abs(Q_map - p.position_at(t)[0]))
            Qs.append(Q_map)
            n_used += 1
        mono_ok &= all(b >= a - 1e-12 for a, b in zip(Qs, Qs[1:]))
    assert n_used >= 100 * len(times) * 0.95
    assert max_dev <= 1e-6
    assert mono_ok
    print(f"\n[criterion 9] PASS transport vs ODE: max deviation {max_dev:.2e} "
          f"<= 1e-6 over {n_used} (q0, t) pairs; map monotone in q0 at every t")


def test_criterion_10_propagator_verification():
    spec = GridSpec(box=((-10.0, 10.0),), points=(256,), dt=1e-3, frame_stride=10**9)
    x = spec.axes()[0]
    ground = (np.pi ** -0.25 * np.exp(-0.5 * x**2)).astype(complex)

    def l2_err(dt):
        sp = GridSpec(box=((-10.0, 10.0),), points=(256,), dt=dt, frame_stride=10**9)
        pr = SplitStepPropagator(sp, potential=lambda q: 0.5 * q**2)
        store = pr.run(ground, int(round(1.0 / dt)))
        exact = ground * np.exp(-0.5j)
        return math.sqrt(float(np.sum(np.abs(store.frames[-1] - exact) ** 2))
                         * sp.cell_volume)

    errs = [l2_err(dt) for dt in (1e-3, 5e-4, 2.5e-4)]
    assert errs[0] <= 1e-6
    ratios = [e1 / e2 for e1, e2 in zip(errs, errs[1:])]
    assert all(3.5 <= r <= 4.5 for r in ratios)
    prop = SplitStepPropagator(spec, potential=lambda q: 0.5 * q**2)
    st = prop.initial_state(ground)
    E0, n0 = prop.energy(st), st.norm()
    for _ in range(1000):
        st = prop.step(st)
    norm_drift = abs(st.norm() - n0)
    energy_drift = abs(prop.energy(st) - E0) / E0
    assert norm_drift <= 1e-8 and energy_drift <= 1e-8
    print(f"\n[criterion 10] PASS propagator: L2 error {errs[0]:.2e} <= 1e-6 "
          f"at dt=1e-3; halving ratios {ratios[0]:.2f}, {ratios[1]:.2f} in "
          f"[3.5, 4.5]; norm drift {norm_drift:.1e}, energy drift "
          f"{energy_drift:.1e} <= 1e-8")


def test_criterion_11_circle_extension():
    pw = PlaneWaveCircle({0: math.sqrt(0.7), 1: math.sqrt(0.3)})
    t = 1.0
    q0 = sample_initial(pw, 10_000, seed=411).configurations[:, 0]
    mapped = circle_transport_many(pw, q0, t)
    table = build_cdf_table(pw, t)
    F = np.interp(np.sort(mapped), table.grid, table.F)
    n = len(mapped)
    i = np.arange(1, n + 1)
    ks = float(np.max(np.maximum(np.abs(F - i / n), np.abs(F - (i - 1) / n))))
    assert ks <= 0.02
    jump_counts = [circle_transport_path(pw, float(q), np.linspace(0, t, 21))[1]
                   for q in (0.1, 0.5, 0.9)]
    assert all(j >= 1 for j in jump_counts)
    print(f"\n[criterion 11] PASS circle extension: pushforward KS = {ks:.4f} "
          f"<= 0.02 at 10^4 samples; boundary jumps per trajectory over [0, 1]: "
          f"{jump_counts}")
