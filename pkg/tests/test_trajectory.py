import math

import numpy as np
import pytest

from bohmlab import (
    CylindricalHO3D,
    DomainSpec,
    FreeGaussianPacket,
    HermiteSuperposition1D,
    PlaneWaveCircle,
    StoppingRegions,
)
from bohmlab.trajectory import (
    EmptyEnsemble,
    IntegratorConfig,
    KilledPath,
    StopCause,
    integrate,
    run_ensemble,
    stopping_statistics,
    wilson_interval,
)
from bohmlab.wavefunction import sample_initial


def test_origin_trajectory_runs_into_node(ho_state, line1d):
    # the symmetric trajectory sits at q = 0 and dies at the node level set
    stop_times = []
    for eps in (1e-2, 1e-3, 1e-4):
        reg = StoppingRegions(epsilon=eps, ball_radius=6.0, horizon=3.0)
        p = integrate(ho_state, ho_state.params, line1d, reg, 0.0)
        assert p.stop_cause is StopCause.NODE
        assert np.max(np.abs(p.q)) <= 1e-8
        # |psi(0, t)| = 2 C cos t, so the crossing time is arccos(eps / 2C)
        pred = math.acos(eps / (2 * ho_state.normalization_constant))
        assert p.stop_time == pytest.approx(pred, abs=1e-7)
        assert abs(p.event_residual) <= 1e-9
        stop_times.append(p.stop_time)
    gaps = [abs(t - math.pi / 2) for t in stop_times]
    assert gaps[0] > gaps[1] > gaps[2]
    assert gaps[2] < 1e-3


def test_plane_wave_ball_stop(line1d):
    pw = PlaneWaveCircle({1: 1.0})
    reg = StoppingRegions(epsilon=1e-12, ball_radius=3.0, horizon=10.0)
    q0 = 0.25
    p = integrate(pw, pw.params, line1d, reg, q0)
    assert p.stop_cause is StopCause.BALL
    assert p.stop_time == pytest.approx((3.0 - q0) / (2 * math.pi), abs=1e-8)


def test_cylindrical_circling():
    c = CylindricalHO3D()
    spec = DomainSpec(d=3)
    reg = StoppingRegions(epsilon=1e-8, ball_radius=10.0, horizon=8 * math.pi)
    cfg = IntegratorConfig(rel_tol=1e-11, abs_tol=1e-13, max_step=0.2)
    p = integrate(c, c.params, spec, reg, [2.0, 0.0, 0.3], config=cfg)
    assert p.stop_cause is StopCause.HORIZON
    radius = np.linalg.norm(p.q[:, :2], axis=1)
    assert np.max(np.abs(radius - 2.0)) < 1e-7
    assert np.max(np.abs(p.q[:, 2] - 0.3)) < 1e-9
    angle = np.unwrap(np.arctan2(p.q[:, 1], p.q[:, 0]))
    # angular velocity 1/r^2 = 1/4: accumulated angle = t/4
    assert angle[-1] == pytest.approx(8 * math.pi / 4, abs=1e-5)


def test_singular_tube_stop():
    # a particle circling at the probe point's radius and height must hit
    # the tube; the hitting time follows from the angular velocity 1/r^2
    from bohmlab import SingularHyperplane

    c = CylindricalHO3D()
    probe = SingularHyperplane.point_in_3d((1.2, 0.0, 0.4))
    spec = DomainSpec(d=3, hyperplanes=(probe,))
    reg = StoppingRegions(epsilon=1e-9, ball_radius=8.0, horizon=6.0, delta=(0.05,))
    r, phi0 = 1.2, -0.5
    q0 = [r * math.cos(phi0), r * math.sin(phi0), 0.4]
    p = integrate(c, c.params, spec, reg, q0)
    assert p.stop_cause is StopCause.SINGULAR
    # it stops when the angular gap closes to ~delta/r: t = (phi - delta/r) r^2
    t_pred = (abs(phi0) - 0.05 / r) * r**2
    assert p.stop_time == pytest.approx(t_pred, abs=1e-3)
    assert probe.distance(p.q[-1]) == pytest.approx(0.05, abs=1e-9)


def test_mirror_symmetry(ho_state, line1d):
    reg = StoppingRegions(epsilon=1e-6, ball_radius=6.0, horizon=2.0)
    pa = integrate(ho_state, ho_state.params, line1d, reg, 0.8)
    pb = integrate(ho_state, ho_state.params, line1d, reg, -0.8)
    ts = np.linspace(0.0, 2.0, 41)
    dev = max(abs(pa.position_at(t)[0] + pb.position_at(t)[0]) for t in ts)
    assert dev <= 1e-7


def test_refinement_convergence(ho_state, line1d):
    reg = StoppingRegions(epsilon=1e-6, ball_radius=6.0, horizon=2.0)
    ends = {}
    for rtol in (1e-8, 5e-9):
        cfg = IntegratorConfig(rel_tol=rtol, abs_tol=rtol * 1e-2)
        p = integrate(ho_state, ho_state.params, line1d, reg, 1.3, config=cfg)
        assert p.stop_cause is StopCause.HORIZON
        ends[rtol] = p.q[-1][0]
    assert abs(ends[1e-8] - ends[5e-9]) <= 10 * 5e-9 * max(1.0, abs(ends[5e-9]))


def test_non_crossing_1d(ho_state, line1d):
    reg = StoppingRegions(epsilon=1e-5, ball_radius=6.0, horizon=1.5)
    q0s = np.linspace(-1.8, 1.8, 13)
    paths = run_ensemble(ho_state, ho_state.params, line1d, reg, q0s[:, None])
    ts = np.linspace(0.0, 1.5, 31)
    for t in ts:
        alive = [p for p in paths if p.alive_at(t)]
        pos = [p.position_at(t)[0] for p in alive]
        order = [p.q0[0] for p in alive]
        assert all(b > a for a, b in zip(pos, pos[1:])) == all(
            b > a for a, b in zip(order, order[1:]))


def test_monotone_stopping_in_epsilon_and_ball(ho_state, line1d):
    # larger node region stops earlier; larger ball stops later
    taus = []
    for eps in (3e-1, 1e-1, 1e-2):
        reg = StoppingRegions(epsilon=eps, ball_radius=6.0, horizon=3.0)
        taus.append(integrate(ho_state, ho_state.params, line1d, reg, 0.0).stop_time)
    assert taus[0] <= taus[1] <= taus[2]
    pw = PlaneWaveCircle({1: 1.0})
    t_balls = []
    for n in (2.0, 3.0, 4.0):
        reg = StoppingRegions(epsilon=1e-12, ball_radius=n, horizon=10.0)
        t_balls.append(integrate(pw, pw.params, line1d, reg, 0.1).stop_time)
    assert t_balls[0] < t_balls[1] < t_balls[2]


def test_nodeless_ensemble_all_horizon(line1d):
    g = FreeGaussianPacket(sigma0=1.0, d=1)
    reg = StoppingRegions(epsilon=1e-12, ball_radius=12.0, horizon=1.0)
    paths = run_ensemble(g, g.params, line1d, reg, sample_initial(g, 300, seed=2))
    assert all(p.stop_cause is StopCause.HORIZON for p in paths)
    st = stopping_statistics(paths)
    assert st.p_hat == 0.0
    assert st.ci95[1] == pytest.approx(3.0 / 300)  # rule of three


def test_zero_samples_empty(ho_state, line1d):
    reg = StoppingRegions(epsilon=1e-4, ball_radius=6.0, horizon=1.0)
    assert run_ensemble(ho_state, ho_state.params, line1d, reg,
                        np.empty((0, 1))) == []
    with pytest.raises(EmptyEnsemble):
        stopping_statistics([])


def test_immediate_kills_classified(ho_state, line1d):
    reg = StoppingRegions(epsilon=1e-2, ball_radius=2.0, horizon=1.0)
    # q0 = 1 is a node of psi_0; q0 = 5 is outside the ball
    paths = run_ensemble(ho_state, ho_state.params, line1d, reg,
                         np.array([[1.0], [5.0], [0.3]]))
    assert paths[0].immediate and paths[0].stop_cause is StopCause.NODE
    assert paths[1].immediate and paths[1].stop_cause is StopCause.BALL
    assert not paths[2].immediate
    st = stopping_statistics(paths)
    assert st.n_immediate == 2
    assert st.immediate_fraction == pytest.approx(2 / 3)


def test_stopping_statistics_synthetic_half():
    def mk(cause):
        return KilledPath(q0=np.zeros(1), t0=0.0, t=np.array([0.0, 1.0]),
                          q=np.zeros((2, 1)), v=np.zeros((2, 1)),
                          stop_time=1.0, stop_cause=cause)

    paths = [mk(StopCause.NODE) for _ in range(50)] + [mk(StopCause.HORIZON) for _ in range(50)]
    st = stopping_statistics(paths)
    assert st.p_hat == pytest.approx(0.5)
    lo, hi = st.ci95
    wl, wh = wilson_interval(50, 100)
    assert (lo, hi) == (pytest.approx(wl), pytest.approx(wh))
    assert lo < 0.5 < hi


def test_ensemble_deterministic_and_chunk_independent(ho_state, line1d):
    reg = StoppingRegions(epsilon=1e-4, ball_radius=6.0, horizon=1.0)
    es = sample_initial(ho_state, 64, seed=21)
    a = run_ensemble(ho_state, ho_state.params, line1d, reg, es, chunk=64)
    b = run_ensemble(ho_state, ho_state.params, line1d, reg, es, chunk=7)
    for pa, pb in zip(a, b):
        assert np.array_equal(pa.t, pb.t)
        assert np.array_equal(pa.q, pb.q)
        assert pa.stop_cause == pb.stop_cause


def test_single_vs_ensemble_identical(ho_state, line1d):
    reg = StoppingRegions(epsilon=1e-4, ball_radius=6.0, horizon=1.0)
    q0 = 0.7
    solo = integrate(ho_state, ho_state.params, line1d, reg, q0)
    batch = run_ensemble(ho_state, ho_state.params, line1d, reg,
                         np.array([[q0], [1.4]]))[0]
    assert np.array_equal(solo.q, batch.q)
    assert np.array_equal(solo.t, batch.t)


def test_interior_samples_classify_interior(ho_state, line1d):
    from bohmlab.domain import RegionClass, classify_batch

    reg = StoppingRegions(epsilon=1e-3, ball_radius=6.0, horizon=3.0)
    p = integrate(ho_state, ho_state.params, line1d, reg, 0.35)
    abspsi = np.abs(np.atleast_1d(ho_state.evaluate(p.q[:-1], p.t[:-1]).psi))
    codes = classify_batch(line1d, reg, p.q[:-1], abspsi)
    assert np.all(codes == RegionClass.INTERIOR)


def test_dense_output_accuracy():
    pw = PlaneWaveCircle({1: 1.0})  # constant velocity: exact linear motion
    spec = DomainSpec(d=1)
    reg = StoppingRegions(epsilon=1e-12, ball_radius=40.0, horizon=1.0)
    p = integrate(pw, pw.params, spec, reg, 0.0)
    for t in np.linspace(0.05, 0.95, 10):
        assert p.position_at(t)[0] == pytest.approx(2 * math.pi * t, abs=1e-9)
