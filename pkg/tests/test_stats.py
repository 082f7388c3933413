import math

import numpy as np
import pytest

from bohmlab import (
    DomainSpec,
    FreeGaussianPacket,
    HermiteSuperposition1D,
    PlaneWaveCircle,
    StoppingRegions,
)
from bohmlab.stats import (
    FluxBundle,
    MismatchedParameters,
    TooFewAlive,
    entropy_functional,
    equivariance_test,
    equivariance_test_md,
    global_existence_report,
    initial_excluded_mass,
)
from bohmlab.trajectory import run_ensemble, stopping_statistics
from bohmlab.wavefunction import sample_initial


@pytest.fixture(scope="module")
def ho_paths(ho_state, line1d):
    reg = StoppingRegions(epsilon=1e-4, ball_radius=6.0, horizon=2.0)
    es = sample_initial(ho_state, 4000, seed=42)
    return run_ensemble(ho_state, ho_state.params, line1d, reg, es), reg


def test_equivariance_t0_sampling_noise(ho_state, line1d, ho_paths):
    paths, reg = ho_paths
    rep = equivariance_test(paths, ho_state, 0.0, spec=line1d, regions=reg)
    # same-distribution draw: KS * sqrt(n) below the 95% DKW constant
    assert rep.ks * math.sqrt(rep.n_alive) <= 1.63
    assert rep.passes


def test_equivariance_holds_at_later_times(ho_state, line1d, ho_paths):
    paths, reg = ho_paths
    for t in (0.5, 1.0, 2.0):
        rep = equivariance_test(paths, ho_state, t, spec=line1d, regions=reg)
        assert rep.passes
        assert rep.killed_mass < 0.01
        assert 0.0 <= rep.l1 <= 2.0


def test_equivariance_negative_control(ho_state, line1d, ho_paths):
    paths, reg = ho_paths
    ok = equivariance_test(paths, ho_state, 1.0, spec=line1d, regions=reg)
    frozen = equivariance_test(paths, ho_state, 1.0, spec=line1d, regions=reg,
                               reference_time=0.0)
    assert frozen.ks >= 3.0 * frozen.ks_threshold
    assert frozen.ks >= 3.0 * ok.ks


def test_equivariance_too_few_alive(ho_state, line1d):
    reg = StoppingRegions(epsilon=1e-4, ball_radius=6.0, horizon=1.0)
    paths = run_ensemble(ho_state, ho_state.params, line1d, reg,
                         sample_initial(ho_state, 50, seed=1))
    with pytest.raises(TooFewAlive):
        equivariance_test(paths, ho_state, 0.5)


def test_equivariance_multidimensional():
    g = FreeGaussianPacket(sigma0=[1.0, 1.0])
    spec = DomainSpec(d=2)
    reg = StoppingRegions(epsilon=1e-12, ball_radius=12.0, horizon=2.0)
    paths = run_ensemble(g, g.params, spec, reg, sample_initial(g, 3000, seed=12))
    rep = equivariance_test(paths, g, 2.0)
    assert rep.passes
    assert len(rep.per_coordinate_ks) == 2
    # negative control: frozen t=0 density; by t=2 the packet has spread by
    # sqrt(2), a KS gap of ~0.08 between the scale-1 and scale-sqrt(2) CDFs
    neg = equivariance_test(paths, g, 2.0, reference_time=0.0)
    assert neg.ks > 2.0 * rep.ks_threshold


def test_entropy_zero_for_stationary_and_plane_wave(line1d):
    eig = HermiteSuperposition1D([0.0, 1.0])
    reg = StoppingRegions(epsilon=1e-8, ball_radius=8.0, horizon=1.0)
    paths = run_ensemble(eig, eig.params, line1d, reg, sample_initial(eig, 400, seed=3))
    rep = entropy_functional(paths, eig, eig.params, 1.0)
    assert rep.max_abs_d < 1e-12
    pw = PlaneWaveCircle({1: 1.0})
    regp = StoppingRegions(epsilon=1e-8, ball_radius=40.0, horizon=1.0)
    pw_paths = run_ensemble(pw, pw.params, line1d, regp, sample_initial(pw, 300, seed=4))
    repp = entropy_functional(pw_paths, pw, pw.params, 1.0)
    assert repp.max_abs_d < 1e-12


def test_entropy_bound_for_ho_state(ho_state, line1d):
    reg = StoppingRegions(epsilon=1e-4, ball_radius=6.0, horizon=1.0)
    paths = run_ensemble(ho_state, ho_state.params, line1d, reg,
                         sample_initial(ho_state, 3000, seed=11))
    rep = entropy_functional(paths, ho_state, ho_state.params, 1.0)
    assert rep.passes
    assert 0.0 < rep.mean_abs_d < rep.bound
    assert rep.bound == pytest.approx(rep.time_term + rep.gradient_term)


def test_initial_excluded_mass_against_dense_oracle(ho_state, line1d):
    reg = StoppingRegions(epsilon=1e-2, ball_radius=6.0, horizon=1.0)
    em = initial_excluded_mass(ho_state, line1d, reg)
    grid = np.linspace(-6, 6, 2_000_001)
    dens = ho_state.abs2(grid, 0.0)
    inside_node = np.sqrt(dens) <= reg.epsilon
    from scipy.integrate import simpson

    oracle = simpson(np.where(inside_node, dens, 0.0), x=grid)
    assert em["node"] == pytest.approx(oracle, rel=2e-3)
    assert em["total"] == pytest.approx(oracle + em["ball"], rel=2e-3)


def test_initial_excluded_mass_monte_carlo():
    g = FreeGaussianPacket(sigma0=[1.0, 1.0])
    spec = DomainSpec(d=2)
    reg = StoppingRegions(epsilon=1e-12, ball_radius=2.0, horizon=1.0)
    em = initial_excluded_mass(g, spec, reg, mc_fallback=100_000, seed=5)
    exact = math.exp(-(2.0**2) / 2.0)  # P(|q| >= 2)
    assert em["total"] == pytest.approx(exact, abs=4 * em["sigma"])


def test_global_existence_report_rows(ho_state, line1d, ho_paths):
    paths, reg = ho_paths
    stats = stopping_statistics(paths)
    bundle = FluxBundle(epsilon=reg.epsilon, delta=(), n=reg.ball_radius,
                        horizon=reg.horizon, nodal=1e-8, singular=0.0,
                        infinity=1e-15, initial_excluded=2e-9)
    report = global_existence_report([(reg, stats, bundle)])
    row = report.rows[0]
    assert row.bound_sum == pytest.approx(1e-8 + 1e-15 + 2e-9)
    assert row.passes  # p_hat = 0 for this ensemble
    assert report.all_pass


def test_global_existence_report_mismatch(ho_state, ho_paths):
    paths, reg = ho_paths
    stats = stopping_statistics(paths)
    wrong = FluxBundle(epsilon=reg.epsilon * 10, delta=(), n=reg.ball_radius,
                       horizon=reg.horizon, nodal=0.0, singular=0.0,
                       infinity=0.0, initial_excluded=0.0)
    with pytest.raises(MismatchedParameters):
        global_existence_report([(reg, stats, wrong)])


def test_nodeless_scenario_report_near_zero():
    g = FreeGaussianPacket(sigma0=[1.0, 1.0])
    spec = DomainSpec(d=2)
    reg = StoppingRegions(epsilon=1e-12, ball_radius=9.0, horizon=1.0)
    paths = run_ensemble(g, g.params, spec, reg, sample_initial(g, 500, seed=8))
    stats = stopping_statistics(paths)
    from bohmlab.flux import infinity_integral

    inf = infinity_integral(g, g.params, 9.0, 1.0).value
    em = initial_excluded_mass(g, spec, reg, mc_fallback=50_000, seed=9)
    bundle = FluxBundle(epsilon=1e-12, delta=(), n=9.0, horizon=1.0,
                        nodal=0.0, singular=0.0, infinity=inf,
                        initial_excluded=em["total"])
    report = global_existence_report([(reg, stats, bundle)])
    assert report.rows[0].p_hat == 0.0
    assert report.rows[0].bound_sum < 1e-10
    assert report.all_pass
