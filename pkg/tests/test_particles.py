import csv
import math

import numpy as np
import pytest
from scipy import stats

from chaos_lab import pde
from chaos_lab.grid import GridSpec, interpolate
from chaos_lab.initial import Gaussian, on_grid
from chaos_lab.kernel import Mollifier, YukawaParams, build_kernel
from chaos_lab.particles import (
    CoupledEnsemble, InteractionToleranceError, ParticleError, RunConfig, SynchronizationError,
    coupled_run, coupled_step, default_dt, diffusion_coeff, interaction_exact, interaction_fast,
    mean_field_track, noise_block, stopped_statistic, write_ensemble_csv,
)


@pytest.fixture(scope="module")
def small():
    spec = GridSpec(12.8, 64)
    k = build_kernel(YukawaParams(1.0, 0.5), Mollifier(0.9), spec)
    s0 = pde.initial_state(on_grid(Gaussian((0, 0), 0.8), spec), k)
    return k, s0


def test_diffusion_coeff():
    assert diffusion_coeff(0.0) == 2.0
    assert diffusion_coeff(50.0) - math.sqrt(2) <= 1e-10
    assert diffusion_coeff(1.0) > diffusion_coeff(2.0)
    v = diffusion_coeff(np.linspace(0, 30, 50))
    assert np.all((v > math.sqrt(2)) & (v <= 2))
    with pytest.raises(ParticleError):
        diffusion_coeff(-1e-3)


def test_noise_block_reproducible_and_calibrated():
    a = noise_block(7, 3, 1000, 0.01)
    assert np.array_equal(a, noise_block(7, 3, 1000, 0.01))
    assert not np.array_equal(a, noise_block(7, 4, 1000, 0.01))
    z = np.vstack([noise_block(1, s, 500, 0.04) for s in range(40)]) / 0.2
    # chi-square sanity on the sample covariance and mean
    n = len(z)
    assert abs(z.mean(0)).max() < 4 / math.sqrt(n)
    stat = (n - 1) * np.var(z, axis=0, ddof=1).sum()
    assert stats.chi2(2 * (n - 1)).cdf(stat) > 1e-4 and stats.chi2(2 * (n - 1)).sf(stat) > 1e-4
    assert abs(np.corrcoef(z.T)[0, 1]) < 4 / math.sqrt(n)


def test_interaction_exact_small_cases(kernel_half):
    assert interaction_exact(np.zeros((1, 2)), kernel_half)[0] == kernel_half.origin_value
    h = kernel_half.spec.h
    X = np.array([[0.0, 0.0], [3 * h, -2 * h]])
    d = kernel_half(np.array([3 * h, -2 * h]))
    S = interaction_exact(X, kernel_half)
    assert np.allclose(S, (kernel_half.origin_value + d) / 2, rtol=0, atol=1e-15)


def test_interaction_exact_vs_compensated_loop(kernel_half, rng):
    X = rng.normal(0, 1.0, (64, 2))
    spec = kernel_half.spec
    oracle = [math.fsum(float(kernel_half(spec.min_image(X[i] - X[j]))) for j in range(64)) / 64 for i in range(64)]
    assert np.abs(interaction_exact(X, kernel_half) - oracle).max() < 1e-12


def test_interaction_fast_matches_exact(kernel_half, rng):
    X = rng.normal(0, 1.0, (512, 2))
    err = np.abs(interaction_fast(X, kernel_half) - interaction_exact(X, kernel_half)).max()
    assert err <= 1e-3 * kernel_half.origin_value
    one = np.array([[0.0371, -0.2113]])
    assert abs(interaction_fast(one, kernel_half)[0] - interaction_exact(one, kernel_half)[0]) < 1e-12
    interaction_fast(X, kernel_half, validate=True)
    with pytest.raises(InteractionToleranceError):
        interaction_fast(X, kernel_half, validate=True, rtol=1e-14)


def test_interaction_fast_translation(kernel_half, rng):
    X = rng.normal(0, 1.0, (200, 2))
    shift = kernel_half.spec.h * np.array([5, -3])
    a = interaction_fast(X, kernel_half)
    b = interaction_fast(kernel_half.spec.wrap(X + shift), kernel_half)
    assert np.abs(a - b).max() < 1e-12


def test_chi_zero_bit_identical():
    spec = GridSpec(12.8, 64)
    k = build_kernel(YukawaParams(1.0, 0.0), Mollifier(0.9), spec)
    s0 = pde.initial_state(on_grid(Gaussian(), spec), k)
    track = mean_field_track(s0, 0.05, default_dt(0.9, spec), 5)
    rec = coupled_run(RunConfig(64, 0.1, 0.05, 11), np.random.default_rng(0).normal(0, .5, (64, 2)), k, track)
    assert np.array_equal(rec.X_final, rec.Xbar_final)
    assert rec.sup_dev == 0 and rec.tau_hit is None


def test_one_step_triangle_bound(small, rng):
    k, s0 = small
    conv = mean_field_track(s0, 0.01, 0.005, 1).at(0.0)
    zeta = rng.normal(0, 0.8, (50, 2))
    E = CoupledEnsemble.start(zeta, 0.1, 5, k.spec)
    dW = noise_block(5, 0, 50, 0.005)
    c1 = diffusion_coeff(interaction_fast(E.X, k))
    c2 = diffusion_coeff(interpolate(conv, E.Xbar))
    coupled_step(E, conv, k, 0.005, conv_time=0.0)
    bound = np.abs(c1 - c2) * np.linalg.norm(dW, axis=1)
    assert np.all(E.deviation() <= bound + 1e-15)


def test_two_particle_hand_oracle(small):
    k, s0 = small
    h = k.spec.h
    conv = mean_field_track(s0, 0.01, 0.005, 1).at(0.0)
    X = np.array([[0.0, 0.0], [2 * h, h]])
    dW = np.array([[0.01, -0.02], [0.003, 0.004]])
    c = k.spec.G // 2
    phi0, phid = k.table.values[c, c], k.table.values[c + 2, c + 1]
    S = (phi0 + phid) / 2
    cS = math.sqrt(2 * math.exp(-S) + 2)
    m0, m1 = conv.values[c, c], conv.values[c + 2, c + 1]
    E = CoupledEnsemble.start(X, 0.1, 0, k.spec)
    coupled_step(E, conv, k, 0.005, dW=dW, method="exact")
    assert np.abs(E.X - (X + cS * dW)).max() < 1e-14
    expect_bar = X + np.array([[math.sqrt(2 * math.exp(-m0) + 2)], [math.sqrt(2 * math.exp(-m1) + 2)]]) * dW
    assert np.abs(E.Xbar - expect_bar).max() < 1e-14


def test_sync_error(small, rng):
    k, s0 = small
    conv = mean_field_track(s0, 0.01, 0.005, 1).at(0.0)
    E = CoupledEnsemble.start(rng.normal(size=(4, 2)), 0.1, 0, k.spec)
    with pytest.raises(SynchronizationError):
        coupled_step(E, conv, k, 0.005, conv_time=0.5)
    track = mean_field_track(s0, 0.01, 0.005, 1)
    with pytest.raises(SynchronizationError):
        coupled_run(RunConfig(4, 0.1, 0.02, 0), rng.normal(size=(4, 2)), k, track)
    with pytest.raises(ParticleError):
        coupled_run(RunConfig(5, 0.1, 0.01, 0), rng.normal(size=(4, 2)), k, track)


def test_run_determinism_and_bounds(small, rng):
    k, s0 = small
    track = mean_field_track(s0, 0.1, default_dt(0.9, k.spec), 4)
    zeta = rng.normal(0, 0.8, (32, 2))
    a = coupled_run(RunConfig(32, 0.0, 0.1, 9), zeta, k, track)
    b = coupled_run(RunConfig(32, 0.0, 0.1, 9), zeta, k, track)
    assert np.array_equal(a.max_dev, b.max_dev) and np.array_equal(a.X_final, b.X_final)
    assert a.tau_hit is None  # threshold N^0 = 1 is out of reach for short runs
    assert np.all(a.S_alpha_k <= 1)
    hit = coupled_run(RunConfig(32, 3.0, 0.1, 9), zeta, k, track)
    assert hit.tau_hit is not None and np.all(hit.S_alpha_k[hit.tau_hit_flag] == 1.0)
    assert np.all(hit.S_alpha_k <= 1)


def test_stopped_statistic(small):
    k, _ = small
    E = CoupledEnsemble.start(np.zeros((4, 2)), 0.5, 0, k.spec)
    E.Xbar = E.Xbar + np.array([0.1, 0.0])
    assert stopped_statistic(E, 2) == pytest.approx((4**0.5 * 0.1) ** 2)
    E.tau_hit = 0.3
    assert stopped_statistic(E, 2) == 1.0


def test_exchangeability(small, rng):
    k, s0 = small
    conv = mean_field_track(s0, 0.01, 0.005, 1).at(0.0)
    zeta = rng.normal(0, 0.8, (8, 2))
    perm = np.array([3, 0, 7, 1, 6, 2, 5, 4])
    A = CoupledEnsemble.start(zeta, 0.1, 0, k.spec)
    B = CoupledEnsemble.start(zeta[perm], 0.1, 0, k.spec)
    for step in range(5):
        dW = noise_block(21, step, 8, 0.005)
        coupled_step(A, conv, k, 0.005, dW=dW, method="exact")
        coupled_step(B, conv, k, 0.005, dW=dW[perm], method="exact")
    assert np.abs(A.X[perm] - B.X).max() < 1e-12
    assert np.abs(A.Xbar[perm] - B.Xbar).max() < 1e-14


def test_sup_deviation_does_not_grow_with_N(small):
    k, s0 = small
    T = 0.1
    track = mean_field_track(s0, T, default_dt(0.9, k.spec), 4)
    means = []
    for N in (64, 128):
        sups = []
        for r in range(100):
            z = np.random.default_rng([r, N]).normal(0, 0.8, (N, 2))
            sups.append(coupled_run(RunConfig(N, 0.1, T, 1000 + r), z, k, track).sup_dev)
        means.append(np.mean(sups))
    assert means[1] <= means[0]


def test_csv_outputs(small, tmp_path, rng):
    k, s0 = small
    track = mean_field_track(s0, 0.02, 0.005, 2)
    rec = coupled_run(RunConfig(6, 0.1, 0.02, 1), rng.normal(size=(6, 2)), k, track)
    rec.to_csv(tmp_path / "t.csv")
    rows = list(csv.reader(open(tmp_path / "t.csv")))
    assert rows[0] == ["t", "max_dev", "S_alpha_k", "tau_hit_flag"] and len(rows) == len(rec.t) + 1
    write_ensemble_csv(tmp_path / "e.csv", rec.X_final, rec.Xbar_final)
    rows = list(csv.reader(open(tmp_path / "e.csv")))
    assert rows[0] == ["i", "x", "y", "xbar_x", "xbar_y"] and len(rows) == 7
