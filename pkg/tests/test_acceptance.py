"""Acceptance criteria 1-9, each at its stated tolerance and runtime budget."""

import math
import time
from fractions import Fraction as F

import numpy as np
from scipy import integrate, special

from chaos_lab import metrics, pde, regime
from chaos_lab.grid import GridSpec
from chaos_lab.harness import parse_config, run_experiment
from chaos_lab.initial import Gaussian, on_grid
from chaos_lab.kernel import Mollifier, YukawaParams, build_kernel, norm_report, sample_mollifier, yukawa_eval
from chaos_lab.metrics import read_metrics_csv
from chaos_lab.particles import RunConfig, coupled_run, default_dt, interaction_exact, interaction_fast, mean_field_track


def _rows(path, name):
    return sorted((r for r in read_metrics_csv(path) if r["statistic_name"] == name), key=lambda r: int(r["N"]))


def test_c1_regime_arithmetic(verdict):
    t0 = time.perf_counter()
    g1 = regime.gamma_terms(0.3, 0.1, 4, 1)
    e1 = regime.eta_terms(0.3, 0.1, 4, 0.019)
    g2 = regime.gamma_terms(0.4, 0.1, 7, 2)
    e2 = regime.eta_interval(0.4, 0.1, 7, 0.0025, 2)
    b2 = regime.beta_terms(0.1, 0.0025, 0.03)
    checks = {
        "gamma1": g1 == (F(1, 30), F(1, 50)) and min(g1) == F(1, 50),
        "eta1": e1 == (F(1, 10), F(1, 50)) and regime.eta_interval(0.3, 0.1, 4, 0.019, 1).hi == F(1, 50),
        "gamma2": min(g2) == F(2, 10) / 32 == F(1, 160) and regime.check_feasible(0.4, 0.1, 7, 2).feasible,
        "eta2": (e2.lo, e2.hi) == (F(1, 80), F(3, 25)),
        "beta2": b2 == (74, 8) and regime.beta_bound(0.1, 0.0025, 0.03) == 8,
    }
    dt = time.perf_counter() - t0
    ok = all(checks.values()) and dt < 1.0
    verdict(1, ok, f"{sum(checks.values())}/5 exact identities, gamma2 bound {min(g2)} (printed 0.006), {dt:.3f}s")
    assert ok, checks


def _quad(r):
    f = lambda t: np.exp(-r * r / (4 * t) - t) / (4 * np.pi * t)
    a, _ = integrate.quad(f, 0, r / 2, epsabs=0, epsrel=1e-12, limit=200)
    b, _ = integrate.quad(f, r / 2, np.inf, epsabs=0, epsrel=1e-12, limit=200)
    return a + b


def test_c2_kernel_oracle_and_scaling(verdict):
    t0 = time.perf_counter()
    p = YukawaParams(mu=1.0, chi=1.0)
    r = np.logspace(-2, 1, 100)
    ours = yukawa_eval(r, p)
    oracle = np.array([_quad(x) for x in r])
    rel = float(np.max(np.abs(ours / oracle - 1)))
    bessel = float(np.max(np.abs(ours / (special.k0(r) / (2 * np.pi)) - 1)))

    spec = GridSpec(6.4, 512)  # h = 0.0125 resolves the smallest eps
    scaled = [norm_report(build_kernel(YukawaParams(1.0, 0.5), Mollifier(e), spec)).scaled() for e in (0.2, 0.1, 0.05)]
    ratios = {k: max(s[k] for s in scaled) / min(s[k] for s in scaled) for k in scaled[0]}
    dt = time.perf_counter() - t0
    ok = rel <= 1e-8 and all(v <= 10 for v in ratios.values()) and dt < 30
    detail = (f"max rel err {rel:.2e} (vs K0 {bessel:.1e}); max/min ratios "
              + ", ".join(f"{k}={v:.2f}" for k, v in ratios.items()) + f" (limit 10); {dt:.1f}s")
    verdict(2, ok, detail)
    assert rel <= 1e-8
    assert ok, ratios


def test_c3_pde_conservation(verdict):
    t0 = time.perf_counter()
    spec = GridSpec(16.0, 256)
    u0 = on_grid(Gaussian((0.0, 0.0), 1.0), spec)
    k = build_kernel(YukawaParams(1.0, 0.5), Mollifier(0.5), spec)
    s = pde.initial_state(u0, k)
    dt = s.dt_max()
    traj = pde.run(s, 2000 * dt, dt, every=100)
    drift = max(abs(d.mass - traj[0][1].mass) for _, d in traj)
    diff_ok = all(1.0 < d.diffusivity_min and d.diffusivity_max <= 2.0 for _, d in traj)

    k0 = build_kernel(YukawaParams(1.0, 0.0), Mollifier(0.5), spec)
    s0 = pde.initial_state(u0, k0)
    heat = pde.run(s0, 400 * s0.dt_max(), s0.dt_max(), every=40)
    slope = float(np.polyfit([d.t for _, d in heat], [d.m2 for _, d in heat], 1)[0])
    el = time.perf_counter() - t0
    ok = drift <= 1e-8 and diff_ok and abs(slope / 8 - 1) <= 0.01 and el < 120
    verdict(3, ok, f"mass drift {drift:.1e} over 2000 steps, diffusivity in (1,2] {diff_ok}, chi=0 m2 slope {slope:.6f}, {el:.1f}s")
    assert ok


def test_c4_coupling_exact_at_chi0(verdict):
    t0 = time.perf_counter()
    spec = GridSpec(16.0, 128)
    k = build_kernel(YukawaParams(1.0, 0.0), Mollifier(0.5), spec)
    g = Gaussian((0.0, 0.0), 1.0)
    s0 = pde.initial_state(on_grid(g, spec), k)
    T = 0.1
    track = mean_field_track(s0, T, default_dt(0.5, spec), 10)
    trials, identical = [], True
    for r in range(100):
        rng = np.random.default_rng([7, r])
        zeta = spec.wrap(g.sample(256, rng) + sample_mollifier(k.mollifier, 256, rng))
        rec = coupled_run(RunConfig(256, 0.1, T, 1000 + r), zeta, k, track)
        identical &= bool(np.array_equal(rec.X_final, rec.Xbar_final) and rec.sup_dev == 0.0)
        trials.append(rec)
    prob = metrics.deviation_probability(trials, 0.1, T)
    el = time.perf_counter() - t0
    ok = identical and prob.value == 0.0 and el < 60
    verdict(4, ok, f"100 replicas bit-identical {identical}, deviation probability {prob.value} (Wilson hi {prob.ci_hi:.3f}), {el:.1f}s")
    assert ok


def test_c5_lln_rate(verdict):
    t0 = time.perf_counter()
    spec = GridSpec(6.4, 256)
    k = build_kernel(YukawaParams(1.0, 0.5), Mollifier(0.1), spec)
    g = Gaussian((0.0, 0.0), 0.5)
    u_eps = pde.initial_state(on_grid(g, spec), k).u
    Ns = [64, 128, 256, 512, 1024]
    m1, m2 = [], []
    for N in Ns:
        stats = []
        for r in range(250):
            rng = np.random.default_rng([5, N, r])
            X = spec.wrap(g.sample(N, rng) + sample_mollifier(k.mollifier, N, rng))
            stats.append(metrics.lln_statistic(X, k.table, u_eps, theta=0.3))
        m1.append(metrics.lln_moment(stats, 1).value)
        m2.append(metrics.lln_moment(stats, 2).value)
    s1 = float(np.polyfit(np.log(Ns), np.log(m1), 1)[0])
    s2 = float(np.polyfit(np.log(Ns), np.log(m2), 1)[0])
    el = time.perf_counter() - t0
    ok = abs(s1 + 1) <= 0.2 and abs(s2 + 2) <= 0.4 and el < 600
    verdict(5, ok, f"m=1 slope {s1:.3f} (-1 +/- 0.2), m=2 slope {s2:.3f} (-2 +/- 0.4), 250 replicas per N, {el:.1f}s")
    assert ok


def test_c6_pathwise_trend(tmp_path, verdict):
    t0 = time.perf_counter()
    cfg = parse_config({
        "mode": "sweep",
        "regime": {"theta": 0.3, "alpha": 0.1, "m": 4, "N": [128, 256, 512, 1024], "which": 1},
        "grid": {"box_length_L": 16.0, "nodes_per_side_G": 128},
        "time": {"horizon_T": 0.25, "stride_steps": 10},
        "replicas": 200, "seed": 2024, "output_dir": str(tmp_path / "c6"),
    })
    run_experiment(cfg)
    rows = _rows(tmp_path / "c6" / "metrics.csv", "deviation_probability")
    p = [float(r["value"]) for r in rows]
    hi = [float(r["ci_hi"]) for r in rows]
    trend = all(p[i + 1] <= hi[i] for i in range(len(p) - 1))
    sup = [float(r["value"]) for r in _rows(tmp_path / "c6" / "metrics.csv", "sup_deviation")]
    el = time.perf_counter() - t0
    ok = trend and len(p) == 4 and el < 1800
    verdict(6, ok, f"P(dev > N^-0.1) by N: {p}, Wilson hi {[round(h, 4) for h in hi]}, mean sup dev {[f'{s:.2e}' for s in sup]}, {el:.0f}s")
    assert ok


def test_c7_marginal_l1_trend(tmp_path, verdict):
    t0 = time.perf_counter()
    cfg = parse_config({
        "mode": "sweep",
        "regime": {"theta": 0.4, "alpha": 0.1, "m": 7, "N": [256, 512, 1024, 2048], "which": 2},
        "grid": {"box_length_L": 16.0, "nodes_per_side_G": 128},
        "time": {"horizon_T": 0.25, "stride_steps": 10},
        "replicas": 60, "seed": 77, "output_dir": str(tmp_path / "c7"),
    })
    run_experiment(cfg)
    path = tmp_path / "c7" / "metrics.csv"
    l1 = _rows(path, "l1_marginal")
    v = [float(r["value"]) for r in l1]
    hi = [float(r["ci_hi"]) for r in l1]
    lo = [float(r["ci_lo"]) for r in l1]
    monotone = all(v[i + 1] < v[i] and lo[i + 1] <= hi[i] for i in range(3)) and all(v[i + 1] <= hi[i] for i in range(3))
    viol = sum(int(float(r["value"])) for r in _rows(path, "ckp_violations"))
    pairs = sum(int(r["n_replicas"]) for r in _rows(path, "ckp_violations"))
    el = time.perf_counter() - t0
    ok = monotone and viol == 0 and el < 1800
    verdict(7, ok, f"mean L1 by N: {[round(x, 4) for x in v]}, C-K-P violations {viol}/{pairs}, {el:.0f}s")
    assert ok


def test_c8_estimator_oracles(verdict):
    t0 = time.perf_counter()
    spec = GridSpec(16.0, 256)
    f = on_grid(Gaussian((0.0, 0.0), 1.0), spec)
    g = on_grid(Gaussian((0.1, 0.0), 1.0), spec)
    H, _ = metrics.relative_entropy(f, g)
    kl = 0.1**2 / 2
    phi = lambda x: np.exp(-x * x / 2) / math.sqrt(2 * math.pi)
    l1_oracle, _ = integrate.quad(lambda x: abs(phi(x) - phi(x - 0.1)), -12, 12, points=[0.05], epsabs=1e-13)
    l1 = metrics.l1_distance(f, g)
    el = time.perf_counter() - t0
    ok = abs(H - kl) <= 1e-4 and abs(l1 - l1_oracle) <= 1e-3 and el < 10
    verdict(8, ok, f"H={H:.6f} vs {kl}, L1={l1:.6f} vs quadrature {l1_oracle:.6f}, {el:.2f}s")
    assert ok


def test_c9_fast_interaction(verdict):
    t0 = time.perf_counter()
    spec = GridSpec(6.4, 256)
    k = build_kernel(YukawaParams(1.0, 0.5), Mollifier(0.1), spec)
    tol = 1e-3 * float(np.abs(k.table.values).max())
    worst = 0.0
    for seed in range(20):
        X = np.random.default_rng(seed).uniform(-3.2, 3.2, (512, 2))
        worst = max(worst, float(np.abs(interaction_fast(X, k) - interaction_exact(X, k)).max()))
    el = time.perf_counter() - t0
    ok = worst <= tol and el < 60
    verdict(9, ok, f"max |fast-exact| {worst:.2e} <= {tol:.2e} over 20 seeds, {el:.1f}s")
    assert ok
