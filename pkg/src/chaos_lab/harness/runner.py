"""Experiment recipes: PDE, coupled replicas, LLN sweeps and regime certificates."""

from __future__ import annotations

import hashlib
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .. import __version__, metrics, pde, regime
from ..grid import GridSpec, write_field_csv
from ..initial import on_grid
from ..kernel import Mollifier, PotentialKernel, YukawaParams, build_kernel, sample_mollifier
from ..particles import MeanFieldTrack, RunConfig, TrialRecord, coupled_run, default_dt, mean_field_track
from .config import ConfigError, ExperimentConfig

log = logging.getLogger(__name__)

INIT_STREAM = 2**32


@dataclass
class RunManifest:
    config_hash: str
    code_version: str
    mode: str
    seeds: dict[str, list[int]] = field(default_factory=dict)
    files: list[dict] = field(default_factory=list)
    timings: dict[str, float] = field(default_factory=dict)
    status: str = "running"
    failure: dict | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    def write(self, out: Path) -> None:
        (out / "manifest.json").write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))

    @classmethod
    def load(cls, path: str | Path) -> RunManifest:
        path = Path(path)
        if path.is_dir():
            path = path / "manifest.json"
        return cls(**json.loads(path.read_text()))


def replica_seeds(master: int, N: int, count: int) -> list[int]:
    """Per-replica seeds from ``(master, N, counter)``."""
    return [int(np.random.SeedSequence([master, N, r]).generate_state(1, dtype=np.uint64)[0] >> 1)
            for r in range(count)]


def sample_initial(u0, mollifier: Mollifier, n: int, seed: int, spec: GridSpec) -> np.ndarray:
    """i.i.d. draws from ``u0 * j^ε``, the law of the mollified initial datum."""
    rng = np.random.default_rng([seed, INIT_STREAM])
    return spec.wrap(u0.sample(n, rng) + sample_mollifier(mollifier, n, rng))


@dataclass
class Setup:
    eps: float
    kernel: PotentialKernel
    state0: pde.PdeState
    dt: float
    params: regime.RegimeParams | None


def resolve_eps(cfg: ExperimentConfig, N: int) -> tuple[float, regime.RegimeParams | None]:
    r = cfg.regime
    params = None
    if cfg.eps is None or cfg.mode == "sweep":
        try:
            params = regime.plan(r.theta, r.alpha, r.m, N, r.which, r.gamma, r.eta)
        except regime.RegimeError as exc:
            raise ConfigError(str(exc), "regime") from exc
    if cfg.eps is not None and cfg.mode != "sweep":
        return cfg.eps, params
    return params.eps, params


def setup(cfg: ExperimentConfig, N: int) -> Setup:
    eps, params = resolve_eps(cfg, N)
    spec = cfg.grid.spec()
    if spec.h > eps / 4:
        raise ConfigError(f"h={spec.h:.4g} does not resolve eps={eps:.4g} (need h <= eps/4)", "grid")
    dt = cfg.time.dt or default_dt(eps, spec)
    if dt > spec.h**2 / 8:
        raise ConfigError(f"dt={dt:.4g} above the explicit bound h^2/8={spec.h**2 / 8:.4g}", "time.dt")
    phys = YukawaParams(mu=cfg.physical.mu, chi=cfg.physical.chi)
    kernel = build_kernel(phys, Mollifier(eps), spec)
    state0 = pde.initial_state(on_grid(cfg.initial.build(), spec), kernel)
    return Setup(eps, kernel, state0, dt, params)


_shared: dict = {}


def _init_worker(kernel, track, u0, base):
    _shared.update(kernel=kernel, track=track, u0=u0, base=base)


def _replica(seed: int) -> TrialRecord:
    k, track, base = _shared["kernel"], _shared["track"], _shared["base"]
    zeta = sample_initial(_shared["u0"], k.mollifier, base.N, seed, k.spec)
    cfg = RunConfig(base.N, base.alpha, base.T, seed, base.k, base.method)
    return coupled_run(cfg, zeta, k, track)


def run_replicas(seeds, kernel, track: MeanFieldTrack, u0, base: RunConfig, workers: int) -> list[TrialRecord]:
    """Run coupled replicas; results come back in seed order regardless of ``workers``."""
    if workers <= 1 or len(seeds) == 1:
        _init_worker(kernel, track, u0, base)
        return [_replica(s) for s in seeds]
    with ProcessPoolExecutor(workers, initializer=_init_worker, initargs=(kernel, track, u0, base)) as ex:
        return list(ex.map(_replica, seeds, chunksize=max(1, len(seeds) // (4 * workers))))


def _row(N, eps, name, est: metrics.Estimate, alpha="", theta="", m="") -> dict:
    return dict(N=N, eps=repr(float(eps)), alpha=alpha, theta=theta, m=m, statistic_name=name,
                value=repr(est.value), ci_lo=repr(est.ci_lo), ci_hi=repr(est.ci_hi), n_replicas=est.n)


def _coupling_for_N(cfg: ExperimentConfig, N: int, out: Path, man: RunManifest) -> list[dict]:
    t0 = time.perf_counter()
    st = setup(cfg, N)
    T = cfg.time.horizon_T
    track = mean_field_track(st.state0, T, st.dt, cfg.time.stride_steps)
    final_pde = pde.run(st.state0, T, st.dt, every=cfg.time.stride_steps)
    u_T = final_pde[-1][0].u
    pde.write_diagnostics_csv(out / f"diagnostics_N{N}.csv", [d for _, d in final_pde])
    write_field_csv(out / f"u_final_N{N}.csv", u_T, T)
    man.timings[f"pde_N{N}"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    alpha = float(cfg.regime.alpha)
    seeds = replica_seeds(cfg.seed, N, cfg.replicas)
    man.seeds[str(N)] = seeds
    base = RunConfig(N, alpha, T, 0, 2, cfg.interaction)
    trials = run_replicas(seeds, st.kernel, track, cfg.initial.build(), base, cfg.workers())
    tdir = out / "trials" / f"N{N}"
    tdir.mkdir(parents=True, exist_ok=True)
    for r, tr in enumerate(trials):
        tr.to_csv(tdir / f"replica_{r:04d}.csv")
    man.timings[f"replicas_N{N}"] = time.perf_counter() - t0

    eps = st.eps
    rows = [_row(N, eps, "deviation_probability", metrics.deviation_probability(trials, alpha, T), alpha)]
    rows.append(_row(N, eps, "sup_deviation", metrics.bootstrap_mean(np.array([t.sup_dev for t in trials]), cfg.seed), alpha))
    rows.append(_row(N, eps, "S_alpha_2", metrics.bootstrap_mean(np.array([t.S_alpha_k[-1] for t in trials]), cfg.seed), alpha))
    hits = sum(t.tau_hit is not None for t in trials)
    lo, hi = metrics.wilson_interval(hits, len(trials))
    rows.append(_row(N, eps, "tau_hit_fraction", metrics.Estimate(hits / len(trials), lo, hi, len(trials)), alpha))
    reports = [metrics.marginal_distance(t.X_final, u_T, cfg.kde_bandwidth) for t in trials]
    for name, vals in (("l1_marginal", [r.l1 for r in reports]), ("rel_entropy_marginal", [r.rel_entropy for r in reports]),
                       ("kde_bandwidth", [r.bandwidth for r in reports])):
        rows.append(_row(N, eps, name, metrics.bootstrap_mean(np.array(vals), cfg.seed), alpha))
    viol = sum(r.violated for r in reports)
    rows.append(_row(N, eps, "ckp_violations", metrics.Estimate(viol, viol, viol, len(reports)), alpha))
    return rows


def _lln(cfg: ExperimentConfig, out: Path, man: RunManifest) -> list[dict]:
    rows = []
    u0 = cfg.initial.build()
    for N in cfg.regime.N:
        t0 = time.perf_counter()
        st = setup(cfg, N)
        psi = st.kernel.psi(cfg.lln.psi)
        seeds = replica_seeds(cfg.seed, N, cfg.replicas)
        man.seeds[str(N)] = seeds
        stats_ = []
        for s in seeds:
            X = sample_initial(u0, st.kernel.mollifier, N, s, st.kernel.spec)
            stats_.append(metrics.lln_statistic(X, psi, st.state0.u, cfg.lln.theta, cfg.lln.psi))
        for m in cfg.lln.moments:
            est = metrics.lln_moment(stats_, m, seed=cfg.seed)
            rows.append(_row(N, st.eps, f"lln_moment_m{m}", est, theta=cfg.lln.theta, m=m))
        k = sum(s.in_B for s in stats_)
        lo, hi = metrics.wilson_interval(k, len(stats_))
        rows.append(_row(N, st.eps, "lln_event_B", metrics.Estimate(k / len(stats_), lo, hi, len(stats_)), theta=cfg.lln.theta))
        man.timings[f"lln_N{N}"] = time.perf_counter() - t0
    return rows


def _pde(cfg: ExperimentConfig, out: Path, man: RunManifest) -> list[dict]:
    t0 = time.perf_counter()
    st = setup(cfg, cfg.regime.N[0])
    traj = pde.run(st.state0, cfg.time.horizon_T, st.dt, every=cfg.time.stride_steps)
    diags = [d for _, d in traj]
    pde.write_diagnostics_csv(out / "diagnostics.csv", diags)
    every = cfg.snapshot_every_strides
    snaps = out / "snapshots"
    for i, (s, _) in enumerate(traj):
        if i == len(traj) - 1 or (every and i % every == 0):
            snaps.mkdir(exist_ok=True)
            write_field_csv(snaps / f"u_{i:05d}.csv", s.u, s.t)
    horizon = pde.gradlog_horizon(diags)
    conf = [pde.confinement(s, d) for s, d in traj]
    worst = min(conf, key=lambda c: c.interior_mass)
    if not worst.ok:
        log.warning("only %.5f of the mass stays 3*eps inside the seam", worst.interior_mass)
    T = cfg.time.horizon_T
    (out / "pde_summary.json").write_text(json.dumps({
        "eps": st.eps, "dt": T / pde.n_steps(T, st.dt), "steps": pde.n_steps(T, st.dt),
        "gradlog_horizon": horizon, "kernel_truncated": st.kernel.truncated,
        "min_interior_mass": worst.interior_mass, "min_chebyshev_bound": worst.chebyshev_bound,
        "confined": worst.ok, "chi_smallness_verified": False,
    }, indent=2, sort_keys=True))
    man.timings["pde"] = time.perf_counter() - t0
    return []


def _regime(cfg: ExperimentConfig, out: Path, man: RunManifest) -> list[dict]:
    r = cfg.regime
    lines = []
    for N in r.N:
        try:
            p = regime.plan(r.theta, r.alpha, r.m, N, r.which, r.gamma, r.eta)
        except regime.RegimeError as exc:
            raise ConfigError(str(exc), "regime") from exc
        lines.append(regime.format_certificate(p))
    (out / "certificate.txt").write_text("\n\n".join(lines) + "\n")
    return []


def _files(out: Path) -> list[dict]:
    inv = []
    for p in sorted(out.rglob("*")):
        if p.is_file() and p.name != "manifest.json":
            data = p.read_bytes()
            inv.append({"path": p.relative_to(out).as_posix(), "bytes": len(data),
                        "sha256": hashlib.sha256(data).hexdigest()})
    return inv


def run_experiment(cfg: ExperimentConfig) -> RunManifest:
    """Execute ``cfg.mode``; write data, ``config.json`` and ``manifest.json``.

    A failure part-way leaves a manifest with ``status="failed"`` and the
    error recorded, then re-raises.
    """
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(cfg.to_json())
    man = RunManifest(cfg.hash(), __version__, cfg.mode)
    t0 = time.perf_counter()
    try:
        if cfg.mode == "regime":
            rows = _regime(cfg, out, man)
        elif cfg.mode == "pde":
            rows = _pde(cfg, out, man)
        elif cfg.mode == "lln":
            rows = _lln(cfg, out, man)
        else:
            rows = []
            for N in cfg.regime.N:
                rows += _coupling_for_N(cfg, N, out, man)
        if rows:
            metrics.write_metrics_csv(out / "metrics.csv", rows)
    except Exception as exc:
        man.status = "failed"
        man.failure = {"type": type(exc).__name__, "message": str(exc)}
        state = getattr(exc, "state", None)
        if state is not None:
            write_field_csv(out / "failure_state_u.csv", state.u, state.t)
        man.files = _files(out)
        man.timings["total"] = time.perf_counter() - t0
        man.write(out)
        raise
    man.status = "complete"
    man.files = _files(out)
    man.timings["total"] = time.perf_counter() - t0
    man.write(out)
    return man
