"""Interacting particles and their mean-field twins under synchronous coupling.

Both systems are driftless Euler-Maruyama walks on the torus,

    dX_i    = c(S_i) dB_i,           S_i = (1/N) Σ_j Φ^ε(X_i - X_j)
    dXbar_i = c((Φ^ε*u^ε)(Xbar_i)) dB_i,   c(s) = sqrt(2 e^{-s} + 2)

driven by the same increments, so ``X - Xbar`` only feels the mismatch of the
diffusion coefficients.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import pde
from .grid import GridSpec, ScalarField2D, convolve, deposit, interpolate
from .kernel import PotentialKernel

SQRT2 = math.sqrt(2.0)


class ParticleError(RuntimeError):
    pass


class SynchronizationError(ParticleError):
    pass


class InteractionToleranceError(ParticleError):
    pass


def diffusion_coeff(s):
    s = np.asarray(s, dtype=float)
    if np.any(s < 0):
        raise ParticleError("negative interaction value; kernel positivity violated upstream")
    c = np.sqrt(2.0 * np.exp(-s) + 2.0)
    return c if c.ndim else float(c)


def noise_block(seed: int, step: int, n: int, dt: float) -> np.ndarray:
    """Brownian increments for one step, reproducible from ``(seed, step)``."""
    rng = np.random.default_rng([seed, step])
    return math.sqrt(dt) * rng.standard_normal((n, 2))


def interaction_exact(positions: np.ndarray, kernel: PotentialKernel, chunk: int = 256) -> np.ndarray:
    """``S_i = (1/N) Σ_j Φ^ε(X_i - X_j)`` over all ``j`` including ``j = i``."""
    X = np.atleast_2d(positions)
    n = len(X)
    out = np.empty(n)
    for a in range(0, n, chunk):
        d = kernel.spec.min_image(X[a:a + chunk, None, :] - X[None, :, :])
        vals = kernel(d.reshape(-1, 2)).reshape(-1, n)
        out[a:a + chunk] = vals.sum(axis=1) / n
    return out


def _self_smoothing(X: np.ndarray, kernel: PotentialKernel) -> np.ndarray:
    """What deposit→convolve→interpolate returns for a particle's own charge (times N)."""
    spec = kernel.spec
    s = (X + 0.5 * spec.L) / spec.h
    f = s - np.floor(s)
    wx = np.column_stack([1 - f[:, 0], f[:, 0]])
    wy = np.column_stack([1 - f[:, 1], f[:, 1]])
    c = spec.G // 2
    T = kernel.table.values[c - 1:c + 2, c - 1:c + 2]
    out = np.zeros(len(X))
    for a in range(2):
        for b in range(2):
            for p in range(2):
                for q in range(2):
                    out += wx[:, a] * wy[:, b] * wx[:, p] * wy[:, q] * T[1 + p - a, 1 + q - b]
    return out


def interaction_fast(
    positions: np.ndarray,
    kernel: PotentialKernel,
    validate: bool = False,
    rtol: float = 1e-3,
) -> np.ndarray:
    """Particle-mesh version of :func:`interaction_exact`.

    CIC deposit, periodic convolution with the ``Φ^ε`` table and CIC readback;
    the grid-smoothed self term is swapped for the exact ``Φ^ε(0)/N``.
    """
    X = np.atleast_2d(positions)
    n = len(X)
    rho = deposit(X, kernel.spec)
    field_ = convolve(rho, kernel.table)
    S = interpolate(field_, X) + (kernel.origin_value - _self_smoothing(X, kernel)) / n
    if validate:
        err = np.abs(S - interaction_exact(X, kernel)).max()
        tol = rtol * np.abs(kernel.table.values).max()
        if err > tol:
            raise InteractionToleranceError(f"fast interaction error {err:.3g} > {tol:.3g}")
    return S


@dataclass(frozen=True, eq=False)
class MeanFieldTrack:
    """``Φ^ε * u^ε`` on the grid at the PDE output times."""

    times: np.ndarray
    fields: tuple[ScalarField2D, ...]
    dt: float
    stride: int

    def at(self, t: float) -> ScalarField2D:
        k = int(np.searchsorted(self.times, t + 1e-9 * self.dt, side="right")) - 1
        if k < 0:
            raise SynchronizationError(f"no mean-field data before t={t}")
        return self.fields[k]


def mean_field_track(s0: pde.PdeState, T: float, dt: float, stride: int = 10) -> MeanFieldTrack:
    traj = pde.run(s0, T, dt, every=stride)
    n = pde.n_steps(T, dt)
    fields = tuple(convolve(s.u, s.kernel.table) for s, _ in traj)
    return MeanFieldTrack(np.array([d.t for _, d in traj]), fields, T / n, stride)


def default_dt(eps: float, spec: GridSpec) -> float:
    return min(eps**2 / 10, spec.h**2 / 8)


@dataclass
class CoupledEnsemble:
    X: np.ndarray
    Xbar: np.ndarray
    alpha: float
    seed: int
    spec: GridSpec
    t: float = 0.0
    steps: int = 0
    tau_hit: float | None = None
    running_max: float = 0.0
    max_dev_path: list[float] = field(default_factory=list)

    @property
    def N(self) -> int:
        return len(self.X)

    @property
    def threshold(self) -> float:
        return self.N ** (-self.alpha)

    def deviation(self) -> np.ndarray:
        return np.linalg.norm(self.spec.min_image(self.X - self.Xbar), axis=1)

    @classmethod
    def start(cls, zeta: np.ndarray, alpha: float, seed: int, spec: GridSpec) -> CoupledEnsemble:
        zeta = spec.wrap(np.asarray(zeta, dtype=float))
        return cls(zeta.copy(), zeta.copy(), alpha, seed, spec)


def coupled_step(
    E: CoupledEnsemble,
    conv: ScalarField2D,
    kernel: PotentialKernel,
    dt: float,
    dW: np.ndarray | None = None,
    conv_time: float | None = None,
    method: str = "fast",
) -> CoupledEnsemble:
    """One synchronous Euler-Maruyama step, in place; returns ``E``.

    ``conv`` is ``Φ^ε * u^ε`` valid at ``conv_time`` (checked against ``E.t``
    when given). ``dW`` defaults to the ensemble's noise block for this step.
    """
    if conv_time is not None and abs(conv_time - E.t) > 1e-9 * max(1.0, E.t) + 1e-12:
        raise SynchronizationError(f"mean-field field at t={conv_time} but ensemble at t={E.t}")
    if dW is None:
        dW = noise_block(E.seed, E.steps, E.N, dt)
    inter = interaction_exact if method == "exact" else interaction_fast
    c_int = diffusion_coeff(inter(E.X, kernel))
    c_mf = diffusion_coeff(interpolate(conv, E.Xbar))
    E.X = E.spec.wrap(E.X + c_int[:, None] * dW)
    E.Xbar = E.spec.wrap(E.Xbar + c_mf[:, None] * dW)
    E.t += dt
    E.steps += 1
    dev = float(E.deviation().max())
    E.running_max = max(E.running_max, dev)
    if E.tau_hit is None and E.running_max >= E.threshold:
        E.tau_hit = E.t
    return E


@dataclass(frozen=True, eq=False)
class TrialRecord:
    N: int
    eps: float
    alpha: float
    T: float
    seed: int
    k: int
    t: np.ndarray
    max_dev: np.ndarray
    S_alpha_k: np.ndarray
    tau_hit: float | None
    sup_dev: float
    X_final: np.ndarray = field(repr=False)
    Xbar_final: np.ndarray = field(repr=False)

    @property
    def tau_hit_flag(self) -> np.ndarray:
        if self.tau_hit is None:
            return np.zeros(len(self.t), dtype=bool)
        return self.t >= self.tau_hit - 1e-12

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "max_dev", "S_alpha_k", "tau_hit_flag"])
            for row in zip(self.t, self.max_dev, self.S_alpha_k, self.tau_hit_flag):
                w.writerow([repr(float(row[0])), repr(float(row[1])), repr(float(row[2])), int(row[3])])


def write_ensemble_csv(path: str | Path, X: np.ndarray, Xbar: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["i", "x", "y", "xbar_x", "xbar_y"])
        for i, (a, b) in enumerate(zip(X, Xbar)):
            w.writerow([i, repr(a[0]), repr(a[1]), repr(b[0]), repr(b[1])])


def stopped_statistic(E: CoupledEnsemble, k: int) -> float:
    """``(N^α max_i |X_i - Xbar_i|(t∧τ))^k``; equals 1 once τ has been reached."""
    if E.tau_hit is not None:
        return 1.0
    return float((E.N**E.alpha * E.deviation().max()) ** k)


@dataclass(frozen=True)
class RunConfig:
    N: int
    alpha: float
    T: float
    seed: int
    k: int = 2
    method: str = "fast"


def coupled_run(cfg: RunConfig, zeta: np.ndarray, kernel: PotentialKernel, track: MeanFieldTrack) -> TrialRecord:
    """Evolve a coupled ensemble from ``zeta`` to ``cfg.T`` on the track's time grid.

    Deviation and ``S_α^k`` are recorded at every ``track.stride`` steps, τ_α is
    checked every step.
    """
    if len(zeta) != cfg.N:
        raise ParticleError(f"got {len(zeta)} initial positions for N={cfg.N}")
    n = pde.n_steps(cfg.T, track.dt)
    if abs(n * track.dt - cfg.T) > 1e-9 * cfg.T or track.times[-1] < cfg.T - 1e-9:
        raise SynchronizationError("mean-field track does not cover the run horizon")
    E = CoupledEnsemble.start(zeta, cfg.alpha, cfg.seed, kernel.spec)
    ts, devs, stats = [0.0], [0.0], [stopped_statistic(E, cfg.k)]
    for step in range(n):
        seg = step // track.stride
        coupled_step(E, track.fields[seg], kernel, track.dt, conv_time=track.times[seg] if step % track.stride == 0 else None, method=cfg.method)
        if (step + 1) % track.stride == 0 or step + 1 == n:
            ts.append(E.t)
            devs.append(float(E.deviation().max()))
            stats.append(stopped_statistic(E, cfg.k))
            E.max_dev_path.append(E.running_max)
    return TrialRecord(
        N=cfg.N, eps=kernel.eps, alpha=cfg.alpha, T=cfg.T, seed=cfg.seed, k=cfg.k,
        t=np.array(ts), max_dev=np.array(devs), S_alpha_k=np.array(stats),
        tau_hit=E.tau_hit, sup_dev=E.running_max, X_final=E.X.copy(), Xbar_final=E.Xbar.copy(),
    )
