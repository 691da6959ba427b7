"""Estimators for the quantities the propagation-of-chaos bounds control."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import stats

from .grid import GridSpec, ScalarField2D, convolve, deposit, interpolate
from .particles import TrialRecord


class MetricsError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class LlnStat:
    psi_id: str
    hbar: np.ndarray
    theta: float
    in_B: bool

    @property
    def N(self) -> int:
        return len(self.hbar)


def lln_statistic(
    Xbar: np.ndarray,
    psi: ScalarField2D,
    u_eps: ScalarField2D,
    theta: float,
    psi_id: str = "phi",
    chunk: int = 256,
) -> LlnStat:
    """``hbar_i = (1/N) Σ_j [ψ(X_i - X_j) - (ψ*u)(X_i)]`` and the deviation event.

    ``in_B`` is true when some ``|hbar_i|`` exceeds ``N^{-θ}``.
    """
    X = np.atleast_2d(Xbar)
    n = len(X)
    spec = psi.spec
    mean_field = interpolate(convolve(u_eps, psi), X)
    pair = np.empty(n)
    for a in range(0, n, chunk):
        d = spec.min_image(X[a:a + chunk, None, :] - X[None, :, :])
        pair[a:a + chunk] = interpolate(psi, d.reshape(-1, 2)).reshape(-1, n).mean(axis=1)
    hbar = pair - mean_field
    return LlnStat(psi_id, hbar, theta, bool(np.any(np.abs(hbar) > n ** (-theta))))


@dataclass(frozen=True)
class Estimate:
    value: float
    ci_lo: float
    ci_hi: float
    n: int


def bootstrap_mean(x: np.ndarray, seed: int = 0, level: float = 0.95) -> Estimate:
    x = np.asarray(x, dtype=float)
    mean = float(x.mean())
    if np.all(x == x[0]):
        return Estimate(mean, mean, mean, len(x))
    res = stats.bootstrap((x,), np.mean, confidence_level=level, n_resamples=2000,
                          method="percentile", rng=np.random.default_rng(seed))
    ci = res.confidence_interval
    return Estimate(mean, float(ci.low), float(ci.high), len(x))


def lln_moment(replicas: Sequence[LlnStat], m: int, seed: int = 0) -> Estimate:
    """Replica mean of ``|hbar_1|^{2m}`` with a percentile-bootstrap CI."""
    if len(replicas) < 50:
        raise MetricsError(f"need >= 50 replicas, got {len(replicas)}")
    sizes = {r.N for r in replicas}
    if len(sizes) != 1:
        raise MetricsError(f"replicas mix particle counts {sorted(sizes)}")
    vals = np.array([abs(r.hbar[0]) ** (2 * m) for r in replicas])
    return bootstrap_mean(vals, seed=seed)


def wilson_interval(k: int, n: int, level: float = 0.95) -> tuple[float, float]:
    ci = stats.binomtest(k, n).proportion_ci(confidence_level=level, method="wilson")
    return float(ci.low), float(ci.high)


def deviation_probability(
    trials: Sequence[TrialRecord], alpha: float, t: float, threshold: float | None = None
) -> Estimate:
    """Fraction of replicas with ``max_i |X_i - Xbar_i|(t) > N^{-α}`` plus a Wilson CI."""
    if not trials:
        raise MetricsError("no trials")
    keys = {(r.N, r.eps, r.alpha, r.T) for r in trials}
    if len(keys) != 1:
        raise MetricsError(f"trials mix configurations: {sorted(keys)}")
    N, _, a, _ = keys.pop()
    if not math.isclose(a, alpha):
        raise MetricsError(f"trials were run with alpha={a}, asked for {alpha}")
    thr = N ** (-alpha) if threshold is None else threshold
    hits = 0
    for r in trials:
        idx = int(np.argmin(np.abs(r.t - t)))
        if abs(r.t[idx] - t) > 1e-9 * max(1.0, t) + 1e-12:
            raise MetricsError(f"time {t} not among recorded output times")
        hits += bool(r.max_dev[idx] > thr)
    lo, hi = wilson_interval(hits, len(trials))
    return Estimate(hits / len(trials), lo, hi, len(trials))


def silverman_bandwidth(points: np.ndarray, spec: GridSpec) -> float:
    """Silverman's rule for a 2D Gaussian kernel, clamped to ``[h, 10h]``."""
    pts = np.atleast_2d(points)
    sigma = float(np.mean(np.std(pts, axis=0, ddof=1))) if len(pts) > 1 else spec.h
    bw = sigma * len(pts) ** (-1.0 / 6.0)
    return float(np.clip(bw, spec.h, 10 * spec.h))


def gaussian_field(spec: GridSpec, bandwidth: float) -> ScalarField2D:
    X, Y = spec.mesh()
    g = np.exp(-(X**2 + Y**2) / (2 * bandwidth**2))
    return ScalarField2D(spec, g / (g.sum() * spec.h**2))


def kde(points: np.ndarray, bandwidth: float, spec: GridSpec) -> ScalarField2D:
    """Gaussian KDE on the grid: CIC deposit convolved with a grid-normalized Gaussian."""
    if bandwidth < spec.h * (1 - 1e-12):
        raise MetricsError(f"bandwidth {bandwidth:.4g} below grid spacing {spec.h:.4g}")
    f = convolve(deposit(spec.wrap(np.atleast_2d(points)), spec), gaussian_field(spec, bandwidth))
    vals = np.maximum(f.values, 0.0)
    return ScalarField2D(spec, vals / (vals.sum() * spec.h**2))


def _same_grid(f: ScalarField2D, g: ScalarField2D) -> None:
    if f.spec != g.spec:
        raise MetricsError(f"grid mismatch: {f.spec} vs {g.spec}")


def l1_distance(f: ScalarField2D, g: ScalarField2D) -> float:
    _same_grid(f, g)
    return float(np.abs(f.values - g.values).sum() * f.spec.h**2)


SUPPORT_FLOOR = 1e-12
EXCLUDED_MAX = 1e-3


def relative_entropy(f: ScalarField2D, g: ScalarField2D) -> tuple[float, float]:
    """``H(f|g) = ∫ f log(f/g)`` over the joint support.

    Returns ``(H, excluded_mass)`` where ``excluded_mass`` is the part of ``f``
    sitting where ``g`` is numerically zero.
    """
    _same_grid(f, g)
    h2 = f.spec.h**2
    fv, gv = f.values, g.values
    live = fv > SUPPORT_FLOOR
    ok = live & (gv > SUPPORT_FLOOR)
    excluded = float(fv[live & ~ok].sum() * h2)
    if excluded > EXCLUDED_MAX:
        raise MetricsError(f"f has mass {excluded:.3g} where g vanishes")
    H = float((fv[ok] * np.log(fv[ok] / gv[ok])).sum() * h2)
    return H, excluded


@dataclass(frozen=True)
class DistanceReport:
    l1: float
    rel_entropy: float
    ckp_lhs: float
    ckp_rhs: float
    bandwidth: float | None = None
    excluded_mass: float = 0.0

    @property
    def violated(self) -> bool:
        return self.ckp_lhs > self.ckp_rhs + 1e-12


def ckp_check(f: ScalarField2D, g: ScalarField2D, bandwidth: float | None = None) -> DistanceReport:
    """Compare ``‖f-g‖₁`` with ``sqrt(2 H(f|g))`` (Pinsker's form)."""
    l1 = l1_distance(f, g)
    H, excl = relative_entropy(f, g)
    return DistanceReport(l1, H, l1, math.sqrt(2 * max(H, 0.0)), bandwidth, excl)


def marginal_distance(points: np.ndarray, u_eps: ScalarField2D, bandwidth: float | None = None) -> DistanceReport:
    """One-particle marginal (pooled positions) vs the PDE density."""
    spec = u_eps.spec
    bw = silverman_bandwidth(points, spec) if bandwidth is None else bandwidth
    return ckp_check(kde(points, bw, spec), u_eps, bandwidth=bw)


METRIC_COLUMNS = ("N", "eps", "alpha", "theta", "m", "statistic_name", "value", "ci_lo", "ci_hi", "n_replicas")


def write_metrics_csv(path: str | Path, rows: Sequence[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=METRIC_COLUMNS)
        w.writeheader()
        for r in rows:
            w.writerow({c: r.get(c, "") for c in METRIC_COLUMNS})


def read_metrics_csv(path: str | Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
