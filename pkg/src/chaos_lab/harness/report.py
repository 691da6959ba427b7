"""Log-log regression tables over N from a finished run."""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import stats

from ..metrics import read_metrics_csv
from .runner import RunManifest


class ReportError(RuntimeError):
    pass


@dataclass(frozen=True)
class PowerLawFit:
    statistic: str
    n_points: int
    slope: float
    intercept: float
    r2: float
    slope_ci_lo: float
    slope_ci_hi: float
    note: str = ""


def fit_power_law(N, values, ci_lo=None, ci_hi=None, name: str = "", seed: int = 0,
                  n_boot: int = 2000) -> PowerLawFit:
    """Least-squares fit of ``log value = slope·log N + intercept``.

    The slope CI is a parametric bootstrap: each point is redrawn from a
    normal whose width matches its own 95% interval, then refitted.
    """
    N = np.asarray(N, float)
    y = np.asarray(values, float)
    keep = (y > 0) & (N > 0)
    if keep.sum() < 2 or len(np.unique(N[keep])) < 2:
        nan = float("nan")
        return PowerLawFit(name, int(keep.sum()), nan, nan, nan, nan, nan, "insufficient points")
    x, ly = np.log(N[keep]), np.log(y[keep])
    res = stats.linregress(x, ly)
    lo_ci, hi_ci = res.slope, res.slope
    if ci_lo is not None and ci_hi is not None:
        lo = np.asarray(ci_lo, float)[keep]
        hi = np.asarray(ci_hi, float)[keep]
        sd = np.where((lo > 0) & (hi > lo), (np.log(np.maximum(hi, 1e-300)) - np.log(np.maximum(lo, 1e-300))) / (2 * 1.96), 0.0)
        rng = np.random.default_rng(seed)
        draws = ly[None, :] + sd[None, :] * rng.standard_normal((n_boot, len(ly)))
        xc = x - x.mean()
        slopes = (draws - draws.mean(axis=1, keepdims=True)) @ xc / (xc @ xc)
        lo_ci, hi_ci = np.percentile(slopes, [2.5, 97.5])
    r2 = res.rvalue**2 if keep.sum() > 2 else 1.0
    return PowerLawFit(name, int(keep.sum()), float(res.slope), float(res.intercept), float(r2),
                       float(lo_ci), float(hi_ci))


def report(manifest: RunManifest | str | Path, run_dir: str | Path | None = None) -> list[PowerLawFit]:
    """Write ``summary.csv`` (one fit per statistic) and ``plot_data.csv``."""
    if not isinstance(manifest, RunManifest):
        run_dir = Path(manifest) if Path(manifest).is_dir() else Path(manifest).parent
        manifest = RunManifest.load(manifest)
    run_dir = Path(run_dir or ".")
    if not manifest.files:
        raise ReportError("manifest lists no files")
    missing = [f["path"] for f in manifest.files if not (run_dir / f["path"]).exists()]
    if missing:
        raise ReportError("missing files: " + ", ".join(missing))
    if not any(f["path"] == "metrics.csv" for f in manifest.files):
        raise ReportError("run produced no metrics.csv to report on")
    rows = read_metrics_csv(run_dir / "metrics.csv")
    if not rows:
        raise ReportError("metrics.csv is empty")

    groups = defaultdict(list)
    for r in rows:
        groups[r["statistic_name"]].append(r)
    fits = []
    for name, rs in groups.items():
        rs = sorted(rs, key=lambda r: int(r["N"]))
        fits.append(fit_power_law(
            [int(r["N"]) for r in rs], [float(r["value"]) for r in rs],
            [float(r["ci_lo"]) for r in rs], [float(r["ci_hi"]) for r in rs], name=name))

    with open(run_dir / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["statistic", "n_points", "slope", "intercept", "r2", "slope_ci_lo", "slope_ci_hi", "note"])
        for f in fits:
            w.writerow([f.statistic, f.n_points, *(_fmt(v) for v in (f.slope, f.intercept, f.r2, f.slope_ci_lo, f.slope_ci_hi)), f.note])
    with open(run_dir / "plot_data.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["statistic", "N", "log_N", "value", "log_value", "ci_lo", "ci_hi"])
        for name, rs in groups.items():
            for r in sorted(rs, key=lambda r: int(r["N"])):
                v = float(r["value"])
                w.writerow([name, r["N"], _fmt(math.log(int(r["N"]))), r["value"],
                            _fmt(math.log(v)) if v > 0 else "", r["ci_lo"], r["ci_hi"]])
    return fits


def _fmt(v: float) -> str:
    return "" if math.isnan(v) else repr(float(v))
