"""Explicit solver for the regularized Keller-Segel system on the torus.

    ∂t u = Δ((e^{-v} + 1) u),    (-Δ + μ²) v = χ u * j^ε,    u(0) = u₀ * j^ε

``v`` comes from the spectral Helmholtz solve, ``u`` is advanced with the
five-point Laplacian in flux form, so the discrete mass telescopes exactly.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .grid import ScalarField2D, convolve, helmholtz_solve, laplacian_fd
from .kernel import Mollifier, PotentialKernel, mollifier_field

NEG_FLOOR = -1e-10
CLIP_BUDGET = 1e-9


class PdeError(RuntimeError):
    pass


class StabilityError(PdeError):
    pass


class PdeNumericalError(PdeError):
    """Raised on NaN/Inf or a positivity failure; carries the offending state."""

    def __init__(self, msg: str, state: PdeState):
        super().__init__(msg)
        self.state = state


@dataclass(frozen=True, eq=False)
class PdeState:
    t: float
    u: ScalarField2D
    v: ScalarField2D
    kernel: PotentialKernel
    j: ScalarField2D

    @property
    def eps(self) -> float:
        return self.kernel.eps

    def dt_max(self) -> float:
        return self.u.spec.h**2 / (4.0 * (1.0 + float(np.exp(-self.v.values).max())))


@dataclass(frozen=True)
class Diagnostics:
    t: float
    mass: float
    m2: float
    l2: float
    l4: float
    linf: float
    entropy: float
    grad_log_sup: float
    diffusivity_min: float
    diffusivity_max: float


def signal(u: ScalarField2D, kernel: PotentialKernel, j: ScalarField2D) -> ScalarField2D:
    p = kernel.params
    return helmholtz_solve(convolve(u, j).scaled(p.chi), screening=p.mu**2)


def mollify_initial(u0: ScalarField2D, eps: float, profile: str = "bump") -> ScalarField2D:
    if np.any(u0.values < -1e-12) or u0.integral() <= 0:
        raise PdeError("initial datum must be a nonnegative density with positive mass")
    j = mollifier_field(Mollifier(eps, profile), u0.spec)
    return convolve(u0, j)


def initial_state(u0: ScalarField2D, kernel: PotentialKernel) -> PdeState:
    """Mollify ``u0`` with the kernel's ``j^ε`` and attach the matching signal."""
    j = mollifier_field(kernel.mollifier, u0.spec)
    u = mollify_initial(u0, kernel.eps, kernel.mollifier.profile)
    return PdeState(0.0, u, signal(u, kernel, j), kernel, j)


def _clip(values: np.ndarray, state: PdeState) -> np.ndarray:
    neg = values < 0
    if not neg.any():
        return values
    if values.min() < NEG_FLOOR:
        h2 = state.u.spec.h**2
        lost = -values[neg].sum() * h2
        if lost >= CLIP_BUDGET:
            raise PdeNumericalError(f"negative density mass {lost:.3g} exceeds clip budget", state)
    total = values.sum()
    out = np.where(neg, 0.0, values)
    return out * (total / out.sum())


def step(s: PdeState, dt: float) -> PdeState:
    bound = s.dt_max()
    if dt > bound * (1 + 1e-12):
        raise StabilityError(f"dt={dt:.4g} above explicit bound {bound:.4g}")
    u = s.u.values
    flux = (np.exp(-s.v.values) + 1.0) * u
    new = u + dt * laplacian_fd(flux, s.u.spec.h)
    if not np.all(np.isfinite(new)):
        raise PdeNumericalError(f"non-finite density at t={s.t + dt:.6g}", s)
    new = _clip(new, s)
    un = ScalarField2D(s.u.spec, new)
    return PdeState(s.t + dt, un, signal(un, s.kernel, s.j), s.kernel, s.j)


def _grad_log_sup(u: np.ndarray, h: float, floor: float = 1e-8) -> float:
    ok = u > floor
    nb = ok & np.roll(ok, 1, 0) & np.roll(ok, -1, 0) & np.roll(ok, 1, 1) & np.roll(ok, -1, 1)
    if not nb.any():
        return float("nan")
    lu = np.log(np.where(ok, u, 1.0))
    gx = (np.roll(lu, -1, 0) - np.roll(lu, 1, 0)) / (2 * h)
    gy = (np.roll(lu, -1, 1) - np.roll(lu, 1, 1)) / (2 * h)
    return float(np.hypot(gx, gy)[nb].max())


def diagnostics(s: PdeState) -> Diagnostics:
    spec = s.u.spec
    h2 = spec.h**2
    u = s.u.values
    X, Y = spec.mesh()
    pos = u > 0
    d = np.exp(-s.v.values) + 1.0
    return Diagnostics(
        t=s.t,
        mass=float(u.sum() * h2),
        m2=float(((X**2 + Y**2) * u).sum() * h2),
        l2=float(np.sqrt((u**2).sum() * h2)),
        l4=float(((u**4).sum() * h2) ** 0.25),
        linf=float(np.abs(u).max()),
        entropy=float((u[pos] * np.log(u[pos])).sum() * h2),
        grad_log_sup=_grad_log_sup(u, spec.h),
        diffusivity_min=float(d.min()),
        diffusivity_max=float(d.max()),
    )


def check_snapshot(s: PdeState, diag: Diagnostics) -> None:
    if s.v.values.min() < NEG_FLOOR:
        raise PdeNumericalError(f"signal went negative ({s.v.values.min():.3g})", s)
    if not (diag.diffusivity_min > 1.0 and diag.diffusivity_max <= 2.0 + 1e-10):
        raise PdeNumericalError("diffusivity e^{-v}+1 left (1, 2]", s)


def n_steps(T: float, dt: float) -> int:
    return max(1, math.ceil(T / dt - 1e-9))


def run(s0: PdeState, T: float, dt: float, every: int = 1) -> list[tuple[PdeState, Diagnostics]]:
    """March to ``T`` with steps no larger than ``dt``; snapshot every ``every`` steps.

    ``dt`` is shrunk to ``T / ceil(T/dt)`` so the horizon is hit exactly. The
    final state is always included.
    """
    n = n_steps(T, dt)
    dt = T / n
    out = []
    s = s0
    for k in range(n + 1):
        if k % every == 0 or k == n:
            diag = diagnostics(s)
            check_snapshot(s, diag)
            out.append((s, diag))
        if k < n:
            s = step(s, dt)
    return out


def gradlog_horizon(diags: list[Diagnostics], factor: float = 10.0) -> float | None:
    """First time ``sup|∇log u|`` exceeds ``factor`` times its initial value."""
    ref = diags[0].grad_log_sup
    for d in diags[1:]:
        if d.grad_log_sup > factor * ref:
            return d.t
    return None


DIAG_COLUMNS = ("t", "mass", "m2", "l2", "l4", "linf", "entropy", "grad_log_sup")


def write_diagnostics_csv(path: str | Path, diags: list[Diagnostics]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(DIAG_COLUMNS)
        for d in diags:
            row = asdict(d)
            w.writerow([repr(row[c]) for c in DIAG_COLUMNS])


@dataclass(frozen=True)
class Confinement:
    """How much mass sits at least ``3ε`` inside the periodic seam."""

    interior_mass: float
    chebyshev_bound: float

    @property
    def ok(self) -> bool:
        return self.interior_mass >= 0.999


def confinement(s: PdeState, diag: Diagnostics | None = None) -> Confinement:
    """Direct interior mass plus the Markov bound ``1 - m2/R²`` with ``R = L/2 - 3ε``."""
    spec = s.u.spec
    diag = diag or diagnostics(s)
    R = spec.L / 2 - 3 * s.eps
    X, Y = spec.mesh()
    inside = (np.abs(X) <= R) & (np.abs(Y) <= R)
    interior = float(s.u.values[inside].sum() * spec.h**2)
    bound = 1.0 - diag.m2 / R**2 if R > 0 else float("-inf")
    return Confinement(interior, bound)
