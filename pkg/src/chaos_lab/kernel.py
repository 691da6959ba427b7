"""Yukawa potential, radial mollifier and the tabulated mollified interaction.

The interaction kernel is ``Φ^ε = χ (Φ̃ * j^ε)`` where ``Φ̃`` is the 2D Yukawa
potential (Green's function of ``-Δ + μ²``). On the periodic grid the
convolution is computed spectrally, so the table is the torus version of
``Φ^ε``; :attr:`PotentialKernel.truncated` records whether the box is too small
for that to coincide with the whole-plane kernel.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy import integrate

from .grid import GridSpec, ScalarField2D, interpolate, wavenumbers

log = logging.getLogger(__name__)

TRUNCATION_TOL = 1e-8


class KernelError(ValueError):
    pass


class KernelResolutionError(KernelError):
    """Grid spacing too coarse to resolve the mollifier."""


class KernelTruncationError(KernelError):
    """Box too small for the periodic kernel to match the whole-plane one."""


@dataclass(frozen=True)
class YukawaParams:
    mu: float = 1.0
    chi: float = 0.5

    def __post_init__(self):
        if not self.mu > 0:
            raise KernelError(f"mu must be > 0, got {self.mu}")
        if not self.chi >= 0:
            raise KernelError(f"chi must be >= 0, got {self.chi}")


def yukawa_eval(r, p: YukawaParams, nodes: int = 801):
    """``χ Φ̃(r)`` with ``Φ̃(r) = ∫₀^∞ (4πt)⁻¹ exp(-r²/4t - μ²t) dt``.

    With ``t = e^s`` the integrand becomes ``exp(-r²e^{-s}/4 - μ²e^s)/4π``,
    which decays double-exponentially on both sides of its peak at
    ``e^s = r/2μ``; the trapezoid rule on a window around the peak converges
    geometrically.
    """
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise KernelError("yukawa_eval requires r > 0 (log singularity at the origin)")
    rr = r.reshape(-1)[:, None]
    a = rr * p.mu
    # exponent at offset u from the peak is -a*cosh(u); cut where it has dropped by 60
    half = np.arccosh(1.0 + 60.0 / a)
    u = np.linspace(-1.0, 1.0, nodes)[None, :] * half
    s = np.log(rr / (2 * p.mu)) + u
    t = np.exp(s)
    g = np.exp(-(rr**2) / (4 * t) - p.mu**2 * t) / (4 * np.pi)
    val = p.chi * integrate.trapezoid(g, s, axis=1)
    return val.reshape(r.shape) if r.ndim else float(val[0])


def _bump(r):
    out = np.zeros_like(r, dtype=float)
    inside = r < 1
    out[inside] = np.exp(-1.0 / (1.0 - r[inside] ** 2))
    return out


PROFILES = {"bump": _bump}


@lru_cache(maxsize=None)
def _profile_mass(profile: str) -> float:
    shape = PROFILES[profile]
    val, _ = integrate.quad(lambda r: 2 * np.pi * r * shape(np.array([r]))[0], 0, 1,
                            epsabs=0, epsrel=1e-13, limit=200)
    return val


@dataclass(frozen=True)
class Mollifier:
    eps: float
    profile: str = "bump"

    def __post_init__(self):
        if not 0 < self.eps < 1:
            raise KernelError(f"eps must lie in (0, 1), got {self.eps}")
        if self.profile not in PROFILES:
            raise KernelError(f"unknown mollifier profile {self.profile!r}")


def mollifier_eval(x, m: Mollifier):
    """Pointwise ``j^ε(x) = ε⁻² j(x/ε)`` with ``j`` normalized to unit mass."""
    x = np.asarray(x, dtype=float)
    r = np.linalg.norm(x, axis=-1) / m.eps
    val = PROFILES[m.profile](np.atleast_1d(r)) / (_profile_mass(m.profile) * m.eps**2)
    return val.reshape(r.shape) if r.ndim else float(val[0])


def mollifier_field(m: Mollifier, spec: GridSpec) -> ScalarField2D:
    """``j^ε`` sampled at the nodes around the origin, renormalized to unit grid mass."""
    X, Y = spec.mesh()
    vals = mollifier_eval(np.stack([X, Y], axis=-1), m)
    vals /= vals.sum() * spec.h**2
    return ScalarField2D(spec, vals)


def sample_mollifier(m: Mollifier, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``n`` points from ``j^ε`` by rejection from the uniform disk."""
    out = np.empty((0, 2))
    peak = PROFILES[m.profile](np.zeros(1))[0]
    while len(out) < n:
        k = 2 * (n - len(out)) + 16
        rad = np.sqrt(rng.random(k))
        ang = 2 * np.pi * rng.random(k)
        keep = rng.random(k) * peak < PROFILES[m.profile](rad)
        pts = np.column_stack([rad * np.cos(ang), rad * np.sin(ang)])[keep]
        out = np.vstack([out, pts])
    return m.eps * out[:n]


@dataclass(frozen=True, eq=False)
class PotentialKernel:
    params: YukawaParams
    mollifier: Mollifier
    spec: GridSpec
    table: ScalarField2D
    grad_table: tuple[ScalarField2D, ScalarField2D]
    truncated: bool
    boundary_value: float
    spectrum: np.ndarray = field(repr=False)

    @property
    def eps(self) -> float:
        return self.mollifier.eps

    @property
    def origin_value(self) -> float:
        G = self.spec.G
        return float(self.table.values[G // 2, G // 2])

    def __call__(self, d: np.ndarray):
        """Bilinear lookup of ``Φ^ε`` at displacement(s) ``d`` (periodic)."""
        return interpolate(self.table, d)

    def psi(self, which: str) -> ScalarField2D:
        """Tables usable as test kernels: phi, grad_x, grad_y, grad_abs."""
        gx, gy = self.grad_table
        if which == "phi":
            return self.table
        if which == "grad_x":
            return gx
        if which == "grad_y":
            return gy
        if which == "grad_abs":
            return ScalarField2D(self.spec, np.hypot(gx.values, gy.values))
        raise KernelError(f"unknown kernel table {which!r}")


def _from_spectrum(spec: GridSpec, coeffs: np.ndarray) -> ScalarField2D:
    vals = np.fft.irfft2(coeffs, s=(spec.G, spec.G))
    return ScalarField2D(spec, np.fft.fftshift(vals))


def _odd_safe(spec: GridSpec):
    """Wavenumbers with the Nyquist entries zeroed (odd derivatives)."""
    KX, KY = wavenumbers(spec)
    KX, KY = KX.copy(), KY.copy()
    KX[spec.G // 2, :] = 0.0
    KY[:, -1] = 0.0
    return KX, KY


def build_kernel(p: YukawaParams, m: Mollifier, g: GridSpec, strict: bool = False) -> PotentialKernel:
    """Tabulate ``Φ^ε`` and its gradient on ``g``.

    Raises :class:`KernelResolutionError` when ``h > ε/4``. A box shorter than
    ``8/μ`` or with ``Φ̃(L/2) > 1e-8`` marks the kernel as truncated; with
    ``strict=True`` that is an error instead.
    """
    if g.h > m.eps / 4 * (1 + 1e-12):
        raise KernelResolutionError(f"h={g.h:.4g} exceeds eps/4={m.eps / 4:.4g}")
    boundary = yukawa_eval(0.5 * g.L, YukawaParams(mu=p.mu, chi=1.0))
    truncated = bool(boundary > TRUNCATION_TOL or g.L < 8.0 / p.mu)
    if truncated:
        msg = f"box L={g.L} truncates the Yukawa tail (Φ̃(L/2)={boundary:.3g}, 8/μ={8 / p.mu:.3g})"
        if strict:
            raise KernelTruncationError(msg)
        log.debug(msg)

    j = mollifier_field(m, g)
    KX, KY = wavenumbers(g)
    jhat = np.fft.rfft2(np.fft.ifftshift(j.values))
    phat = p.chi * jhat / (KX**2 + KY**2 + p.mu**2)
    OX, OY = _odd_safe(g)
    table = _from_spectrum(g, phat)
    grad = (_from_spectrum(g, 1j * OX * phat), _from_spectrum(g, 1j * OY * phat))
    phat.setflags(write=False)
    return PotentialKernel(p, m, g, table, grad, truncated, float(boundary), phat)


@dataclass(frozen=True)
class KernelNorms:
    eps: float
    sup_phi: float
    sup_grad: float
    sup_hess: float
    l1_phi: float
    l1_grad: float

    @property
    def w11(self) -> float:
        return self.l1_phi + self.l1_grad

    @property
    def w1inf(self) -> float:
        return self.sup_phi + self.sup_grad

    def scaled(self) -> dict[str, float]:
        """The ε-weighted sup norms that should stay bounded as ε shrinks."""
        e = self.eps
        return {
            "sup_phi_eps2": self.sup_phi * e**2,
            "sup_grad_eps2": self.sup_grad * e**2,
            "sup_hess_eps3": self.sup_hess * e**3,
        }


def norm_report(k: PotentialKernel) -> KernelNorms:
    g = k.spec
    h2 = g.h**2
    KX, KY = wavenumbers(g)
    phat = k.spectrum
    hess = [_from_spectrum(g, -A * B * phat).values for A, B in ((KX, KX), (KX, KY), (KY, KY))]
    gx, gy = (t.values for t in k.grad_table)
    grad_abs = np.hypot(gx, gy)
    return KernelNorms(
        eps=k.eps,
        sup_phi=float(np.abs(k.table.values).max()),
        sup_grad=float(grad_abs.max()),
        sup_hess=float(max(np.abs(H).max() for H in hess)),
        l1_phi=float(np.abs(k.table.values).sum() * h2),
        l1_grad=float(grad_abs.sum() * h2),
    )


def export_csv(k: PotentialKernel, path: str | Path) -> None:
    X, Y = k.spec.mesh()
    gx, gy = k.grad_table
    cols = [X, Y, k.table.values, gx.values, gy.values]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "phi", "dphi_dx", "dphi_dy"])
        w.writerows(np.column_stack([c.ravel() for c in cols]).tolist())
