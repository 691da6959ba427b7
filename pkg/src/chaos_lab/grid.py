"""Periodic 2D grid fields and the spectral / particle-mesh operators on them.

Node ``(i, j)`` sits at ``(-L/2 + i*h, -L/2 + j*h)``; axis 0 is ``x`` and axis 1
is ``y``. The origin is therefore node ``(G//2, G//2)``, which is where kernel
tables are centered.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np


class GridError(ValueError):
    """Invalid grid specification or incompatible fields."""


@dataclass(frozen=True)
class GridSpec:
    L: float
    G: int

    def __post_init__(self):
        if self.G < 32 or self.G & (self.G - 1):
            raise GridError(f"G must be a power of two >= 32, got {self.G}")
        if not self.L > 0:
            raise GridError(f"L must be positive, got {self.L}")

    @property
    def h(self) -> float:
        return self.L / self.G

    @property
    def axis(self) -> np.ndarray:
        return -0.5 * self.L + self.h * np.arange(self.G)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.axis, self.axis, indexing="ij")

    def wrap(self, points: np.ndarray) -> np.ndarray:
        """Map positions into ``[-L/2, L/2)``."""
        return np.mod(points + 0.5 * self.L, self.L) - 0.5 * self.L

    def min_image(self, d: np.ndarray) -> np.ndarray:
        return self.wrap(d)


@dataclass(frozen=True, eq=False)
class ScalarField2D:
    spec: GridSpec
    values: np.ndarray

    def __post_init__(self):
        G = self.spec.G
        if self.values.shape != (G, G):
            raise GridError(f"values shape {self.values.shape} != ({G}, {G})")

    def integral(self) -> float:
        return float(self.values.sum() * self.spec.h**2)

    def __add__(self, other: ScalarField2D) -> ScalarField2D:
        _check_same(self, other)
        return ScalarField2D(self.spec, self.values + other.values)

    def __sub__(self, other: ScalarField2D) -> ScalarField2D:
        _check_same(self, other)
        return ScalarField2D(self.spec, self.values - other.values)

    def scaled(self, c: float) -> ScalarField2D:
        return ScalarField2D(self.spec, c * self.values)

    @classmethod
    def zeros(cls, spec: GridSpec) -> ScalarField2D:
        return cls(spec, np.zeros((spec.G, spec.G)))

    @classmethod
    def from_function(cls, spec: GridSpec, fn) -> ScalarField2D:
        X, Y = spec.mesh()
        return cls(spec, np.asarray(fn(X, Y), dtype=float) * np.ones_like(X))


def _check_same(f: ScalarField2D, g: ScalarField2D) -> None:
    if f.spec != g.spec:
        raise GridError(f"grid mismatch: {f.spec} vs {g.spec}")


def delta(spec: GridSpec, index: tuple[int, int] | None = None) -> ScalarField2D:
    """Discrete unit mass at one node (the origin node by default)."""
    f = ScalarField2D.zeros(spec)
    i, j = index if index is not None else (spec.G // 2, spec.G // 2)
    f.values[i, j] = 1.0 / spec.h**2
    return f


@lru_cache(maxsize=16)
def wavenumbers(spec: GridSpec) -> tuple[np.ndarray, np.ndarray]:
    """Angular wavenumbers ``(kx, ky)`` laid out for ``rfft2``."""
    kx = 2 * np.pi * np.fft.fftfreq(spec.G, d=spec.h)
    ky = 2 * np.pi * np.fft.rfftfreq(spec.G, d=spec.h)
    KX, KY = np.meshgrid(kx, ky, indexing="ij")
    KX.setflags(write=False)
    KY.setflags(write=False)
    return KX, KY


def _require_finite(f: ScalarField2D, what: str) -> None:
    if not np.all(np.isfinite(f.values)):
        raise GridError(f"{what} contains non-finite values")


def helmholtz_solve(rhs: ScalarField2D, screening: float = 1.0) -> ScalarField2D:
    """Solve ``(-Δ + screening) v = rhs`` on the torus with the spectral Laplacian.

    ``screening`` is the squared screening mass; the default is the operator
    ``-Δ + 1``.
    """
    _require_finite(rhs, "rhs")
    KX, KY = wavenumbers(rhs.spec)
    vhat = np.fft.rfft2(rhs.values) / (KX**2 + KY**2 + screening)
    return ScalarField2D(rhs.spec, np.fft.irfft2(vhat, s=rhs.values.shape))


def laplacian(f: ScalarField2D) -> ScalarField2D:
    """Spectral Laplacian (the operator inverted by :func:`helmholtz_solve`)."""
    KX, KY = wavenumbers(f.spec)
    fhat = np.fft.rfft2(f.values) * -(KX**2 + KY**2)
    return ScalarField2D(f.spec, np.fft.irfft2(fhat, s=f.values.shape))


def laplacian_fd(values: np.ndarray, h: float) -> np.ndarray:
    """Five-point periodic Laplacian, written as a difference of face fluxes."""
    fx = np.roll(values, -1, axis=0) - values
    fy = np.roll(values, -1, axis=1) - values
    return (fx - np.roll(fx, 1, axis=0) + fy - np.roll(fy, 1, axis=1)) / h**2


def convolve(f: ScalarField2D, k: ScalarField2D) -> ScalarField2D:
    """Periodic convolution ``(f*k)(x) = ∫ f(y) k(x-y) dy`` as an ``h²``-weighted sum.

    Both fields use node coordinates, so ``k`` is read relative to the origin
    node; the result is again a field in node coordinates.
    """
    _check_same(f, k)
    h2 = f.spec.h**2
    shape = f.values.shape
    prod = np.fft.rfft2(f.values) * np.fft.rfft2(np.fft.ifftshift(k.values))
    return ScalarField2D(f.spec, h2 * np.fft.irfft2(prod, s=shape))


def _cic_weights(points: np.ndarray, spec: GridSpec):
    s = (np.asarray(points, dtype=float) + 0.5 * spec.L) / spec.h
    base = np.floor(s)
    frac = s - base
    i0 = base.astype(np.int64) % spec.G
    i1 = (i0 + 1) % spec.G
    return i0, i1, frac


def deposit(
    points: np.ndarray, spec: GridSpec, weights: np.ndarray | None = None
) -> ScalarField2D:
    """Cloud-in-cell deposit of an empirical measure.

    Each point carries mass ``1/N`` (or ``weights[i]``), so the returned field
    integrates to the total mass.
    """
    points = np.atleast_2d(points)
    n = len(points)
    G = spec.G
    if n == 0:
        return ScalarField2D.zeros(spec)
    w = np.full(n, 1.0 / n) if weights is None else np.asarray(weights, dtype=float)
    i0, i1, fr = _cic_weights(points, spec)
    (ix0, iy0), (ix1, iy1), (fx, fy) = i0.T, i1.T, fr.T
    idx = np.concatenate([ix0 * G + iy0, ix1 * G + iy0, ix0 * G + iy1, ix1 * G + iy1])
    wts = np.concatenate(
        [w * (1 - fx) * (1 - fy), w * fx * (1 - fy), w * (1 - fx) * fy, w * fx * fy]
    )
    grid = np.bincount(idx, weights=wts, minlength=G * G).reshape(G, G)
    return ScalarField2D(spec, grid / spec.h**2)


def interpolate(f: ScalarField2D, points: np.ndarray) -> np.ndarray | float:
    """Bilinear interpolation with periodic wrap; accepts one point or an (n, 2) array."""
    pts = np.asarray(points, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    i0, i1, fr = _cic_weights(pts, f.spec)
    (ix0, iy0), (ix1, iy1), (fx, fy) = i0.T, i1.T, fr.T
    v = f.values
    out = (
        v[ix0, iy0] * (1 - fx) * (1 - fy)
        + v[ix1, iy0] * fx * (1 - fy)
        + v[ix0, iy1] * (1 - fx) * fy
        + v[ix1, iy1] * fx * fy
    )
    return float(out[0]) if single else out


def write_field_csv(path: str | Path, f: ScalarField2D, t: float = 0.0) -> None:
    """Snapshot format: header ``# G L t`` then G rows of G values."""
    header = f"{f.spec.G} {f.spec.L!r} {t!r}"
    np.savetxt(path, f.values, delimiter=",", header=header, comments="# ", fmt="%.17g")


def read_field_csv(path: str | Path) -> tuple[ScalarField2D, float]:
    with open(path) as fh:
        G, L, t = fh.readline().lstrip("#").split()
        values = np.loadtxt(fh, delimiter=",", ndmin=2)
    return ScalarField2D(GridSpec(float(L), int(G)), values), float(t)
