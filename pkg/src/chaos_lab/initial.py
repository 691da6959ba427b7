"""Initial densities ``u₀``: grid evaluation and exact samplers."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import GridSpec, ScalarField2D


@dataclass(frozen=True)
class Gaussian:
    center: tuple[float, float] = (0.0, 0.0)
    sigma: float = 0.5

    def density(self, X, Y):
        cx, cy = self.center
        r2 = (X - cx) ** 2 + (Y - cy) ** 2
        return np.exp(-r2 / (2 * self.sigma**2)) / (2 * np.pi * self.sigma**2)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return np.asarray(self.center) + self.sigma * rng.standard_normal((n, 2))


@dataclass(frozen=True)
class Mixture:
    components: tuple[Gaussian, ...]
    weights: tuple[float, ...] = field(default=())

    def _w(self) -> np.ndarray:
        w = np.ones(len(self.components)) if not self.weights else np.asarray(self.weights, float)
        return w / w.sum()

    def density(self, X, Y):
        return sum(w * c.density(X, Y) for w, c in zip(self._w(), self.components))

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        counts = rng.multinomial(n, self._w())
        pts = [c.sample(k, rng) for c, k in zip(self.components, counts)]
        # interleave so the component label is not tied to particle index
        return np.vstack(pts)[rng.permutation(n)]


@dataclass(frozen=True)
class UniformDisk:
    center: tuple[float, float] = (0.0, 0.0)
    radius: float = 1.0

    def density(self, X, Y):
        cx, cy = self.center
        inside = (X - cx) ** 2 + (Y - cy) ** 2 <= self.radius**2
        return inside / (np.pi * self.radius**2)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        rad = self.radius * np.sqrt(rng.random(n))
        ang = 2 * np.pi * rng.random(n)
        return np.asarray(self.center) + np.column_stack([rad * np.cos(ang), rad * np.sin(ang)])


def on_grid(u0, spec: GridSpec) -> ScalarField2D:
    """Evaluate ``u0`` at the nodes and renormalize to unit grid mass."""
    f = ScalarField2D.from_function(spec, u0.density)
    return f.scaled(1.0 / f.integral())
