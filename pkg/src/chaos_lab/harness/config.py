"""Experiment configuration: strict JSON schema, hashing and validation.

All quantities are nondimensional; field names carry the symbol or the unit
(``_steps``, ``_G``) where one exists. Unknown keys are rejected.
"""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path
from typing import Annotated, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from ..grid import GridSpec
from ..initial import Gaussian, Mixture, UniformDisk

MODES = ("pde", "coupling", "lln", "regime", "sweep")


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending entry."""

    def __init__(self, msg: str, field: str = ""):
        super().__init__(f"{field}: {msg}" if field else msg)
        self.field = field


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class Physical(_Strict):
    chi: float = Field(0.5, ge=0)
    mu: float = Field(1.0, gt=0)


class RegimeBlock(_Strict):
    theta: float = 0.3
    alpha: float = 0.1
    m: int = 4
    N: list[int] = Field(default_factory=lambda: [256], min_length=1)
    which: Literal[1, 2] = 1
    gamma: Optional[float] = None
    eta: Optional[float] = None


class GridBlock(_Strict):
    box_length_L: float = Field(16.0, gt=0)
    nodes_per_side_G: int = 128

    def spec(self) -> GridSpec:
        return GridSpec(self.box_length_L, self.nodes_per_side_G)


class TimeBlock(_Strict):
    horizon_T: float = Field(0.25, gt=0)
    dt: Optional[float] = Field(None, gt=0)
    stride_steps: int = Field(10, ge=1, le=10)


class GaussianInit(_Strict):
    kind: Literal["gaussian"] = "gaussian"
    center: tuple[float, float] = (0.0, 0.0)
    sigma: float = Field(0.5, gt=0)

    def build(self):
        return Gaussian(self.center, self.sigma)


class MixtureInit(_Strict):
    kind: Literal["mixture"]
    components: list[GaussianInit] = Field(min_length=1)
    weights: list[float] = Field(default_factory=list)

    def build(self):
        return Mixture(tuple(c.build() for c in self.components), tuple(self.weights))


class DiskInit(_Strict):
    kind: Literal["uniform_disk"]
    center: tuple[float, float] = (0.0, 0.0)
    radius: float = Field(1.0, gt=0)

    def build(self):
        return UniformDisk(self.center, self.radius)


InitialBlock = Annotated[Union[GaussianInit, MixtureInit, DiskInit], Field(discriminator="kind")]


class LlnBlock(_Strict):
    theta: float = Field(0.3, gt=0, lt=0.5)
    moments: list[int] = Field(default_factory=lambda: [1, 2])
    psi: Literal["phi", "grad_x", "grad_y", "grad_abs"] = "phi"


class ExperimentConfig(_Strict):
    mode: Literal["pde", "coupling", "lln", "regime", "sweep"]
    physical: Physical = Physical()
    regime: RegimeBlock = RegimeBlock()
    eps: Optional[float] = Field(None, gt=0, lt=1)
    grid: GridBlock = GridBlock()
    time: TimeBlock = TimeBlock()
    replicas: int = Field(100, ge=1)
    seed: int = Field(0, ge=0)
    initial: InitialBlock = GaussianInit()
    lln: LlnBlock = LlnBlock()
    interaction: Literal["fast", "exact"] = "fast"
    kde_bandwidth: Optional[float] = Field(None, gt=0)
    snapshot_every_strides: int = Field(0, ge=0)
    output_dir: str = "runs/default"
    threads: Optional[int] = Field(None, ge=1)

    @model_validator(mode="after")
    def _grid_ok(self):
        GridSpec(self.grid.box_length_L, self.grid.nodes_per_side_G)
        if self.mode == "coupling" and len(self.regime.N) != 1:
            raise ValueError("coupling mode runs a single N; use sweep for several")
        return self

    def hash(self) -> str:
        """SHA-256 of the canonical JSON, ignoring where and how fast it runs."""
        body = self.model_dump(mode="json", exclude={"output_dir", "threads"})
        blob = json.dumps(body, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def to_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), indent=2, sort_keys=True)

    def workers(self) -> int:
        env = os.environ.get("CHAOS_LAB_THREADS")
        n = self.threads or os.cpu_count() or 1
        if env:
            try:
                n = min(n, max(1, int(env)))
            except ValueError as exc:
                raise ConfigError("CHAOS_LAB_THREADS must be an integer", "CHAOS_LAB_THREADS") from exc
        return n


def parse_config(data: dict | str) -> ExperimentConfig:
    if isinstance(data, str):
        try:
            data = json.loads(data)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON ({exc})") from exc
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        err = exc.errors()[0]
        loc = ".".join(str(p) for p in err["loc"])
        raise ConfigError(err["msg"], loc) from exc
    except ValueError as exc:
        raise ConfigError(str(exc), "grid") from exc


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config ({exc})", "path") from exc
    return parse_config(text)
