"""Experiment configuration: one strict JSON document, unknown keys rejected."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Annotated, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .forward import SourceBasis, TimeGrid
from .grid import DiscreteDomain, SpeedModel, inclusion_from_dict

DETECTION_COMMANDS = ("locate", "hull", "oracle")


class ConfigError(ValueError):
    """Invalid configuration; the message lists the offending field paths."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


Positive = Annotated[float, Field(gt=0)]
PositiveInt = Annotated[int, Field(gt=0)]
Point = tuple[float, float]


class GridConfig(_Strict):
    nx: Annotated[int, Field(ge=4)] = 64
    ny: Annotated[int, Field(ge=4)] = 64
    Lx: Positive = 1.0
    Ly: Positive = 1.0

    @model_validator(mode="after")
    def _square_cells(self):
        if abs(self.Lx / self.nx - self.Ly / self.ny) > 1e-12 * self.Lx / self.nx:
            raise ValueError("cells must be square: Lx/nx must equal Ly/ny")
        return self


class DiskConfig(_Strict):
    kind: Literal["disk"]
    center: Point
    radius: Positive
    contrast: Positive


class TriangleConfig(_Strict):
    kind: Literal["triangle"]
    vertices: tuple[Point, Point, Point]
    contrast: Positive


class HalfPlaneConfig(_Strict):
    kind: Literal["halfplane"]
    level: float
    contrast: Positive


InclusionConfig = Annotated[Union[DiskConfig, TriangleConfig, HalfPlaneConfig], Field(discriminator="kind")]


class FieldFile(_Strict):
    file: str


class SpeedConfig(_Strict):
    c0: Union[Positive, FieldFile] = 1.0
    inclusions: list[InclusionConfig] = []


class TimeConfig(_Strict):
    T: Positive = 1.5
    cfl: Annotated[float, Field(gt=0, le=0.7)] = 0.5


class BasisConfig(_Strict):
    n_patch: PositiveInt = 32
    n_bin: PositiveInt = 120


class ControlConfig(_Strict):
    # alpha_k = 10**-k * ||K|| for k in alpha_exponents, unless alphas is given
    alpha_exponents: list[int] = [1, 2, 3, 4, 5, 6]
    alphas: Optional[list[Positive]] = None
    cg_tol: Positive = 1e-8
    cg_maxiter: Optional[PositiveInt] = None

    @model_validator(mode="after")
    def _schedule(self):
        n = len(self.alphas) if self.alphas is not None else len(self.alpha_exponents)
        if n < 3:
            raise ValueError("the alpha schedule needs at least 3 entries")
        if self.alphas is not None and any(b >= a for a, b in zip(self.alphas, self.alphas[1:])):
            raise ValueError("alphas must be decreasing")
        if self.alphas is None and any(b <= a for a, b in zip(self.alpha_exponents, self.alpha_exponents[1:])):
            raise ValueError("alpha_exponents must be increasing")
        return self


class RangeConfig(_Strict):
    start: float
    stop: float
    step: Positive

    def values(self) -> np.ndarray:
        n = int(np.floor((self.stop - self.start) / self.step + 1e-9)) + 1
        return np.round(self.start + self.step * np.arange(n), 12)


class DetectConfig(_Strict):
    method: Literal["known_bg", "unknown_bg"] = "known_bg"
    volumes: Literal["control", "oracle"] = "control"
    n_samples: PositiveInt = 32
    r_max: Positive = 0.75
    tol_r: Positive = 0.005
    tol_vol: Union[Literal["calibrated"], Positive] = "calibrated"
    tol_vol_floor: Annotated[float, Field(ge=0)] = 3e-4
    eps_list: list[Positive] = [0.0025, 0.005, 0.01, 0.02]
    r_grid: RangeConfig = RangeConfig(start=0.2, stop=0.5, step=0.01)
    h_levels: list[Positive] = [0.03, 0.05, 0.08]
    q_break: float = -0.25
    oracle_refine: PositiveInt = 8
    hull_metric_scale: Positive = 1.0


class TauConfig(_Strict):
    kind: Literal["constant", "cone", "spike"]
    values: list[Annotated[float, Field(ge=0)]]
    x: Optional[Point] = None
    h_level: Annotated[float, Field(ge=0)] = 0.0

    @model_validator(mode="after")
    def _needs_point(self):
        if self.kind != "constant" and self.x is None:
            raise ValueError(f"{self.kind} tau needs a boundary point x")
        return self


class VolumesConfig(_Strict):
    taus: list[TauConfig] = [TauConfig(kind="constant", values=[0.05, 0.1, 0.2, 0.3])]


class IoConfig(_Strict):
    out: str = "out"
    store: Optional[str] = None
    load: Optional[str] = None


class ExperimentConfig(_Strict):
    seed: int = 42
    grid: GridConfig = GridConfig()
    speed: SpeedConfig = SpeedConfig()
    time: TimeConfig = TimeConfig()
    basis: BasisConfig = BasisConfig()
    control: ControlConfig = ControlConfig()
    detect: DetectConfig = DetectConfig()
    volumes: VolumesConfig = VolumesConfig()
    io: IoConfig = IoConfig()

    # ------------------------------------------------------------------ #

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        try:
            return cls.model_validate(data)
        except ValidationError as exc:
            raise ConfigError(_format_errors(exc)) from None

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("top level must be a JSON object")
        return cls.from_dict(data)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
        return cls.from_json(text)

    def to_dict(self) -> dict:
        return self.model_dump(mode="json")

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def with_io(self, **kw) -> "ExperimentConfig":
        io = self.io.model_copy(update={k: v for k, v in kw.items() if v is not None})
        return self.model_copy(update={"io": io})

    # ------------------------------------------------------------------ #

    def check_for(self, command: str) -> None:
        """Cross-field checks that depend on the subcommand."""
        problems = []
        if command in DETECTION_COMMANDS:
            for n, inc in enumerate(self.speed.inclusions):
                if inc.contrast <= 1:
                    problems.append(f"speed.inclusions.{n}.contrast: must exceed 1 for {command}")
        if command in ("locate", "hull") and self.detect.method == "known_bg" and self.time.T < self.detect.r_max:
            problems.append("time.T: must be at least detect.r_max so tau_r is never clipped")
        if command in ("locate", "hull") and self.detect.method == "unknown_bg":
            if len(self.detect.eps_list) < 3:
                problems.append("detect.eps_list: insufficient epsilon samples")
            if self.detect.volumes != "oracle":
                problems.append("detect.volumes: the unknown-background test needs oracle volumes")
        if command in DETECTION_COMMANDS and not self.speed.inclusions:
            problems.append("speed.inclusions: detection needs at least one inclusion")
        if problems:
            raise ConfigError("; ".join(problems))

    def domain(self) -> DiscreteDomain:
        g = self.grid
        return DiscreteDomain.rectangle(g.nx, g.ny, g.Lx, g.Ly)

    def speed_model(self, domain: DiscreteDomain | None = None) -> SpeedModel:
        from .io import read_field

        dom = domain or self.domain()
        c0 = self.speed.c0
        if isinstance(c0, FieldFile):
            try:
                c0, _ = read_field(c0.file)
            except (OSError, ValueError, KeyError) as exc:
                raise ConfigError(f"speed.c0.file: {exc}") from None
            if c0.shape != dom.shape:
                raise ConfigError(f"speed.c0.file: field shape {c0.shape} does not match grid {dom.shape}")
            c0 = c0.astype(float)
        try:
            incs = [inclusion_from_dict(i.model_dump()) for i in self.speed.inclusions]
            return SpeedModel.build(dom, c0, incs)
        except ValueError as exc:
            raise ConfigError(f"speed: {exc}") from None

    def time_grid(self, speed: SpeedModel) -> TimeGrid:
        return TimeGrid.for_speed(self.time.T, speed.domain.h, float(speed.c_tilde.max()),
                                  self.time.cfl, self.basis.n_bin)

    def source_basis(self, speed: SpeedModel, time: TimeGrid) -> SourceBasis:
        try:
            return SourceBasis(self.basis.n_patch, self.basis.n_bin, speed.domain.n_boundary, time)
        except ValueError as exc:
            raise ConfigError(f"basis: {exc}") from None


def _format_errors(exc: ValidationError) -> str:
    parts = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        parts.append(f"{loc}: {err['msg']}")
    return "; ".join(parts)
