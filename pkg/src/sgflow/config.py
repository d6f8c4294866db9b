"""JSON run configuration: schema, validation and resolution into solver objects."""
from __future__ import annotations

import json
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .errors import ConfigError
from .optimizer import AdmissibleSet, Ball, Box
from .spectral import SpectralField, random_field
from .state import ControlTrajectory, SolverConfig, simulate


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)


class Mode(_Strict):
    k: int = Field(ge=1)
    m: int = Field(ge=1)
    c: float


class FileRef(_Strict):
    file: str


class RandomRef(_Strict):
    random: float = Field(gt=0, description="scale of the seeded random field")


FieldSpec = Union[list[Mode], FileRef, RandomRef]


class ControlSpec(_Strict):
    """Piecewise-constant control.

    ``modes`` gives one field held on every interval, ``values`` one mode list per
    interval, ``files`` one field CSV per interval, ``random`` a seeded draw per interval.
    """

    intervals: int | None = Field(default=None, ge=1)
    modes: list[Mode] | None = None
    values: list[list[Mode]] | None = None
    files: list[str] | None = None
    random: float | None = Field(default=None, gt=0)

    @model_validator(mode="after")
    def _one_source(self):
        given = [n for n in ("modes", "values", "files", "random") if getattr(self, n) is not None]
        if len(given) != 1:
            raise ValueError(f"exactly one of modes/values/files/random is required, got {given or 'none'}")
        n = len(self.values) if self.values is not None else len(self.files) if self.files is not None else None
        if n is not None and self.intervals is not None and n != self.intervals:
            raise ValueError(f"intervals={self.intervals} but {n} interval entries given")
        return self


class TargetFromControl(_Strict):
    from_control: ControlSpec


class BallSpec(_Strict):
    """Radius given directly, or as a multiple of |u*| when y_d comes from a control u*."""

    kind: Literal["ball"]
    R: float | None = Field(default=None, gt=0)
    R_over_target: float | None = Field(default=None, gt=0)

    @model_validator(mode="after")
    def _one_radius(self):
        if (self.R is None) == (self.R_over_target is None):
            raise ValueError("exactly one of R and R_over_target is required")
        return self


class BoxSpec(_Strict):
    kind: Literal["box"]
    lo: float
    hi: float

    @model_validator(mode="after")
    def _ordered(self):
        if self.lo > self.hi:
            raise ValueError("lo must be <= hi")
        return self


class OptimizerOpts(_Strict):
    max_iter: int = Field(default=200, ge=0)
    c1: float = Field(default=1e-4, gt=0, lt=1)
    shrink: float = Field(default=0.5, gt=0, lt=1)
    tol_vi: float = Field(default=1e-6, gt=0)
    step0: float = Field(default=1.0, gt=0)


class RunConfig(_Strict):
    nu: float = Field(gt=0, description="viscosity")
    alpha: float = Field(ge=0)
    T: float = Field(gt=0)
    K: int = Field(ge=1)
    dt: float = Field(gt=0)
    scheme: Literal["RK4", "CNAB2"] = "RK4"
    M: int | None = Field(default=None, ge=1)
    lam: float = Field(default=0.0, ge=0, alias="lambda")
    n_intervals: int = Field(default=1, ge=1)
    y0: FieldSpec | None = None
    u: ControlSpec | None = None
    w: ControlSpec | None = None
    y_d: Union[FieldSpec, TargetFromControl, None] = None
    f: FieldSpec | None = None
    rhos: list[float] = Field(default_factory=lambda: [1e-1, 1e-2, 1e-3])
    admissible: Union[BallSpec, BoxSpec, None] = Field(default=None, discriminator="kind")
    optimizer: OptimizerOpts = Field(default_factory=OptimizerOpts)

    @model_validator(mode="after")
    def _horizon(self):
        if self.dt > self.T:
            raise ValueError(f"dt: step {self.dt} exceeds horizon T={self.T}")
        return self


@dataclass
class Problem:
    """Resolved configuration: solver settings plus problem data as solver objects."""

    cfg: SolverConfig
    seed: int
    echo: dict
    y0: SpectralField | None = None
    u: ControlTrajectory | None = None
    w: ControlTrajectory | None = None
    y_d: object = None  # SpectralField (steady target) or Trajectory
    f: SpectralField | None = None
    rhos: list = field(default_factory=list)
    admissible: AdmissibleSet | None = None
    optimizer: dict = field(default_factory=dict)
    n_intervals: int = 1

    def require(self, *names):
        missing = [n for n in names if getattr(self, n) is None]
        if missing:
            raise ConfigError(f"{missing[0]}: required by this command")


def _path_message(err: ValidationError) -> str:
    lines = []
    for e in err.errors():
        loc = ".".join(str(p) for p in e["loc"] if not str(p).startswith(("list[", "function-")))
        msg = e["msg"].removeprefix("Value error, ")
        lines.append(f"{loc}: {msg}" if loc else msg)
    return "; ".join(lines)


def read_field_file(path: Path, K: int) -> SpectralField:
    from .io import read_field_csv

    try:
        return read_field_csv(path, K)
    except FileNotFoundError as exc:
        raise ConfigError(f"{path}: file not found") from exc


class _Resolver:
    def __init__(self, K, T, base: Path, seed: int):
        self.K, self.T, self.base = K, T, base
        self._seed = seed

    def rng(self, name):
        # independent stream per data item so adding one item leaves the others unchanged
        return np.random.default_rng([self._seed, zlib.crc32(name.encode())])

    def field(self, spec, name) -> SpectralField:
        if isinstance(spec, FileRef):
            return read_field_file(self.base / spec.file, self.K)
        if isinstance(spec, RandomRef):
            return random_field(self.K, self.rng(name), spec.random)
        return self.modes(spec, name)

    def modes(self, modes, name) -> SpectralField:
        for i, md in enumerate(modes):
            if md.k > self.K or md.m > self.K:
                raise ConfigError(f"{name}.{i}: mode ({md.k},{md.m}) lies outside K={self.K}")
        return SpectralField.from_modes(self.K, [(md.k, md.m, md.c) for md in modes])

    def control(self, spec: ControlSpec, name, default_intervals) -> ControlTrajectory:
        if spec.values is not None:
            vals = [self.modes(v, f"{name}.values.{i}").coeff for i, v in enumerate(spec.values)]
        elif spec.files is not None:
            vals = [read_field_file(self.base / p, self.K).coeff for p in spec.files]
        elif spec.random is not None:
            n = spec.intervals or default_intervals
            rng = self.rng(name)
            vals = [random_field(self.K, rng, spec.random).coeff for _ in range(n)]
        else:
            n = spec.intervals or default_intervals
            vals = [self.modes(spec.modes, f"{name}.modes").coeff] * n
        return ControlTrajectory(np.stack(vals), self.T)


def load_config(data: dict, base: Path = Path("."), seed: int = 0) -> Problem:
    try:
        rc = RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(_path_message(exc)) from None
    cfg = SolverConfig(nu=rc.nu, alpha=rc.alpha, T=rc.T, K=rc.K, dt=rc.dt, scheme=rc.scheme, M=rc.M, lam=rc.lam)
    rs = _Resolver(rc.K, rc.T, base, seed)
    nc = rc.n_intervals
    pb = Problem(cfg=cfg, seed=seed, echo=rc.model_dump(mode="json", by_alias=True), rhos=list(rc.rhos),
                 optimizer=rc.optimizer.model_dump(), n_intervals=nc)
    if rc.y0 is not None:
        pb.y0 = rs.field(rc.y0, "y0")
    if rc.u is not None:
        pb.u = rs.control(rc.u, "u", nc)
    if rc.w is not None:
        pb.w = rs.control(rc.w, "w", nc)
    if rc.f is not None:
        pb.f = rs.field(rc.f, "f")
    ustar = None
    if isinstance(rc.y_d, TargetFromControl):
        pb.require("y0")
        ustar = rs.control(rc.y_d.from_control, "y_d.from_control", nc)
        pb.y_d = simulate(cfg, pb.y0, ustar)
    elif rc.y_d is not None:
        pb.y_d = rs.field(rc.y_d, "y_d")
    if isinstance(rc.admissible, BallSpec):
        R = rc.admissible.R
        if R is None:
            if ustar is None:
                raise ConfigError("admissible.R_over_target: needs y_d given by from_control")
            R = rc.admissible.R_over_target * ustar.norm()
        pb.admissible = Ball(R)
    elif isinstance(rc.admissible, BoxSpec):
        pb.admissible = Box(rc.admissible.lo, rc.admissible.hi)
    for name in ("u", "w"):
        c = getattr(pb, name)
        if c is not None:
            try:
                c.steps_per_interval(cfg.N)
            except ConfigError as exc:
                raise ConfigError(f"{name}: {exc}") from None
    return pb


def parse_config(path, seed: int = 0) -> Problem:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError(f"{path}: config file not found") from None
    except UnicodeDecodeError:
        raise ConfigError(f"{path}: config must be UTF-8") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return load_config(data, path.parent, seed)
