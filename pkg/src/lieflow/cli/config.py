"""Run configuration: typed ``key=value`` text with full-default dumping."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Dict, Tuple

from ..datasets import ObjectKind, Target
from ..errors import ConfigError
from ..liegroup import GroupKind


class Experiment(str, enum.Enum):
    so2_c4 = "so2_c4"
    gl2r_c4 = "gl2r_c4"
    gl2c_d4 = "gl2c_d4"
    so3_tet = "so3_tet"
    so3_oct = "so3_oct"
    so3_so2 = "so3_so2"
    so3_ico = "so3_ico"
    multi_tet = "multi_tet"
    gauss_so2 = "gauss_so2"


# experiment -> (hypothesis group, object, target)
EXPERIMENTS: Dict[Experiment, Tuple[GroupKind, ObjectKind, Target]] = {
    Experiment.so2_c4: (GroupKind.SO2, ObjectKind.Arrow2D, Target.C4),
    Experiment.gl2r_c4: (GroupKind.GL2RPlus, ObjectKind.Arrow2D, Target.C4),
    Experiment.gl2c_d4: (GroupKind.GL2C, ObjectKind.HalfArrow2D, Target.D4),
    Experiment.so3_tet: (GroupKind.SO3, ObjectKind.IrregularTetrahedron3D, Target.Tet),
    Experiment.so3_oct: (GroupKind.SO3, ObjectKind.IrregularTetrahedron3D, Target.Oct),
    Experiment.so3_so2: (GroupKind.SO3, ObjectKind.IrregularTetrahedron3D, Target.SO2aroundZ),
    Experiment.so3_ico: (GroupKind.SO3, ObjectKind.IrregularTetrahedron3D, Target.Ico),
    Experiment.multi_tet: (GroupKind.SO3, ObjectKind.MultiObject3D, Target.Tet),
    Experiment.gauss_so2: (GroupKind.SO3, ObjectKind.IrregularTetrahedron3D, Target.GaussianSO2),
}


class Schedule(str, enum.Enum):
    uniform = "uniform"
    power = "power"


@dataclass(frozen=True)
class RunConfig:
    """Every knob of a run; zero ``width``/``steps`` select the per-dimension defaults."""

    experiment: Experiment = Experiment.so2_c4
    seed: int = 0
    train_count: int = 20000
    test_count: int = 5000
    angle_sigma: float = math.pi / 4
    epochs: int = 200
    batch_size: int = 256
    lr: float = 1e-3
    width: int = 0
    depth: int = 3
    embed_dim: int = 16
    max_frequency: float = 64.0
    schedule: Schedule = Schedule.uniform
    n: float = 5.0
    steps: int = 0
    sample_count: int = 5000
    trajectory_count: int = 16
    checkpoint_every: int = 10
    threads: int = 0
    scalar_epochs: int = 200
    scalar_width: int = 64
    scalar_count: int = 20000
    posterior_steps: int = 100
    posterior_samples: int = 1000
    posterior_sigma: float = 0.1

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            try:
                object.__setattr__(self, f.name, _coerce(f.type, v))
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{f.name}: {exc}") from None
        positive = ("epochs", "batch_size", "depth", "embed_dim", "scalar_epochs", "scalar_width", "posterior_samples")
        for name in positive:
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        for name in ("train_count", "test_count", "sample_count", "trajectory_count", "width", "steps", "threads",
                     "checkpoint_every", "scalar_count"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        if self.n < 1:
            raise ConfigError("n must be >= 1")
        if self.lr <= 0 or self.angle_sigma <= 0 or self.posterior_sigma <= 0:
            raise ConfigError("lr, angle_sigma and posterior_sigma must be positive")
        if self.posterior_steps < 2:
            raise ConfigError("posterior_steps must be >= 2")
        if self.embed_dim % 2:
            raise ConfigError("embed_dim must be even")

    @property
    def group(self) -> GroupKind:
        return EXPERIMENTS[self.experiment][0]

    @property
    def object(self) -> ObjectKind:
        return EXPERIMENTS[self.experiment][1]

    @property
    def target(self) -> Target:
        return EXPERIMENTS[self.experiment][2]

    @property
    def point_dim(self) -> int:
        return 3 if self.group == GroupKind.SO3 else 2

    @property
    def inference_steps(self) -> int:
        return self.steps or (100 if self.point_dim == 3 else 20)

    def dumps(self) -> str:
        return "".join(f"{f.name}={_render(getattr(self, f.name))}\n" for f in fields(self))

    @classmethod
    def loads(cls, text: str) -> "RunConfig":
        return cls.from_dict(parse_kv(text))

    @classmethod
    def from_dict(cls, kv: Dict[str, str]) -> "RunConfig":
        names = {f.name for f in fields(cls)}
        unknown = sorted(set(kv) - names)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**kv)

    def with_overrides(self, kv: Dict[str, str]) -> "RunConfig":
        names = {f.name for f in fields(self)}
        unknown = sorted(set(kv) - names)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        return replace(self, **kv)

    def save(self, path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def load(cls, path) -> "RunConfig":
        return cls.loads(Path(path).read_text())


def parse_kv(text: str) -> Dict[str, str]:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


_TYPES = {"int": int, "float": float, "Experiment": Experiment, "Schedule": Schedule}


def _coerce(type_name, v):
    kind = _TYPES[type_name if isinstance(type_name, str) else type_name.__name__]
    if kind is int:
        if isinstance(v, bool) or (isinstance(v, float) and not v.is_integer()):
            raise ValueError(f"expected an integer, got {v!r}")
        return int(v)
    if kind is float:
        out = float(v)
        if not math.isfinite(out):
            raise ValueError("must be finite")
        return out
    return kind(v)


def _render(v) -> str:
    if isinstance(v, enum.Enum):
        return v.value
    if isinstance(v, float):
        return repr(v)
    return str(v)
