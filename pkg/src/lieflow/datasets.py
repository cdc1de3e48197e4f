"""Synthetic point-cloud datasets with known symmetry groups.

Each dataset applies transformations from a target group to a fixed
canonical object. Random numbers come from numpy's Philox counter-based
generator keyed by ``(seed, stream...)`` via :func:`make_rng`, so datasets
are reproducible across runs and platforms.
"""

from __future__ import annotations

import enum
import hashlib
import io
import math
import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np

from .errors import FormatError
from .liegroup import (
    GL2C,
    SO2,
    SO3,
    DiscreteName,
    GroupElement,
    discrete_group,
    rotation2,
)


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Philox generator for the substream identified by ``(seed, *stream)``."""
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, *map(int, stream)])
    return np.random.Generator(np.random.Philox(ss))


class ObjectKind(str, enum.Enum):
    Arrow2D = "Arrow2D"
    HalfArrow2D = "HalfArrow2D"
    IrregularTetrahedron3D = "IrregularTetrahedron3D"
    MultiObject3D = "MultiObject3D"


class Target(str, enum.Enum):
    C4 = "C4"
    D4 = "D4"
    Tet = "Tet"
    Oct = "Oct"
    Ico = "Ico"
    SO2aroundZ = "SO2aroundZ"
    GaussianSO2 = "GaussianSO2"


@dataclass(frozen=True, eq=False)
class PointCloud:
    dim: int
    points: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != self.dim:
            raise ValueError(f"expected (P, {self.dim}) points, got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("point cloud has non-finite coordinates")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def transformed(self, g: GroupElement) -> "PointCloud":
        return PointCloud(self.dim, self.points @ _real_matrix(g).T)

    def flat(self) -> np.ndarray:
        return self.points.reshape(-1)

    def __len__(self):
        return len(self.points)


def _real_matrix(g: GroupElement) -> np.ndarray:
    if g.spec.is_complex:
        if np.any(g.mat[1] != 0):
            raise ValueError("complex transform cannot act on a real point cloud")
        return g.mat[0]
    return g.mat


# Vertex lists. 2D objects point along +x; all objects are centred at the origin.
_ARROW_RAW = np.array(
    [[1.0, 0.0], [0.4, 0.5], [0.4, 0.2], [-1.0, 0.2], [-1.0, -0.2], [0.4, -0.2], [0.4, -0.5]]
)
_HALF_ARROW_RAW = np.array([[1.0, -0.25], [0.3, 0.45], [0.3, 0.15], [-1.0, 0.15], [-1.0, -0.25]])

_TETRAHEDRON = np.array(
    [[-0.59, -0.695, -0.04], [0.89, -0.315, -0.44], [-0.24, 0.285, -0.30], [-0.06, 0.725, 0.78]]
)

# Perturbed prism / cube / octahedron, centred; padded to MULTI_POINTS with origin points.
_PRISM = np.array(
    [[1.088, -0.1118, -0.6188], [-0.3749, 0.9887, -0.6689], [-0.5911, -0.9878, -0.6037],
     [0.9362, 0.0006, 0.6734], [-0.5831, 0.8597, 0.4898], [-0.4752, -0.7494, 0.7282]]
)
_CUBE = np.array(
    [[-0.5268, -0.6297, -0.7038], [-0.573, -0.6439, 0.6968], [-0.6419, 0.555, -0.5235],
     [-0.6253, 0.5532, 0.4556], [0.6344, -0.648, -0.499], [0.5801, -0.4951, 0.5805],
     [0.6346, 0.7622, -0.4962], [0.5179, 0.5463, 0.4897]]
)
_OCTAHEDRON = np.array(
    [[1.0226, 0.0641, -0.0317], [-0.7989, 0.0026, 0.0613], [-0.0806, 0.8051, 0.0656],
     [-0.048, -0.8994, -0.0605], [-0.0737, 0.069, 0.8569], [-0.0214, -0.0414, -0.8917]]
)
MULTI_POINTS = 8


def _centred(p: np.ndarray) -> np.ndarray:
    return p - p.mean(axis=0)


def _pad(p: np.ndarray, n: int) -> np.ndarray:
    return np.concatenate([p, np.zeros((n - len(p), p.shape[1]))], axis=0)


def multi_objects() -> List[PointCloud]:
    """The four multi-object shapes, each zero-padded to MULTI_POINTS points."""
    shapes = [_TETRAHEDRON, _centred(_PRISM), _centred(_CUBE), _centred(_OCTAHEDRON)]
    return [PointCloud(3, _pad(s, MULTI_POINTS)) for s in shapes]


def canonical_object(kind) -> PointCloud:
    """Fixed canonical vertex list (the first multi-object shape for MultiObject3D)."""
    kind = ObjectKind(kind)
    if kind == ObjectKind.Arrow2D:
        return PointCloud(2, _centred(_ARROW_RAW))
    if kind == ObjectKind.HalfArrow2D:
        return PointCloud(2, _centred(_HALF_ARROW_RAW))
    if kind == ObjectKind.IrregularTetrahedron3D:
        return PointCloud(3, _TETRAHEDRON)
    return multi_objects()[0]


def object_dim(kind) -> int:
    return 2 if ObjectKind(kind) in (ObjectKind.Arrow2D, ObjectKind.HalfArrow2D) else 3


@dataclass(frozen=True)
class DatasetSpec:
    object: ObjectKind
    target: Target
    sample_count: int
    seed: int
    angle_sigma: float = math.pi / 4

    def __post_init__(self):
        object.__setattr__(self, "object", ObjectKind(self.object))
        object.__setattr__(self, "target", Target(self.target))
        if self.sample_count < 0:
            raise ValueError("sample_count must be non-negative")
        dim = object_dim(self.object)
        if self.target in (Target.GaussianSO2, Target.SO2aroundZ) and dim != 3:
            raise ValueError(f"{self.target.value} requires a 3D object")
        if self.target == Target.GaussianSO2 and not self.angle_sigma > 0:
            raise ValueError("angle_sigma must be positive")
        if self.target in (Target.C4, Target.D4) and dim != 2:
            raise ValueError(f"{self.target.value} requires a 2D object")
        if self.target in (Target.Tet, Target.Oct, Target.Ico) and dim != 3:
            raise ValueError(f"{self.target.value} requires a 3D object")

    @property
    def dim(self) -> int:
        return object_dim(self.object)

    def to_fields(self) -> dict:
        return {
            "object": self.object.value,
            "target": self.target.value,
            "sample_count": str(self.sample_count),
            "seed": str(self.seed),
            "angle_sigma": repr(float(self.angle_sigma)),
        }


@dataclass(eq=False)
class Dataset:
    """Samples as arrays: ``points`` (N, P, d), ``transforms`` (N, d, d), ``object_index`` (N,)."""

    spec: DatasetSpec
    points: np.ndarray
    transforms: np.ndarray
    object_index: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.object_index is None:
            self.object_index = np.zeros(len(self.points), dtype=np.int64)

    def __len__(self):
        return len(self.points)

    @property
    def truth_spec(self):
        if self.spec.target == Target.C4:
            return SO2
        if self.spec.target == Target.D4:
            return GL2C
        return SO3

    @property
    def samples(self) -> List[PointCloud]:
        return [PointCloud(self.spec.dim, p) for p in self.points]

    @property
    def ground_truth(self) -> List[GroupElement]:
        spec = self.truth_spec
        if spec.is_complex:
            return [GroupElement(spec, np.stack([m, np.zeros_like(m)])) for m in self.transforms]
        return [GroupElement(spec, m) for m in self.transforms]

    def canonical_points(self) -> np.ndarray:
        """Canonical object of every sample, shape (N, P, d)."""
        if self.spec.object == ObjectKind.MultiObject3D:
            objs = np.stack([o.points for o in multi_objects()])
            return objs[self.object_index]
        base = canonical_object(self.spec.object).points
        return np.broadcast_to(base, (len(self),) + base.shape)

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.spec, self.points[idx], self.transforms[idx], self.object_index[idx])


def target_table(target):
    target = Target(target)
    if target == Target.GaussianSO2:
        return discrete_group(DiscreteName.SO2aroundZ)
    return discrete_group(DiscreteName(target.value))


def _z_rotations(angles: np.ndarray) -> np.ndarray:
    out = np.zeros((len(angles), 3, 3))
    out[:, :2, :2] = rotation2(angles)
    out[:, 2, 2] = 1.0
    return out


def generate_dataset(spec: DatasetSpec) -> Dataset:
    """Transform the canonical object(s) by random elements of the target group."""
    rng = make_rng(spec.seed, 0)
    n = spec.sample_count
    dim = spec.dim
    if spec.object == ObjectKind.MultiObject3D:
        objects = np.stack([o.points for o in multi_objects()])
        obj_idx = rng.integers(0, len(objects), n)
    else:
        objects = canonical_object(spec.object).points[None]
        obj_idx = np.zeros(n, dtype=np.int64)

    if spec.target == Target.SO2aroundZ:
        transforms = _z_rotations(rng.uniform(-math.pi, math.pi, n))
    elif spec.target == Target.GaussianSO2:
        transforms = _z_rotations(rng.normal(0.0, spec.angle_sigma, n))
    else:
        table = target_table(spec.target)
        mats = np.stack([_real_matrix(e) for e in table.elements])
        transforms = mats[rng.integers(0, table.order, n)]
    transforms = transforms.reshape(n, dim, dim)
    canon = objects[obj_idx]
    points = np.matmul(canon, np.swapaxes(transforms, -1, -2))
    return Dataset(spec, points, transforms, obj_idx.astype(np.int64))


def split_indices(n: int, seed: int, test_fraction_mod: int = 10):
    """Deterministic 90/10 split: index i is held out iff hash(seed, i) % 10 == 0."""
    test = np.zeros(n, dtype=bool)
    for i in range(n):
        h = hashlib.blake2b(struct.pack("<qq", int(seed), i), digest_size=8).digest()
        test[i] = int.from_bytes(h, "little") % test_fraction_mod == 0
    idx = np.arange(n)
    return idx[~test], idx[test]


# --------------------------------------------------------------------------
# binary container

MAGIC = b"LIEFDSET"
VERSION = 1
_KNOWN_KEYS = {"object", "target", "sample_count", "seed", "angle_sigma", "dim", "n_points"}


def _header_text(fields: dict) -> bytes:
    return "".join(f"{k}={v}\n" for k, v in fields.items()).encode("utf-8")


def _parse_header(raw: bytes) -> dict:
    out = {}
    for lineno, line in enumerate(raw.decode("utf-8").splitlines(), 1):
        if not line.strip():
            continue
        if "=" not in line:
            raise FormatError(f"header line {lineno}: expected key=value")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def save_dataset(ds: Dataset, path) -> None:
    n, npts, dim = len(ds), (ds.points.shape[1] if len(ds) else len(_object_points(ds.spec))), ds.spec.dim
    fields = ds.spec.to_fields()
    fields.update({"dim": str(dim), "n_points": str(npts)})
    header = _header_text(fields)
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<II", VERSION, len(header)))
    buf.write(header)
    buf.write(struct.pack("<Q", n))
    for i in range(n):
        buf.write(np.ascontiguousarray(ds.points[i], dtype="<f8").tobytes())
        buf.write(np.ascontiguousarray(ds.transforms[i], dtype="<f8").tobytes())
        buf.write(struct.pack("<q", int(ds.object_index[i])))
    Path(path).write_bytes(buf.getvalue())


def _object_points(spec: DatasetSpec) -> np.ndarray:
    return canonical_object(spec.object).points


def load_dataset(path) -> Dataset:
    data = Path(path).read_bytes()
    if len(data) < len(MAGIC) + 8 or data[: len(MAGIC)] != MAGIC:
        raise FormatError(f"{path}: not a dataset file (bad magic)")
    version, hlen = struct.unpack_from("<II", data, len(MAGIC))
    if version != VERSION:
        raise FormatError(f"{path}: unsupported dataset version {version}")
    off = len(MAGIC) + 8
    if len(data) < off + hlen + 8:
        raise FormatError(f"{path}: truncated header")
    fields = _parse_header(data[off : off + hlen])
    unknown = sorted(set(fields) - _KNOWN_KEYS)
    if unknown:
        warnings.warn(f"{path}: ignoring unknown header fields {unknown}", stacklevel=2)
    try:
        spec = DatasetSpec(
            fields["object"], fields["target"], int(fields["sample_count"]), int(fields["seed"]),
            float(fields["angle_sigma"]),
        )
        dim, npts = int(fields["dim"]), int(fields["n_points"])
    except (KeyError, ValueError) as exc:
        raise FormatError(f"{path}: bad header: {exc}") from None
    off += hlen
    (n,) = struct.unpack_from("<Q", data, off)
    off += 8
    rec = 8 * (npts * dim + dim * dim + 1)
    points = np.empty((n, npts, dim))
    transforms = np.empty((n, dim, dim))
    obj = np.empty(n, dtype=np.int64)
    for i in range(n):
        if off + rec > len(data):
            raise FormatError(f"{path}: record {i} truncated ({len(data) - off} of {rec} bytes)")
        block = np.frombuffer(data, dtype="<f8", count=npts * dim + dim * dim, offset=off)
        if not np.all(np.isfinite(block)):
            raise FormatError(f"{path}: record {i} has non-finite values")
        points[i] = block[: npts * dim].reshape(npts, dim)
        transforms[i] = block[npts * dim :].reshape(dim, dim)
        (obj[i],) = struct.unpack_from("<q", data, off + rec - 8)
        off += rec
    if off != len(data):
        raise FormatError(f"{path}: {len(data) - off} trailing bytes after record {n - 1}")
    return Dataset(spec, points, transforms, obj)


def export_csv(ds: Dataset, path) -> None:
    """One row per point: sample, object, point, coordinates."""
    axes = "xyz"[: ds.spec.dim]
    lines = ["sample,object,point," + ",".join(axes)]
    for i in range(len(ds)):
        for j, p in enumerate(ds.points[i]):
            lines.append(f"{i},{ds.object_index[i]},{j}," + ",".join(repr(float(c)) for c in p))
    Path(path).write_text("\n".join(lines) + "\n")
