"""Canonicalization, Wasserstein-1 and mode statistics for generated group elements."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

from ..datasets import make_rng
from ..errors import ContractError
from ..liegroup import DiscreteGroupTable, GroupElement, GroupSpec, derealify, polar_rotation_work, realify

EXACT_ASSIGNMENT_CAP = 2048


def _natural(spec: GroupSpec, work: np.ndarray) -> np.ndarray:
    return derealify(work) if spec.is_complex else work


def canonicalize_work(H: np.ndarray, G_true: np.ndarray) -> np.ndarray:
    """Batched ``h g_true`` in working layout.

    A generated ``h = M g`` carries the observed cloud ``x1 = g_true c0`` to
    ``c c0``, so ``h = c g_true^-1``; composing with ``g_true`` on the right
    returns the discovered symmetry ``c`` itself.
    """
    return np.matmul(H, G_true)


def canonicalize(h: GroupElement, g_true: GroupElement) -> GroupElement:
    if h.spec != g_true.spec:
        raise ContractError(f"spec mismatch: {h.spec.kind.value} vs {g_true.spec.kind.value}")
    return GroupElement.from_work(h.spec, canonicalize_work(h.work, g_true.work))


def truth_work(spec: GroupSpec, transforms: np.ndarray) -> np.ndarray:
    """Dataset ground-truth matrices (real, N x d x d) in the working layout of ``spec``."""
    transforms = np.asarray(transforms, dtype=float)
    if not spec.is_complex:
        return transforms
    return realify(np.stack([transforms, np.zeros_like(transforms)], axis=-3))


def flatten_elements(spec: GroupSpec, work: np.ndarray) -> np.ndarray:
    """Rows of real coordinates whose Euclidean distance is the Frobenius ground metric.

    Complex elements use the interleaved (re, im) representation of each entry.
    """
    nat = _natural(spec, np.asarray(work, dtype=float))
    if spec.is_complex:
        nat = np.moveaxis(nat, -3, -1)  # (..., n, n, 2)
    return nat.reshape(nat.shape[0], -1)


def _assignment_cost(a: np.ndarray, b: np.ndarray) -> float:
    C = cdist(a, b)
    r, c = linear_sum_assignment(C)
    return float(C[r, c].mean())


@dataclass
class W1Result:
    value: float
    blocks: int
    block_size: int
    block_std: float = 0.0


def wasserstein1_rows(a: np.ndarray, b: np.ndarray, seed: int = 0, cap: int = EXACT_ASSIGNMENT_CAP) -> W1Result:
    """W1 between two empirical distributions of row vectors (uniform weights).

    Equal sizes up to ``cap`` use one exact assignment. Otherwise both sets are
    shuffled, truncated to the common size, split into ``ceil(n / cap)``
    disjoint equal blocks, and the exact block distances are averaged. Equal
    sizes share one permutation, so identical inputs still give 0.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if len(a) == 0 or len(b) == 0:
        raise ContractError("wasserstein1 needs nonempty inputs")
    if len(a) == len(b) and len(a) <= cap:
        return W1Result(_assignment_cost(a, b), 1, len(a))
    n = min(len(a), len(b))
    k = math.ceil(n / cap)
    m = n // k
    rng = make_rng(seed, 7)
    pa = rng.permutation(len(a))
    pb = pa if len(a) == len(b) else rng.permutation(len(b))
    vals = [_assignment_cost(a[pa[i * m : (i + 1) * m]], b[pb[i * m : (i + 1) * m]]) for i in range(k)]
    return W1Result(float(np.mean(vals)), k, m, float(np.std(vals)))


def wasserstein1(generated, truth, seed: int = 0, spec: Optional[GroupSpec] = None) -> float:
    """W1 under the Frobenius ground metric.

    Accepts lists of :class:`GroupElement` or working-layout arrays with ``spec``.
    """
    ga, sa = _as_work(generated, spec)
    gb, sb = _as_work(truth, spec)
    if sa != sb:
        raise ContractError(f"spec mismatch: {sa.kind.value} vs {sb.kind.value}")
    return wasserstein1_rows(flatten_elements(sa, ga), flatten_elements(sb, gb), seed).value


def _as_work(items, spec):
    if isinstance(items, np.ndarray):
        if spec is None:
            raise ContractError("array input needs an explicit spec")
        return items, spec
    items = list(items)
    if not items:
        raise ContractError("wasserstein1 needs nonempty inputs")
    specs = {e.spec for e in items}
    if len(specs) != 1:
        raise ContractError("mixed specs in one element list")
    s = specs.pop()
    if spec is not None and spec != s:
        raise ContractError(f"spec mismatch: {s.kind.value} vs {spec.kind.value}")
    return np.stack([e.work for e in items]), s


def wasserstein1_angles(a, b) -> float:
    """Equal-size 1D W1 on angles treated as real numbers (sorted-difference formula)."""
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    if a.shape != b.shape:
        raise ContractError("1D formula needs equal sample counts")
    return float(np.mean(np.abs(a - b)))


def wasserstein1_circle(a, b) -> float:
    """Equal-size W1 on the circle with arc-length cost.

    For equal-weight samples the optimal matching pairs the sorted lists up to a
    cyclic shift, so every shift is scored and the cheapest kept.
    """
    a = np.sort(np.mod(np.asarray(a, dtype=float), 2 * math.pi))
    b = np.sort(np.mod(np.asarray(b, dtype=float), 2 * math.pi))
    if a.shape != b.shape:
        raise ContractError("circle formula needs equal sample counts")
    best = math.inf
    for k in range(len(a)):
        d = np.abs(a - np.roll(b, k))
        best = min(best, float(np.mean(np.minimum(d, 2 * math.pi - d))))
    return best


# --------------------------------------------------------------------------
# angles and modes


def so2_angles(work: np.ndarray, polar: bool = True) -> np.ndarray:
    """Angles in (-pi, pi] of real 2x2 matrices, optionally after polar projection."""
    R = polar_rotation_work(work) if polar else work
    return np.arctan2(R[..., 1, 0], R[..., 0, 0])


def angle_histogram(angles, bins: int = 72):
    """Counts over (-pi, pi] with ``bins`` equal-width bins; returns (edges, counts)."""
    angles = np.asarray(angles, dtype=float)
    # fold -pi onto pi so the half-open interval is respected
    angles = np.where(angles <= -math.pi, angles + 2 * math.pi, angles)
    edges = np.linspace(-math.pi, math.pi, bins + 1)
    idx = np.clip(np.ceil((angles + math.pi) / (2 * math.pi) * bins).astype(int) - 1, 0, bins - 1)
    return edges, np.bincount(idx, minlength=bins)


def element_histogram(elements, bins: int = 72):
    """Angle histogram of SO2-compatible elements (polar factor of each)."""
    work = np.stack([e.work for e in elements]) if not isinstance(elements, np.ndarray) else elements
    return angle_histogram(so2_angles(work), bins)


def distance_to_multiple(angles, period: float) -> np.ndarray:
    """Distance of each angle to the nearest integer multiple of ``period``."""
    a = np.asarray(angles, dtype=float)
    return np.abs((a + period / 2) % period - period / 2)


def leader_clusters(rows: np.ndarray, radius: float):
    """Greedy leader clustering: each row joins the first leader within ``radius``.

    Returns (leaders, labels). Order of ``rows`` determines leaders.
    """
    rows = np.asarray(rows, dtype=float)
    leaders = []
    labels = np.full(len(rows), -1, dtype=np.int64)
    unassigned = np.arange(len(rows))
    while len(unassigned):
        lead = unassigned[0]
        d = np.linalg.norm(rows[unassigned] - rows[lead], axis=1)
        hit = d <= radius
        labels[unassigned[hit]] = len(leaders)
        leaders.append(rows[lead])
        unassigned = unassigned[~hit]
    return np.array(leaders), labels


@dataclass
class ModeCount:
    n_modes: int
    coverage: float  # mass of the counted modes
    sizes: np.ndarray  # all cluster sizes, descending


def count_modes(rows: np.ndarray, radius: float = 0.3, min_mass: float = 0.01) -> ModeCount:
    """Clusters holding at least ``min_mass`` of the samples count as modes."""
    _, labels = leader_clusters(rows, radius)
    sizes = np.sort(np.bincount(labels))[::-1]
    keep = sizes >= min_mass * len(rows)
    return ModeCount(int(keep.sum()), float(sizes[keep].sum() / len(rows)), sizes)


def axis_angle_to_z(R: np.ndarray, min_angle: float = 1e-3) -> np.ndarray:
    """Angle between each rotation's axis and the z line (sign-free).

    Rotations by less than ``min_angle`` have no well-defined axis and count as aligned.
    """
    R = np.asarray(R, dtype=float)
    w = np.stack([R[..., 2, 1] - R[..., 1, 2], R[..., 0, 2] - R[..., 2, 0], R[..., 1, 0] - R[..., 0, 1]], -1)
    tr = np.trace(R, axis1=-2, axis2=-1)
    angle = np.arccos(np.clip((tr - 1) / 2, -1, 1))
    # near angle pi the skew part vanishes; take the axis from R + I instead
    S = R + np.eye(3)
    col = np.argmax(np.linalg.norm(S, axis=-2), axis=-1)
    alt = np.take_along_axis(S, col[..., None, None], -1)[..., 0]
    axis = np.where((angle > math.pi - 1e-2)[..., None], alt, w)
    norm = np.linalg.norm(axis, axis=-1)
    cos = np.abs(axis[..., 2]) / np.where(norm > 0, norm, 1.0)
    out = np.arccos(np.clip(cos, 0.0, 1.0))
    return np.where(angle < min_angle, 0.0, out)


def z_angles(R: np.ndarray) -> np.ndarray:
    """Rotation angle about z read from the upper-left block."""
    return np.arctan2(R[..., 1, 0], R[..., 0, 0])


# --------------------------------------------------------------------------
# reports


@dataclass
class EvalReport:
    experiment: str
    w1: float
    sample_count: int
    mode_histogram: Dict[int, int] = field(default_factory=dict)
    canonicalization: str = "right-compose-truth"
    extras: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if not self.w1 >= 0:
            raise ContractError("w1 must be non-negative")

    def to_text(self) -> str:
        lines = [
            f"experiment={self.experiment}",
            f"w1={self.w1!r}",
            f"sample_count={self.sample_count}",
            f"canonicalization={self.canonicalization}",
        ]
        lines += [f"mode.{k}={v}" for k, v in sorted(self.mode_histogram.items())]
        lines += [f"{k}={v!r}" for k, v in sorted(self.extras.items())]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "EvalReport":
        kv = dict(line.split("=", 1) for line in text.splitlines() if "=" in line)
        modes = {int(k[5:]): int(v) for k, v in kv.items() if k.startswith("mode.")}
        base = {"experiment", "w1", "sample_count", "canonicalization"}
        extras = {k: float(v) for k, v in kv.items() if k not in base and not k.startswith("mode.")}
        return cls(kv["experiment"], float(kv["w1"]), int(kv["sample_count"]), modes, kv["canonicalization"], extras)


def mode_histogram(canon_work: np.ndarray, table: Optional[DiscreteGroupTable]) -> Dict[int, int]:
    """Counts of the nearest target-table element for each canonicalized sample."""
    if table is None or not table.elements:
        return {}
    idx, _ = table.nearest(canon_work)
    counts = np.bincount(idx, minlength=table.order)
    return {i: int(c) for i, c in enumerate(counts)}


def evaluate(
    experiment: str,
    spec: GroupSpec,
    generated: np.ndarray,
    pair_transforms: np.ndarray,
    table: Optional[DiscreteGroupTable] = None,
    seed: int = 0,
    truth_transforms: Optional[np.ndarray] = None,
) -> EvalReport:
    """Canonicalize generated elements, then W1 against the ground-truth set.

    ``generated[i]`` was produced from the cloud whose transform is
    ``pair_transforms[i]``; ``truth_transforms`` (default: the same set) is the
    reference distribution.
    """
    if len(generated) == 0:
        return EvalReport(experiment, 0.0, 0)
    G_pair = truth_work(spec, pair_transforms)
    G_truth = G_pair if truth_transforms is None else truth_work(spec, truth_transforms)
    canon = canonicalize_work(generated, G_pair)
    res = wasserstein1_rows(flatten_elements(spec, canon), flatten_elements(spec, G_truth), seed)
    extras = {"w1_blocks": float(res.blocks), "w1_block_std": res.block_std}
    if not spec.is_complex and spec.matrix_dim == 2:
        ang = so2_angles(canon)
        truth_ang = so2_angles(G_truth)
        n = min(len(ang), len(truth_ang))
        extras["w1_angle"] = wasserstein1_circle(ang[:n], truth_ang[:n])
    tab = table if table is not None and table.elements and table.spec == spec else None
    return EvalReport(experiment, res.value, len(generated), mode_histogram(canon, tab), extras=extras)
