"""Matrix Lie group numerics for SO(2), SO(3), GL(2,R)+ and GL(2,C).

Every group is handled through a *working* real representation: real groups
use their n x n matrices directly, while a complex matrix ``Z = X + iY`` is
carried as the pair ``(X, Y)`` and realified to the 2n x 2n block matrix
``[[X, -Y], [Y, X]]`` whenever arithmetic is needed. The realification is a
faithful algebra homomorphism, so products, inverses, exp and log computed on
the block matrix coincide with the complex ones. Complex point clouds use the
matching layout: each point ``z = x + iy`` in C^n is the real 2n-vector
``(x, y)``.

The batched ``*_work`` functions operate on arrays of shape ``(..., w, w)``
and are what the training and sampling loops use; ``GroupElement`` and
``AlgebraElement`` are thin immutable wrappers for single elements.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .errors import ContractError, CutLocusError, DomainError, RangeError, SingularityError

EXP_NORM_LIMIT = 50.0
CUT_LOCUS_TOL = 1e-6
GIMBAL_TOL = 1e-6
_TAYLOR_TERMS = 18
_LOG_SQRT_TARGET = 0.25
_MERCATOR_TERMS = 40


class GroupKind(str, enum.Enum):
    SO2 = "SO2"
    SO3 = "SO3"
    GL2RPlus = "GL2RPlus"
    GL2C = "GL2C"


class Field(str, enum.Enum):
    Real = "Real"
    Complex = "Complex"


_KIND_SHAPES = {
    GroupKind.SO2: (2, 1),
    GroupKind.SO3: (3, 3),
    GroupKind.GL2RPlus: (2, 4),
    GroupKind.GL2C: (2, 8),
}


@dataclass(frozen=True)
class GroupSpec:
    """Identifies a hypothesis group and its prior configuration."""

    kind: GroupKind
    matrix_dim: int
    field: Field
    algebra_dim: int
    prior_halfwidth: float = math.pi / 2

    def __post_init__(self):
        n, k = _KIND_SHAPES[GroupKind(self.kind)]
        if (self.matrix_dim, self.algebra_dim) != (n, k):
            raise ContractError(f"{self.kind}: expected (matrix_dim, algebra_dim)=({n}, {k})")
        if (self.field == Field.Complex) != (self.kind == GroupKind.GL2C):
            raise ContractError("field must be Complex iff kind is GL2C")

    @classmethod
    def of(cls, kind) -> "GroupSpec":
        kind = GroupKind(kind)
        n, k = _KIND_SHAPES[kind]
        fld = Field.Complex if kind == GroupKind.GL2C else Field.Real
        return cls(kind, n, fld, k)

    @property
    def is_complex(self) -> bool:
        return self.field == Field.Complex

    @property
    def is_compact(self) -> bool:
        return self.kind in (GroupKind.SO2, GroupKind.SO3)

    @property
    def work_dim(self) -> int:
        """Side length of the real working matrix."""
        return 2 * self.matrix_dim if self.is_complex else self.matrix_dim


SO2 = GroupSpec.of("SO2")
SO3 = GroupSpec.of("SO3")
GL2R = GroupSpec.of("GL2RPlus")
GL2C = GroupSpec.of("GL2C")


# --------------------------------------------------------------------------
# complex pair <-> realified block representation


def realify(pair: np.ndarray) -> np.ndarray:
    """(..., 2, n, n) pair (re, im) -> (..., 2n, 2n) real block matrix."""
    re, im = pair[..., 0, :, :], pair[..., 1, :, :]
    top = np.concatenate([re, -im], axis=-1)
    bot = np.concatenate([im, re], axis=-1)
    return np.concatenate([top, bot], axis=-2)


def derealify(block: np.ndarray) -> np.ndarray:
    """Inverse of :func:`realify` (reads the left block column)."""
    n = block.shape[-1] // 2
    return np.stack([block[..., :n, :n], block[..., n:, :n]], axis=-3)


def _to_work(spec: GroupSpec, mat: np.ndarray) -> np.ndarray:
    return realify(mat) if spec.is_complex else mat


def _from_work(spec: GroupSpec, work: np.ndarray) -> np.ndarray:
    return derealify(work) if spec.is_complex else work


def complexify_points(points: np.ndarray) -> np.ndarray:
    """Real (P, n) points -> complex working layout (P, 2n) with zero imaginary part."""
    return np.concatenate([points, np.zeros_like(points)], axis=-1)


def apply_work(work: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Left action ``g . x`` on point clouds of shape (..., P, w)."""
    return np.matmul(points, np.swapaxes(work, -1, -2))


# --------------------------------------------------------------------------
# generator bases


def _basis_natural(spec: GroupSpec) -> np.ndarray:
    if spec.kind == GroupKind.SO2:
        return np.array([[[0.0, -1.0], [1.0, 0.0]]])
    if spec.kind == GroupKind.SO3:
        L = np.zeros((3, 3, 3))
        # L_i generates rotation about axis i: L_i v = e_i x v
        for i in range(3):
            j, k = (i + 1) % 3, (i + 2) % 3
            L[i, k, j] = 1.0
            L[i, j, k] = -1.0
        return L
    units = np.zeros((4, 2, 2))
    for idx in range(4):
        units[idx, idx // 2, idx % 2] = 1.0
    if spec.kind == GroupKind.GL2RPlus:
        return units
    out = np.zeros((8, 2, 2, 2))
    out[:4, 0] = units
    out[4:, 1] = units
    return out


_BASES = {k: _basis_natural(GroupSpec.of(k)) for k in GroupKind}
_WORK_BASES = {k: _to_work(GroupSpec.of(k), b) for k, b in _BASES.items()}


def basis(spec: GroupSpec) -> np.ndarray:
    """Fixed generator basis in the natural representation (copy)."""
    return _BASES[spec.kind].copy()


def work_basis(spec: GroupSpec) -> np.ndarray:
    return _WORK_BASES[spec.kind]


def coeffs_to_work(spec: GroupSpec, coeffs: np.ndarray) -> np.ndarray:
    coeffs = np.asarray(coeffs, dtype=float)
    return np.tensordot(coeffs, _WORK_BASES[spec.kind], axes=([-1], [0]))


def work_to_coeffs(spec: GroupSpec, A: np.ndarray) -> np.ndarray:
    """Coordinates of algebra elements in the fixed basis (exact for in-algebra input)."""
    kind = spec.kind
    if kind == GroupKind.SO2:
        return A[..., 1, 0:1].copy()
    if kind == GroupKind.SO3:
        return np.stack([A[..., 2, 1], A[..., 0, 2], A[..., 1, 0]], axis=-1)
    if kind == GroupKind.GL2RPlus:
        return A.reshape(A.shape[:-2] + (4,)).copy()
    pair = derealify(A)
    return pair.reshape(pair.shape[:-3] + (8,)).copy()


# --------------------------------------------------------------------------
# exponential


def _expm_taylor(A: np.ndarray) -> np.ndarray:
    """Scaling and squaring with an order-18 Taylor polynomial."""
    norms = np.linalg.norm(A, axis=(-2, -1))
    top = float(np.max(norms)) if norms.size else 0.0
    squarings = (max(0, math.ceil(math.log2(top))) if top > 0 else 0) + 4
    B = A / 2.0**squarings
    eye = np.broadcast_to(np.eye(A.shape[-1]), A.shape)
    term = eye.copy()
    out = eye.copy()
    for k in range(1, _TAYLOR_TERMS + 1):
        term = np.matmul(term, B) / k
        out = out + term
    for _ in range(squarings):
        out = np.matmul(out, out)
    return out


def _so2_exp(A: np.ndarray) -> np.ndarray:
    th = A[..., 1, 0]
    c, s = np.cos(th), np.sin(th)
    return np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)


def rotation2(theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    c, s = np.cos(theta), np.sin(theta)
    return np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)


def _hat(w: np.ndarray) -> np.ndarray:
    z = np.zeros(w.shape[:-1])
    x, y, zz = w[..., 0], w[..., 1], w[..., 2]
    return np.stack(
        [np.stack([z, -zz, y], -1), np.stack([zz, z, -x], -1), np.stack([-y, x, z], -1)], -2
    )


def _so3_exp(A: np.ndarray) -> np.ndarray:
    w = np.stack([A[..., 2, 1], A[..., 0, 2], A[..., 1, 0]], axis=-1)
    th2 = np.sum(w * w, axis=-1)
    th = np.sqrt(th2)
    small = th < 1e-4
    safe = np.where(small, 1.0, th)
    a = np.where(small, 1 - th2 / 6 + th2 * th2 / 120, np.sin(safe) / safe)
    b = np.where(small, 0.5 - th2 / 24 + th2 * th2 / 720, (1 - np.cos(safe)) / (safe * safe))
    K = _hat(w)
    eye = np.broadcast_to(np.eye(3), K.shape)
    return eye + a[..., None, None] * K + b[..., None, None] * np.matmul(K, K)


def expm_work(spec: GroupSpec, A: np.ndarray) -> np.ndarray:
    """Batched exp on working matrices of shape (..., w, w)."""
    A = np.asarray(A, dtype=float)
    if A.size and float(np.max(np.linalg.norm(A, axis=(-2, -1)))) > EXP_NORM_LIMIT:
        raise RangeError(f"exp input norm exceeds {EXP_NORM_LIMIT}")
    if spec.kind == GroupKind.SO2:
        return _so2_exp(A)
    if spec.kind == GroupKind.SO3:
        return _so3_exp(A)
    return _expm_taylor(A)


def expm_coeffs(spec: GroupSpec, coeffs: np.ndarray) -> np.ndarray:
    return expm_work(spec, coeffs_to_work(spec, coeffs))


# --------------------------------------------------------------------------
# logarithm


def _so2_log(G: np.ndarray, check: bool) -> np.ndarray:
    th = np.arctan2(G[..., 1, 0], G[..., 0, 0])
    if check and np.any(np.abs(th) > math.pi - CUT_LOCUS_TOL):
        raise CutLocusError("SO(2) rotation angle at the cut locus (pi)")
    return th[..., None, None] * _WORK_BASES[GroupKind.SO2][0]


def so3_angle(R: np.ndarray) -> np.ndarray:
    """Rotation angle in [0, pi], accurate over the whole range."""
    w = 0.5 * np.stack([R[..., 2, 1] - R[..., 1, 2], R[..., 0, 2] - R[..., 2, 0],
                        R[..., 1, 0] - R[..., 0, 1]], -1)
    c = 0.5 * (np.trace(R, axis1=-2, axis2=-1) - 1.0)
    return np.arctan2(np.linalg.norm(w, axis=-1), c)


def _so3_log_vec(R: np.ndarray, check: bool = True) -> np.ndarray:
    w = 0.5 * np.stack([R[..., 2, 1] - R[..., 1, 2], R[..., 0, 2] - R[..., 2, 0],
                        R[..., 1, 0] - R[..., 0, 1]], -1)
    s = np.linalg.norm(w, axis=-1)
    c = 0.5 * (np.trace(R, axis1=-2, axis2=-1) - 1.0)
    th = np.arctan2(s, c)
    if check and np.any(th > math.pi - CUT_LOCUS_TOL):
        raise CutLocusError("SO(3) rotation angle at the cut locus (pi)")
    small = s < 1e-8
    factor = np.where(small, 1.0 + th * th / 6.0, th / np.where(small, 1.0, s))
    out = factor[..., None] * w
    # near pi the skew part loses precision; recover the axis from the symmetric part
    far = c < -0.5
    if np.any(far):
        Rf, cf, thf, wf = R[far], c[far], th[far], w[far]
        sym = 0.5 * (Rf + np.swapaxes(Rf, -1, -2)) - cf[:, None, None] * np.eye(3)
        nn = sym / (1.0 - cf)[:, None, None]
        diag = np.diagonal(nn, axis1=-2, axis2=-1)
        col = np.argmax(diag, axis=-1)
        idx = np.arange(len(col))
        axis = nn[idx, :, col] / np.sqrt(diag[idx, col])[:, None]
        sign = np.sign(np.sum(axis * wf, axis=-1))
        sign[sign == 0] = 1.0
        out[far] = (sign * thf)[:, None] * axis
    return out


def _so3_log(G: np.ndarray, check: bool) -> np.ndarray:
    return _hat(_so3_log_vec(G, check))


def _inv(M: np.ndarray) -> np.ndarray:
    return np.linalg.inv(M)


def sqrtm_db(G: np.ndarray, tol: float = 1e-14, max_iter: int = 100) -> np.ndarray:
    """Principal square root by the (product-form free) Denman-Beavers iteration."""
    Y = G.copy()
    Z = np.broadcast_to(np.eye(G.shape[-1]), G.shape).copy()
    for _ in range(max_iter):
        Yn = 0.5 * (Y + _inv(Z))
        Zn = 0.5 * (Z + _inv(Y))
        delta = np.max(np.abs(Yn - Y)) if Y.size else 0.0
        Y, Z = Yn, Zn
        if delta <= tol * max(1.0, float(np.max(np.abs(Y))) if Y.size else 1.0):
            break
    return Y


def _negative_real_eigs(G: np.ndarray) -> np.ndarray:
    ev = np.linalg.eigvals(G)
    bad = (np.abs(ev.imag) <= 1e-12 * np.maximum(1.0, np.abs(ev))) & (ev.real <= 0)
    return np.any(bad, axis=-1)


def _logm_iss(G: np.ndarray, check: bool) -> np.ndarray:
    """Inverse scaling and squaring: square roots until near I, then Mercator series."""
    if check and np.any(_negative_real_eigs(G)):
        raise DomainError("eigenvalue on the closed negative real axis; no principal log")
    n = G.shape[-1]
    eye = np.eye(n)
    flat = G.reshape((-1, n, n)).copy()
    out = np.zeros_like(flat)
    todo = np.arange(len(flat))
    X = flat
    k = 0
    roots = np.zeros(len(flat), dtype=int)
    while len(todo):
        dist = np.linalg.norm(X[todo] - eye, axis=(-2, -1))
        done = dist < _LOG_SQRT_TARGET
        roots[todo[done]] = k
        todo = todo[~done]
        if not len(todo):
            break
        if k > 60:
            raise DomainError("square-root iteration failed to approach the identity")
        X[todo] = sqrtm_db(X[todo])
        k += 1
    E = X - eye
    term = E.copy()
    acc = E.copy()
    for j in range(2, _MERCATOR_TERMS + 1):
        term = np.matmul(term, E)
        acc = acc + ((-1.0) ** (j + 1) / j) * term
    out = acc * (2.0**roots)[:, None, None]
    return out.reshape(G.shape)


def logm_work(spec: GroupSpec, G: np.ndarray, check: bool = True) -> np.ndarray:
    """Batched principal logarithm on working matrices."""
    G = np.asarray(G, dtype=float)
    if spec.kind == GroupKind.SO2:
        return _so2_log(G, check)
    if spec.kind == GroupKind.SO3:
        return _so3_log(G, check)
    A = _logm_iss(G, check)
    if spec.is_complex:
        A = _project_block(A)
    return A


def _project_block(A: np.ndarray) -> np.ndarray:
    """Nearest matrix of the form [[X, -Y], [Y, X]]; removes round-off asymmetry."""
    n = A.shape[-1] // 2
    X = 0.5 * (A[..., :n, :n] + A[..., n:, n:])
    Y = 0.5 * (A[..., n:, :n] - A[..., :n, n:])
    return realify(np.stack([X, Y], axis=-3))


def in_log_domain(spec: GroupSpec, G: np.ndarray) -> np.ndarray:
    """Boolean mask of elements on which :func:`logm_work` succeeds."""
    G = np.asarray(G, dtype=float)
    if spec.kind == GroupKind.SO2:
        return np.abs(np.arctan2(G[..., 1, 0], G[..., 0, 0])) <= math.pi - CUT_LOCUS_TOL
    if spec.kind == GroupKind.SO3:
        return so3_angle(G) <= math.pi - CUT_LOCUS_TOL
    return ~_negative_real_eigs(G)


# --------------------------------------------------------------------------
# element types


@dataclass(frozen=True, eq=False)
class GroupElement:
    """A group element; ``mat`` is (n, n) for real groups, (2, n, n) = (re, im) for GL2C."""

    spec: GroupSpec
    mat: np.ndarray = field(repr=False)

    def __post_init__(self):
        mat = np.array(self.mat, dtype=float)
        n = self.spec.matrix_dim
        want = (2, n, n) if self.spec.is_complex else (n, n)
        if mat.shape != want:
            raise ContractError(f"{self.spec.kind}: matrix shape {mat.shape} != {want}")
        if not np.all(np.isfinite(mat)):
            raise ContractError("non-finite group element")
        mat.setflags(write=False)
        object.__setattr__(self, "mat", mat)
        _check_element(self.spec, mat)

    @classmethod
    def from_work(cls, spec: GroupSpec, work: np.ndarray) -> "GroupElement":
        return cls(spec, _from_work(spec, np.asarray(work, dtype=float)))

    @classmethod
    def identity(cls, spec: GroupSpec) -> "GroupElement":
        return cls.from_work(spec, np.eye(spec.work_dim))

    @property
    def work(self) -> np.ndarray:
        return _to_work(self.spec, self.mat)

    def __matmul__(self, other: "GroupElement") -> "GroupElement":
        if other.spec != self.spec:
            raise ContractError("cannot multiply elements of different groups")
        return GroupElement.from_work(self.spec, self.work @ other.work)

    def inverse(self) -> "GroupElement":
        if self.spec.is_compact:
            return GroupElement(self.spec, self.mat.T)
        return GroupElement.from_work(self.spec, np.linalg.inv(self.work))

    def act(self, points: np.ndarray) -> np.ndarray:
        """Apply to a (P, w) point array (complex layout for GL2C)."""
        return apply_work(self.work, np.asarray(points, dtype=float))

    def flat(self) -> np.ndarray:
        """Row-major entries; complex entries interleaved (re, im)."""
        if self.spec.is_complex:
            return np.stack([self.mat[0], self.mat[1]], axis=-1).reshape(-1)
        return self.mat.reshape(-1)

    def __repr__(self) -> str:
        return f"GroupElement({self.spec.kind.value}, {np.array2string(self.mat, precision=4)})"


def _check_element(spec: GroupSpec, mat: np.ndarray) -> None:
    if spec.is_compact:
        n = spec.matrix_dim
        if np.linalg.norm(mat.T @ mat - np.eye(n)) > 1e-8 or abs(np.linalg.det(mat) - 1) > 1e-8:
            raise ContractError(f"{spec.kind.value} element is not special orthogonal")
    elif spec.kind == GroupKind.GL2RPlus:
        if np.linalg.det(mat) <= 0:
            raise ContractError("GL2RPlus element must have positive determinant")
    else:
        re, im = mat
        det = complex(re[0, 0], im[0, 0]) * complex(re[1, 1], im[1, 1]) - complex(
            re[0, 1], im[0, 1]
        ) * complex(re[1, 0], im[1, 0])
        if abs(det) < 1e-12:
            raise ContractError("GL2C element is singular")


@dataclass(frozen=True, eq=False)
class AlgebraElement:
    spec: GroupSpec
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float).reshape(-1)
        if c.shape != (self.spec.algebra_dim,):
            raise ContractError(f"expected {self.spec.algebra_dim} coefficients, got {c.shape}")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def from_work(cls, spec: GroupSpec, work: np.ndarray) -> "AlgebraElement":
        return cls(spec, work_to_coeffs(spec, np.asarray(work, dtype=float)))

    @classmethod
    def zero(cls, spec: GroupSpec) -> "AlgebraElement":
        return cls(spec, np.zeros(spec.algebra_dim))

    @property
    def work(self) -> np.ndarray:
        return coeffs_to_work(self.spec, self.coeffs)

    @property
    def mat(self) -> np.ndarray:
        return np.tensordot(self.coeffs, _BASES[self.spec.kind], axes=([0], [0]))

    def __mul__(self, s: float) -> "AlgebraElement":
        return AlgebraElement(self.spec, self.coeffs * float(s))

    __rmul__ = __mul__

    def __repr__(self) -> str:
        return f"AlgebraElement({self.spec.kind.value}, {np.array2string(self.coeffs, precision=4)})"


def mat_exp(A: AlgebraElement) -> GroupElement:
    """Exponential map from the algebra to the group."""
    return GroupElement.from_work(A.spec, expm_work(A.spec, A.work))


def mat_log(g: GroupElement) -> AlgebraElement:
    """Principal logarithm; raises CutLocusError / DomainError outside the branch."""
    return AlgebraElement.from_work(g.spec, logm_work(g.spec, g.work))


# --------------------------------------------------------------------------
# priors


def quaternion_to_matrix(q: np.ndarray) -> np.ndarray:
    """Unit quaternions (..., 4) in (w, x, y, z) order -> rotation matrices."""
    w, x, y, z = np.moveaxis(q, -1, 0)
    return np.stack(
        [
            np.stack([1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)], -1),
            np.stack([2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)], -1),
            np.stack([2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)], -1),
        ],
        -2,
    )


def sample_prior_work(spec: GroupSpec, rng: np.random.Generator, size: int) -> np.ndarray:
    """Draw ``size`` prior elements as working matrices."""
    if spec.kind == GroupKind.SO2:
        return rotation2(rng.uniform(-math.pi, math.pi, size))
    if spec.kind == GroupKind.SO3:
        q = rng.standard_normal((size, 4))
        q /= np.linalg.norm(q, axis=-1, keepdims=True)
        return quaternion_to_matrix(q)
    h = spec.prior_halfwidth
    coeffs = rng.uniform(-h, h, (size, spec.algebra_dim))
    return expm_coeffs(spec, coeffs)


def sample_prior(spec: GroupSpec, rng: np.random.Generator) -> GroupElement:
    return GroupElement.from_work(spec, sample_prior_work(spec, rng, 1)[0])


# --------------------------------------------------------------------------
# finite subgroups


class DiscreteName(str, enum.Enum):
    C4 = "C4"
    D4 = "D4"
    Tet = "Tet"
    Oct = "Oct"
    Ico = "Ico"
    SO2aroundZ = "SO2aroundZ"


@dataclass(frozen=True, eq=False)
class DiscreteGroupTable:
    name: DiscreteName
    elements: tuple
    order: int
    axis: Optional[np.ndarray] = None

    @property
    def spec(self) -> Optional[GroupSpec]:
        return self.elements[0].spec if self.elements else None

    def work_stack(self) -> np.ndarray:
        return np.stack([e.work for e in self.elements])

    def nearest(self, work: np.ndarray):
        """Index of and Frobenius distance to the nearest table element, batched."""
        tab = self.work_stack()
        d = np.linalg.norm(work[..., None, :, :] - tab, axis=(-2, -1))
        idx = np.argmin(d, axis=-1)
        return idx, np.take_along_axis(d, idx[..., None], -1)[..., 0]


def _signed_permutations() -> list:
    import itertools

    mats = []
    for perm in itertools.permutations(range(3)):
        for signs in itertools.product((1.0, -1.0), repeat=3):
            M = np.zeros((3, 3))
            for r, c in enumerate(perm):
                M[r, c] = signs[r]
            if np.linalg.det(M) > 0:
                mats.append(M)
    return mats


def _maps_set_to_itself(M: np.ndarray, pts: np.ndarray, tol: float = 1e-9) -> bool:
    moved = pts @ M.T
    d = np.linalg.norm(moved[:, None, :] - pts[None, :, :], axis=-1)
    return bool(np.all(d.min(axis=1) < tol))


def _closure(gens: Sequence[np.ndarray], limit: int = 200) -> list:
    n = gens[0].shape[0]
    elems = [np.eye(n)]
    frontier = [np.eye(n)]
    while frontier:
        nxt = []
        for a in frontier:
            for g in gens:
                c = g @ a
                if not any(np.linalg.norm(c - e) < 1e-8 for e in elems):
                    elems.append(c)
                    nxt.append(c)
        frontier = nxt
        if len(elems) > limit:
            raise RuntimeError("closure did not terminate")
    return elems


def _axis_rotation(axis, angle) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    return _so3_exp(_hat(angle * axis))


PHI = (1.0 + math.sqrt(5.0)) / 2.0


def icosahedron_vertices() -> np.ndarray:
    out = []
    for a in (1.0, -1.0):
        for b in (PHI, -PHI):
            out += [(0.0, a, b), (a, b, 0.0), (b, 0.0, a)]
    return np.array(out)


TET_VERTICES = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], dtype=float)


def _build_table(name: DiscreteName) -> DiscreteGroupTable:
    if name == DiscreteName.C4:
        mats = rotation2(np.arange(4) * (math.pi / 2))
        mats = np.round(mats)
        return DiscreteGroupTable(name, tuple(GroupElement(SO2, m) for m in mats), 4)
    if name == DiscreteName.D4:
        rots = np.round(rotation2(np.arange(4) * (math.pi / 2)))
        flip = np.diag([1.0, -1.0])
        mats = list(rots) + [r @ flip for r in rots]
        elems = tuple(GroupElement(GL2C, np.stack([m, np.zeros((2, 2))])) for m in mats)
        return DiscreteGroupTable(name, elems, 8)
    if name == DiscreteName.Oct:
        mats = _signed_permutations()
        return DiscreteGroupTable(name, tuple(GroupElement(SO3, m) for m in mats), 24)
    if name == DiscreteName.Tet:
        mats = [m for m in _signed_permutations() if _maps_set_to_itself(m, TET_VERTICES)]
        return DiscreteGroupTable(name, tuple(GroupElement(SO3, m) for m in mats), 12)
    if name == DiscreteName.Ico:
        five = _axis_rotation((0.0, 1.0, PHI), 2 * math.pi / 5)
        three = np.array([[0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
        mats = _closure([five, three])
        mats = [_reorthonormalize(m) for m in mats]
        return DiscreteGroupTable(name, tuple(GroupElement(SO3, m) for m in mats), 60)
    if name == DiscreteName.SO2aroundZ:
        return DiscreteGroupTable(name, (), 0, axis=np.array([0.0, 0.0, 1.0]))
    raise ValueError(f"unknown discrete group {name!r}")


def _reorthonormalize(M: np.ndarray) -> np.ndarray:
    U, _, Vt = np.linalg.svd(M)
    return U @ Vt


_TABLES: dict = {}


def discrete_group(name) -> DiscreteGroupTable:
    """Element table of a finite rotation group (or the axis for SO2aroundZ)."""
    name = DiscreteName(name)
    if name not in _TABLES:
        _TABLES[name] = _build_table(name)
    return _TABLES[name]


# --------------------------------------------------------------------------
# decompositions and parameterizations


def polar_rotation_work(M: np.ndarray) -> np.ndarray:
    """Nearest special-orthogonal matrix, batched over (..., n, n) real input."""
    U, S, Vt = np.linalg.svd(M)
    if np.any(S[..., -1] < 1e-10):
        raise SingularityError("polar decomposition of a (near-)singular matrix")
    R = np.matmul(U, Vt)
    neg = np.linalg.det(R) < 0
    if np.any(neg):
        U = U.copy()
        # smallest singular value is last in numpy's ordering
        U[neg, :, -1] *= -1.0
        R = np.matmul(U, Vt)
    return R


def polar_rotation(g: GroupElement) -> GroupElement:
    """Orthogonal polar factor with det +1 (real groups only)."""
    if g.spec.is_complex:
        raise ContractError("polar_rotation expects a real matrix group element")
    R = polar_rotation_work(g.mat)
    return GroupElement(SO2 if g.spec.matrix_dim == 2 else SO3, R)


class EulerAngles(NamedTuple):
    yaw: float
    pitch: float
    roll: float
    gimbal_lock: bool = False


def euler_zyx(R: np.ndarray):
    """Intrinsic Z-Y-X angles (yaw, pitch, roll) and a gimbal-lock mask, batched."""
    R = np.asarray(R, dtype=float)
    pitch = np.arcsin(np.clip(-R[..., 2, 0], -1.0, 1.0))
    lock = np.abs(np.abs(pitch) - math.pi / 2) < GIMBAL_TOL
    yaw = np.arctan2(R[..., 1, 0], R[..., 0, 0])
    roll = np.arctan2(R[..., 2, 1], R[..., 2, 2])
    # at gimbal lock only yaw -/+ roll is determined; put it all in yaw
    yaw_lock = np.arctan2(-R[..., 0, 1], R[..., 1, 1])
    yaw = np.where(lock, yaw_lock, yaw)
    roll = np.where(lock, 0.0, roll)
    return yaw, pitch, roll, lock


def euler_zyx_to_matrix(yaw, pitch, roll) -> np.ndarray:
    yaw, pitch, roll = (np.asarray(a, dtype=float) for a in (yaw, pitch, roll))
    cz, sz = np.cos(yaw), np.sin(yaw)
    cy, sy = np.cos(pitch), np.sin(pitch)
    cx, sx = np.cos(roll), np.sin(roll)
    return np.stack(
        [
            np.stack([cz * cy, cz * sy * sx - sz * cx, cz * sy * cx + sz * sx], -1),
            np.stack([sz * cy, sz * sy * sx + cz * cx, sz * sy * cx - cz * sx], -1),
            np.stack([-sy, cy * sx, cy * cx], -1),
        ],
        -2,
    )


def rotation_to_angles(g: GroupElement):
    """``(theta,)`` for SO(2); :class:`EulerAngles` (intrinsic ZYX) for SO(3)."""
    if g.spec.kind == GroupKind.SO2:
        return (float(np.arctan2(g.mat[1, 0], g.mat[0, 0])),)
    if g.spec.kind == GroupKind.SO3:
        yaw, pitch, roll, lock = euler_zyx(g.mat)
        return EulerAngles(float(yaw), float(pitch), float(roll), bool(lock))
    raise ContractError("rotation_to_angles expects an SO2 or SO3 element")


def mollweide_project(lon, lat, tol: float = 1e-10, max_iter: int = 100):
    """Unit-radius Mollweide forward projection; returns (u, v)."""
    lon = np.asarray(lon, dtype=float)
    lat = np.asarray(lat, dtype=float)
    target = math.pi * np.sin(lat)
    theta = lat.copy()
    pole = np.abs(np.abs(lat) - math.pi / 2) < 1e-12
    for _ in range(max_iter):
        f = 2 * theta + np.sin(2 * theta) - target
        fp = 2 + 2 * np.cos(2 * theta)
        step = np.where(pole | (fp == 0), 0.0, f / np.where(fp == 0, 1.0, fp))
        theta = theta - step
        if np.all(np.abs(step) < tol):
            break
    theta = np.where(pole, np.sign(lat) * math.pi / 2, theta)
    u = (2 * math.sqrt(2) / math.pi) * lon * np.cos(theta)
    v = math.sqrt(2) * np.sin(theta)
    return u, v
