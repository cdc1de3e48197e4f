"""GELU MLP velocity networks on a flat parameter vector."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..errors import ContractError, DivergenceError
from ..liegroup import AlgebraElement, GroupSpec
from . import autodiff as ad


class EmbeddingMode(str, enum.Enum):
    Concat = "Concat"
    Sinusoidal = "Sinusoidal"


@dataclass(frozen=True)
class TimeEmbedding:
    mode: EmbeddingMode = EmbeddingMode.Concat
    dim: int = 1
    max_frequency: float = 64.0

    def __post_init__(self):
        object.__setattr__(self, "mode", EmbeddingMode(self.mode))
        if self.mode == EmbeddingMode.Concat and self.dim != 1:
            raise ContractError("Concat time embedding has dim 1")
        if self.mode == EmbeddingMode.Sinusoidal and (self.dim < 2 or self.dim % 2):
            raise ContractError("Sinusoidal time embedding needs an even dim >= 2")

    @classmethod
    def sinusoidal(cls, dim: int = 16, max_frequency: float = 64.0) -> "TimeEmbedding":
        return cls(EmbeddingMode.Sinusoidal, dim, max_frequency)

    def frequencies(self) -> np.ndarray:
        # geometric from 1 rad/unit time, so the lowest pair is injective on [0, 1]
        half = self.dim // 2
        if half == 1:
            return np.ones(1)
        return self.max_frequency ** (np.arange(half) / (half - 1))

    def __call__(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if self.mode == EmbeddingMode.Concat:
            return t[:, None]
        ang = t[:, None] * self.frequencies()[None, :]
        return np.concatenate([np.sin(ang), np.cos(ang)], axis=1)

    def tape(self, t: ad.Tensor) -> ad.Tensor:
        """Embedding built from tape primitives (differentiable in t)."""
        if self.mode == EmbeddingMode.Concat:
            return ad.reshape(t, (-1, 1))
        ang = ad.reshape(t, (-1, 1)) * self.frequencies()[None, :]
        return ad.concat([ad.sin(ang), ad.cos(ang)], axis=1)


class MLP:
    """Dense GELU network ``in -> [width] * depth -> out`` on a flat parameter vector."""

    def __init__(self, sizes: Sequence[int], params: Optional[np.ndarray] = None):
        self.sizes = tuple(int(s) for s in sizes)
        self._shapes = []
        off = 0
        for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:]):
            self._shapes.append((off, fan_in, fan_out))
            off += fan_in * fan_out + fan_out
        self.n_params = off
        if params is None:
            params = np.zeros(off)
        params = np.asarray(params, dtype=float)
        if params.shape != (off,):
            raise ContractError(f"expected {off} parameters, got {params.shape}")
        self.params = params.copy()

    def init(self, rng: np.random.Generator, zero_head: bool = True) -> "MLP":
        """Kaiming-uniform (fan-in) hidden layers, zero biases, optionally zero head."""
        last = len(self._shapes) - 1
        for i, (off, fan_in, fan_out) in enumerate(self._shapes):
            W, b = self._views(self.params, i)
            bound = math.sqrt(6.0 / fan_in)
            W[...] = 0.0 if (zero_head and i == last) else rng.uniform(-bound, bound, W.shape)
            b[...] = 0.0
        return self

    def _views(self, flat: np.ndarray, i: int) -> Tuple[np.ndarray, np.ndarray]:
        off, fan_in, fan_out = self._shapes[i]
        W = flat[off : off + fan_in * fan_out].reshape(fan_in, fan_out)
        b = flat[off + fan_in * fan_out : off + fan_in * fan_out + fan_out]
        return W, b

    @property
    def n_layers(self) -> int:
        return len(self._shapes)

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Forward pass without recording a tape."""
        h = X
        for i in range(self.n_layers):
            W, b = self._views(self.params, i)
            h = h @ W + b
            if i < self.n_layers - 1:
                h = ad.gelu_value(h)
        return h

    def tape_forward(self, X: ad.Tensor) -> Tuple[ad.Tensor, List[ad.Tensor]]:
        """Forward pass on the tape; returns the output and per-layer (W, b) leaves."""
        leaves = []
        h = X
        for i in range(self.n_layers):
            Wv, bv = self._views(self.params, i)
            W = ad.Tensor(Wv, requires_grad=True)
            b = ad.Tensor(bv, requires_grad=True)
            leaves += [W, b]
            h = h @ W + b
            if i < self.n_layers - 1:
                h = ad.gelu(h)
        return h, leaves

    def flat_grad(self, leaves: List[ad.Tensor]) -> np.ndarray:
        g = np.zeros(self.n_params)
        for i in range(self.n_layers):
            gW, gb = self._views(g, i)
            W, b = leaves[2 * i], leaves[2 * i + 1]
            if W.grad is not None:
                gW[...] = W.grad
            if b.grad is not None:
                gb[...] = b.grad
        return g


def default_width(spec: GroupSpec, point_dim: int) -> int:
    if point_dim == 3:
        return 256
    return 256 if spec.is_complex else 128


class VelocityNetwork:
    """Maps (point cloud x_t, time t) to Lie algebra coefficients.

    Clouds enter in the group's working layout ``(P, w)``; complex clouds
    ``(re..., im...)`` are reordered to interleaved ``(re, im)`` per coordinate
    before flattening.
    """

    def __init__(
        self,
        spec: GroupSpec,
        n_points: int,
        point_dim: int,
        width: int,
        embedding: TimeEmbedding,
        depth: int = 3,
        params: Optional[np.ndarray] = None,
    ):
        self.spec = spec
        self.n_points = int(n_points)
        self.point_dim = int(point_dim)
        self.width = int(width)
        self.depth = int(depth)
        self.embedding = embedding
        self.cloud_dim = self.n_points * self.work_point_dim
        self.input_dim = self.cloud_dim + embedding.dim
        sizes = [self.input_dim] + [self.width] * self.depth + [spec.algebra_dim]
        self.mlp = MLP(sizes, params)

    @classmethod
    def create(cls, spec, n_points, point_dim, rng, width=None, embedding=None, depth=3):
        if embedding is None:
            embedding = TimeEmbedding.sinusoidal() if point_dim == 3 else TimeEmbedding()
        width = width or default_width(spec, point_dim)
        net = cls(spec, n_points, point_dim, width, embedding, depth)
        net.mlp.init(rng)
        return net

    @property
    def work_point_dim(self) -> int:
        return 2 * self.point_dim if self.spec.is_complex else self.point_dim

    @property
    def params(self) -> np.ndarray:
        return self.mlp.params

    @params.setter
    def params(self, value):
        self.mlp.params = np.asarray(value, dtype=float).copy()

    def flatten(self, clouds: np.ndarray) -> np.ndarray:
        clouds = np.asarray(clouds, dtype=float)
        if clouds.shape[-2:] != (self.n_points, self.work_point_dim):
            raise ContractError(
                f"cloud shape {clouds.shape[-2:]} != {(self.n_points, self.work_point_dim)}"
            )
        lead = clouds.shape[:-2]
        if self.spec.is_complex:
            d = self.point_dim
            clouds = np.stack([clouds[..., :d], clouds[..., d:]], axis=-1)
        return clouds.reshape(lead + (-1,))

    def inputs(self, clouds: np.ndarray, t) -> np.ndarray:
        flat = np.atleast_2d(self.flatten(clouds))
        t = np.broadcast_to(np.asarray(t, dtype=float), (flat.shape[0],))
        return np.concatenate([flat, self.embedding(t)], axis=1)

    def predict(self, clouds: np.ndarray, t) -> np.ndarray:
        """Batched coefficients, shape (B, algebra_dim)."""
        return self.mlp.apply(self.inputs(clouds, t))

    def tape_forward(self, clouds: np.ndarray, t, wrt_input: bool = False):
        """Forward on the tape with the time embedding built from tape primitives."""
        flat = ad.Tensor(np.atleast_2d(self.flatten(clouds)), requires_grad=wrt_input)
        tt = ad.Tensor(np.broadcast_to(np.asarray(t, dtype=float), (flat.shape[0],)).copy())
        X = ad.concat([flat, self.embedding.tape(tt)], axis=1)
        out, leaves = self.mlp.tape_forward(X)
        return out, leaves, flat


def forward(net: VelocityNetwork, cloud, t: float) -> AlgebraElement:
    """Single-cloud evaluation returning an algebra element of ``net.spec``."""
    points = cloud.points if hasattr(cloud, "points") else np.asarray(cloud, dtype=float)
    if net.spec.is_complex and points.shape[-1] == net.point_dim:
        points = np.concatenate([points, np.zeros_like(points)], axis=-1)
    return AlgebraElement(net.spec, net.predict(points[None], t)[0])


def loss_and_grad(net, clouds, t, targets, batch_index: Optional[int] = None):
    """Mean squared coefficient error and its gradient w.r.t. the flat parameters.

    ``net`` may be any object with ``tape_forward(clouds, t)`` and ``mlp``.
    """
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    if len(targets) == 0:
        raise ContractError("empty batch")
    out, leaves, _ = net.tape_forward(clouds, t)
    diff = ad.add(out, ad.Tensor(-targets))
    per = ad.sum_(ad.square(diff), axis=1)
    loss = ad.mean(per)
    value = float(loss.value)
    if not math.isfinite(value):
        raise DivergenceError(f"non-finite loss in batch {batch_index}", batch_index=batch_index)
    ad.backward(loss)
    return value, net.mlp.flat_grad(leaves)
