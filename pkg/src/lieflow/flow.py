"""Flow matching on matrix Lie groups for symmetry discovery.

Training pairs couple a data cloud ``x1`` with a prior element ``g``:
``x0 = g x1``, ``A = log(g^-1)`` and ``x_t = exp(tA) x0``; the regression
target is the constant ``A``. Sampling integrates the learned algebra-valued
field with exponential Euler steps acting on the left, accumulating
``M <- exp(dt A_t) M`` so that ``x1' = M x0``; ``h = M g`` is the generated
group element.
"""

from __future__ import annotations

import enum
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from .datasets import Dataset, PointCloud, make_rng
from .errors import CutLocusError, DivergenceError, GenerationError
from .liegroup import (
    AlgebraElement,
    GroupElement,
    GroupSpec,
    apply_work,
    coeffs_to_work,
    complexify_points,
    expm_work,
    in_log_domain,
    logm_work,
    sample_prior_work,
    work_to_coeffs,
)
from .net.mlp import TimeEmbedding, VelocityNetwork, loss_and_grad
from .net.optim import Adam

log = logging.getLogger(__name__)

PRIOR_RETRIES = 16


class ScheduleMode(str, enum.Enum):
    Uniform = "Uniform"
    Power = "Power"


@dataclass(frozen=True)
class TimeSchedule:
    """Training-time sampler; ``Power`` has density n t^(n-1) on [0, 1]."""

    mode: ScheduleMode = ScheduleMode.Uniform
    n: float = 5.0

    def __post_init__(self):
        object.__setattr__(self, "mode", ScheduleMode(self.mode))
        if self.mode == ScheduleMode.Power and not self.n >= 1:
            raise ValueError("power schedule needs n >= 1")

    @classmethod
    def power(cls, n: float = 5.0) -> "TimeSchedule":
        return cls(ScheduleMode.Power, n)

    def density(self, t):
        t = np.asarray(t, dtype=float)
        if self.mode == ScheduleMode.Uniform:
            return np.ones_like(t)
        return self.n * t ** (self.n - 1)

    def cdf(self, t):
        t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
        return t if self.mode == ScheduleMode.Uniform else t**self.n


def sample_time(schedule: TimeSchedule, rng: np.random.Generator, size=None):
    """Uniform U[0,1), or inverse-CDF u^(1/n) for the power schedule."""
    u = rng.random(size)
    if schedule.mode == ScheduleMode.Uniform:
        return u
    t = u ** (1.0 / schedule.n)
    # u < 1 implies t < 1 mathematically; guard the rounding edge
    return np.minimum(t, np.nextafter(1.0, 0.0))


@dataclass(frozen=True)
class SamplerConfig:
    steps: int = 20
    schedule: TimeSchedule = field(default_factory=TimeSchedule)

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")

    @property
    def dt(self) -> float:
        return 1.0 / self.steps


def default_steps(point_dim: int) -> int:
    return 100 if point_dim == 3 else 20


def to_work_points(spec: GroupSpec, points: np.ndarray) -> np.ndarray:
    """Real data clouds (..., P, d) in the working layout of ``spec``."""
    points = np.asarray(points, dtype=float)
    return complexify_points(points) if spec.is_complex else points


def draw_prior(spec: GroupSpec, rng: np.random.Generator, size: int) -> np.ndarray:
    """Prior draws with cut-locus / log-domain rejects resampled (bounded retries)."""
    G = sample_prior_work(spec, rng, size)
    for _ in range(PRIOR_RETRIES):
        bad = ~in_log_domain(spec, np.linalg.inv(G) if not spec.is_compact else np.swapaxes(G, -1, -2))
        if not np.any(bad):
            return G
        G[bad] = sample_prior_work(spec, rng, int(bad.sum()))
    raise CutLocusError(f"prior draws stayed outside the log domain after {PRIOR_RETRIES} retries")


def _inverse(spec: GroupSpec, G: np.ndarray) -> np.ndarray:
    return np.swapaxes(G, -1, -2) if spec.is_compact else np.linalg.inv(G)


def training_batch(spec: GroupSpec, x1: np.ndarray, schedule: TimeSchedule, rng, t=None, G=None):
    """Vectorized training pairs for clouds ``x1`` (B, P, w) in working layout.

    Returns ``(x_t, t, coeffs, G)``.
    """
    B = len(x1)
    if G is None:
        G = draw_prior(spec, rng, B)
    if t is None:
        t = sample_time(schedule, rng, B)
    t = np.broadcast_to(np.asarray(t, dtype=float), (B,))
    x0 = apply_work(G, x1)
    A = logm_work(spec, _inverse(spec, G))
    coeffs = work_to_coeffs(spec, A)
    xt = apply_work(expm_work(spec, t[:, None, None] * A), x0)
    return xt, t, coeffs, G


def make_training_pair(x1: PointCloud, spec: GroupSpec, schedule: TimeSchedule, rng, t=None, g=None):
    """One pair ``(x_t, t, A)``; ``x_t`` is returned in the group's working layout."""
    pts = to_work_points(spec, x1.points)[None]
    G = None if g is None else g.work[None]
    xt, tt, coeffs, _ = training_batch(spec, pts, schedule, rng, t=t, G=G)
    return PointCloud(xt.shape[-1], xt[0]), float(tt[0]), AlgebraElement(spec, coeffs[0])


# --------------------------------------------------------------------------
# training


@dataclass
class TrainConfig:
    epochs: int = 200
    batch_size: int = 256
    lr: float = 1e-3
    seed: int = 0
    schedule: TimeSchedule = field(default_factory=TimeSchedule)
    width: Optional[int] = None
    embed_dim: int = 16
    max_frequency: float = 64.0


@dataclass
class TrainResult:
    net: VelocityNetwork
    optimizer: Adam
    losses: List[float]
    seconds: float = 0.0


def build_network(spec: GroupSpec, n_points: int, point_dim: int, cfg: TrainConfig) -> VelocityNetwork:
    if point_dim == 3:
        emb = TimeEmbedding.sinusoidal(cfg.embed_dim, cfg.max_frequency)
    else:
        emb = TimeEmbedding()
    return VelocityNetwork.create(spec, n_points, point_dim, make_rng(cfg.seed, 1), cfg.width, emb)


def train(
    dataset: Dataset,
    spec: GroupSpec,
    cfg: TrainConfig,
    net: Optional[VelocityNetwork] = None,
    optimizer: Optional[Adam] = None,
    start_epoch: int = 0,
    on_epoch: Optional[Callable[[int, float, VelocityNetwork, Adam], None]] = None,
) -> TrainResult:
    """Mini-batched flow-matching regression; epoch ``e`` draws from substream (seed, 2, e).

    On a non-finite loss the network is restored to the last completed epoch and
    the :class:`DivergenceError` is re-raised with ``.result`` attached.
    """
    if len(dataset) == 0:
        raise ValueError("cannot train on an empty dataset")
    x1_all = to_work_points(spec, dataset.points)
    n_points, point_dim = dataset.points.shape[1], dataset.points.shape[2]
    if spec.matrix_dim != point_dim:
        raise ValueError(f"{spec.kind.value} acts on {spec.matrix_dim}D points, data is {point_dim}D")
    if net is None:
        net = build_network(spec, n_points, point_dim, cfg)
    if optimizer is None:
        optimizer = Adam(net.mlp.n_params, lr=cfg.lr)
    losses: List[float] = []
    last_good = net.params.copy()
    t0 = time.perf_counter()
    n = len(x1_all)
    for epoch in range(start_epoch, cfg.epochs):
        rng = make_rng(cfg.seed, 2, epoch)
        order = rng.permutation(n)
        total, count = 0.0, 0
        for b, lo in enumerate(range(0, n, cfg.batch_size)):
            idx = order[lo : lo + cfg.batch_size]
            xt, t, coeffs, _ = training_batch(spec, x1_all[idx], cfg.schedule, rng)
            try:
                loss, grad = loss_and_grad(net, xt, t, coeffs, batch_index=b)
            except DivergenceError as exc:
                net.params = last_good
                exc.result = TrainResult(net, optimizer, losses, time.perf_counter() - t0)
                raise
            optimizer.step(net.mlp.params, grad)
            total += loss * len(idx)
            count += len(idx)
        mean_loss = total / count
        losses.append(mean_loss)
        last_good = net.params.copy()
        log.debug("epoch %d loss %.5f", epoch, mean_loss)
        if on_epoch is not None:
            on_epoch(epoch, mean_loss, net, optimizer)
    return TrainResult(net, optimizer, losses, time.perf_counter() - t0)


# --------------------------------------------------------------------------
# sampling


@dataclass(eq=False)
class Trajectory:
    times: np.ndarray
    clouds: List[PointCloud]
    algebra_outputs: List[AlgebraElement]
    accumulated: GroupElement
    initial_transform: GroupElement

    @property
    def final(self) -> PointCloud:
        return self.clouds[-1]


@dataclass(eq=False)
class BatchSample:
    """Arrays from a batched run of the sampler (working layout)."""

    G: np.ndarray  # (B, w, w) prior draws
    M: np.ndarray  # (B, w, w) accumulated transforms
    x0: np.ndarray  # (B, P, w)
    x1: np.ndarray  # (B, P, w) generated clouds
    times: np.ndarray  # (T + 1,)
    clouds: Optional[np.ndarray] = None  # (B, T + 1, P, w)
    outputs: Optional[np.ndarray] = None  # (B, T, k)
    Ms: Optional[np.ndarray] = None  # (B, T + 1, w, w)

    @property
    def H(self) -> np.ndarray:
        """Generated group elements ``M g``."""
        return np.matmul(self.M, self.G)


def sample_batch(net, x1: np.ndarray, cfg: SamplerConfig, rng, G=None, record=False) -> BatchSample:
    """Exponential-Euler integration for a batch of working-layout clouds."""
    spec = net.spec
    x1 = np.asarray(x1, dtype=float)
    B = len(x1)
    w = spec.work_dim
    if G is None:
        G = sample_prior_work(spec, rng, B)
    x = apply_work(G, x1)
    x0 = x.copy()
    M = np.broadcast_to(np.eye(w), (B, w, w)).copy()
    T = cfg.steps
    dt = 1.0 / T
    times = np.arange(T + 1) / T
    clouds = [x] if record else None
    outs = [] if record else None
    Ms = [M] if record else None
    for k in range(T):
        coeffs = net.predict(x, times[k]) if B else np.zeros((0, spec.algebra_dim))
        if not np.all(np.isfinite(coeffs)):
            raise GenerationError(f"non-finite network output at step {k}", step=k)
        E = expm_work(spec, coeffs_to_work(spec, dt * coeffs))
        x = apply_work(E, x)
        M = np.matmul(E, M)
        if record:
            clouds.append(x)
            outs.append(coeffs)
            Ms.append(M)
    out = BatchSample(G, M, x0, x, times)
    if record:
        out.clouds = np.stack(clouds, axis=1)
        out.outputs = np.stack(outs, axis=1) if T else np.zeros((B, 0, spec.algebra_dim))
        out.Ms = np.stack(Ms, axis=1)
    return out


def sample_data(net, x1: PointCloud, cfg: SamplerConfig, rng, g: Optional[GroupElement] = None) -> Trajectory:
    """Generate one sample from ``x1`` and return its full trajectory."""
    spec = net.spec
    pts = to_work_points(spec, x1.points) if x1.dim == spec.matrix_dim else x1.points
    G = None if g is None else g.work[None]
    res = sample_batch(net, pts[None], cfg, rng, G=G, record=True)
    w = res.clouds.shape[-1]
    return Trajectory(
        times=res.times,
        clouds=[PointCloud(w, c) for c in res.clouds[0]],
        algebra_outputs=[AlgebraElement(spec, a) for a in res.outputs[0]],
        accumulated=GroupElement.from_work(spec, res.M[0]),
        initial_transform=GroupElement.from_work(spec, res.G[0]),
    )


def sample_group_element(net, x1: PointCloud, cfg: SamplerConfig, rng, g=None) -> GroupElement:
    """``h = M g`` from one sampler run."""
    traj = sample_data(net, x1, cfg, rng, g=g)
    return traj.accumulated @ traj.initial_transform


def generate_elements(net, points: np.ndarray, cfg: SamplerConfig, rng, chunk: int = 2048) -> np.ndarray:
    """``M g`` for every cloud in ``points`` (real data layout), batched in chunks."""
    x1 = to_work_points(net.spec, points)
    out = []
    for lo in range(0, len(x1), chunk):
        out.append(sample_batch(net, x1[lo : lo + chunk], cfg, rng).H)
    w = net.spec.work_dim
    return np.concatenate(out, axis=0) if out else np.zeros((0, w, w))
