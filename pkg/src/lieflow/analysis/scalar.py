"""Scalar flow matching from U[-pi, pi) to a few point modes, and its posterior.

The scalar model is a straight-line flow ``x_t = (1 - t) x0 + t x1`` on the
real line. The posterior over modes given ``x_t`` is recovered with Bayes'
rule, the likelihood coming from inverting the interpolation for each mode
and integrating the field's divergence along the simulated path.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from ..datasets import make_rng
from ..errors import DivergenceError
from ..liegroup import SO2
from ..net.mlp import TimeEmbedding, VelocityNetwork, loss_and_grad
from ..net.optim import Adam

C4_MODES = (-math.pi, -math.pi / 2, 0.0, math.pi / 2)
DIV_STEP = 1e-4
LOG_P0 = -math.log(2 * math.pi)


def log_p0(x) -> np.ndarray:
    """Log density of U[-pi, pi): ``-log(2 pi)`` inside the support, ``-inf`` outside."""
    x = np.asarray(x, dtype=float)
    return np.where((x >= -math.pi) & (x < math.pi), LOG_P0, -np.inf)


class ScalarVelocityNetwork(VelocityNetwork):
    """Velocity ``v(x, t)`` for scalar ``x``: a one-point, one-coordinate cloud."""

    def __init__(self, width: int = 64, depth: int = 3, params: Optional[np.ndarray] = None):
        super().__init__(SO2, 1, 1, width, TimeEmbedding(), depth, params)

    @classmethod
    def create(cls, rng, width: int = 64, depth: int = 3) -> "ScalarVelocityNetwork":
        net = cls(width, depth)
        net.mlp.init(rng)
        return net

    def velocity(self, x, t) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        t = np.broadcast_to(np.asarray(t, dtype=float), x.shape)
        X = np.stack([x.reshape(-1), t.reshape(-1)], axis=1)
        return self.mlp.apply(X)[:, 0].reshape(x.shape)

    def velocity_and_divergence(self, x, t, h: float = DIV_STEP):
        """``v`` and ``dv/dx`` from one batched evaluation at ``x +/- h``.

        The velocity is the midpoint average, which is within O(h^2) of ``v(x)``.
        """
        x = np.asarray(x, dtype=float)
        v = self.velocity(np.concatenate([x + h, x - h]), t)
        n = len(x)
        return 0.5 * (v[:n] + v[n:]), (v[:n] - v[n:]) / (2 * h)


@dataclass
class ScalarTrainConfig:
    epochs: int = 200
    batch_size: int = 256
    sample_count: int = 20000
    lr: float = 1e-3
    width: int = 64
    seed: int = 0


@dataclass
class ScalarModel:
    net: ScalarVelocityNetwork
    modes: np.ndarray
    losses: List[float] = field(default_factory=list)
    seconds: float = 0.0

    def velocity(self, x, t):
        return self.net.velocity(x, t)


def scalar_flow_train(modes: Sequence[float], cfg: ScalarTrainConfig = ScalarTrainConfig()) -> ScalarModel:
    """Straight-line flow matching from U[-pi, pi) to equal-weight point masses at ``modes``."""
    modes = np.asarray(modes, dtype=float)
    if modes.size == 0 or np.any(modes < -math.pi) or np.any(modes >= math.pi):
        raise ValueError("modes must be a nonempty subset of [-pi, pi)")
    net = ScalarVelocityNetwork.create(make_rng(cfg.seed, 1), cfg.width)
    opt = Adam(net.mlp.n_params, lr=cfg.lr)
    x1_all = modes[make_rng(cfg.seed, 0).integers(0, len(modes), cfg.sample_count)]
    losses = []
    t0 = time.perf_counter()
    for epoch in range(cfg.epochs):
        rng = make_rng(cfg.seed, 2, epoch)
        order = rng.permutation(cfg.sample_count)
        total = 0.0
        for b, lo in enumerate(range(0, cfg.sample_count, cfg.batch_size)):
            x1 = x1_all[order[lo : lo + cfg.batch_size]]
            x0 = rng.uniform(-math.pi, math.pi, len(x1))
            t = rng.random(len(x1))
            xt = (1 - t) * x0 + t * x1
            loss, grad = loss_and_grad(net, xt[:, None, None], t, (x1 - x0)[:, None], batch_index=b)
            opt.step(net.mlp.params, grad)
            total += loss * len(x1)
        losses.append(total / cfg.sample_count)
    return ScalarModel(net, modes, losses, time.perf_counter() - t0)


def simulate(model, x0: np.ndarray, T: int, steps: Optional[int] = None):
    """Euler integration on the grid k/T; returns positions and integrated divergence.

    Arrays have shape (steps + 1, N): row k holds ``x`` and ``int_0^{k/T} div v``.
    """
    steps = T if steps is None else steps
    dt = 1.0 / T
    x = np.asarray(x0, dtype=float).copy()
    xs = [x]
    divs = [np.zeros_like(x)]
    for k in range(steps):
        v, div = model.net.velocity_and_divergence(x, k * dt)
        x = x + dt * v
        xs.append(x)
        divs.append(divs[-1] + dt * div)
    return np.stack(xs), np.stack(divs)


@dataclass
class PosteriorGrid:
    times: np.ndarray  # (T + 1,)
    posterior: np.ndarray  # (T + 1, N, K)
    entropy: np.ndarray  # (T + 1,) mean over unflagged samples
    sample_entropy: np.ndarray  # (T + 1, N)
    modes: np.ndarray
    sigma: float
    x0: np.ndarray  # (N,)
    xt: np.ndarray  # (T + 1, N)
    log_density: np.ndarray  # (T + 1, N) continuity-equation log p_t(x_t)
    flagged: np.ndarray  # (T + 1, N) bool, non-finite log-likelihood rows
    regime: List[str] = field(default_factory=list)

    @property
    def flagged_count(self) -> int:
        return int(self.flagged.sum())

    def mean_posterior(self) -> np.ndarray:
        out = np.zeros((len(self.times), len(self.modes)))
        for j in range(len(self.times)):
            ok = ~self.flagged[j]
            if ok.any():
                out[j] = self.posterior[j, ok].mean(0)
        return out

    def nearest_mode_of_x0(self) -> np.ndarray:
        return np.argmin(np.abs(self.x0[:, None] - self.modes[None, :]), axis=1)

    def by_initial_mode(self) -> np.ndarray:
        """Mean posterior per time, grouped by the mode nearest each x0: (K, T + 1, K)."""
        near = self.nearest_mode_of_x0()
        K = len(self.modes)
        out = np.full((K, len(self.times), K), np.nan)
        for g in range(K):
            sel = near == g
            for j in range(len(self.times)):
                ok = sel & ~self.flagged[j]
                if ok.any():
                    out[g, j] = self.posterior[j, ok].mean(0)
        return out


def _entropy(p: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, -p * np.log(p), 0.0)
    return terms.sum(-1)


def _normalize(logits: np.ndarray) -> np.ndarray:
    m = np.max(logits, axis=-1, keepdims=True)
    e = np.exp(logits - m)
    return e / e.sum(-1, keepdims=True)


def compute_posterior(
    model,
    modes: Optional[Sequence[float]] = None,
    T: int = 100,
    sigma: float = 0.1,
    n_samples: int = 1000,
    seed: int = 0,
) -> PosteriorGrid:
    """Posterior over modes along simulated trajectories on the grid t = k/T.

    * t = 0: the mode prior (uniform).
    * t > 1 - 1/T: Gaussian likelihood of width ``sigma`` around each mode.
    * otherwise: invert the interpolation for each mode, simulate that start to
      t, and score it with the prior density minus the integrated divergence.
      Starts outside [-pi, pi) have zero prior density and get likelihood 0.

    A row is flagged when no mode has a finite log-likelihood (or any is NaN).
    """
    if T < 2:
        raise ValueError("T must be >= 2")
    modes = np.asarray(model.modes if modes is None else modes, dtype=float)
    K = len(modes)
    if K == 0:
        raise ValueError("need at least one mode")
    log_prior = np.full(K, -math.log(K))
    rng = make_rng(seed, 3)
    x0 = rng.uniform(-math.pi, math.pi, n_samples)
    xs, divs = simulate(model, x0, T)
    times = np.arange(T + 1) / T
    log_density = log_p0(x0)[None, :] - divs

    post = np.zeros((T + 1, n_samples, K))
    flagged = np.zeros((T + 1, n_samples), dtype=bool)
    regime = []
    for j, t in enumerate(times):
        xt = xs[j]
        if j == 0:
            loglik = np.zeros((n_samples, K))
            regime.append("prior")
        elif t > 1 - 1 / T:
            loglik = -((xt[:, None] - modes[None, :]) ** 2) / (2 * sigma**2)
            regime.append("gaussian")
        else:
            starts = ((xt[:, None] - t * modes[None, :]) / (1 - t)).reshape(-1)
            loglik = log_p0(starts)
            inside = np.isfinite(loglik)
            if inside.any():
                _, d = simulate(model, starts[inside], T, steps=j)
                loglik[inside] -= d[-1]
            loglik = loglik.reshape(n_samples, K)
            regime.append("inverted")
        logits = loglik + log_prior
        bad = np.any(np.isnan(logits), axis=1) | ~np.any(np.isfinite(logits), axis=1) | np.any(logits == np.inf, axis=1)
        flagged[j] = bad
        post[j] = _normalize(np.where(bad[:, None], 0.0, logits))
    ent = _entropy(post)
    mean_ent = np.array([ent[j, ~flagged[j]].mean() if (~flagged[j]).any() else np.nan for j in range(T + 1)])
    return PosteriorGrid(times, post, mean_ent, ent, modes, sigma, x0, xs, log_density, flagged, regime)


def velocity_grid(model, xs: np.ndarray, ts: np.ndarray) -> np.ndarray:
    """Field values on the (t, x) grid, shape (len(ts), len(xs))."""
    X, Tm = np.meshgrid(np.asarray(xs, float), np.asarray(ts, float))
    return model.velocity(X.reshape(-1), Tm.reshape(-1)).reshape(X.shape)


def nearest_mode_sign_agreement(model, t: float, xs: np.ndarray, tol: float = 1e-9) -> float:
    """Fraction of grid points whose velocity points toward the nearest mode."""
    xs = np.asarray(xs, dtype=float)
    v = model.velocity(xs, t)
    modes = np.asarray(model.modes)
    near = modes[np.argmin(np.abs(xs[:, None] - modes[None, :]), axis=1)]
    want = np.sign(near - xs)
    ok = (want == 0) | (np.sign(v) == want)
    return float(ok.mean())
