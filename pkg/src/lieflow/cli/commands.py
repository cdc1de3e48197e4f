"""Pipeline stages: each reads the config snapshot and files in a run directory."""

from __future__ import annotations

import hashlib
import logging
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from ..analysis.metrics import EvalReport, canonicalize_work, evaluate, truth_work
from ..analysis.plots import emit_plot_data, write_csv
from ..datasets import DatasetSpec, generate_dataset, load_dataset, make_rng, save_dataset, target_table
from ..errors import ConfigError
from ..flow import SamplerConfig, TimeSchedule, TrainConfig, sample_batch, to_work_points, train
from ..liegroup import GroupSpec
from ..net.checkpoint import load_checkpoint, read_checkpoint, save_checkpoint
from .config import RunConfig, Schedule

log = logging.getLogger(__name__)

CONFIG_FILE = "config.txt"
CHECKPOINT = "checkpoint.ckpt"
LAST_GOOD = "last_good.ckpt"


def run_root() -> Path:
    return Path(os.environ.get("LIEFLOW_RUN_DIR", "runs"))


def run_dir_for(cfg: RunConfig, root: Optional[Path] = None) -> Path:
    return Path(root or run_root()) / f"{cfg.experiment.value}-s{cfg.seed}"


def write_snapshot(cfg: RunConfig, run: Path) -> None:
    run.mkdir(parents=True, exist_ok=True)
    path = run / CONFIG_FILE
    text = cfg.dumps()
    if not path.exists() or path.read_text() != text:
        path.write_text(text)


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _dataset_specs(cfg: RunConfig):
    train = DatasetSpec(cfg.object, cfg.target, cfg.train_count, cfg.seed, cfg.angle_sigma)
    test = DatasetSpec(cfg.object, cfg.target, cfg.test_count, cfg.seed + 1, cfg.angle_sigma)
    return train, test


def cmd_gen(cfg: RunConfig, run: Path):
    """Write ``train.lfds``, ``test.lfds`` and ``manifest.txt``."""
    write_snapshot(cfg, run)
    train_spec, test_spec = _dataset_specs(cfg)
    paths = {}
    for name, spec in (("train", train_spec), ("test", test_spec)):
        p = run / f"{name}.lfds"
        save_dataset(generate_dataset(spec), p)
        paths[name] = p
    lines = [
        f"experiment={cfg.experiment.value}",
        f"group={cfg.group.value}",
        f"object={cfg.object.value}",
        f"target={cfg.target.value}",
        f"train_count={cfg.train_count}",
        f"test_count={cfg.test_count}",
    ]
    lines += [f"sha256.{k}={_sha256(p)}" for k, p in paths.items()]
    table = target_table(cfg.target)
    lines.append(f"table.order={table.order}")
    if table.axis is not None:
        lines.append("table.axis=" + ",".join(repr(float(a)) for a in table.axis))
    for i, e in enumerate(table.elements):
        lines.append(f"table.{i}=" + ",".join(repr(float(v)) for v in e.flat()))
    (run / "manifest.txt").write_text("\n".join(lines) + "\n")
    return paths


def _ensure_data(cfg: RunConfig, run: Path):
    if not (run / "train.lfds").exists() or not (run / "test.lfds").exists():
        cmd_gen(cfg, run)
    return load_dataset(run / "train.lfds"), load_dataset(run / "test.lfds")


def train_config(cfg: RunConfig) -> TrainConfig:
    schedule = TimeSchedule.power(cfg.n) if cfg.schedule == Schedule.power else TimeSchedule()
    return TrainConfig(
        epochs=cfg.epochs, batch_size=cfg.batch_size, lr=cfg.lr, seed=cfg.seed, schedule=schedule,
        width=cfg.width or None, embed_dim=cfg.embed_dim, max_frequency=cfg.max_frequency,
    )


def cmd_train(cfg: RunConfig, run: Path, resume: bool = False):
    """Train and write ``loss.csv`` plus checkpoints; resumes from ``checkpoint.ckpt`` if asked."""
    write_snapshot(cfg, run)
    train_ds, _ = _ensure_data(cfg, run)
    spec = GroupSpec.of(cfg.group)
    tcfg = train_config(cfg)
    net = opt = None
    start = 0
    losses = []
    ck = run / CHECKPOINT
    if resume and ck.exists():
        header, _, _ = read_checkpoint(ck)
        net, opt = load_checkpoint(ck, spec, with_optimizer=True)
        start = int(header.get("extra.epoch", 0))
        losses = _read_losses(run / "loss.csv")[:start]

    def on_epoch(epoch, loss, net_, opt_):
        losses.append(loss)
        _write_losses(run / "loss.csv", losses)
        done = epoch + 1
        if cfg.checkpoint_every and done % cfg.checkpoint_every == 0 or done == cfg.epochs:
            save_checkpoint(net_, ck, opt_, extra={"epoch": done})
        save_checkpoint(net_, run / LAST_GOOD, opt_, extra={"epoch": done})

    if net is None:
        from ..flow import build_network

        net = build_network(spec, train_ds.points.shape[1], train_ds.points.shape[2], tcfg)
        save_checkpoint(net, run / LAST_GOOD, extra={"epoch": 0})
    # on divergence train() raises; last_good.ckpt then holds the last completed epoch
    result = train(train_ds, spec, tcfg, net=net, optimizer=opt, start_epoch=start, on_epoch=on_epoch)
    if start >= cfg.epochs:
        save_checkpoint(net, ck, opt, extra={"epoch": start})
    return result, losses


def _write_losses(path: Path, losses) -> None:
    write_csv(path, ["epoch", "mean_loss"], ((i, v) for i, v in enumerate(losses)))


def _read_losses(path: Path):
    if not path.exists():
        return []
    rows = path.read_text().splitlines()[1:]
    return [float(r.split(",")[1]) for r in rows if r]


def _load_net(cfg: RunConfig, run: Path):
    ck = run / CHECKPOINT
    if not ck.exists():
        raise FileNotFoundError(f"missing checkpoint {ck}; run train first")
    return load_checkpoint(ck, GroupSpec.of(cfg.group))


def _flat_names(prefix: str, n: int):
    return [f"{prefix}_{i}{j}" for i in range(n) for j in range(n)]


def cmd_sample(cfg: RunConfig, run: Path, count: Optional[int] = None):
    """Generate ``h = M g`` for the first ``count`` test clouds.

    Writes ``elements.csv`` (raw and canonicalized elements, working layout)
    and ``trajectories.csv`` for the first ``trajectory_count`` of them.
    """
    write_snapshot(cfg, run)
    net = _load_net(cfg, run)
    _, test = _ensure_data(cfg, run)
    spec = net.spec
    count = cfg.sample_count if count is None else count
    if count > len(test):
        raise ConfigError(f"sample count {count} exceeds the {len(test)} test samples")
    pts = test.points[:count]
    scfg = SamplerConfig(cfg.inference_steps)
    rng = make_rng(cfg.seed, 4)
    w = spec.work_dim
    H = np.zeros((0, w, w))
    chunks = []
    x1 = to_work_points(spec, pts)
    for lo in range(0, count, 2048):
        chunks.append(sample_batch(net, x1[lo : lo + 2048], scfg, rng).H)
    if chunks:
        H = np.concatenate(chunks)
    G_true = truth_work(spec, test.transforms[:count])
    C = canonicalize_work(H, G_true)
    header = ["index"] + _flat_names("h", w) + _flat_names("c", w)
    write_csv(run / "elements.csv", header, ([i] + list(h.ravel()) + list(c.ravel()) for i, (h, c) in enumerate(zip(H, C))))

    ntraj = min(cfg.trajectory_count, count)
    k = spec.algebra_dim
    theader = ["traj", "step", "t"] + _flat_names("M", w) + [f"A_{i}" for i in range(k)]
    theader += [f"centroid_{i}" for i in range(x1.shape[-1])]
    rows = []
    if ntraj:
        res = sample_batch(net, x1[:ntraj], scfg, make_rng(cfg.seed, 5), record=True)
        for b in range(ntraj):
            for s, t in enumerate(res.times):
                A = res.outputs[b, s] if s < len(res.times) - 1 else np.full(k, np.nan)
                rows.append([b, s, t] + list(res.Ms[b, s].ravel()) + list(A) + list(res.clouds[b, s].mean(0)))
    write_csv(run / "trajectories.csv", theader, rows)
    return H, C


def cmd_eval(cfg: RunConfig, run: Path) -> EvalReport:
    """Canonicalized elements vs the test ground truth; writes ``eval_report.txt``."""
    path = run / "elements.csv"
    if not path.exists():
        raise FileNotFoundError(f"missing {path}; run sample first")
    spec = GroupSpec.of(cfg.group)
    _, test = _ensure_data(cfg, run)
    from ..analysis.plots import read_csv

    header, data = read_csv(path)
    w = spec.work_dim
    hcols = [i for i, h in enumerate(header) if h.startswith("h_")]
    H = data[:, hcols].reshape(-1, w, w)
    report = evaluate(cfg.experiment.value, spec, H, test.transforms[: len(H)], target_table(cfg.target),
                      cfg.seed, truth_transforms=test.transforms)
    (run / "eval_report.txt").write_text(report.to_text())
    return report


def cmd_analyze(cfg: RunConfig, run: Path, svg: bool = False):
    write_snapshot(cfg, run)
    return emit_plot_data(run, svg=svg, seed=cfg.seed)


@dataclass
class ScalarDemoResult:
    model: object
    grid: object
    outputs: dict


def cmd_scalar_demo(cfg: RunConfig, run: Path, svg: bool = False) -> ScalarDemoResult:
    """Scalar SO(2) to C4 flow: train, posterior, entropy and velocity tables."""
    from ..analysis.scalar import C4_MODES, ScalarTrainConfig, compute_posterior, scalar_flow_train

    write_snapshot(cfg, run)
    scfg = ScalarTrainConfig(epochs=cfg.scalar_epochs, batch_size=cfg.batch_size, sample_count=cfg.scalar_count,
                             lr=cfg.lr, width=cfg.scalar_width, seed=cfg.seed)
    model = scalar_flow_train(C4_MODES, scfg)
    save_checkpoint(model.net, run / CHECKPOINT, extra={"epoch": cfg.scalar_epochs})
    _write_losses(run / "loss.csv", model.losses)
    (run / "scalar.flag").write_text("modes=" + ",".join(repr(m) for m in C4_MODES) + "\n")
    grid = compute_posterior(model, T=cfg.posterior_steps, sigma=cfg.posterior_sigma,
                             n_samples=cfg.posterior_samples, seed=cfg.seed)
    outputs = emit_plot_data(run, svg=svg, seed=cfg.seed, model=model, posterior=grid)
    near = grid.nearest_mode_of_x0()
    agree = float(np.mean(grid.posterior[-1].argmax(1) == near))
    lines = [f"entropy_t{t:.2f}={e!r}" for t, e in zip(grid.times, grid.entropy)]
    lines += [f"argmax_agreement={agree!r}", f"flagged={grid.flagged_count}", f"ln_K={math.log(len(grid.modes))!r}"]
    (run / "posterior_report.txt").write_text("\n".join(lines) + "\n")
    return ScalarDemoResult(model, grid, outputs)
