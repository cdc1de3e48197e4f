"""CSV (and optional SVG) plot data derived from run artifacts."""

from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from ..datasets import make_rng
from ..liegroup import euler_zyx, mollweide_project, polar_rotation_work
from .metrics import angle_histogram, so2_angles

JITTER = 0.02


class MissingArtifacts(FileNotFoundError):
    def __init__(self, missing: Sequence[Path]):
        self.missing = [str(p) for p in missing]
        super().__init__("missing run artifacts: " + ", ".join(self.missing))


def write_csv(path, header: Sequence[str], rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])
    return path


def read_csv(path):
    """Header and float rows (as an array) of a numeric CSV file."""
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    header = rows[0]
    data = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float)
    return header, data.reshape(len(rows) - 1, len(header))


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def pca_project(X: np.ndarray, k: int = 2):
    """Project rows of ``X`` onto their top-``k`` principal axes.

    Returns (coords, components, mean); ``coords @ components + mean`` reconstructs
    ``X`` exactly when its centred rank is at most ``k``.
    """
    X = np.asarray(X, dtype=float)
    mean = X.mean(0)
    _, _, Vt = np.linalg.svd(X - mean, full_matrices=False)
    comps = Vt[:k]
    if comps.shape[0] < k:
        comps = np.vstack([comps, np.zeros((k - comps.shape[0], X.shape[1]))])
    return (X - mean) @ comps.T, comps, mean


# --------------------------------------------------------------------------
# tables


def centroid_rows(traj_data: np.ndarray, header: Sequence[str]):
    """Per-trajectory centroid rows (traj, step, t, c...) from a trajectory dump."""
    cols = [i for i, h in enumerate(header) if h.startswith("centroid_")]
    return traj_data[:, [0, 1, 2]], traj_data[:, cols]


def centroid_pca_table(path, traj_header, traj_data) -> Path:
    ids, cent = centroid_rows(traj_data, traj_header)
    if cent.shape[1] > 2:
        coords, _, _ = pca_project(cent, 2)
    else:
        coords = cent
    rows = (list(i) + list(c) for i, c in zip(ids, coords))
    return write_csv(path, ["traj", "step", "t", "pc1", "pc2"], rows)


def euler_mollweide_table(path, R: np.ndarray, seed: int = 0, jitter: float = JITTER) -> Path:
    """Euler angles and Mollweide coordinates (yaw as longitude, pitch as latitude)."""
    yaw, pitch, roll, lock = euler_zyx(R)
    u, v = mollweide_project(yaw, pitch)
    rng = make_rng(seed, 11)
    ju = u + rng.uniform(-jitter, jitter, u.shape)
    jv = v + rng.uniform(-jitter, jitter, v.shape)
    rows = zip(yaw, pitch, roll, lock.astype(int), u, v, ju, jv)
    return write_csv(path, ["yaw", "pitch", "roll", "gimbal_lock", "u", "v", "u_jitter", "v_jitter"], rows)


def histogram_table(path, angles: np.ndarray, bins: int = 72) -> Path:
    edges, counts = angle_histogram(angles, bins)
    return write_csv(path, ["lo", "hi", "count"], zip(edges[:-1], edges[1:], counts))


def entropy_table(path, grid) -> Path:
    return write_csv(path, ["t", "entropy", "regime_gaussian"], (
        (t, e, int(r == "gaussian")) for t, e, r in zip(grid.times, grid.entropy, grid.regime)
    ))


def posterior_table(path, grid) -> Path:
    """Mean posterior per time for each group of samples sharing the nearest initial mode."""
    by = grid.by_initial_mode()
    K = len(grid.modes)
    rows = []
    for g in range(K):
        for j, t in enumerate(grid.times):
            rows.append([g, t] + list(by[g, j]))
    return write_csv(path, ["group", "t"] + [f"p{k}" for k in range(K)], rows)


def velocity_table(path, model, nx: int = 101, nt: int = 11) -> Path:
    from .scalar import velocity_grid

    xs = np.linspace(-math.pi, math.pi, nx)
    ts = np.linspace(0.0, 1.0, nt)
    V = velocity_grid(model, xs, ts)
    rows = ((t, x, V[i, j]) for i, t in enumerate(ts) for j, x in enumerate(xs))
    return write_csv(path, ["t", "x", "v"], rows)


# --------------------------------------------------------------------------
# SVG


def svg_scatter(path, x, y, width: int = 400, height: int = 300, title: str = "") -> Path:
    """Deterministic scatter plot of (x, y); one circle per point."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">']
    if title:
        parts.append(f'<text x="4" y="14" font-size="12">{title}</text>')
    if len(x):
        sx = _scale(x, 10, width - 10)
        sy = _scale(y, height - 10, 20)
        parts += [f'<circle cx="{a:.2f}" cy="{b:.2f}" r="1.2"/>' for a, b in zip(sx, sy)]
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n")
    return Path(path)


def svg_polyline(path, x, ys: List[np.ndarray], width: int = 400, height: int = 300, title: str = "") -> Path:
    x = np.asarray(x, float)
    allv = np.concatenate([np.asarray(y, float) for y in ys]) if ys else np.zeros(1)
    lo, hi = np.nanmin(allv), np.nanmax(allv)
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">']
    if title:
        parts.append(f'<text x="4" y="14" font-size="12">{title}</text>')
    sx = _scale(x, 10, width - 10)
    for y in ys:
        sy = _scale(np.asarray(y, float), height - 10, 20, lo, hi)
        pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(sx, sy) if np.isfinite(b))
        parts.append(f'<polyline fill="none" stroke="black" points="{pts}"/>')
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n")
    return Path(path)


def _scale(v, a, b, lo=None, hi=None):
    lo = np.nanmin(v) if lo is None else lo
    hi = np.nanmax(v) if hi is None else hi
    span = hi - lo if hi > lo else 1.0
    return a + (v - lo) / span * (b - a)


# --------------------------------------------------------------------------
# driver


def emit_plot_data(run_dir, svg: bool = False, seed: int = 0, model=None, posterior=None) -> Dict[str, Path]:
    """Emit every plot table the run directory supports into ``run_dir/plots``.

    Flow runs need ``trajectories.csv`` and ``elements.csv``; scalar runs need a
    model (passed in or loadable from ``checkpoint.ckpt``) and take an optional
    precomputed posterior grid.
    """
    run = Path(run_dir)
    out = run / "plots"
    made: Dict[str, Path] = {}
    scalar = (run / "scalar.flag").exists() or model is not None
    if scalar:
        if model is None:
            ck = run / "checkpoint.ckpt"
            if not ck.exists():
                raise MissingArtifacts([ck])
            from ..net.checkpoint import load_checkpoint
            from .scalar import C4_MODES, ScalarModel

            model = ScalarModel(load_checkpoint(ck), np.array(C4_MODES))
        if posterior is None:
            from .scalar import compute_posterior

            posterior = compute_posterior(model, seed=seed)
        made["entropy"] = entropy_table(out / "entropy.csv", posterior)
        made["posterior"] = posterior_table(out / "posterior_by_mode.csv", posterior)
        made["velocity"] = velocity_table(out / "velocity_grid.csv", model)
        if svg:
            made["entropy_svg"] = svg_polyline(out / "entropy.svg", posterior.times, [posterior.entropy], title="entropy")
        return made

    need = [run / "trajectories.csv", run / "elements.csv"]
    missing = [p for p in need if not p.exists()]
    if missing:
        raise MissingArtifacts(missing)
    th, td = read_csv(need[0])
    made["centroids"] = centroid_pca_table(out / "centroid_pca.csv", th, td)
    eh, ed = read_csv(need[1])
    dim = int(round(math.sqrt(sum(h.startswith("c_") for h in eh))))
    canon = ed[:, [i for i, h in enumerate(eh) if h.startswith("c_")]].reshape(-1, dim, dim)
    if dim == 3:
        R = polar_rotation_work(canon) if len(canon) else canon
        made["mollweide"] = euler_mollweide_table(out / "euler_mollweide.csv", R, seed)
        if svg:
            _, m = read_csv(made["mollweide"])
            made["mollweide_svg"] = svg_scatter(out / "mollweide.svg", m[:, 6], m[:, 7], title="mollweide")
    elif dim == 2:
        ang = so2_angles(canon) if len(canon) else np.zeros(0)
        made["histogram"] = histogram_table(out / "angle_histogram.csv", ang)
        if svg:
            _, h = read_csv(made["histogram"])
            made["histogram_svg"] = svg_polyline(out / "angle_histogram.svg", h[:, 0], [h[:, 2]], title="angles")
    if svg:
        _, c = read_csv(made["centroids"])
        made["centroids_svg"] = svg_scatter(out / "centroid_pca.svg", c[:, 3], c[:, 4], title="centroids")
    return made
