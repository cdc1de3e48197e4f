"""Versioned binary checkpoints for velocity networks.

Layout: magic ``LIEFCKPT``, u32 version, u32 header length, UTF-8
``key=value`` header lines, little-endian f64 parameter block, then an
optional optimizer section (u64 step count, f64 first and second moments).
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Optional, Tuple

import numpy as np

from ..errors import FormatError
from ..liegroup import GroupKind, GroupSpec
from .mlp import TimeEmbedding, VelocityNetwork
from .optim import Adam

MAGIC = b"LIEFCKPT"
VERSION = 1


class IncompatibleCheckpoint(FormatError):
    """Checkpoint does not match the requested architecture or format version."""


def _header(net) -> dict:
    h = {
        "model": type(net).__name__,
        "group": net.spec.kind.value,
        "algebra_dim": net.spec.algebra_dim,
        "n_points": net.n_points,
        "point_dim": net.point_dim,
        "width": net.width,
        "depth": net.depth,
        "embedding": net.embedding.mode.value,
        "embed_dim": net.embedding.dim,
        "max_frequency": repr(net.embedding.max_frequency),
        "n_params": net.mlp.n_params,
    }
    return h


def save_checkpoint(net, path, optimizer: Optional[Adam] = None, extra: Optional[dict] = None) -> None:
    """Write ``net`` (and optionally Adam state) to ``path`` atomically."""
    header = _header(net)
    header["has_optimizer"] = int(optimizer is not None)
    for k, v in (extra or {}).items():
        header[f"extra.{k}"] = v
    text = "".join(f"{k}={v}\n" for k, v in header.items()).encode("utf-8")
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as f:
        f.write(MAGIC + struct.pack("<II", VERSION, len(text)) + text)
        f.write(np.asarray(net.params, dtype="<f8").tobytes())
        if optimizer is not None:
            f.write(struct.pack("<Q", optimizer.t))
            f.write(np.asarray(optimizer.m, dtype="<f8").tobytes())
            f.write(np.asarray(optimizer.v, dtype="<f8").tobytes())
    tmp.replace(path)


def read_checkpoint(path) -> Tuple[dict, np.ndarray, Optional[dict]]:
    """Raw header, parameters and optimizer state (or ``None``)."""
    data = Path(path).read_bytes()
    if data[:8] != MAGIC:
        raise IncompatibleCheckpoint(f"{path}: not a checkpoint file")
    version, hlen = struct.unpack_from("<II", data, 8)
    if version != VERSION:
        raise IncompatibleCheckpoint(f"{path}: checkpoint version {version}, expected {VERSION}")
    off = 16 + hlen
    header = dict(line.split("=", 1) for line in data[16:off].decode("utf-8").splitlines() if line)
    n = int(header["n_params"])
    if len(data) < off + 8 * n:
        raise IncompatibleCheckpoint(f"{path}: parameter block truncated")
    params = np.frombuffer(data, dtype="<f8", count=n, offset=off).astype(float)
    off += 8 * n
    opt = None
    if int(header.get("has_optimizer", 0)):
        if len(data) < off + 8 + 16 * n:
            raise IncompatibleCheckpoint(f"{path}: optimizer section truncated")
        (t,) = struct.unpack_from("<Q", data, off)
        m = np.frombuffer(data, dtype="<f8", count=n, offset=off + 8).astype(float)
        v = np.frombuffer(data, dtype="<f8", count=n, offset=off + 8 + 8 * n).astype(float)
        opt = {"t": t, "m": m, "v": v}
    return header, params, opt


def load_checkpoint(path, spec: Optional[GroupSpec] = None, with_optimizer: bool = False):
    """Rebuild the network stored at ``path``.

    If ``spec`` is given, its kind and algebra dimension must match the file.
    Returns the network, or ``(net, adam_or_None)`` when ``with_optimizer``.
    """
    header, params, opt = read_checkpoint(path)
    kind = GroupKind(header["group"])
    stored = GroupSpec.of(kind)
    if int(header["algebra_dim"]) != stored.algebra_dim:
        raise IncompatibleCheckpoint(
            f"{path}: algebra_dim {header['algebra_dim']} inconsistent with {kind.value}"
        )
    if spec is not None and (spec.kind != kind or spec.algebra_dim != stored.algebra_dim):
        raise IncompatibleCheckpoint(
            f"{path}: checkpoint is {kind.value} (algebra_dim {stored.algebra_dim}), "
            f"requested {spec.kind.value} (algebra_dim {spec.algebra_dim})"
        )
    emb = TimeEmbedding(header["embedding"], int(header["embed_dim"]), float(header["max_frequency"]))
    model = header.get("model", "VelocityNetwork")
    if model == "ScalarVelocityNetwork":
        from ..analysis.scalar import ScalarVelocityNetwork

        net = ScalarVelocityNetwork(int(header["width"]), int(header["depth"]), params=params)
    else:
        net = VelocityNetwork(
            stored, int(header["n_points"]), int(header["point_dim"]), int(header["width"]),
            emb, int(header["depth"]), params=params,
        )
    if net.mlp.n_params != len(params):
        raise IncompatibleCheckpoint(f"{path}: parameter count {len(params)} != {net.mlp.n_params}")
    if not with_optimizer:
        return net
    adam = None
    if opt is not None:
        adam = Adam(len(params))
        adam.load_state(opt)
    return net, adam
