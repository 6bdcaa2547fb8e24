"""Binary named-tensor checkpoints.

Layout (little-endian): b"AESN", u32 version=1, u64 tensor count, then per
tensor: u32 name length, UTF-8 name, u32 rank, u64 extents, float32 data.

The network config and optimizer scalars ride along as ``config.*`` and
``optim.*`` tensors, so a file fully describes the model it holds.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .aesthetic_net import AestheticNet, NetConfig
from .errors import FormatViolation, IoFailure, NameMismatch

MAGIC = b"AESN"
VERSION = 1

_CONFIG_KEYS = ("growth_rate", "layers_per_block", "stem_channels", "input_size", "level_fc_dim", "num_classes")


def encode_tensors(tensors: list[tuple[str, np.ndarray]]) -> bytes:
    out = [MAGIC, struct.pack("<IQ", VERSION, len(tensors))]
    for name, arr in tensors:
        raw = name.encode("utf-8")
        arr = np.asarray(arr, dtype="<f4")
        out.append(struct.pack("<I", len(raw)) + raw)
        out.append(struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}Q", *arr.shape))
        out.append(np.ascontiguousarray(arr).tobytes())
    return b"".join(out)


def decode_tensors(buf: bytes) -> list[tuple[str, np.ndarray]]:
    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(buf):
            raise FormatViolation(f"truncated checkpoint: wanted {n} bytes at offset {pos}, file has {len(buf)}")
        chunk = buf[pos:pos + n]
        pos += n
        return chunk

    pos = 0
    if take(4) != MAGIC:
        raise FormatViolation("bad checkpoint magic")
    version, count = struct.unpack("<IQ", take(12))
    if version != VERSION:
        raise FormatViolation(f"unsupported checkpoint version {version}")
    tensors = []
    for _ in range(count):
        (name_len,) = struct.unpack("<I", take(4))
        try:
            name = take(name_len).decode("utf-8")
        except UnicodeDecodeError:
            raise FormatViolation("tensor name is not UTF-8") from None
        (rank,) = struct.unpack("<I", take(4))
        shape = struct.unpack(f"<{rank}Q", take(8 * rank))
        n = int(np.prod(shape, dtype=np.int64)) if rank else 1
        data = np.frombuffer(take(4 * n), dtype="<f4").astype(np.float32).reshape(shape)
        tensors.append((name, data))
    if pos != len(buf):
        raise FormatViolation(f"{len(buf) - pos} trailing bytes after last tensor")
    return tensors


def config_tensors(cfg: NetConfig) -> list[tuple[str, np.ndarray]]:
    return [(f"config.{key}", np.atleast_1d(np.asarray(getattr(cfg, key), dtype=np.float32))) for key in _CONFIG_KEYS]


def config_from_tensors(named: dict[str, np.ndarray]) -> NetConfig:
    try:
        vals = {key: [int(v) for v in named[f"config.{key}"].reshape(-1)] for key in _CONFIG_KEYS}
    except KeyError as exc:
        raise FormatViolation(f"checkpoint lacks {exc.args[0]}") from None
    return NetConfig(
        growth_rate=vals["growth_rate"][0],
        layers_per_block=tuple(vals["layers_per_block"]),
        stem_channels=vals["stem_channels"][0],
        input_size=tuple(vals["input_size"]),
        level_fc_dim=vals["level_fc_dim"][0],
        num_classes=vals["num_classes"][0],
    )


def net_tensors(net: AestheticNet) -> list[tuple[str, np.ndarray]]:
    return [(name, t.data) for name, t in net.named_parameters()] + [(name, t.data) for name, t in net.named_buffers()]


def load_state(net: AestheticNet, named: dict[str, np.ndarray]) -> None:
    """Copy ``named`` tensors into ``net``; every net tensor must be present with its exact shape."""
    targets = dict(net.named_parameters())
    targets.update(net.named_buffers())
    missing = [n for n in targets if n not in named]
    if missing:
        raise NameMismatch(f"checkpoint lacks {len(missing)} tensors, e.g. {missing[0]}")
    for name, t in targets.items():
        if named[name].shape != t.shape:
            raise NameMismatch(f"{name}: checkpoint shape {named[name].shape} != network shape {t.shape}")
    for name, t in targets.items():
        t.data[...] = named[name]


def write_file(path: str | Path, payload: bytes) -> None:
    try:
        Path(path).write_bytes(payload)
    except OSError as exc:
        raise IoFailure(f"cannot write checkpoint {path}: {exc}") from exc


def read_file(path: str | Path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read checkpoint {path}: {exc}") from exc
