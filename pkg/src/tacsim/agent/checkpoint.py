"""Versioned, endianness-fixed binary checkpoints.

Layout (all integers little-endian):
    magic "TACSIMC1" | u32 schema version
    u32 network count, then per network:
        u8 name length | name utf-8 | u8 output code (0 linear, 1 tanh)
        u32 layer-size count | u32 sizes...
    u32 normalizer dim | f64 decay | f64 eps | u64 count
    parameter payload: float64 little-endian, row-major, networks in header
    order followed by normalizer m1 and m2
    trailing magic "END1"
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .nets import MLP

MAGIC = b"TACSIMC1"
TRAILER = b"END1"
VERSION = 1
_OUTPUT_CODES = {"linear": 0, "tanh": 1}
_OUTPUT_NAMES = {v: k for k, v in _OUTPUT_CODES.items()}


class CheckpointError(Exception):
    pass


def save_checkpoint(path: str | Path, networks: dict[str, MLP], normalizer_state: dict):
    path = Path(path)
    parts = [MAGIC, struct.pack("<I", VERSION), struct.pack("<I", len(networks))]
    payload = []
    for name, net in networks.items():
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<B", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack("<B", _OUTPUT_CODES[net.output]))
        parts.append(struct.pack("<I", len(net.sizes)))
        parts.append(struct.pack(f"<{len(net.sizes)}I", *net.sizes))
        payload.append(net.flat_params())
    m1 = np.asarray(normalizer_state["m1"], dtype=np.float64)
    m2 = np.asarray(normalizer_state["m2"], dtype=np.float64)
    parts.append(struct.pack(
        "<IddQ",
        int(normalizer_state["dim"]),
        float(normalizer_state["decay"]),
        float(normalizer_state["eps"]),
        int(normalizer_state["count"]),
    ))
    payload.extend([m1, m2])
    blob = np.concatenate(payload).astype("<f8").tobytes()
    path.write_bytes(b"".join(parts) + blob + TRAILER)


def load_checkpoint(path: str | Path) -> tuple[dict[str, MLP], dict]:
    path = Path(path)
    data = path.read_bytes()
    if len(data) < len(MAGIC) + 8 or data[:len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    if data[-len(TRAILER):] != TRAILER:
        raise CheckpointError(f"{path}: truncated or corrupt checkpoint")
    body = data[len(MAGIC):-len(TRAILER)]
    offset = 0

    def take(fmt: str):
        nonlocal offset
        size = struct.calcsize(fmt)
        if offset + size > len(body):
            raise CheckpointError(f"{path}: truncated or corrupt checkpoint")
        values = struct.unpack_from(fmt, body, offset)
        offset += size
        return values

    (version,) = take("<I")
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    (n_nets,) = take("<I")
    specs = []
    for _ in range(n_nets):
        (name_len,) = take("<B")
        if offset + name_len > len(body):
            raise CheckpointError(f"{path}: truncated or corrupt checkpoint")
        name = body[offset:offset + name_len].decode("utf-8")
        offset += name_len
        (out_code,) = take("<B")
        if out_code not in _OUTPUT_NAMES:
            raise CheckpointError(f"{path}: unknown output code {out_code}")
        (n_sizes,) = take("<I")
        sizes = take(f"<{n_sizes}I")
        specs.append((name, sizes, _OUTPUT_NAMES[out_code]))
    dim, decay, eps, count = take("<IddQ")

    params = np.frombuffer(body[offset:], dtype="<f8")
    cursor = 0
    networks = {}
    for name, sizes, output in specs:
        net = MLP(sizes, output)
        n = net.flat_params().size
        if cursor + n > params.size:
            raise CheckpointError(f"{path}: truncated or corrupt checkpoint")
        net.set_flat_params(params[cursor:cursor + n])
        cursor += n
        networks[name] = net
    if cursor + 2 * dim != params.size:
        raise CheckpointError(f"{path}: truncated or corrupt checkpoint")
    normalizer_state = {
        "dim": dim,
        "decay": decay,
        "eps": eps,
        "count": count,
        "m1": params[cursor:cursor + dim].copy(),
        "m2": params[cursor + dim:cursor + 2 * dim].copy(),
    }
    return networks, normalizer_state
