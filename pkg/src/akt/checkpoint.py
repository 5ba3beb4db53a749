"""Binary checkpoint format AKTCKPT1.

Layout (all integers little-endian, floats little-endian float64):

    8s    magic "AKTCKPT1"
    u32   format version (currently 1)
    u64   config text length, then that many UTF-8 bytes
    u64   array count
    per array:
        u64   name length, then that many UTF-8 bytes
        u64   rank
        u64   dims[rank]
        f64   row-major payload

Loading restores every parameter bitwise; save(load(x)) is byte-identical.
"""

import struct

import numpy as np

from akt.errors import CheckpointError
from akt.kernel import AffineLayer
from akt.networks import MLPParams, MLPSpec

MAGIC = b"AKTCKPT1"
VERSION = 1


def save_checkpoint(path, config_text, arrays):
    """Write named float64 arrays plus the canonical config text."""
    arrays = list(arrays)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        config_bytes = config_text.encode("utf-8")
        fh.write(struct.pack("<Q", len(config_bytes)))
        fh.write(config_bytes)
        fh.write(struct.pack("<Q", len(arrays)))
        for name, array in arrays:
            array = np.ascontiguousarray(array, dtype=np.float64)
            name_bytes = name.encode("utf-8")
            fh.write(struct.pack("<Q", len(name_bytes)))
            fh.write(name_bytes)
            fh.write(struct.pack("<Q", array.ndim))
            for dim in array.shape:
                fh.write(struct.pack("<Q", dim))
            fh.write(array.astype("<f8").tobytes())


class _Reader:
    def __init__(self, raw):
        self.raw = raw
        self.pos = 0

    def take(self, count, what):
        if self.pos + count > len(self.raw):
            raise CheckpointError(
                f"truncated checkpoint while reading {what}: need {count} bytes", self.pos
            )
        chunk = self.raw[self.pos : self.pos + count]
        self.pos += count
        return chunk

    def u32(self, what):
        return struct.unpack("<I", self.take(4, what))[0]

    def u64(self, what):
        return struct.unpack("<Q", self.take(8, what))[0]


def load_checkpoint(path):
    """Read (config_text, {name: array}) back, bit-exactly, in saved order."""
    with open(path, "rb") as fh:
        raw = fh.read()
    reader = _Reader(raw)
    magic = reader.take(len(MAGIC), "magic")
    if magic != MAGIC:
        raise CheckpointError(f"bad magic {magic!r}, expected {MAGIC!r}", 0)
    version = reader.u32("version")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}, expected {VERSION}", 8)
    config_len = reader.u64("config length")
    config_text = reader.take(config_len, "config text").decode("utf-8")
    count = reader.u64("array count")
    arrays = {}
    for index in range(count):
        name_len = reader.u64(f"array {index} name length")
        name = reader.take(name_len, f"array {index} name").decode("utf-8")
        rank = reader.u64(f"array {name} rank")
        shape = tuple(reader.u64(f"array {name} dim {d}") for d in range(rank))
        total = 1
        for dim in shape:
            total *= dim
        payload = reader.take(8 * total, f"array {name} payload")
        arrays[name] = np.frombuffer(payload, dtype="<f8").reshape(shape).copy()
    if reader.pos != len(raw):
        raise CheckpointError(
            f"trailing bytes after last array: {len(raw) - reader.pos}", reader.pos
        )
    return config_text, arrays


def model_arrays(prefix, net):
    """Named parameter arrays for a network, in parameter-list order."""
    names, params, _ = net.param_lists()
    return [(f"{prefix}.{name}", param) for name, param in zip(names, params)]


def restore_mlp(arrays, prefix, task_kind, feature_tap=-1):
    """Rebuild an MLP from checkpoint arrays; shapes define the architecture."""
    hidden = []
    index = 0
    while f"{prefix}.hidden{index}.w" in arrays:
        hidden.append(
            AffineLayer(arrays[f"{prefix}.hidden{index}.w"], arrays[f"{prefix}.hidden{index}.b"])
        )
        index += 1
    if not hidden or f"{prefix}.head.w" not in arrays:
        raise CheckpointError(f"checkpoint has no complete network under prefix {prefix!r}", 0)
    head = AffineLayer(arrays[f"{prefix}.head.w"], arrays[f"{prefix}.head.b"])
    spec = MLPSpec(
        input_dim=hidden[0].in_dim,
        num_classes=head.out_dim,
        hidden_dims=tuple(layer.out_dim for layer in hidden),
        task_kind=task_kind,
        feature_tap=feature_tap,
    )
    return MLPParams(spec, hidden, head)
