"""Activation capture: flattening, sample accounting, and the .act file format.

A captured activation block is a 4-D (N, H, W, C) tensor, stored row-major
with the channel axis fastest, so every spatial position of every image is
one contiguous C-vector.  Flattening to the (D, M) PCA sample matrix is
then a pure reshape.

.act file layout (all integers little-endian u32):

    offset 0   magic   b"ACTV"
    offset 4   version 1
    offset 8   layer_id
    offset 12  N
    offset 16  H
    offset 20  W
    offset 24  C
    offset 28  dtype   1 = float32 little-endian
    offset 32  payload N*H*W*C 4-byte floats, C fastest

One file per layer per captured batch, named ``layer<id>_batch<k>.act``.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass

import numpy as np

from .errors import DataError, DimensionError, FormatError, LengthError

MAGIC = b"ACTV"
VERSION = 1
DTYPE_F32 = 1
HEADER = struct.Struct("<4s7I")

# A flattened (D, M) sample matrix is a plain 2-D float array.
SampleMatrix = np.ndarray


@dataclass
class ActivationTensor:
    """One captured activation block from a conv layer.

    data is (N, H, W, C); C here is the number of filters of the layer.
    """

    layer_id: int
    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim != 4 or min(self.data.shape) < 1:
            raise DimensionError(
                f"activation tensor must be 4-D with positive dims, got {self.data.shape}"
            )
        if self.layer_id < 0:
            raise DimensionError(f"layer_id must be >= 0, got {self.layer_id}")
        if not np.isfinite(self.data).all():
            raise DataError(f"layer {self.layer_id}: non-finite activation values")

    @property
    def dims(self) -> tuple[int, int, int, int]:
        return self.data.shape

    @property
    def channels(self) -> int:
        return self.data.shape[3]


def flatten(t: ActivationTensor) -> SampleMatrix:
    """Reshape (N, H, W, C) into (N*H*W, C): one row per spatial position.

    Row n*H*W + h*W + w is the C filter responses at position (h, w) of
    batch item n.
    """
    n, h, w, c = t.dims
    return np.ascontiguousarray(t.data, dtype=np.float64).reshape(n * h * w, c)


def required_batches(c: int, h: int, w: int, n: int) -> int:
    """Batches needed so the sample count reaches ~100x the filter count.

    ceil(100*C / (H*W*N)), floored at one batch.
    """
    if min(c, h, w, n) < 1:
        raise DimensionError(f"all dims must be >= 1, got C={c} H={h} W={w} N={n}")
    return max(1, -(-100 * c // (h * w * n)))


def capture_filename(layer_id: int, batch: int) -> str:
    return f"layer{layer_id}_batch{batch}.act"


def write_activations(t: ActivationTensor, sink) -> None:
    """Write one tensor to a binary file or file-like sink (byte-exact format)."""
    if hasattr(sink, "write"):
        _write(t, sink)
    else:
        with open(sink, "wb") as fh:
            _write(t, fh)


def _write(t: ActivationTensor, fh) -> None:
    n, h, w, c = t.dims
    fh.write(HEADER.pack(MAGIC, VERSION, t.layer_id, n, h, w, c, DTYPE_F32))
    fh.write(np.ascontiguousarray(t.data, dtype="<f4").tobytes())


def read_activations(source) -> ActivationTensor:
    """Read one tensor back; validates magic, version, dtype, and payload length."""
    if hasattr(source, "read"):
        return _read(source)
    with open(source, "rb") as fh:
        return _read(fh)


def _read(fh) -> ActivationTensor:
    header = fh.read(HEADER.size)
    if len(header) < HEADER.size:
        raise LengthError(
            f"header truncated: expected {HEADER.size} bytes, got {len(header)}"
        )
    magic, version, layer_id, n, h, w, c, dtype = HEADER.unpack(header)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r} at offset 0, expected {MAGIC!r}")
    if version != VERSION:
        raise FormatError(f"unsupported version {version}, expected {VERSION}")
    if dtype != DTYPE_F32:
        raise FormatError(f"unsupported dtype code {dtype}, expected {DTYPE_F32}")
    if min(n, h, w, c) < 1:
        raise FormatError(f"header dims must be >= 1, got N={n} H={h} W={w} C={c}")
    expected = n * h * w * c * 4
    payload = fh.read(expected)
    if len(payload) < expected:
        raise LengthError(
            f"payload truncated: expected {expected} bytes, got {len(payload)}"
        )
    data = np.frombuffer(payload, dtype="<f4").reshape(n, h, w, c)
    if not np.isfinite(data).all():
        raise DataError(f"layer {layer_id}: non-finite values in payload")
    return ActivationTensor(layer_id=layer_id, data=data.copy())


def to_bytes(t: ActivationTensor) -> bytes:
    buf = io.BytesIO()
    write_activations(t, buf)
    return buf.getvalue()


def from_bytes(raw: bytes) -> ActivationTensor:
    return read_activations(io.BytesIO(raw))
