"""Tensor file formats.

Binary feature maps: a 16-byte little-endian header (4-byte magic ``WST1``
followed by u32 channels, height, width) and int32 elements in storage
order.  Binary weights use magic ``WSW1`` and a 20-byte header with four u32
dims.  The text format is one header line (``tensor C H W`` or ``weights
IC OC KH KW``) followed by whitespace-separated numbers; entries may be
integers or rationals like ``3/4``, which keeps tiny exact test vectors
human-writable.
"""

from __future__ import annotations

import struct
from pathlib import Path

from .errors import ModelFileError
from .tensors import Tensor, WeightTensor, as_exact

TENSOR_MAGIC = b"WST1"
WEIGHT_MAGIC = b"WSW1"


def write_tensor(path, t: Tensor) -> None:
    if any(not isinstance(v, int) and v != int(v) for v in t.data):
        raise ModelFileError(
            f"{path}: binary tensors hold integers only; "
            "write a .txt tensor for rational values"
        )
    try:
        payload = struct.pack(f"<{len(t.data)}i", *[int(v) for v in t.data])
    except struct.error:
        raise ModelFileError(
            f"{path}: values exceed int32; exact outputs of deep graphs "
            "grow without bound, write a .txt tensor instead"
        ) from None
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sIII", TENSOR_MAGIC, *t.dims))
        fh.write(payload)


def read_tensor(path) -> Tensor:
    raw = Path(path).read_bytes()
    if len(raw) < 16 or raw[:4] != TENSOR_MAGIC:
        raise ModelFileError(f"{path}: not a tensor file (bad magic)")
    c, h, w = struct.unpack("<III", raw[4:16])
    n = c * h * w
    if len(raw) != 16 + 4 * n:
        raise ModelFileError(f"{path}: payload size mismatch for {c}x{h}x{w}")
    return Tensor(c, h, w, list(struct.unpack(f"<{n}i", raw[16:])))


def write_weights(path, w: WeightTensor) -> None:
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sIIII", WEIGHT_MAGIC, *w.dims))
        fh.write(struct.pack(f"<{len(w.data)}i", *[int(v) for v in w.data]))


def read_weights(path) -> WeightTensor:
    raw = Path(path).read_bytes()
    if len(raw) < 20 or raw[:4] != WEIGHT_MAGIC:
        raise ModelFileError(f"{path}: not a weight file (bad magic)")
    ic, oc, kh, kw = struct.unpack("<IIII", raw[4:20])
    n = ic * oc * kh * kw
    if len(raw) != 20 + 4 * n:
        raise ModelFileError(f"{path}: payload size mismatch")
    return WeightTensor(ic, oc, kh, kw, list(struct.unpack(f"<{n}i", raw[20:])))


def read_text_tensor(path):
    """Parse the text format; returns a Tensor or WeightTensor."""
    tokens = Path(path).read_text().split()
    if not tokens:
        raise ModelFileError(f"{path}: empty tensor file")
    kind = tokens[0]
    try:
        if kind == "tensor":
            c, h, w = (int(x) for x in tokens[1:4])
            vals = [as_exact(x) for x in tokens[4:]]
            return Tensor(c, h, w, vals)
        if kind == "weights":
            ic, oc, kh, kw = (int(x) for x in tokens[1:5])
            vals = [as_exact(x) for x in tokens[5:]]
            return WeightTensor(ic, oc, kh, kw, vals)
    except (ValueError, ZeroDivisionError) as exc:
        raise ModelFileError(f"{path}: {exc}") from None
    raise ModelFileError(f"{path}: unknown tensor kind {kind!r}")


def write_text_tensor(path, t) -> None:
    with open(path, "w") as fh:
        if isinstance(t, Tensor):
            fh.write(f"tensor {t.channels} {t.height} {t.width}\n")
        else:
            fh.write(f"weights {t.in_channels} {t.out_channels} "
                     f"{t.kernel_h} {t.kernel_w}\n")
        fh.write(" ".join(str(v) for v in t.data))
        fh.write("\n")


def load_tensor(path):
    """Dispatch on extension: ``.txt`` is text, anything else binary."""
    if str(path).endswith(".txt"):
        return read_text_tensor(path)
    raw = Path(path).read_bytes()[:4]
    if raw == WEIGHT_MAGIC:
        return read_weights(path)
    return read_tensor(path)
