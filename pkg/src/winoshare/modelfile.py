"""Network model and config file parsing.

Model files are indentation-free ``key: value`` blocks separated by lines
containing only ``---``.  The first block is the global header (model name,
default batch); each following block is one layer in topological order.
Shapes are written ``CxHxW`` and must chain: every layer's ``in`` equals its
predecessor's ``out``.  ``#`` starts a comment.

Example::

    model: tiny
    batch: 2
    ---
    name: conv1
    kind: conv
    in: 3x8x8
    out: 8x8x8
    kernel: 3x3
    pad: 1

Config files use the same block format with one block of accelerator keys
(omega, m, n, q, d_in, d_out, freq, bw, dsp, bram).
"""

from __future__ import annotations

from pathlib import Path

from .config import AcceleratorConfig, make_config
from .engine import LAYER_KINDS, LayerDescriptor, make_conv_layer
from .errors import ModelFileError

_CONV_KEYS = {"name", "kind", "in", "out", "kernel", "pad", "stride", "relu"}
_POOL_KEYS = {"name", "kind", "in", "out", "op", "window"}
_ELTWISE_KEYS = {"name", "kind", "in", "out", "with"}
_FC_KEYS = {"name", "kind", "in", "out"}
_HEADER_KEYS = {"model", "batch", "omega"}


def _parse_blocks(text: str):
    """Yield (start_line, {key: (value, line)}) per block."""
    blocks = []
    current: dict[str, tuple[str, int]] = {}
    start = 1
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line == "---":
            if current:
                blocks.append((start, current))
            current = {}
            start = lineno + 1
            continue
        if ":" not in line:
            raise ModelFileError(f"expected 'key: value', got {line!r}", lineno)
        key, _, value = line.partition(":")
        key = key.strip()
        value = value.strip()
        if not key or not value:
            raise ModelFileError(f"empty key or value in {line!r}", lineno)
        if key in current:
            raise ModelFileError(f"duplicate key {key!r}", lineno)
        current[key] = (value, lineno)
    if current:
        blocks.append((start, current))
    return blocks


def _get(block, key, lineno, default=None, required=False):
    if key in block:
        return block[key][0]
    if required:
        raise ModelFileError(f"missing required key {key!r}", lineno)
    return default


def _parse_int(value: str, lineno: int, key: str) -> int:
    try:
        return int(value)
    except ValueError:
        raise ModelFileError(f"{key}: expected integer, got {value!r}", lineno) from None


def _parse_shape(value: str, lineno: int, key: str) -> tuple[int, int, int]:
    parts = value.lower().split("x")
    if len(parts) != 3:
        raise ModelFileError(f"{key}: expected CxHxW, got {value!r}", lineno)
    dims = tuple(_parse_int(p, lineno, key) for p in parts)
    if min(dims) < 1:
        raise ModelFileError(f"{key}: dims must be positive, got {value!r}", lineno)
    return dims


def _parse_pair(value: str, lineno: int, key: str) -> tuple[int, int]:
    parts = value.lower().split("x")
    if len(parts) == 1:
        parts = parts * 2
    if len(parts) != 2:
        raise ModelFileError(f"{key}: expected KxK, got {value!r}", lineno)
    return tuple(_parse_int(p, lineno, key) for p in parts)


def parse_model(path, omega: int = 4, batch: int | None = None) -> list[LayerDescriptor]:
    """Parse and validate a model file into layer descriptors.

    Conv layers get their transform mode and split plan assigned for
    ``omega`` (the file's ``omega`` header, when present, is the default).
    """
    text = Path(path).read_text()
    blocks = _parse_blocks(text)
    if not blocks:
        raise ModelFileError(f"{path}: empty model")
    header_line, header = blocks[0]
    if not _HEADER_KEYS.issuperset(header) or "name" in header:
        # No recognizable header block: treat every block as a layer.
        layer_blocks = blocks
    else:
        layer_blocks = blocks[1:]
        if "omega" in header:
            omega = _parse_int(header["omega"][0], header["omega"][1], "omega")
        if batch is None and "batch" in header:
            batch = _parse_int(header["batch"][0], header["batch"][1], "batch")
    if batch is None:
        batch = 2
    if not layer_blocks:
        raise ModelFileError(f"{path}: model has no layers")

    layers: list[LayerDescriptor] = []
    seen_names: dict[str, tuple[int, int, int]] = {}
    prev_out: tuple[int, int, int] | None = None
    for start, block in layer_blocks:
        name = _get(block, "name", start, required=True)
        if name in seen_names:
            raise ModelFileError(f"duplicate layer name {name!r}", start)
        kind = _get(block, "kind", start, required=True)
        if kind not in LAYER_KINDS:
            raise ModelFileError(
                f"layer {name!r}: unknown kind {kind!r} "
                f"(expected one of {', '.join(LAYER_KINDS)})", start)
        in_shape = _parse_shape(_get(block, "in", start, required=True), start, "in")
        out_shape = _parse_shape(_get(block, "out", start, required=True), start, "out")
        if prev_out is not None and in_shape != prev_out:
            raise ModelFileError(
                f"layer {name!r}: input shape {in_shape} does not chain from "
                f"previous output {prev_out}", start)

        allowed = {
            "conv": _CONV_KEYS, "pool": _POOL_KEYS,
            "eltwise-add": _ELTWISE_KEYS, "fully-connected": _FC_KEYS,
        }[kind]
        for key, (_, lineno) in block.items():
            if key not in allowed:
                raise ModelFileError(
                    f"layer {name!r}: attribute {key!r} not supported for "
                    f"kind {kind!r}", lineno)

        if kind == "conv":
            kh, kw = _parse_pair(_get(block, "kernel", start, required=True),
                                 start, "kernel")
            pad = _parse_int(_get(block, "pad", start, "0"), start, "pad")
            if pad < 0:
                raise ModelFileError(f"layer {name!r}: negative padding", start)
            stride = _parse_int(_get(block, "stride", start, "1"), start, "stride")
            if stride != 1:
                raise ModelFileError(
                    f"layer {name!r}: stride {stride} unsupported (stride 1 only)",
                    start)
            relu = _get(block, "relu", start, "false").lower() in ("true", "1", "yes")
            expect_oh = in_shape[1] + 2 * pad - kh + 1
            expect_ow = in_shape[2] + 2 * pad - kw + 1
            if (out_shape[1], out_shape[2]) != (expect_oh, expect_ow):
                raise ModelFileError(
                    f"layer {name!r}: out {out_shape[1]}x{out_shape[2]} "
                    f"inconsistent with stride-1 conv (expected "
                    f"{expect_oh}x{expect_ow})", start)
            layer = make_conv_layer(
                name, in_shape[0], in_shape[1], in_shape[2], out_shape[0],
                kh, kw, padding=pad, omega=omega, batch=batch, apply_relu=relu)
        elif kind == "pool":
            op = _get(block, "op", start, "max")
            if op not in ("max", "avg"):
                raise ModelFileError(f"layer {name!r}: pool op must be max|avg", start)
            window = _parse_int(_get(block, "window", start, "2"), start, "window")
            if (in_shape[0] != out_shape[0]
                    or in_shape[1] != out_shape[1] * window
                    or in_shape[2] != out_shape[2] * window):
                raise ModelFileError(
                    f"layer {name!r}: pool shapes inconsistent with window "
                    f"{window}", start)
            layer = LayerDescriptor(
                name=name, kind="pool",
                in_channels=in_shape[0], in_height=in_shape[1], in_width=in_shape[2],
                out_channels=out_shape[0], out_height=out_shape[1],
                out_width=out_shape[2], batch=batch,
                pool_op=op, pool_window=window)
        elif kind == "eltwise-add":
            operand = _get(block, "with", start, required=True)
            if operand not in seen_names:
                raise ModelFileError(
                    f"layer {name!r}: operand {operand!r} is not an earlier layer",
                    start)
            if seen_names[operand] != in_shape or out_shape != in_shape:
                raise ModelFileError(
                    f"layer {name!r}: eltwise-add shapes must all match", start)
            layer = LayerDescriptor(
                name=name, kind="eltwise-add",
                in_channels=in_shape[0], in_height=in_shape[1], in_width=in_shape[2],
                out_channels=out_shape[0], out_height=out_shape[1],
                out_width=out_shape[2], batch=batch, eltwise_with=operand)
        else:
            if out_shape[1] != 1 or out_shape[2] != 1:
                raise ModelFileError(
                    f"layer {name!r}: fully-connected output must be Fx1x1", start)
            layer = LayerDescriptor(
                name=name, kind="fully-connected",
                in_channels=in_shape[0], in_height=in_shape[1], in_width=in_shape[2],
                out_channels=out_shape[0], out_height=out_shape[1],
                out_width=out_shape[2], batch=batch)
        layers.append(layer)
        seen_names[name] = out_shape
        prev_out = out_shape
    return layers


def serialize_model(layers, model_name: str = "model", batch: int | None = None) -> str:
    """Inverse of :func:`parse_model` (up to comments and ordering)."""
    out = [f"model: {model_name}"]
    if batch is None and layers:
        batch = layers[0].batch
    if batch is not None:
        out.append(f"batch: {batch}")
    for l in layers:
        out.append("---")
        out.append(f"name: {l.name}")
        out.append(f"kind: {l.kind}")
        out.append(f"in: {l.in_channels}x{l.in_height}x{l.in_width}")
        out.append(f"out: {l.out_channels}x{l.out_height}x{l.out_width}")
        if l.kind == "conv":
            out.append(f"kernel: {l.kernel_h}x{l.kernel_w}")
            out.append(f"pad: {l.padding}")
            if l.apply_relu:
                out.append("relu: true")
        elif l.kind == "pool":
            out.append(f"op: {l.pool_op}")
            out.append(f"window: {l.pool_window}")
        elif l.kind == "eltwise-add":
            out.append(f"with: {l.eltwise_with}")
    return "\n".join(out) + "\n"


_CONFIG_KEYS = {"omega", "m", "n", "q", "d_in", "d_out", "freq", "bw",
                "dsp", "bram"}


def parse_config(path) -> AcceleratorConfig:
    """Parse an accelerator config file (one key:value block)."""
    blocks = _parse_blocks(Path(path).read_text())
    if len(blocks) != 1:
        raise ModelFileError(f"{path}: config must be a single block")
    start, block = blocks[0]
    for key, (_, lineno) in block.items():
        if key not in _CONFIG_KEYS:
            raise ModelFileError(f"unknown config key {key!r}", lineno)
    def geti(key, default=None, required=False):
        v = _get(block, key, start, default=default, required=required)
        return None if v is None else _parse_int(str(v), start, key)
    return make_config(
        omega=geti("omega", required=True),
        rows=geti("m", required=True),
        cols=geti("n", required=True),
        q=geti("q", required=True),
        d_in=geti("d_in", required=True),
        d_out=geti("d_out", required=True),
        freq_hz=geti("freq", 250_000_000),
        bandwidth=geti("bw", 10_664_000_000),
        dsp_budget=geti("dsp"),
        bram_budget=geti("bram"),
    )
