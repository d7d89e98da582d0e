"""Naive reference implementations used as oracles.

Everything here is deliberately written as plain nested loops with no tiling,
no transforms, and no shared code with the optimized paths it checks.
"""

from __future__ import annotations

from fractions import Fraction

from .errors import ContractViolation, UnsupportedLayerError
from .tensors import Tensor, WeightTensor


def direct_conv(x: Tensor, w: WeightTensor, padding: int = 0) -> Tensor:
    """Stride-1 cross-correlation with zero padding, by triple loop."""
    if x.channels != w.in_channels:
        raise ContractViolation(
            f"input channels {x.channels} != weight input channels {w.in_channels}"
        )
    oh = x.height + 2 * padding - w.kernel_h + 1
    ow = x.width + 2 * padding - w.kernel_w + 1
    if oh < 1 or ow < 1:
        raise ContractViolation("kernel larger than padded input")
    out = Tensor(w.out_channels, oh, ow)
    for oc in range(w.out_channels):
        for r in range(oh):
            for c in range(ow):
                acc = 0
                for ic in range(x.channels):
                    for u in range(w.kernel_h):
                        for v in range(w.kernel_w):
                            acc += x.get_padded(ic, r - padding + u, c - padding + v) \
                                * w.get(ic, oc, u, v)
                out.set(oc, r, c, acc)
    return out


def direct_conv_2d(d, g):
    """Valid (no padding) 2-D cross-correlation of two matrices."""
    n_h, n_w = len(d), len(d[0])
    k_h, k_w = len(g), len(g[0])
    m_h, m_w = n_h - k_h + 1, n_w - k_w + 1
    if m_h < 1 or m_w < 1:
        raise ContractViolation("kernel larger than input")
    return tuple(
        tuple(
            sum(d[r + u][c + v] * g[u][v] for u in range(k_h) for v in range(k_w))
            for c in range(m_w)
        )
        for r in range(m_h)
    )


def pool(x: Tensor, window: int, op: str = "max") -> Tensor:
    """Non-overlapping max/average pooling with stride == window."""
    if x.height % window or x.width % window:
        raise UnsupportedLayerError(
            f"pool window {window} must divide {x.height}x{x.width}"
        )
    oh, ow = x.height // window, x.width // window
    out = Tensor(x.channels, oh, ow)
    for c in range(x.channels):
        for r in range(oh):
            for col in range(ow):
                vals = [
                    x.get(c, r * window + u, col * window + v)
                    for u in range(window)
                    for v in range(window)
                ]
                if op == "max":
                    agg = max(vals)
                elif op == "avg":
                    agg = Fraction(sum(vals), len(vals))
                    if agg.denominator == 1:
                        agg = int(agg)
                else:
                    raise UnsupportedLayerError(f"unknown pool op {op!r}")
                out.set(c, r, col, agg)
    return out


def eltwise_add(a: Tensor, b: Tensor) -> Tensor:
    if a.dims != b.dims:
        raise ContractViolation(f"eltwise-add shape mismatch {a.dims} vs {b.dims}")
    return Tensor(a.channels, a.height, a.width,
                  [x + y for x, y in zip(a.data, b.data)])


def relu(x: Tensor) -> Tensor:
    return Tensor(x.channels, x.height, x.width,
                  [v if v > 0 else 0 for v in x.data])


def fully_connected(x: Tensor, weight_rows) -> Tensor:
    """Dense layer over the flattened input; returns an Fx1x1 tensor.

    ``weight_rows[o]`` holds the weights for output feature ``o`` in the
    tensor's natural (channel-major) flattening order.
    """
    n_in = len(x.data)
    for row in weight_rows:
        if len(row) != n_in:
            raise ContractViolation(
                f"fc weight row length {len(row)} != flattened input {n_in}"
            )
    vals = [sum(wv * xv for wv, xv in zip(row, x.data)) for row in weight_rows]
    return Tensor(len(weight_rows), 1, 1, vals)
