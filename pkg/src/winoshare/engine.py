"""Layer-level functional convolution through the transform pipeline.

``conv_layer`` computes a full stride-1 convolution layer by tiling the
output into m x m tiles, accumulating transformed products over input
channels inside the transform (the channel sum commutes with the linear
output transform), and summing split-kernel pieces at the output.  The
result is exact and bit-identical to :func:`winoshare.reference.direct_conv`.

``tiled_loop_reference`` computes the same thing through the hardware's loop
nest (row step / output-channel tile / channel group / row tile / column
tile / PE row / PE column) with per-group post-transform accumulation, and
``schedule_rows`` derives the row-stationary iteration plan those loops run
under.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from fractions import Fraction

from ._util import ceil_div
from .config import AcceleratorConfig
from .errors import (
    ContractViolation,
    InfeasibleConfigError,
    UnsupportedLayerError,
)
from .membank import low_field_width
from .reference import eltwise_add, fully_connected, pool, relu
from .tensors import Tensor, WeightTensor
from .wino import (
    SplitPlan,
    WinogradMode,
    choose_kernel_size,
    make_mode,
    split_kernel,
)

LAYER_KINDS = ("conv", "pool", "eltwise-add", "fully-connected")


@dataclass(frozen=True)
class LayerDescriptor:
    """One network layer with its resolved transform mode and split plan.

    For conv layers ``split`` is the padding/offset plan for the kernel
    shape; concrete sub-kernels are split from the weight tensor per channel
    pair when the layer runs.
    """

    name: str
    kind: str
    in_channels: int
    in_height: int
    in_width: int
    out_channels: int
    out_height: int
    out_width: int
    kernel_h: int = 1
    kernel_w: int = 1
    padding: int = 0
    stride: int = 1
    batch: int = 2
    mode: WinogradMode | None = None
    split: SplitPlan | None = None
    pool_op: str = "max"
    pool_window: int = 2
    eltwise_with: str | None = None
    apply_relu: bool = False

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise UnsupportedLayerError(f"unknown layer kind {self.kind!r}")
        if min(self.in_channels, self.in_height, self.in_width,
               self.out_channels, self.out_height, self.out_width) < 1:
            raise ContractViolation(f"layer {self.name}: dims must be positive")
        if self.kind == "conv":
            if self.stride != 1:
                raise UnsupportedLayerError(
                    f"layer {self.name}: only stride 1 is supported"
                )
            if self.padding < 0:
                raise ContractViolation(f"layer {self.name}: negative padding")
            oh = self.in_height + 2 * self.padding - self.kernel_h + 1
            ow = self.in_width + 2 * self.padding - self.kernel_w + 1
            if (oh, ow) != (self.out_height, self.out_width):
                raise ContractViolation(
                    f"layer {self.name}: output {self.out_height}x{self.out_width} "
                    f"inconsistent with stride-1 shapes (expected {oh}x{ow})"
                )
            if self.mode is not None and self.split is not None \
                    and self.split.base_k != self.mode.k:
                raise ContractViolation(
                    f"layer {self.name}: split base {self.split.base_k} != mode k"
                )

    def padded_kernel_h(self) -> int:
        gh, _ = self.split.grid
        return gh * self.mode.k

    def with_mode(self, omega: int) -> "LayerDescriptor":
        """Re-resolve the transform mode for a different filter size."""
        if self.kind != "conv":
            return self
        k = choose_kernel_size(omega, self.kernel_h, self.kernel_w)
        mode = make_mode(omega, k)
        plan = split_kernel(
            [[0] * self.kernel_w for _ in range(self.kernel_h)], k
        )
        return replace(self, mode=mode, split=plan)


def make_conv_layer(name, in_channels, in_height, in_width, out_channels,
                    kernel_h, kernel_w, padding=0, omega=4, batch=2,
                    apply_relu=False, mode: WinogradMode | None = None) -> LayerDescriptor:
    """Build a validated conv layer; mode defaults to the fewest-splits pick."""
    if mode is None:
        mode = make_mode(omega, choose_kernel_size(omega, kernel_h, kernel_w))
    plan = split_kernel([[0] * kernel_w for _ in range(kernel_h)], mode.k)
    oh = in_height + 2 * padding - kernel_h + 1
    ow = in_width + 2 * padding - kernel_w + 1
    return LayerDescriptor(
        name=name, kind="conv",
        in_channels=in_channels, in_height=in_height, in_width=in_width,
        out_channels=out_channels, out_height=oh, out_width=ow,
        kernel_h=kernel_h, kernel_w=kernel_w, padding=padding,
        batch=batch, mode=mode, split=plan, apply_relu=apply_relu,
    )


# --------------------------------------------------------------------------
# Transform helpers on plain nested lists, integer-lifted.
#
# B_T and A_T are integral; only G carries a denominator.  Lifting V by that
# denominator keeps every intermediate an int for integer tensors (and stays
# exact for Fraction tensors), with one exact division at the very end.
# --------------------------------------------------------------------------

def _imatmul(a, b):
    bt = list(zip(*b))
    return [[sum(x * y for x, y in zip(row, col)) for col in bt] for row in a]


def _transform_tile(b_i, tile):
    return _imatmul(_imatmul(b_i, tile), list(zip(*b_i)))


def _split_weights(layer: LayerDescriptor, w: WeightTensor):
    """Lifted transformed kernels per split piece and channel pair.

    Returns ``(pieces, denom)`` where ``pieces[(pi, pj)][ic][oc]`` is the
    transformed sub-kernel scaled by ``denom``.
    """
    mode = layer.mode
    _, g_i, g_den, _ = mode._scaled
    denom = g_den * g_den
    k = mode.k
    out = {}
    for pi, pj, _ in layer.split.pieces:
        per_ic = []
        for ic in range(w.in_channels):
            per_oc = []
            for oc in range(w.out_channels):
                full = w.kernel(ic, oc)
                sub = [
                    [
                        full[pi * k + u][pj * k + v]
                        if pi * k + u < layer.kernel_h and pj * k + v < layer.kernel_w
                        else 0
                        for v in range(k)
                    ]
                    for u in range(k)
                ]
                per_oc.append(_transform_tile(g_i, sub))
            per_ic.append(per_oc)
        out[(pi, pj)] = per_ic
    return out, denom


def _extract_tile(x: Tensor, ic: int, r0: int, c0: int, omega: int):
    h, wd = x.height, x.width
    rows = []
    for u in range(omega):
        r = r0 + u
        if 0 <= r < h:
            base = (ic * h + r) * wd
            row = [
                x.data[base + c] if 0 <= c < wd else 0
                for c in (c0 + v for v in range(omega))
            ]
        else:
            row = [0] * omega
        rows.append(row)
    return rows


def _check_conv_args(layer: LayerDescriptor, x: Tensor, w: WeightTensor):
    if layer.kind != "conv":
        raise UnsupportedLayerError(f"layer {layer.name} is not a conv layer")
    if layer.stride != 1:
        raise UnsupportedLayerError("only stride 1 is supported")
    if x.dims != (layer.in_channels, layer.in_height, layer.in_width):
        raise ContractViolation(
            f"input {x.dims} != layer input "
            f"({layer.in_channels},{layer.in_height},{layer.in_width})"
        )
    if w.dims != (layer.in_channels, layer.out_channels,
                  layer.kernel_h, layer.kernel_w):
        raise ContractViolation(f"weights {w.dims} do not match layer {layer.name}")


def _finalize(layer, acc, denom, exact=True) -> Tensor:
    out = Tensor(layer.out_channels, layer.out_height, layer.out_width)
    for i, v in enumerate(acc):
        if isinstance(v, int):
            quot, rem = divmod(v, denom)
            if rem == 0:
                out.data[i] = quot
                continue
            assert not exact, "exact division expected for integer layers"
            f = Fraction(v, denom)
        else:
            f = Fraction(v, denom) if not isinstance(v, Fraction) else v / denom
        out.data[i] = int(f) if f.denominator == 1 else f
    return out


def conv_layer(layer: LayerDescriptor, x, w: WeightTensor):
    """Convolution of one image (or a batch tuple) with zero padding.

    Output equals direct stride-1 convolution exactly.  Tiles whose output
    coordinates run past the layer extent are computed and discarded; reads
    past the input extent see zeros.
    """
    if isinstance(x, Tensor):
        return _conv_layer_single(layer, x, w)
    return tuple(_conv_layer_single(layer, item, w) for item in x)


def _conv_layer_single(layer: LayerDescriptor, x: Tensor, w: WeightTensor) -> Tensor:
    _check_conv_args(layer, x, w)
    v_by_piece, denom = _split_weights(layer, w)
    return _conv_core(layer, x, v_by_piece, denom)


def _conv_core(layer: LayerDescriptor, x: Tensor, v_by_piece, denom,
               exact=True) -> Tensor:
    """Tile loop over pre-transformed (lifted) kernels."""
    mode = layer.mode
    b_i, _, _, a_i = mode._scaled
    omega, m, k, pad = mode.omega, mode.m, mode.k, layer.padding
    oh, ow, od, ic_n = (layer.out_height, layer.out_width,
                       layer.out_channels, layer.in_channels)
    acc = [0] * (od * oh * ow)
    a_t_cols = list(zip(*a_i))
    for (pi, pj), v_tiles in v_by_piece.items():
        off_r = pi * k - pad
        off_c = pj * k - pad
        for x0 in range(0, oh, m):
            for y0 in range(0, ow, m):
                u_tiles = [
                    _transform_tile(b_i, _extract_tile(x, ic, x0 + off_r, y0 + off_c, omega))
                    for ic in range(ic_n)
                ]
                for oc in range(od):
                    e = [[0] * omega for _ in range(omega)]
                    for ic in range(ic_n):
                        u = u_tiles[ic]
                        v = v_tiles[ic][oc]
                        for r in range(omega):
                            er, ur, vr = e[r], u[r], v[r]
                            for c in range(omega):
                                er[c] += ur[c] * vr[c]
                    y = _imatmul(_imatmul(a_i, e), a_t_cols)
                    base_oc = oc * oh
                    for dx in range(min(m, oh - x0)):
                        row_base = (base_oc + x0 + dx) * ow + y0
                        y_row = y[dx]
                        for dy in range(min(m, ow - y0)):
                            acc[row_base + dy] += y_row[dy]
    return _finalize(layer, acc, denom, exact=exact)


def round_half_even(value: Fraction, frac_bits: int) -> Fraction:
    """Round to a multiple of 2**-frac_bits, ties to even."""
    scaled = Fraction(value) * (1 << frac_bits)
    q, r = divmod(scaled.numerator, scaled.denominator)
    twice = 2 * r
    if twice > scaled.denominator or (twice == scaled.denominator and q % 2):
        q += 1
    return Fraction(q, 1 << frac_bits)


def conv_layer_quantized(layer: LayerDescriptor, x, w: WeightTensor,
                         weight_frac_bits: int = 12):
    """Convolution with transformed weights quantized to fixed point.

    Kernels are transformed exactly and then rounded to ``weight_frac_bits``
    fractional bits with round-half-to-even; everything downstream stays
    exact, so the result is the deterministic fixed-point-weight answer.
    For transforms whose entries are dyadic (the w=4 modes at >= 2
    fractional bits) quantization changes nothing; the non-dyadic w=6
    kernel transforms genuinely round.
    """
    if isinstance(x, Tensor):
        return _conv_quantized_single(layer, x, w, weight_frac_bits)
    return tuple(_conv_quantized_single(layer, item, w, weight_frac_bits)
                 for item in x)


def _conv_quantized_single(layer, x, w, weight_frac_bits):
    _check_conv_args(layer, x, w)
    mode = layer.mode
    _, g_i, g_den, _ = mode._scaled
    lift = 1 << weight_frac_bits
    k = mode.k
    v_by_piece = {}
    for pi, pj, _ in layer.split.pieces:
        per_ic = []
        for ic in range(w.in_channels):
            per_oc = []
            for oc in range(w.out_channels):
                full = w.kernel(ic, oc)
                sub = [
                    [
                        full[pi * k + u][pj * k + v]
                        if pi * k + u < layer.kernel_h and pj * k + v < layer.kernel_w
                        else 0
                        for v in range(k)
                    ]
                    for u in range(k)
                ]
                exact = _transform_tile(g_i, sub)
                per_oc.append([
                    [int(round_half_even(Fraction(el, g_den * g_den),
                                         weight_frac_bits) * lift)
                     for el in row]
                    for row in exact
                ])
            per_ic.append(per_oc)
        v_by_piece[(pi, pj)] = per_ic
    return _conv_core(layer, x, v_by_piece, lift, exact=False)


# --------------------------------------------------------------------------
# Row-stationary schedule.
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class RowStep:
    index: int
    compute_rows: tuple[int, int]          # output rows computed this iteration
    load_rows: tuple[int, int] | None      # input rows prefetched for the next
    drain_rows: tuple[int, int] | None     # output rows written (previous iter)


@dataclass(frozen=True)
class RowSchedule:
    rs: int
    preload_rows: tuple[int, int]          # input rows loaded before the loop
    steps: tuple[RowStep, ...]
    flush_rows: tuple[int, int]            # final drain after the loop

    @property
    def iterations(self) -> int:
        return len(self.steps)


def max_row_step(layer: LayerDescriptor, cfg: AcceleratorConfig) -> tuple[int, str]:
    """Largest feasible row step (multiple of m) and the binding buffer.

    Output-side: one iteration's m x m output tiles per PE must fit the
    ``d_out``-deep buffer, whose addresses are one transformed tile
    (omega^2 words) wide and therefore pack ``floor(omega^2 / m^2)`` output
    tiles each.  Input-side: the live window of ``2*RS + w_eff - 1`` input
    rows folds into the bank grid, one fold per
    ``2**low_field_width`` addresses (the high/low concat strides folds at
    power-of-two boundaries even when a fold holds fewer words), and the
    folds must fit ``d_in``.  ``w_eff`` extends the tile height by the
    split-piece row offsets.
    """
    mode = layer.mode
    m = mode.m
    tiles_w = ceil_div(layer.out_width, cfg.cols * m)
    od_tiles = ceil_div(layer.out_channels, cfg.rows)
    out_slots = tiles_w * od_tiles
    tile_capacity = cfg.d_out * ((mode.omega ** 2) // (m * m))
    max_row_tiles = tile_capacity // out_slots
    rs_out = max_row_tiles * m

    grid_h = layer.split.grid[0]
    w_eff = mode.omega + (grid_h - 1) * mode.k
    max_folds = cfg.d_in >> low_field_width(layer.in_width,
                                            layer.in_channels, cfg.w_b)
    rs_in = ((max_folds * cfg.h_b - w_eff + 1) // 2 // m) * m

    rs_needed = ceil_div(layer.out_height, m) * m
    rs = min(rs_out, rs_in, rs_needed)
    binding = "d_out" if rs_out <= rs_in else "d_in"
    return rs, binding


def schedule_rows(layer: LayerDescriptor, cfg: AcceleratorConfig) -> RowSchedule:
    """Row-stationary iteration plan covering output rows [0, OH).

    Each step interleaves prefetch of the next step's input rows, compute of
    its own rows, and drain of the previous step's output rows; a final
    flush drains the last step.
    """
    if layer.kind != "conv":
        raise UnsupportedLayerError("row schedules apply to conv layers")
    rs, binding = max_row_step(layer, cfg)
    if rs < layer.mode.m:
        raise InfeasibleConfigError(
            f"layer {layer.name}: no feasible row step "
            f"(even one tile row overflows {binding})",
            binding=binding,
        )
    pad = layer.padding
    kpad_h = layer.padded_kernel_h()
    oh = layer.out_height
    preload = (-pad, rs + kpad_h - 1 - pad)
    steps = []
    n_steps = ceil_div(oh, rs)
    load_cursor = preload[1]
    for i in range(n_steps):
        r0 = i * rs
        r1 = min(r0 + rs, oh)
        if i + 1 < n_steps:
            next_hi = min(load_cursor + rs,
                          (n_steps - 1) * rs + rs + kpad_h - 1 - pad)
            load = (load_cursor, next_hi)
            load_cursor = next_hi
        else:
            load = None
        drain = None
        if i > 0:
            drain = ((i - 1) * rs, min(i * rs, oh))
        steps.append(RowStep(i, (r0, r1), load, drain))
    flush = ((n_steps - 1) * rs, oh)
    return RowSchedule(rs, preload, tuple(steps), flush)


# --------------------------------------------------------------------------
# Hardware loop-nest reference.
# --------------------------------------------------------------------------

def tiled_loop_reference(layer: LayerDescriptor, cfg: AcceleratorConfig, x, w):
    """Same output as :func:`conv_layer`, via the accelerator's loop nest.

    Channel groups of ``q`` accumulate before the output transform; groups
    accumulate after it, directly into the output buffer, which by linearity
    is the same sum.
    """
    if isinstance(x, Tensor):
        return _tiled_loop_single(layer, cfg, x, w)
    return tuple(_tiled_loop_single(layer, cfg, item, w) for item in x)


def _tiled_loop_single(layer, cfg: AcceleratorConfig, x: Tensor, w: WeightTensor):
    _check_conv_args(layer, x, w)
    mode = layer.mode
    b_i, _, _, a_i = mode._scaled
    omega, m, k, pad = mode.omega, mode.m, mode.k, layer.padding
    oh, ow, od, ic_n = (layer.out_height, layer.out_width,
                       layer.out_channels, layer.in_channels)
    rows_, cols_, q = cfg.rows, cfg.cols, cfg.q
    v_by_piece, denom = _split_weights(layer, w)
    schedule = schedule_rows(layer, cfg)
    acc = [0] * (od * oh * ow)
    a_t_cols = list(zip(*a_i))
    id_groups = ceil_div(ic_n, q)
    od_tiles = ceil_div(od, rows_)
    col_tiles = ceil_div(ow, cols_ * m)
    for step in schedule.steps:
        r0, r1 = step.compute_rows
        row_tiles = ceil_div(r1 - r0, m)
        u_cache: dict = {}
        for (pi, pj), v_tiles in v_by_piece.items():
            off_r = pi * k - pad
            off_c = pj * k - pad
            for ot in range(od_tiles):
                for grp in range(id_groups):
                    for rt in range(row_tiles):
                        x0 = r0 + rt * m
                        for ct in range(col_tiles):
                            for i in range(rows_):
                                oc = ot * rows_ + i
                                if oc >= od:
                                    continue
                                for j in range(cols_):
                                    y0 = (ct * cols_ + j) * m
                                    if y0 >= ow:
                                        continue
                                    e = [[0] * omega for _ in range(omega)]
                                    for ic in range(grp * q, min((grp + 1) * q, ic_n)):
                                        key = (pi, pj, ic, x0, y0)
                                        u = u_cache.get(key)
                                        if u is None:
                                            u = _transform_tile(
                                                b_i,
                                                _extract_tile(x, ic, x0 + off_r,
                                                              y0 + off_c, omega),
                                            )
                                            u_cache[key] = u
                                        v = v_tiles[ic][oc]
                                        for r in range(omega):
                                            er, ur, vr = e[r], u[r], v[r]
                                            for c in range(omega):
                                                er[c] += ur[c] * vr[c]
                                    y = _imatmul(_imatmul(a_i, e), a_t_cols)
                                    base_oc = oc * oh
                                    for dx in range(min(m, oh - x0)):
                                        row_base = (base_oc + x0 + dx) * ow + y0
                                        y_row = y[dx]
                                        for dy in range(min(m, ow - y0)):
                                            acc[row_base + dy] += y_row[dy]
    return _finalize(layer, acc, denom)


# --------------------------------------------------------------------------
# Graph execution.
# --------------------------------------------------------------------------

def run_graph(layers, x: Tensor, weights: dict) -> Tensor:
    """Run a topologically ordered layer list on one image.

    ``weights`` maps conv layer names to :class:`WeightTensor` and
    fully-connected names to a list of flat weight rows.  Auxiliary layers
    use the naive reference implementations.
    """
    outputs: dict[str, Tensor] = {}
    current = x
    for layer in layers:
        if layer.kind == "conv":
            current = conv_layer(layer, current, weights[layer.name])
            if layer.apply_relu:
                current = relu(current)
        elif layer.kind == "pool":
            current = pool(current, layer.pool_window, layer.pool_op)
        elif layer.kind == "eltwise-add":
            if layer.eltwise_with is None:
                raise ContractViolation(
                    f"layer {layer.name}: eltwise-add needs a 'with' operand"
                )
            try:
                other = outputs[layer.eltwise_with]
            except KeyError:
                raise ContractViolation(
                    f"layer {layer.name}: operand {layer.eltwise_with!r} "
                    "not computed yet"
                ) from None
            current = eltwise_add(current, other)
        elif layer.kind == "fully-connected":
            current = fully_connected(current, weights[layer.name])
        else:
            raise UnsupportedLayerError(f"unknown layer kind {layer.kind!r}")
        outputs[layer.name] = current
    return current
