"""Analytical resource and latency models, and design-space exploration.

The resource closed forms count DSPs and 18Kb BRAM blocks for a
configuration; the latency model splits a convolution into pre-loop input
loading, the row-stationary compute loop (per-iteration max of communication
and computation, both overlapped), and post-loop output drain.  All model
arithmetic is exact (``Fraction`` seconds) so comparisons and tie-breaking
are deterministic.

Element transfers are counted at one byte per element on the external bus
(8-bit feature/weight data, the datapath the resource model assumes).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction

from ._util import ceil_div
from .config import AcceleratorConfig, make_config
from .engine import LayerDescriptor, max_row_step, schedule_rows
from .errors import ContractViolation, InfeasibleConfigError
from .wino import choose_kernel_size, mode_efficiency


# --------------------------------------------------------------------------
# Resource model.
# --------------------------------------------------------------------------

def dsp_per_pe(cfg: AcceleratorConfig) -> int:
    """Multipliers in one PE: one per transformed-tile element, per channel
    in the group, per batch image."""
    return cfg.omega ** 2 * cfg.batch * cfg.q


def dsp_usage(cfg: AcceleratorConfig) -> int:
    return dsp_per_pe(cfg) * cfg.rows * cfg.cols


@dataclass(frozen=True)
class BramBreakdown:
    input_buffer: int
    weight_buffer: int
    output_buffer: int

    @property
    def total(self) -> int:
        return self.input_buffer + self.weight_buffer + self.output_buffer


def bram_usage(cfg: AcceleratorConfig) -> BramBreakdown:
    """18Kb-block count: banked input matrix (8-bit words, batch-packed),
    per-row weight stream buffers (16-bit transformed words), and doubled
    ping-pong output buffers (18-bit accumulators)."""
    input_blocks = (cfg.h_b * cfg.w_b
                    * ceil_div(8 * cfg.batch, 18)
                    * ceil_div(cfg.d_in, 1024))
    weight_blocks = cfg.rows * ceil_div(16 * cfg.omega ** 2 * cfg.q, 18)
    output_blocks = (2 * cfg.rows * cfg.cols * cfg.omega ** 2 * cfg.batch
                     * ceil_div(cfg.d_out, 1024))
    return BramBreakdown(input_blocks, weight_blocks, output_blocks)


# --------------------------------------------------------------------------
# Latency model.
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class LayerLatency:
    name: str
    rs: int
    iterations: int
    splits: int
    d_weight: int
    d_input: int
    d_output: int
    t_pre: Fraction
    t_comm: Fraction
    t_comp: Fraction
    t_loop: Fraction
    t_post: Fraction

    @property
    def t_total(self) -> Fraction:
        return self.t_pre + self.t_loop + self.t_post

    @property
    def compute_bound(self) -> bool:
        return self.t_comp >= self.t_comm

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "rs": self.rs,
            "iterations": self.iterations,
            "splits": self.splits,
            "t_pre_s": float(self.t_pre),
            "t_comm_s": float(self.t_comm),
            "t_comp_s": float(self.t_comp),
            "t_loop_s": float(self.t_loop),
            "t_post_s": float(self.t_post),
            "t_total_s": float(self.t_total),
            "bound": "compute" if self.compute_bound else "bandwidth",
        }


def latency_model(layer: LayerDescriptor, cfg: AcceleratorConfig) -> LayerLatency:
    """Per-layer latency terms.

    Per iteration, all (padded) weights stream in once, one row block of
    input is prefetched and one row block of output drained; computation
    covers the full channel-group / output-tile / row-tile / column-tile
    nest, multiplied by the number of split pieces.
    """
    if layer.kind != "conv":
        raise ContractViolation("latency model applies to conv layers")
    if min(layer.out_height, layer.out_width) < 1:
        raise ContractViolation(f"layer {layer.name}: empty output")
    mode = layer.mode
    schedule = schedule_rows(layer, cfg)
    rs = schedule.rs
    splits = layer.split.n_pieces
    bw = cfg.bandwidth
    d_weight = splits * mode.k ** 2 * layer.in_channels * layer.out_channels
    d_input = rs * layer.in_channels * layer.in_width * cfg.batch
    d_output = rs * layer.out_channels * layer.out_width * cfg.batch
    t_comm = Fraction(d_weight + d_input + d_output, bw)
    beats = (splits
             * ceil_div(layer.in_channels, cfg.q)
             * ceil_div(layer.out_channels, cfg.rows)
             * ceil_div(rs, mode.m)
             * ceil_div(layer.out_width, cfg.cols * mode.m))
    t_comp = Fraction(beats, cfg.freq_hz)
    iters = ceil_div(layer.out_height, rs)
    t_loop = iters * max(t_comm, t_comp)
    t_pre = Fraction(
        (rs + layer.padded_kernel_h() - layer.padding)
        * layer.in_channels * layer.in_width * cfg.batch, bw)
    t_post = Fraction(rs * layer.out_channels * layer.out_width * cfg.batch, bw)
    return LayerLatency(layer.name, rs, iters, splits, d_weight, d_input,
                        d_output, t_pre, t_comm, t_comp, t_loop, t_post)


def conv_op_count(layer: LayerDescriptor) -> int:
    """Effective operations of the target convolution (multiply+add = 2)."""
    return (2 * layer.in_channels * layer.out_channels
            * layer.out_height * layer.out_width
            * layer.kernel_h * layer.kernel_w)


@dataclass(frozen=True)
class ModelReport:
    config: AcceleratorConfig
    layers: tuple[LayerLatency, ...]
    dsp_use: int
    bram: BramBreakdown
    dsp_slack: int = 0
    bram_slack: int = 0
    double_pump_info: bool = False

    @property
    def t_total(self) -> Fraction:
        return sum((e.t_total for e in self.layers), Fraction(0))

    @property
    def t_loop_total(self) -> Fraction:
        return sum((e.t_loop for e in self.layers), Fraction(0))

    def gops(self, op_count: int) -> Fraction:
        return Fraction(op_count, 10 ** 9) / self.t_total

    def to_dict(self) -> dict:
        d = {
            "kind": "model",
            "config": {
                "omega": self.config.omega, "rows": self.config.rows,
                "cols": self.config.cols, "q": self.config.q,
                "batch": self.config.batch, "d_in": self.config.d_in,
                "d_out": self.config.d_out, "freq_hz": self.config.freq_hz,
                "bandwidth": self.config.bandwidth,
            },
            "dsp_use": self.dsp_use,
            "dsp_use_with_slack": self.dsp_use + self.dsp_slack,
            "bram_input": self.bram.input_buffer,
            "bram_weight": self.bram.weight_buffer,
            "bram_output": self.bram.output_buffer,
            "bram_total": self.bram.total,
            "bram_total_with_slack": self.bram.total + self.bram_slack,
            "t_total_s": float(self.t_total),
            "layers": [e.to_dict() for e in self.layers],
        }
        if self.double_pump_info:
            # Informational only: a double-clocked multiplier serves two
            # MACs per system cycle, halving the count; no timing term uses
            # this anywhere.
            d["dsp_use_double_pumped"] = -(-self.dsp_use // 2)
        return d


def model_report(layers, cfg: AcceleratorConfig, dsp_slack: int = 0,
                 bram_slack: int = 0, double_pump_info: bool = False) -> ModelReport:
    """Evaluate the latency model over every conv layer in the list.

    ``dsp_slack``/``bram_slack`` are additive allowances for non-PE logic
    (transform stages, control); the closed forms themselves exclude that
    overhead, so reports show the formula value and the slack-adjusted one.
    """
    entries = tuple(latency_model(l, cfg) for l in layers if l.kind == "conv")
    return ModelReport(cfg, entries, dsp_usage(cfg), bram_usage(cfg),
                       dsp_slack, bram_slack, double_pump_info)


# --------------------------------------------------------------------------
# Theoretical DSP efficiency.
# --------------------------------------------------------------------------

def theoretical_dsp_efficiency(omega: int, kernel_h: int, kernel_w: int,
                               freq_hz: int) -> Fraction:
    """Peak GOPS per multiplier for a kernel shape under filter size omega.

    Each cycle the transformed-tile multipliers retire one split piece of an
    m x m output tile; effective operations are counted for the target
    convolution (multiply+add = 2 per kernel element per output pixel):

        2 * m^2 * H_t * W_t * f / (splits * omega^2)

    with (m, splits) from the best supported kernel side for this shape.
    """
    k = choose_kernel_size(omega, kernel_h, kernel_w)
    eff = mode_efficiency(omega, k, kernel_h, kernel_w)
    return eff * freq_hz / 10 ** 9


# --------------------------------------------------------------------------
# Design-space exploration.
# --------------------------------------------------------------------------

ARRAY_DIM_GRID = (1, 2, 3, 4, 6, 8, 12, 16, 24, 32)
Q_GRID = (1, 2, 4, 8)
DEPTH_GRID = (1024, 2048, 4096, 8192)


@dataclass(frozen=True)
class ExploreResult:
    config: AcceleratorConfig
    report: ModelReport
    objective: Fraction
    evaluated: int
    feasible: int


def _objective(layers, cfg) -> Fraction | None:
    total = Fraction(0)
    for layer in layers:
        if layer.kind != "conv":
            continue
        try:
            total += latency_model(layer.with_mode(cfg.omega), cfg).t_total
        except InfeasibleConfigError:
            return None
    return total


def explore(layers, dsp_budget: int, bram_budget: int, omega: int,
            freq_hz: int = 250_000_000, bandwidth: int = 10_664_000_000,
            array_grid=ARRAY_DIM_GRID, q_grid=Q_GRID,
            depth_grid=DEPTH_GRID) -> ExploreResult:
    """Exhaustive grid search minimizing total modeled latency.

    Feasibility requires the DSP and BRAM closed forms within budget and a
    feasible row schedule for every conv layer.  Ties break toward lower DSP
    use, then lower BRAM use, then lexicographically smaller
    (rows, cols, q, d_in, d_out), so the result is deterministic regardless
    of evaluation order.
    """
    conv_layers = [l for l in layers if l.kind == "conv"]
    if not conv_layers:
        raise ContractViolation("explore needs at least one conv layer")
    if dsp_budget < 1 or bram_budget < 1:
        raise ContractViolation("budgets must be positive")

    best = None
    evaluated = 0
    feasible = 0
    dsp_blocked = 0
    bram_blocked = 0
    schedule_blocked = 0
    for rows, cols, q, d_in, d_out in itertools.product(
            array_grid, array_grid, q_grid, depth_grid, depth_grid):
        evaluated += 1
        cfg = make_config(omega, rows, cols, q, d_in, d_out,
                          freq_hz=freq_hz, bandwidth=bandwidth,
                          dsp_budget=dsp_budget, bram_budget=bram_budget)
        dsp = dsp_usage(cfg)
        if dsp > dsp_budget:
            dsp_blocked += 1
            continue
        bram = bram_usage(cfg).total
        if bram > bram_budget:
            bram_blocked += 1
            continue
        obj = _objective(conv_layers, cfg)
        if obj is None:
            schedule_blocked += 1
            continue
        feasible += 1
        key = (obj, dsp, bram, (rows, cols, q, d_in, d_out))
        if best is None or key < best[0]:
            best = (key, cfg)
    if best is None:
        if dsp_blocked == evaluated:
            binding = "dsp"
        elif dsp_blocked + bram_blocked == evaluated:
            binding = "bram"
        else:
            binding = "buffers"
        raise InfeasibleConfigError(
            f"no feasible configuration under dsp={dsp_budget}, "
            f"bram={bram_budget} (binding: {binding}; "
            f"{dsp_blocked} dsp-blocked, {bram_blocked} bram-blocked, "
            f"{schedule_blocked} schedule-blocked of {evaluated})",
            binding=binding,
        )
    (obj, _, _, _), cfg = best
    resolved = [l.with_mode(omega) if l.kind == "conv" else l for l in layers]
    return ExploreResult(cfg, model_report(resolved, cfg), obj, evaluated, feasible)
