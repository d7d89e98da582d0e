"""Cycle-level simulation of the PE systolic array.

The array is ``rows x cols`` PEs.  Input tiles enter each column from the
top and hop downward one PE per cycle; weight tiles enter each row from the
left and hop rightward, both through depth-2 blocking FIFOs, so PE (i, j)
runs exactly ``i + j`` cycles behind PE (0, 0) on every shared beat (the
systolic skew).  Each fire is one beat: a q-channel, batch-wide
transformed-tile multiply-accumulate (the initiation-interval-1 contract).

Timing is simulated token by token with explicit FIFO handshakes (so skew,
occupancy, stalls and deadlock are observable), while the functional values
flow through the banked memory model and weight buffer once per distinct
fetch.  The output tensor is bit-identical to the functional engine.

Communication is modeled as a per-iteration envelope: the beats of iteration
``k + 1`` are released only after iteration ``k``'s external transfers
(weight streaming, input prefetch, output drain) complete, which reproduces
the row-stationary overlap of Algorithm-style schedules: compute-bound
layers stream gap-free, bandwidth-bound layers stall between iterations.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction

from ._util import ceil_div
from .config import AcceleratorConfig, validate_config
from .engine import (
    LayerDescriptor,
    _check_conv_args,
    _imatmul,
    _split_weights,
    schedule_rows,
)
from .errors import ContractViolation, SimulationError
from .membank import BramMatrix, FetchTrace, PingPongBuffer, TileRequest, WeightBuffer
from .tensors import Tensor


@dataclass(frozen=True)
class Beat:
    """One wavefront token: the loop indices every PE shares this cycle."""

    index: int
    iteration: int
    piece: tuple[int, int]
    od_tile: int
    group: int
    rt: int
    ct: int


@dataclass
class SimReport:
    rows: int
    cols: int
    total_cycles: int = 0
    preload_cycles: int = 0
    iteration_cycles: tuple = ()
    flush_cycles: int = 0
    beats: int = 0
    skew_overhead: int = 0
    pipeline_overhead: int = 0
    stall_cycles: int = 0
    fifo_max_occupancy: int = 0
    pe_busy: dict = field(default_factory=dict)
    pe_utilization: dict = field(default_factory=dict)
    ddr_input_words: int = 0
    ddr_weight_words: int = 0
    ddr_output_words: int = 0
    comm_cycles: tuple = ()
    memory_reads: int = 0
    bank_conflicts: int = 0

    @property
    def loop_cycles(self) -> int:
        return sum(self.iteration_cycles)

    def to_dict(self) -> dict:
        d = {
            "kind": "simulation",
            "array": f"{self.rows}x{self.cols}",
            "total_cycles": self.total_cycles,
            "preload_cycles": self.preload_cycles,
            "loop_cycles": self.loop_cycles,
            "flush_cycles": self.flush_cycles,
            "iteration_cycles": list(self.iteration_cycles),
            "beats": self.beats,
            "skew_overhead": self.skew_overhead,
            "pipeline_overhead": self.pipeline_overhead,
            "stall_cycles": self.stall_cycles,
            "fifo_max_occupancy": self.fifo_max_occupancy,
            "ddr_input_words": self.ddr_input_words,
            "ddr_weight_words": self.ddr_weight_words,
            "ddr_output_words": self.ddr_output_words,
            "memory_reads": self.memory_reads,
            "pe_utilization": {f"{i},{j}": round(u, 4)
                               for (i, j), u in sorted(self.pe_utilization.items())},
        }
        return d


class _Fifo:
    """Blocking FIFO link; a push becomes visible the next cycle."""

    def __init__(self, depth: int = 2):
        self.depth = depth
        self.slots: deque = deque()
        self.max_seen = 0

    def can_push(self) -> bool:
        return len(self.slots) < self.depth

    def push(self, cycle: int, item, latency: int = 1) -> None:
        self.slots.append((cycle + latency, item))
        self.max_seen = max(self.max_seen, len(self.slots))

    def ready(self, cycle: int) -> bool:
        return bool(self.slots) and self.slots[0][0] <= cycle

    def head(self):
        return self.slots[0][1]

    def pop(self):
        return self.slots.popleft()[1]


class _TimingEngine:
    """Token-level wavefront simulation over a fixed beat sequence.

    ``release[k]`` is the earliest cycle iteration ``k``'s tokens may enter
    the array; ``input_spacing`` > 1 models multi-cycle planar fetches.
    """

    def __init__(self, rows, cols, beats, release, start_cycle,
                 input_spacing=1, stall_fn=None, fifo_depth=2):
        self.rows = rows
        self.cols = cols
        self.beats = beats
        self.release = release
        self.start = start_cycle
        self.spacing = input_spacing
        self.stall_fn = stall_fn
        self.col_feed = [0] * cols   # next beat index to push into column j
        self.row_feed = [0] * rows
        self.col_fifo = {(i, j): _Fifo(fifo_depth) for i in range(rows) for j in range(cols)}
        self.row_fifo = {(i, j): _Fifo(fifo_depth) for i in range(rows) for j in range(cols)}
        self.fire_times: dict[tuple[int, int], dict[int, int]] = {
            (i, j): {} for i in range(rows) for j in range(cols)
        }
        self._iter_pos: dict[int, int] = {}
        self._beat_ready = []
        pos_in_iter = {}
        for b in beats:
            p = pos_in_iter.get(b.iteration, 0)
            pos_in_iter[b.iteration] = p + 1
            self._beat_ready.append(release[b.iteration] + p * self.spacing)

    def _feeder_ready(self, idx: int, cycle: int) -> bool:
        return idx < len(self.beats) and self._beat_ready[idx] <= cycle

    def run(self) -> int:
        n = len(self.beats)
        total_pes = self.rows * self.cols
        done = 0
        cycle = self.start
        idle = 0
        idle_limit = 4 * (self.rows + self.cols + 8) + (
            self._beat_ready[-1] if self._beat_ready else 0
        )
        while done < n * total_pes:
            # Feeders push into the top row / left column entry FIFOs.
            progressed = False
            for j in range(self.cols):
                f = self.col_fifo[(0, j)]
                if self._feeder_ready(self.col_feed[j], cycle) and f.can_push():
                    f.push(cycle, self.col_feed[j], latency=0)
                    self.col_feed[j] += 1
                    progressed = True
            for i in range(self.rows):
                f = self.row_fifo[(i, 0)]
                if self._feeder_ready(self.row_feed[i], cycle) and f.can_push():
                    f.push(cycle, self.row_feed[i], latency=0)
                    self.row_feed[i] += 1
                    progressed = True

            # Fire set: inputs ready, downstream has room (a simultaneous
            # downstream fire frees its slot, hence the fixpoint).
            candidates = set()
            for i in range(self.rows):
                for j in range(self.cols):
                    cf = self.col_fifo[(i, j)]
                    rf = self.row_fifo[(i, j)]
                    if not (cf.ready(cycle) and rf.ready(cycle)):
                        continue
                    if cf.head() != rf.head():
                        raise SimulationError(
                            f"PE({i},{j}) input/weight streams diverged: "
                            f"{cf.head()} vs {rf.head()}"
                        )
                    if self.stall_fn and self.stall_fn(cycle, (i, j)):
                        continue
                    candidates.add((i, j))
            changed = True
            while changed:
                changed = False
                for (i, j) in list(candidates):
                    if i + 1 < self.rows:
                        down = self.col_fifo[(i + 1, j)]
                        if not down.can_push() and (i + 1, j) not in candidates:
                            candidates.discard((i, j))
                            changed = True
                            continue
                    if j + 1 < self.cols:
                        right = self.row_fifo[(i, j + 1)]
                        if not right.can_push() and (i, j + 1) not in candidates:
                            candidates.discard((i, j))
                            changed = True

            for (i, j) in sorted(candidates, key=lambda p: -(p[0] + p[1])):
                beat_idx = self.col_fifo[(i, j)].pop()
                self.row_fifo[(i, j)].pop()
                self.fire_times[(i, j)][beat_idx] = cycle
                if i + 1 < self.rows:
                    self.col_fifo[(i + 1, j)].push(cycle, beat_idx)
                if j + 1 < self.cols:
                    self.row_fifo[(i, j + 1)].push(cycle, beat_idx)
                done += 1
                progressed = True

            idle = 0 if progressed else idle + 1
            if idle > idle_limit:
                raise SimulationError(
                    f"deadlock: no progress for {idle} cycles at cycle {cycle} "
                    f"({done}/{n * total_pes} consumptions)"
                )
            cycle += 1
        return cycle

    def max_fifo_occupancy(self) -> int:
        return max(f.max_seen for f in
                   list(self.col_fifo.values()) + list(self.row_fifo.values()))


# --------------------------------------------------------------------------
# Skew checking.
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SkewViolation:
    pe: tuple[int, int]
    beat: int
    delta: int
    expected: int


def check_skew(fire_times: dict) -> SkewViolation | None:
    """Verify every PE consumed every beat i+j cycles after PE (0, 0).

    Returns None when the systolic skew holds, else the first violation.
    """
    base = fire_times[(0, 0)]
    for (i, j), times in sorted(fire_times.items()):
        for beat_idx, t in sorted(times.items()):
            expected = i + j
            delta = t - base[beat_idx]
            if delta != expected:
                return SkewViolation((i, j), beat_idx, delta, expected)
    return None


# --------------------------------------------------------------------------
# Full layer simulation.
# --------------------------------------------------------------------------

def _enumerate_beats(layer, cfg, schedule):
    mode = layer.mode
    beats = []
    per_iter = []
    od_tiles = ceil_div(layer.out_channels, cfg.rows)
    groups = ceil_div(layer.in_channels, cfg.q)
    col_tiles = ceil_div(layer.out_width, cfg.cols * mode.m)
    for step in schedule.steps:
        r0, r1 = step.compute_rows
        row_tiles = ceil_div(r1 - r0, mode.m)
        count = 0
        for pi, pj, _ in layer.split.pieces:
            for ot in range(od_tiles):
                for grp in range(groups):
                    for rt in range(row_tiles):
                        for ct in range(col_tiles):
                            beats.append(Beat(len(beats), step.index,
                                              (pi, pj), ot, grp, rt, ct))
                            count += 1
        per_iter.append(count)
    return beats, per_iter


def _comm_cycles(layer, cfg, schedule, wb):
    """Per-iteration external transfer cycles (weights + prefetch + drain)."""
    f, bw = cfg.freq_hz, cfg.bandwidth
    ih, iw = layer.in_height, layer.in_width
    out = []
    n_pieces = layer.split.n_pieces
    for step in schedule.steps:
        words = wb.words_per_iteration(n_pieces)
        if step.load_rows:
            lo, hi = step.load_rows
            rows_real = max(0, min(ih, hi) - max(0, lo))
            words += rows_real * layer.in_channels * iw * cfg.batch
        if step.drain_rows:
            lo, hi = step.drain_rows
            words += (hi - lo) * layer.out_channels * layer.out_width * cfg.batch
        out.append(ceil_div(words * f, bw))
    return out


def simulate_layer(layer: LayerDescriptor, cfg: AcceleratorConfig, images,
                   weights, l_pipe: int = 4, stall_fn=None,
                   memory_trace: FetchTrace | None = None):
    """Simulate one conv layer; returns (batch outputs, :class:`SimReport`).

    ``images`` is a tuple of ``cfg.batch`` input tensors processed in
    lockstep (they share every address and control signal).  The output
    tensors are exact and bit-identical to the functional engine's.
    """
    validate_config(cfg)
    if layer.mode.omega != cfg.omega:
        raise ContractViolation(
            f"layer mode {layer.mode} does not match config omega={cfg.omega}"
        )
    if len(images) != cfg.batch:
        raise ContractViolation(f"expected a batch of {cfg.batch} images")
    for img in images:
        _check_conv_args(layer, img, weights)

    mode = layer.mode
    omega, m, k, pad = mode.omega, mode.m, mode.k, layer.padding
    b_i, _, _, a_i = mode._scaled
    a_t_mat = list(zip(*a_i))
    oh, ow, od, ic_n = (layer.out_height, layer.out_width,
                       layer.out_channels, layer.in_channels)
    schedule = schedule_rows(layer, cfg)
    beats, beats_per_iter = _enumerate_beats(layer, cfg, schedule)

    # Memory subsystem.
    matrix = BramMatrix(cfg.h_b, cfg.w_b, cfg.d_in, ic_n, layer.in_width,
                        batch=cfg.batch, ih=layer.in_height, wrap=True)
    v_by_piece, denom = _split_weights(layer, weights)
    wb_tiles = {
        (piece, ic, oc): v_by_piece[piece][ic][oc]
        for piece in v_by_piece
        for ic in range(ic_n) for oc in range(od)
    }
    wb = WeightBuffer(wb_tiles, mode, ic_n, od, cfg.q, cfg.rows)
    pingpong = PingPongBuffer()

    # Input transfers count one byte per element per batch image.
    ddr_in = matrix.fill_rows(images, *schedule.preload_rows) * cfg.batch

    # Timing: iteration release times from the communication envelope.
    comm = _comm_cycles(layer, cfg, schedule, wb)
    preload_cycles = ceil_div(ddr_in * cfg.freq_hz, cfg.bandwidth)
    release = [preload_cycles]
    for kk in range(1, len(schedule.steps)):
        release.append(release[kk - 1] + comm[kk - 1])
    union_w = (cfg.cols - 1) * m + omega
    spacing = ceil_div(union_w, cfg.w_b)
    engine = _TimingEngine(cfg.rows, cfg.cols, beats, release, preload_cycles,
                           input_spacing=spacing, stall_fn=stall_fn)

    # Functional pass: values through the memory model, PE by PE.
    acc = [[0] * (od * oh * ow) for _ in range(cfg.batch)]
    trace = memory_trace
    active_beats = {(i, j): 0 for i in range(cfg.rows) for j in range(cfg.cols)}
    mem_reads = 0
    batch_range = range(cfg.batch)
    for step in schedule.steps:
        r0, r1 = step.compute_rows
        pingpong.begin_iteration()
        wb.begin_iteration(layer.split.n_pieces)
        if step.load_rows:
            ddr_in += matrix.fill_rows(images, *step.load_rows) * cfg.batch
        u_cache: dict = {}
        for beat in (b for b in beats if b.iteration == step.index):
            x0 = r0 + beat.rt * m
            pi, pj = beat.piece
            off_r, off_c = pi * k - pad, pj * k - pad
            row_streams = wb.feed(beat.piece, beat.od_tile, beat.group)
            ic_lo = beat.group * cfg.q
            ic_hi = min(ic_lo + cfg.q, ic_n)
            u_per_channel = []
            for ic in range(ic_lo, ic_hi):
                key = (pi, pj, ic, beat.rt, beat.ct)
                got = u_cache.get(key)
                if got is None:
                    req = TileRequest(ic, x0 + off_r,
                                      beat.ct * cfg.cols * m + off_c,
                                      cfg.cols, omega, m)
                    tiles, trace = matrix.fetch_tiles(req, trace)
                    mem_reads += 1
                    got = [
                        [_transform_batch_tile(b_i, tiles[j], bb)
                         for bb in batch_range]
                        for j in range(cfg.cols)
                    ]
                    u_cache[key] = got
                u_per_channel.append(got)
            for i in range(cfg.rows):
                oc = beat.od_tile * cfg.rows + i
                if oc >= od:
                    continue
                v_tiles = row_streams[i]
                for j in range(cfg.cols):
                    y0 = (beat.ct * cfg.cols + j) * m
                    if y0 >= ow:
                        continue
                    active_beats[(i, j)] += 1
                    for b in batch_range:
                        e = [[0] * omega for _ in range(omega)]
                        for qi, u_all in enumerate(u_per_channel):
                            u = u_all[j][b]
                            v = v_tiles[qi]
                            for r in range(omega):
                                er, ur, vr = e[r], u[r], v[r]
                                for c in range(omega):
                                    er[c] += ur[c] * vr[c]
                        y = _imatmul(_imatmul(a_i, e), a_t_mat)
                        a_b = acc[b]
                        base_oc = oc * oh
                        for dx in range(min(m, oh - x0)):
                            row_base = (base_oc + x0 + dx) * ow + y0
                            y_row = y[dx]
                            for dy in range(min(m, ow - y0)):
                                a_b[row_base + dy] += y_row[dy]
                    pingpong.write(
                        (oc, x0, y0),
                        min(m, oh - x0) * min(m, ow - y0) * cfg.batch,
                    )
    flushed = pingpong.flush()

    end_cycle = engine.run()
    skew = check_skew(engine.fire_times)
    if skew is not None and stall_fn is None:
        raise SimulationError(f"systolic skew violated: {skew}")

    # Phase accounting from measured fire times of PE (0, 0).
    first_fire = {
        it: min(t for bi, t in engine.fire_times[(0, 0)].items()
                if beats[bi].iteration == it)
        for it in range(len(schedule.steps))
    }
    active_fire_last = max(
        t
        for (i, j), times in engine.fire_times.items()
        for bi, t in times.items()
        if _beat_active(beats[bi], i, j, cfg, layer)
    )
    iter_cycles = []
    for it in range(len(schedule.steps)):
        start = first_fire[it]
        if it + 1 < len(schedule.steps):
            iter_cycles.append(first_fire[it + 1] - start)
        else:
            iter_cycles.append(active_fire_last + 1 + l_pipe - start)
    drain_words = flushed and sum(w for _, (w, _) in flushed) or 0
    flush_cycles = ceil_div(drain_words * cfg.freq_hz, cfg.bandwidth)
    total = preload_cycles + sum(iter_cycles) + flush_cycles

    busy = {pe: len(times) for pe, times in engine.fire_times.items()}
    util = {}
    for pe, times in engine.fire_times.items():
        n_active = active_beats[pe]
        if not times or n_active == 0:
            util[pe] = 0.0
            continue
        span = max(times.values()) - min(times.values()) + 1
        util[pe] = len(times) / span

    stall = sum(iter_cycles) - len(beats) - (cfg.rows + cfg.cols - 2) - l_pipe

    report = SimReport(
        rows=cfg.rows, cols=cfg.cols,
        total_cycles=total,
        preload_cycles=preload_cycles,
        iteration_cycles=tuple(iter_cycles),
        flush_cycles=flush_cycles,
        beats=len(beats),
        skew_overhead=cfg.rows + cfg.cols - 2,
        pipeline_overhead=l_pipe,
        stall_cycles=max(0, stall),
        fifo_max_occupancy=engine.max_fifo_occupancy(),
        pe_busy=busy,
        pe_utilization=util,
        ddr_input_words=ddr_in,
        ddr_weight_words=wb.ddr_words,
        ddr_output_words=pingpong.drained_words,
        comm_cycles=tuple(comm),
        memory_reads=mem_reads,
    )
    report.fire_times = engine.fire_times
    report.beat_list = beats

    outputs = []
    for b in batch_range:
        t = Tensor(od, oh, ow)
        for idx, v in enumerate(acc[b]):
            if isinstance(v, int):
                quot, rem = divmod(v, denom)
                assert rem == 0
                t.data[idx] = quot
            else:
                f = Fraction(v, denom)
                t.data[idx] = int(f) if f.denominator == 1 else f
        outputs.append(t)
    return tuple(outputs), report


def _beat_active(beat: Beat, i: int, j: int, cfg, layer) -> bool:
    oc = beat.od_tile * cfg.rows + i
    y0 = (beat.ct * cfg.cols + j) * layer.mode.m
    return oc < layer.out_channels and y0 < layer.out_width


def _transform_batch_tile(b_i, tile_words, b):
    plain = [[w[b] for w in row] for row in tile_words]
    return _imatmul(_imatmul(b_i, plain), list(zip(*b_i)))
