"""Behavioral model of the banked on-chip memory subsystem.

The input feature map folds into an ``h_b x w_b`` grid of single-read-port
banks.  Pixel ``in[id][r][c]`` lives at bank ``(r % h_b, c % w_b)`` at the
address formed by concatenating ``r // h_b`` (high field) with
``(c // w_b) * ID + id`` (low field); banks in one grid row share high bits
and banks in one grid column share low bits, so any window of up to
``h_b x w_b`` consecutive pixels touches every bank at most once and reads
in a single cycle.

Tile fetches run a 3-stage pipeline: stage 1 latches the bank-grid plane,
stage 2 restores feature-row order through per-row multiplexers, stage 3
slices the row-ordered plane into the overlapping tiles.  Overlap between
adjacent tiles is served from the latched plane, never re-read.

Words are batch-packed: each bank address holds one pixel for every image of
the batch.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ._util import ceil_div, ceil_log2
from .errors import BankConflictError, CapacityError, ContractViolation
from .tensors import Tensor


@dataclass(frozen=True)
class BankAddress:
    h: int
    w: int
    high: int
    low: int
    addr: int


def low_field_width(iw: int, id_count: int, w_b: int) -> int:
    """Bits reserved for the per-fold word index, fixed per layer."""
    max_low = ceil_div(iw, w_b) * id_count
    return max(1, ceil_log2(max_low))


def map_address(h_b: int, w_b: int, id_count: int, id_: int, r: int, c: int,
                iw: int | None = None, d_b: int | None = None) -> BankAddress:
    """Locate pixel ``in[id][r][c]`` in the bank grid.

    ``iw`` fixes the low-field width for the layer; when omitted the field
    is sized to just fit this column's low value.  Raises
    :class:`CapacityError` when ``d_b`` is given and the address exceeds it.
    """
    if min(id_, r, c) < 0:
        raise ContractViolation("id, r, c must be nonnegative")
    if id_ >= id_count:
        raise ContractViolation(f"channel {id_} out of range [0, {id_count})")
    h = r % h_b
    w = c % w_b
    high = r // h_b
    low = (c // w_b) * id_count + id_
    width = low_field_width(iw if iw is not None else c + 1, id_count, w_b)
    addr = (high << width) | low
    if d_b is not None and addr >= d_b:
        raise CapacityError(
            f"pixel ({id_},{r},{c}) maps to address {addr} >= depth {d_b}"
        )
    return BankAddress(h, w, high, low, addr)


@dataclass(frozen=True)
class TileRequest:
    """N overlapping tiles along one feature row band, step m.

    The union spans ``omega`` rows by ``(n_tiles - 1) * m + omega`` columns
    of channel ``id_``, starting at (r, c).
    """

    id_: int
    r: int
    c: int
    n_tiles: int
    omega: int
    m: int

    @property
    def union_w(self) -> int:
        return (self.n_tiles - 1) * self.m + self.omega


@dataclass(frozen=True)
class BankRead:
    cycle: int
    h: int
    w: int
    addr: int


@dataclass
class BankWrite:
    cycle: int
    h: int
    w: int
    addr: int


@dataclass
class FetchTrace:
    """Line-oriented access log: one record per bank access per cycle."""

    reads: list[BankRead] = field(default_factory=list)
    writes: list[BankWrite] = field(default_factory=list)
    cycles: int = 0

    def record(self, cycle: int, h: int, w: int, addr: int) -> None:
        self.reads.append(BankRead(cycle, h, w, addr))

    def record_write(self, cycle: int, h: int, w: int, addr: int) -> None:
        self.writes.append(BankWrite(cycle, h, w, addr))

    def format_lines(self) -> list[str]:
        recs = [(r.cycle, r.h, r.w, r.addr, "R") for r in self.reads]
        recs += [(w.cycle, w.h, w.w, w.addr, "W") for w in self.writes]
        recs.sort(key=lambda t: (t[0], t[4], t[1], t[2]))
        return [f"{c}, bank({h},{w}), {a}, {op}" for c, h, w, a, op in recs]


class BramMatrix:
    """The folded input buffer: ``h_b x w_b`` banks of batch-packed words.

    ``wrap_folds`` bounds how many row folds are resident at once (the
    row-stationary schedule reuses the grid as a circular window); ``None``
    stores the whole feature map, subject to the ``d_b`` capacity check.
    """

    def __init__(self, h_b: int, w_b: int, d_b: int, id_count: int, iw: int,
                 batch: int = 1, ih: int | None = None, wrap: bool = False):
        if h_b < 1 or w_b < 1 or d_b < 1:
            raise ContractViolation("bank grid dims and depth must be positive")
        self.h_b = h_b
        self.w_b = w_b
        self.d_b = d_b
        self.id_count = id_count
        self.iw = iw
        self.ih = ih
        self.batch = batch
        self.low_width = low_field_width(iw, id_count, w_b)
        self.wrap_folds = max(1, d_b >> self.low_width) if wrap else None
        # Row residency per fold alias, to catch reads of evicted rows.
        self._resident: dict[int, int] = {}
        self.banks: dict[tuple[int, int], dict[int, tuple]] = {
            (h, w): {} for h in range(h_b) for w in range(w_b)
        }
        self.writes = 0

    def _alias(self, r: int) -> int:
        if self.wrap_folds is None:
            return r
        return r % (self.wrap_folds * self.h_b)

    def _locate(self, id_: int, r: int, c: int) -> BankAddress:
        loc = map_address(self.h_b, self.w_b, self.id_count, id_, r, c, iw=self.iw)
        if self.wrap_folds is not None:
            high = loc.high % self.wrap_folds
            loc = BankAddress(loc.h, loc.w, high, loc.low,
                              (high << self.low_width) | loc.low)
        if loc.addr >= self.d_b:
            raise CapacityError(
                f"pixel ({id_},{r},{c}) maps to address {loc.addr} "
                f">= depth {self.d_b}"
            )
        return loc

    def store(self, id_: int, r: int, c: int, word: tuple,
              trace: FetchTrace | None = None, cycle: int = 0) -> None:
        if len(word) != self.batch:
            raise ContractViolation(f"word must pack {self.batch} batch values")
        loc = self._locate(id_, r, c)
        self.banks[(loc.h, loc.w)][loc.addr] = word
        self._resident[self._alias(r)] = r
        self.writes += 1
        if trace is not None:
            trace.record_write(cycle, loc.h, loc.w, loc.addr)

    def fill_rows(self, images, r_lo: int, r_hi: int) -> int:
        """Store rows [r_lo, r_hi) of every channel from the batch images.

        Rows outside the feature map are skipped (padding is synthesized at
        fetch time, not stored).  Returns the number of words written.
        """
        if len(images) != self.batch:
            raise ContractViolation(f"expected {self.batch} batch images")
        ih = images[0].height
        written = 0
        for r in range(max(0, r_lo), min(ih, r_hi)):
            for id_ in range(self.id_count):
                for c in range(self.iw):
                    self.store(id_, r, c, tuple(img.get(id_, r, c) for img in images))
                    written += 1
        return written

    # -- planar access --------------------------------------------------

    def fetch_tiles(self, req: TileRequest, trace: FetchTrace | None = None,
                    start_cycle: int = 0):
        """Fetch ``req.n_tiles`` overlapping tiles through the 3-stage pipe.

        Returns ``(tiles, trace)`` where ``tiles[n][u][v]`` is a
        batch-packed word.  Reads past the stored footprint return zero
        words (the schedule guarantees live rows are resident; columns and
        rows beyond the feature map model the zero padding).  A
        :class:`BankConflictError` means two distinct addresses were needed
        from one bank in one cycle; valid configurations never trigger it.
        """
        if req.omega > self.h_b:
            raise ContractViolation(
                f"tile height {req.omega} exceeds bank grid height {self.h_b}"
            )
        if trace is None:
            trace = FetchTrace()
        width = req.union_w
        zero_word = (0,) * self.batch
        union_rows: list[list] = []
        n_windows = ceil_div(width, self.w_b)
        for win in range(n_windows):
            cycle = start_cycle + trace.cycles
            col_lo = win * self.w_b
            col_hi = min(width, col_lo + self.w_b)
            # stage 1: latch one plane; track per-bank demands to prove
            # conflict freedom.  Coordinates outside the feature map are the
            # zero padding: never stored, never addressed.
            demanded: dict[tuple[int, int], int] = {}
            plane: dict[tuple[int, int], tuple] = {}
            for u in range(req.omega):
                r = req.r + u
                if 0 <= r and (self.ih is None or r < self.ih):
                    alias = self._alias(r)
                    if self._resident and self._resident.get(alias, r) != r:
                        raise CapacityError(
                            f"row {r} was evicted by row {self._resident[alias]}"
                        )
                for off in range(col_lo, col_hi):
                    c = req.c + off
                    if r < 0 or c < 0 or c >= self.iw \
                            or (self.ih is not None and r >= self.ih):
                        continue
                    loc = self._locate(req.id_, r, c)
                    key = (loc.h, loc.w)
                    prev = demanded.get(key)
                    if prev is not None and prev != loc.addr:
                        raise BankConflictError(
                            f"bank {key} asked for addresses {prev} and "
                            f"{loc.addr} in cycle {cycle}",
                            bank=key, addresses=(prev, loc.addr),
                        )
                    if prev is None:
                        demanded[key] = loc.addr
                        trace.record(cycle, loc.h, loc.w, loc.addr)
                        plane[key] = self.banks[key].get(loc.addr, zero_word)
            trace.cycles += 1
            # stage 2: row-order the plane (row multiplexers, per-row high
            # address selection across fold boundaries).
            for u in range(req.omega):
                r = req.r + u
                if win == 0:
                    union_rows.append([])
                row = union_rows[u]
                for off in range(col_lo, col_hi):
                    c = req.c + off
                    if r < 0 or c < 0 or c >= self.iw \
                            or (self.ih is not None and r >= self.ih):
                        row.append(zero_word)
                    else:
                        row.append(plane.get((r % self.h_b, c % self.w_b),
                                             zero_word))
        # stage 3: column-select the tiles out of the row-ordered union.
        tiles = [
            [row[n * req.m: n * req.m + req.omega] for row in union_rows]
            for n in range(req.n_tiles)
        ]
        return tiles, trace


# --------------------------------------------------------------------------
# Weight buffer.
# --------------------------------------------------------------------------

class WeightBuffer:
    """Streams pre-transformed kernels to the array's rows.

    ``tiles[(piece, ic, oc)]`` holds transformed (lifted-integer) kernels.
    Raw kernel words stream from external memory once per row-step
    iteration; the resident stripe covers the channel groups of the current
    output-channel tile, bounded by the 1024-deep stream buffers.
    """

    def __init__(self, tiles: dict, mode, in_channels: int, out_channels: int,
                 q: int, rows: int, depth: int = 1024):
        self.tiles = tiles
        self.mode = mode
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.q = q
        self.rows = rows
        self.ddr_words = 0
        self.iterations = 0
        stripe = ceil_div(in_channels, q)
        if stripe > depth:
            raise CapacityError(
                f"weight stream stripe {stripe} exceeds buffer depth {depth}"
            )

    def words_per_iteration(self, n_pieces: int) -> int:
        return n_pieces * self.mode.k ** 2 * self.in_channels * self.out_channels

    def begin_iteration(self, n_pieces: int) -> None:
        self.ddr_words += self.words_per_iteration(n_pieces)
        self.iterations += 1

    def feed(self, piece: tuple[int, int], od_tile: int, group: int):
        """Per-row tile streams for one beat: row i gets the q kernels for
        its output channel, one transformed tile per group channel."""
        zero = [[0] * self.mode.omega for _ in range(self.mode.omega)]
        out = []
        for i in range(self.rows):
            oc = od_tile * self.rows + i
            row_tiles = []
            for qq in range(self.q):
                ic = group * self.q + qq
                if oc < self.out_channels and ic < self.in_channels:
                    row_tiles.append(self.tiles[(piece, ic, oc)])
                else:
                    row_tiles.append(zero)
            out.append(row_tiles)
        return out


# --------------------------------------------------------------------------
# Output ping-pong buffer.
# --------------------------------------------------------------------------

class PingPongBuffer:
    """Paired output buffers: compute writes one while the other drains.

    ``begin_iteration`` flips the roles; writing and draining the same
    buffer in one iteration is a scheduling bug and asserts.
    """

    def __init__(self):
        self.buffers: list[dict] = [{}, {}]
        self.p = 0
        self.started = False
        self.drained_words = 0
        self._wrote_this_iter: set[int] = set()
        self._drained_this_iter: set[int] = set()

    def begin_iteration(self) -> list:
        """Flip buffers; return the entries drained from the idle side."""
        if self.started:
            self.p = 1 - self.p
        self.started = True
        self._wrote_this_iter = set()
        self._drained_this_iter = set()
        return self._drain(1 - self.p)

    def write(self, key, words: int, value=None) -> None:
        if self.p in self._drained_this_iter:
            raise ContractViolation("write to a buffer draining this iteration")
        self._wrote_this_iter.add(self.p)
        self.buffers[self.p][key] = (words, value)

    def _drain(self, which: int) -> list:
        if which in self._wrote_this_iter:
            raise ContractViolation("drain of a buffer written this iteration")
        self._drained_this_iter.add(which)
        items = list(self.buffers[which].items())
        self.drained_words += sum(words for _, (words, _) in items)
        self.buffers[which].clear()
        return items

    def flush(self) -> list:
        """Drain whatever compute wrote last, after the loop ends."""
        self._wrote_this_iter = set()
        self._drained_this_iter = set()
        out = self._drain(self.p)
        out += self._drain(1 - self.p)
        return out
