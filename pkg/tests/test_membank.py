"""Banked memory: address mapping, planar fetch, weight and output buffers."""

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from winoshare.engine import _split_weights, make_conv_layer
from winoshare.errors import (
    BankConflictError,
    CapacityError,
    ContractViolation,
)
from winoshare.membank import (
    BankAddress,
    BramMatrix,
    FetchTrace,
    PingPongBuffer,
    TileRequest,
    WeightBuffer,
    map_address,
)
from winoshare.tensors import random_tensor, random_weights
from winoshare.wino import make_mode


def fill_matrix(rng, h_b, w_b, id_count, ih, iw, d_b=65536, batch=1):
    imgs = [random_tensor(rng, id_count, ih, iw) for _ in range(batch)]
    m = BramMatrix(h_b, w_b, d_b, id_count, iw, batch=batch, ih=ih)
    m.fill_rows(imgs, 0, ih)
    return m, imgs


def test_map_address_origin():
    assert map_address(4, 8, 1, 0, 0, 0) == BankAddress(0, 0, 0, 0, 0)


def test_map_address_worked_values():
    loc = map_address(4, 8, 3, 2, 5, 11, iw=16)
    assert (loc.h, loc.w, loc.high, loc.low) == (1, 3, 1, 5)


def test_map_address_capacity_error():
    with pytest.raises(CapacityError):
        map_address(4, 8, 4, 0, 1000, 0, iw=64, d_b=1024)


def test_map_address_rejects_bad_channel():
    with pytest.raises(ContractViolation):
        map_address(4, 8, 2, 2, 0, 0)


@settings(max_examples=50, deadline=None)
@given(st.data())
def test_address_mapping_injective(data):
    h_b = data.draw(st.sampled_from([4, 8]))
    w_b = data.draw(st.sampled_from([8, 16]))
    id_count = data.draw(st.integers(1, 4))
    ih = data.draw(st.integers(1, 12))
    iw = data.draw(st.integers(1, 20))
    seen = {}
    for id_ in range(id_count):
        for r in range(ih):
            for c in range(iw):
                loc = map_address(h_b, w_b, id_count, id_, r, c, iw=iw)
                key = (loc.h, loc.w, loc.addr)
                assert key not in seen, (seen[key], (id_, r, c))
                seen[key] = (id_, r, c)


def test_fetch_worked_example(rng):
    # Two overlapping tiles at columns 3 and 5 of rows 1..4 come back as
    # exact feature-map slices from four (high, low) address regions in one
    # cycle.
    m, (img,) = fill_matrix(rng, 4, 8, 1, 10, 12)
    tiles, trace = m.fetch_tiles(TileRequest(0, 1, 3, 2, 4, 2))
    for n, c0 in enumerate((3, 5)):
        want = [[(img.get(0, 1 + u, c0 + v),) for v in range(4)] for u in range(4)]
        assert tiles[n] == want
    assert trace.cycles == 1
    regions = {(r.addr >> m.low_width, r.addr & ((1 << m.low_width) - 1))
               for r in trace.reads}
    assert len(regions) == 4
    banks = [(r.h, r.w) for r in trace.reads]
    assert len(banks) == len(set(banks))


def test_fetch_single_tile_at_origin(rng):
    m, (img,) = fill_matrix(rng, 4, 8, 1, 8, 8)
    tiles, _ = m.fetch_tiles(TileRequest(0, 0, 0, 1, 4, 2))
    want = [[(img.get(0, u, v),) for v in range(4)] for u in range(4)]
    assert tiles == [want]


def test_fetch_matches_slices_everywhere(rng):
    for _ in range(10):
        id_count = rng.randint(1, 3)
        ih = rng.randint(6, 12)
        iw = rng.randint(8, 16)
        m, (img,) = fill_matrix(rng, 4, 8, id_count, ih, iw)
        for id_ in range(id_count):
            for r in range(0, ih - 4):
                for c in range(0, iw - 6, 3):
                    tiles, _ = m.fetch_tiles(TileRequest(id_, r, c, 2, 4, 2))
                    for n in range(2):
                        want = [[(img.get(id_, r + u, c + 2 * n + v),)
                                 for v in range(4)] for u in range(4)]
                        assert tiles[n] == want


def test_fetch_zero_pads_outside_feature_map(rng):
    m, (img,) = fill_matrix(rng, 4, 8, 1, 6, 6)
    tiles, _ = m.fetch_tiles(TileRequest(0, -1, -1, 1, 4, 2))
    assert tiles[0][0] == [(0,), (0,), (0,), (0,)]
    assert tiles[0][1][0] == (0,)
    assert tiles[0][1][1] == (img.get(0, 0, 0),)
    tiles, _ = m.fetch_tiles(TileRequest(0, 4, 4, 1, 4, 2))
    assert tiles[0][2][2] == (0,)  # row 6 is past the feature map


def test_every_union_pixel_read_once(rng):
    m, _ = fill_matrix(rng, 4, 8, 1, 8, 10)
    _, trace = m.fetch_tiles(TileRequest(0, 2, 1, 2, 4, 2))
    reads = [(r.h, r.w, r.addr) for r in trace.reads]
    assert len(reads) == len(set(reads))
    assert len(reads) == 4 * 6  # omega rows x union width


def test_wide_union_takes_multiple_cycles(rng):
    m, (img,) = fill_matrix(rng, 4, 8, 1, 8, 24)
    tiles, trace = m.fetch_tiles(TileRequest(0, 0, 0, 4, 4, 4))
    assert trace.cycles == 2  # union of 16 columns over an 8-wide grid
    for n in range(4):
        want = [[(img.get(0, u, 4 * n + v),) for v in range(4)] for u in range(4)]
        assert tiles[n] == want


def test_tile_taller_than_grid_rejected(rng):
    m, _ = fill_matrix(rng, 4, 8, 1, 8, 8)
    with pytest.raises(ContractViolation):
        m.fetch_tiles(TileRequest(0, 0, 0, 1, 6, 4))


def test_bank_conflict_detected_on_fault_injection(rng):
    # Break the address mapping on purpose: halving the bank-row modulus
    # (with the fold index rescaled to match) lands rows 0 and 2 in one bank
    # at different addresses, which one cycle cannot serve.
    class BrokenMatrix(BramMatrix):
        def _locate(self, id_, r, c):
            loc = super()._locate(id_, r, c)
            high = r // 2
            return BankAddress(r % 2, loc.w, high, loc.low,
                               (high << self.low_width) | loc.low)

    imgs = [random_tensor(rng, 1, 8, 8)]
    m = BrokenMatrix(4, 8, 65536, 1, 8, batch=1, ih=8)
    m.fill_rows(imgs, 0, 8)
    with pytest.raises(BankConflictError) as exc:
        m.fetch_tiles(TileRequest(0, 0, 0, 1, 4, 2))
    assert exc.value.bank is not None
    assert len(exc.value.addresses) == 2


def test_capacity_error_when_depth_exceeded(rng):
    imgs = [random_tensor(rng, 4, 32, 32)]
    m = BramMatrix(4, 8, 64, 4, 32, batch=1, ih=32)
    with pytest.raises(CapacityError):
        m.fill_rows(imgs, 0, 32)


def test_eviction_detected_when_wrapped(rng):
    imgs = [random_tensor(rng, 1, 64, 8)]
    m = BramMatrix(4, 8, 16, 1, 8, batch=1, ih=64, wrap=True)
    assert m.wrap_folds == 8  # 32-row circular window
    m.fill_rows(imgs, 0, 16)
    m.fill_rows(imgs, 32, 40)  # row 32 lands on row 0's fold slot
    with pytest.raises(CapacityError):
        m.fetch_tiles(TileRequest(0, 0, 0, 1, 4, 2))
    # Rows still inside the live window read fine.
    tiles, _ = m.fetch_tiles(TileRequest(0, 8, 0, 1, 4, 2))
    want = [[(imgs[0].get(0, 8 + u, v),) for v in range(4)] for u in range(4)]
    assert tiles == [want]


def test_trace_line_format(rng):
    m, _ = fill_matrix(rng, 4, 8, 1, 6, 8)
    _, trace = m.fetch_tiles(TileRequest(0, 0, 0, 1, 4, 2))
    line = trace.format_lines()[0]
    assert line.startswith("0, bank(") and line.endswith(", R")


# -- weight buffer ---------------------------------------------------------

def make_weight_buffer(rng, ic=4, oc=4, k=3, q=2, rows=2, omega=4):
    layer = make_conv_layer("c", ic, 8, 8, oc, k, k, padding=1, omega=omega)
    w = random_weights(rng, ic, oc, k, k)
    tiles, _ = _split_weights(layer, w)
    flat = {(p, i, o): tiles[p][i][o]
            for p in tiles for i in range(ic) for o in range(oc)}
    return layer, WeightBuffer(flat, layer.mode, ic, oc, q, rows), flat


def test_weight_words_per_iteration(rng):
    layer, wb, _ = make_weight_buffer(rng)
    wb.begin_iteration(layer.split.n_pieces)
    assert wb.ddr_words == 3 * 3 * 4 * 4
    wb.begin_iteration(layer.split.n_pieces)
    assert wb.ddr_words == 2 * 9 * 16


def test_weight_rows_receive_distinct_output_channels(rng):
    layer, wb, flat = make_weight_buffer(rng, rows=2, q=2)
    streams = wb.feed((0, 0), od_tile=1, group=0)
    assert streams[0][0] == flat[((0, 0), 0, 2)]
    assert streams[1][0] == flat[((0, 0), 0, 3)]
    assert streams[0] != streams[1]


def test_weight_stream_order_single_row(rng):
    layer, wb, flat = make_weight_buffer(rng, ic=3, oc=1, q=1, rows=1)
    order = []
    for grp in range(3):
        order.append(wb.feed((0, 0), 0, grp)[0][0])
    assert order == [flat[((0, 0), i, 0)] for i in range(3)]


def test_weight_buffer_overflow(rng):
    layer = make_conv_layer("c", 4, 8, 8, 2, 3, 3, padding=1, omega=4)
    with pytest.raises(CapacityError):
        WeightBuffer({}, layer.mode, 4, 2, q=1, rows=1, depth=2)


# -- output ping-pong ------------------------------------------------------

def test_pingpong_overlap_and_conservation():
    pp = PingPongBuffer()
    pp.begin_iteration()
    pp.write(("t", 0), 4)
    drained = pp.begin_iteration()
    assert [k for k, _ in drained] == [("t", 0)]  # iter-0 output during iter 1
    pp.write(("t", 1), 4)
    leftovers = pp.flush()
    assert [k for k, _ in leftovers] == [("t", 1)]
    assert pp.drained_words == 8


def test_pingpong_single_iteration_drains_in_flush():
    pp = PingPongBuffer()
    assert pp.begin_iteration() == []
    pp.write("only", 7)
    assert [k for k, _ in pp.flush()] == ["only"]
    assert pp.drained_words == 7


def test_pingpong_same_iteration_conflict_asserts():
    pp = PingPongBuffer()
    pp.begin_iteration()
    pp.write("x", 1)
    pp.begin_iteration()
    pp.write("y", 1)
    with pytest.raises(ContractViolation):
        pp._drain(pp.p)
