"""Layer-level convolution: oracle equality, loop nest, scheduling, graphs."""

import random

import pytest

from winoshare.config import make_config, preset
from winoshare.engine import (
    LayerDescriptor,
    conv_layer,
    conv_layer_quantized,
    make_conv_layer,
    round_half_even,
    run_graph,
    schedule_rows,
    tiled_loop_reference,
)
from winoshare.errors import (
    ContractViolation,
    InfeasibleConfigError,
    UnsupportedLayerError,
)
from winoshare.reference import direct_conv
from winoshare.tensors import Tensor, WeightTensor, random_tensor, random_weights
from winoshare.wino import make_mode


def random_conv_case(rng, omega, kh, kw, max_ch=3, max_extra=5, mode=None):
    ic = rng.randint(1, max_ch)
    oc = rng.randint(1, max_ch)
    ih = max(kh, kw) + rng.randint(0, max_extra)
    iw = max(kh, kw) + rng.randint(0, max_extra)
    pad = rng.randint(0, 2)
    layer = make_conv_layer("t", ic, ih, iw, oc, kh, kw, padding=pad,
                            omega=omega, mode=mode)
    x = random_tensor(rng, ic, ih, iw)
    w = random_weights(rng, ic, oc, kh, kw)
    return layer, x, w


def test_identity_weights_crop_input(rng):
    # 1x1 kernel, w[i][o] = delta_io: output equals the input.
    x = random_tensor(rng, 3, 6, 7)
    w = WeightTensor(3, 3, 1, 1)
    for i in range(3):
        w.set(i, i, 0, 0, 1)
    layer = make_conv_layer("id", 3, 6, 7, 3, 1, 1, omega=4)
    assert conv_layer(layer, x, w) == x


@pytest.mark.parametrize("omega", [4, 6])
@pytest.mark.parametrize("kh,kw", [(1, 1), (3, 3), (5, 5), (1, 7), (7, 7)])
def test_conv_layer_equals_direct_oracle(omega, kh, kw, rng):
    for _ in range(3):
        layer, x, w = random_conv_case(rng, omega, kh, kw)
        assert conv_layer(layer, x, w) == direct_conv(x, w, layer.padding)


def test_multichannel_padded_case(rng):
    layer = make_conv_layer("c", 3, 5, 5, 2, 3, 3, padding=1, omega=4)
    x = random_tensor(rng, 3, 5, 5)
    w = random_weights(rng, 3, 2, 3, 3)
    assert conv_layer(layer, x, w) == direct_conv(x, w, 1)


def test_seven_by_seven_via_nine_piece_split(rng):
    layer = make_conv_layer("c", 2, 9, 9, 2, 7, 7, padding=0, omega=4)
    assert layer.split.n_pieces == 9
    x = random_tensor(rng, 2, 9, 9)
    w = random_weights(rng, 2, 2, 7, 7)
    assert conv_layer(layer, x, w) == direct_conv(x, w, 0)


def test_batch_tuple_processing(rng):
    layer = make_conv_layer("c", 2, 6, 6, 2, 3, 3, padding=1, omega=4)
    xs = tuple(random_tensor(rng, 2, 6, 6) for _ in range(2))
    w = random_weights(rng, 2, 2, 3, 3)
    outs = conv_layer(layer, xs, w)
    assert len(outs) == 2
    for x, out in zip(xs, outs):
        assert out == direct_conv(x, w, 1)


def test_stride_not_one_rejected():
    with pytest.raises(UnsupportedLayerError):
        LayerDescriptor(
            name="s2", kind="conv", in_channels=1, in_height=8, in_width=8,
            out_channels=1, out_height=4, out_width=4, kernel_h=3,
            kernel_w=3, padding=1, stride=2,
        )


def test_shape_mismatch_rejected(rng):
    layer = make_conv_layer("c", 2, 6, 6, 2, 3, 3, padding=1, omega=4)
    with pytest.raises(ContractViolation):
        conv_layer(layer, random_tensor(rng, 2, 7, 6), random_weights(rng, 2, 2, 3, 3))
    with pytest.raises(ContractViolation):
        conv_layer(layer, random_tensor(rng, 2, 6, 6), random_weights(rng, 2, 2, 5, 5))


def test_tiled_loop_reference_matches_conv_layer(rng):
    configs = [
        make_config(4, 2, 1, 4, 4096, 1024),
        make_config(4, 3, 2, 2, 2048, 1024),
        make_config(6, 2, 2, 1, 4096, 2048),
    ]
    cases = 0
    for _ in range(20):
        cfg = configs[cases % len(configs)]
        kh, kw = random.Random(cases).choice(
            [(1, 1), (3, 3), (1, 3), (5, 5), (7, 7)])
        layer, x, w = random_conv_case(rng, cfg.omega, kh, kw)
        assert tiled_loop_reference(layer, cfg, x, w) == conv_layer(layer, x, w)
        cases += 1


def test_output_independent_of_row_step(rng):
    # Different buffer depths force different RS; the tensor must not change.
    layer, x, w = random_conv_case(rng, 4, 3, 3, max_ch=2, max_extra=9)
    outs = []
    for d_out in (1024, 2048, 8192):
        cfg = make_config(4, 1, 1, 1, 8192, d_out)
        rs = schedule_rows(layer, cfg).rs
        outs.append((rs, tiled_loop_reference(layer, cfg, x, w)))
    tensors = [t for _, t in outs]
    assert all(t == tensors[0] for t in tensors)


def test_output_independent_of_array_grouping(rng):
    layer, x, w = random_conv_case(rng, 4, 3, 3, max_ch=4, max_extra=6)
    ref = conv_layer(layer, x, w)
    for rows, cols, q in [(1, 1, 1), (2, 2, 2), (4, 1, 4), (1, 4, 8)]:
        cfg = make_config(4, rows, cols, q, 8192, 8192)
        assert tiled_loop_reference(layer, cfg, x, w) == ref


def test_schedule_single_iteration_preload():
    layer = make_conv_layer("c", 1, 4, 4, 1, 3, 3, padding=1, omega=4)
    cfg = make_config(4, 1, 1, 1, 8192, 8192)
    sch = schedule_rows(layer, cfg)
    assert sch.rs == 4
    assert sch.iterations == 1
    # Pre-load covers exactly the input rows the first compute reads.
    assert sch.preload_rows == (-1, 5)
    assert sch.steps[0].load_rows is None
    assert sch.flush_rows == (0, 4)


def test_schedule_covers_output_rows_disjointly():
    layer = make_conv_layer("c", 8, 224, 224, 16, 3, 3, padding=1, omega=4)
    cfg = make_config(4, 2, 2, 4, 8192, 1024)
    sch = schedule_rows(layer, cfg)
    assert sch.iterations == -(-224 // sch.rs)
    seen = []
    for step in sch.steps:
        seen.extend(range(*step.compute_rows))
    assert seen == list(range(224))
    drained = []
    for step in sch.steps:
        if step.drain_rows:
            drained.extend(range(*step.drain_rows))
    drained.extend(range(*sch.flush_rows))
    assert drained == list(range(224))


def test_schedule_infeasible_when_output_buffer_tiny():
    layer = make_conv_layer("c", 1, 224, 224, 512, 3, 3, padding=1, omega=4)
    cfg = make_config(4, 1, 1, 1, 65536, 1024)
    with pytest.raises(InfeasibleConfigError) as exc:
        schedule_rows(layer, cfg)
    assert exc.value.binding == "d_out"


def test_schedule_infeasible_when_input_buffer_tiny():
    layer = make_conv_layer("c", 64, 32, 512, 1, 3, 3, padding=1, omega=4)
    cfg = make_config(4, 1, 1, 1, 1024, 8192)
    with pytest.raises(InfeasibleConfigError) as exc:
        schedule_rows(layer, cfg)
    assert exc.value.binding == "d_in"


def test_run_graph_conv_relu_maxpool():
    # Hand-computed: 1x1 conv scaling by 2, relu, then 2x2 max pool.
    x = Tensor.from_nested([[
        [1, -2, 3, 0],
        [-1, 5, -6, 2],
        [7, 0, 1, -3],
        [2, 4, -1, 6],
    ]])
    w = WeightTensor(1, 1, 1, 1, [2])
    conv = make_conv_layer("c", 1, 4, 4, 1, 1, 1, omega=4, apply_relu=True)
    pool = LayerDescriptor(
        name="p", kind="pool", in_channels=1, in_height=4, in_width=4,
        out_channels=1, out_height=2, out_width=2, pool_op="max", pool_window=2)
    out = run_graph([conv, pool], x, {"c": w})
    assert out == Tensor.from_nested([[[10, 6], [14, 12]]])


def test_run_graph_eltwise_and_fc(rng):
    x = random_tensor(rng, 2, 2, 2)
    conv = make_conv_layer("c1", 2, 2, 2, 2, 1, 1, omega=4)
    w = WeightTensor(2, 2, 1, 1, [1, 0, 0, 1])  # identity mix
    add = LayerDescriptor(
        name="a", kind="eltwise-add", in_channels=2, in_height=2, in_width=2,
        out_channels=2, out_height=2, out_width=2, eltwise_with="c1")
    fc_rows = [[rng.randint(-3, 3) for _ in range(8)] for _ in range(3)]
    fc = LayerDescriptor(
        name="f", kind="fully-connected", in_channels=2, in_height=2,
        in_width=2, out_channels=3, out_height=1, out_width=1)
    out = run_graph([conv, add, fc], x, {"c1": w, "f": fc_rows})
    doubled = [2 * v for v in x.data]
    want = [sum(a * b for a, b in zip(row, doubled)) for row in fc_rows]
    assert out == Tensor(3, 1, 1, want)


def test_fully_connected_equals_one_by_one_conv(rng):
    # An FC over a 1x1 spatial input is a 1x1 convolution; cross-check the
    # dense path against the transform pipeline.
    x = random_tensor(rng, 4, 1, 1)
    rows = [[rng.randint(-4, 4) for _ in range(4)] for _ in range(3)]
    fc = LayerDescriptor(
        name="f", kind="fully-connected", in_channels=4, in_height=1,
        in_width=1, out_channels=3, out_height=1, out_width=1)
    dense = run_graph([fc], x, {"f": rows})
    w = WeightTensor(4, 3, 1, 1)
    for o in range(3):
        for i in range(4):
            w.set(i, o, 0, 0, rows[o][i])
    conv = make_conv_layer("c", 4, 1, 1, 3, 1, 1, omega=4)
    assert conv_layer(conv, x, w) == dense


def test_empty_graph_is_identity(rng):
    x = random_tensor(rng, 1, 3, 3)
    assert run_graph([], x, {}) == x


def test_round_half_even_ties():
    from fractions import Fraction as F
    assert round_half_even(F(1, 2), 0) == 0
    assert round_half_even(F(3, 2), 0) == 2
    assert round_half_even(F(-1, 2), 0) == 0
    assert round_half_even(F(-3, 2), 0) == -2
    assert round_half_even(F(5, 8), 2) == F(5, 8) - F(1, 8)  # 0.625 -> 0.5
    assert round_half_even(F(1, 6), 4) == F(3, 16)


def test_quantized_mode_exact_for_dyadic_transforms(rng):
    # The w=4 kernel transforms only produce quarters; two fractional bits
    # make quantization the identity.
    for k in (1, 3):
        layer, x, w = random_conv_case(rng, 4, k, k)
        assert conv_layer_quantized(layer, x, w, weight_frac_bits=2) \
            == conv_layer(layer, x, w)


def test_quantized_mode_converges_for_f6(rng):
    layer, x, w = random_conv_case(rng, 6, 3, 3, max_ch=2, max_extra=3)
    exact = conv_layer(layer, x, w)
    def max_err(frac):
        q = conv_layer_quantized(layer, x, w, weight_frac_bits=frac)
        return max(abs(a - b) for a, b in zip(q.data, exact.data))
    coarse, fine = max_err(6), max_err(20)
    assert coarse > 0  # the 1/6 and 1/24 entries genuinely round
    assert fine < coarse
    assert fine <= 1
    # Deterministic: same inputs, same rounded result.
    assert conv_layer_quantized(layer, x, w, 6) == conv_layer_quantized(layer, x, w, 6)


def test_unknown_eltwise_operand_rejected(rng):
    bad = LayerDescriptor(
        name="a", kind="eltwise-add", in_channels=1, in_height=2, in_width=2,
        out_channels=1, out_height=2, out_width=2, eltwise_with="nope")
    with pytest.raises(ContractViolation):
        run_graph([bad], random_tensor(rng, 1, 2, 2), {})
