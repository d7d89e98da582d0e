"""Bit-width growth: analytic bound vs the exact extremal oracle."""

import pytest

from winoshare.bitwidth import (
    REFERENCE_GROWTH,
    analytic_growth,
    bitwidth_growth,
    exhaustive_growth,
    growth_report,
    oracle_growth,
)
from winoshare.errors import ContractViolation
from winoshare.wino import make_mode


def test_analytic_values_per_mode():
    # Input transforms are integral; growth is pure dynamic range.
    assert bitwidth_growth(make_mode(4, 1), "input", 8) == 2
    assert bitwidth_growth(make_mode(4, 3), "input", 8) == 2
    assert bitwidth_growth(make_mode(6, 3), "input", 8) == 8
    # Kernel transforms add fractional bits from the entry denominators.
    assert bitwidth_growth(make_mode(4, 1), "weight", 8) == 2
    assert bitwidth_growth(make_mode(4, 3), "weight", 8) == 4
    assert bitwidth_growth(make_mode(6, 3), "weight", 8) == 10
    assert bitwidth_growth(make_mode(6, 5), "weight", 8) == 12


def test_analytic_components():
    a = analytic_growth(make_mode(4, 3), "weight")
    assert (a.per_axis_int_bits, a.per_axis_frac_bits, a.total) == (1, 1, 4)
    a = analytic_growth(make_mode(6, 3), "input")
    assert (a.per_axis_int_bits, a.per_axis_frac_bits, a.total) == (4, 0, 8)


def test_oracle_scalar_kernel_matches_exhaustive_search():
    mode = make_mode(4, 1)
    ora = oracle_growth(mode, "weight", 4)
    brute = exhaustive_growth(mode, "weight", 4)
    assert ora == brute
    assert ora.dyadic
    assert ora.frac_bits == 2
    assert ora.growth == 2


def test_oracle_matches_exhaustive_for_scalar_kernels():
    mode = make_mode(6, 1)
    assert oracle_growth(mode, "weight", 3) == exhaustive_growth(mode, "weight", 3)
    assert oracle_growth(mode, "weight", 4) == exhaustive_growth(mode, "weight", 4)


def test_oracle_extremes_match_corner_enumeration():
    # A linear form over a box attains its extremes at corners, so
    # enumerating the 2^9 sign corners is an independent exact check.
    import itertools
    from fractions import Fraction

    mode = make_mode(4, 3)
    t = mode.g
    lo, hi = -8, 7
    vmax = vmin = Fraction(0)
    for corner in itertools.product((lo, hi), repeat=9):
        tile = [corner[r * 3:(r + 1) * 3] for r in range(3)]
        for i in range(4):
            for j in range(4):
                v = sum(t[i][r] * t[j][c] * tile[r][c]
                        for r in range(3) for c in range(3))
                vmax = max(vmax, v)
                vmin = min(vmin, v)
    ora = oracle_growth(mode, "weight", 4)
    assert (ora.max_value, ora.min_value) == (vmax, vmin)
    assert (vmax, vmin) == (Fraction(67, 4), Fraction(-18))
    assert ora.growth == 4


def test_exhaustive_guards_search_space():
    with pytest.raises(ContractViolation):
        exhaustive_growth(make_mode(4, 3), "input", 8)


def test_non_dyadic_weight_transform_flagged():
    ora = oracle_growth(make_mode(6, 3), "weight", 4)
    assert not ora.dyadic
    assert ora.growth is None
    assert ora.frac_bits is None


def test_input_oracle_growth_values():
    # Extremes of the integral input transforms over the asymmetric signed
    # box [-8, 7] (4-bit inputs).
    f4 = oracle_growth(make_mode(4, 3), "input", 4)
    assert f4.dyadic and f4.frac_bits == 0
    assert f4.max_value == 30 and f4.min_value == -32
    assert f4.growth == 2
    f6 = oracle_growth(make_mode(6, 3), "input", 4)
    assert f6.max_value == 750 and f6.min_value == -768
    assert f6.growth == 7


def test_zero_input_always_representable():
    from winoshare.wino import transform_input
    mode = make_mode(6, 3)
    zero = [[0] * 6 for _ in range(6)]
    assert transform_input(mode, zero) == tuple((0,) * 6 for _ in range(6))


def test_in_bits_domain():
    with pytest.raises(ContractViolation):
        bitwidth_growth(make_mode(4, 3), "input", 1)
    with pytest.raises(ContractViolation):
        oracle_growth(make_mode(4, 3), "input", 17)
    with pytest.raises(ContractViolation):
        oracle_growth(make_mode(4, 3), "activations", 8)


def test_growth_report_flags_reference_divergence():
    for (omega, k), per_role in REFERENCE_GROWTH.items():
        for role in per_role:
            rep = growth_report(make_mode(omega, k), role, 4)
            assert rep.reference == per_role[role]
            assert isinstance(rep.diverges_from_reference, bool)
    # The w=4 kernel-transform growth of +2 agrees with the reference value.
    rep = growth_report(make_mode(4, 1), "weight", 4)
    assert rep.oracle.growth == 2 and not rep.diverges_from_reference
