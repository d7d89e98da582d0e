"""Fixed-point bit-width growth through the transform stage.

The transforms blow up the dynamic range of tiles and kernels, so a
fixed-point datapath needs extra bits after the transform.  Two estimates are
provided:

* an analytic bound from the transform matrix structure, and
* an exact extremal search over the full signed input box.

Counting convention (documented here because reference figures for these
quantities circulate with unstated conventions): a signed ``b``-bit input
ranges over ``[-2**(b-1), 2**(b-1) - 1]``; a transformed value ``v`` is
representable in ``w`` total bits with ``f`` of them fractional iff
``v * 2**f`` is an integer in ``[-2**(w-1), 2**(w-1) - 1]``.  Growth is the
minimum such ``w`` minus ``b``.  Transforms whose entries have non-dyadic
denominators (the w=6 kernel transform contains 1/6 and 1/24) admit no finite
``f``; those report ``dyadic=False`` and no exact growth, which is why the
quantized datapath rounds instead.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from math import lcm

from ._util import ceil_log2
from .errors import ContractViolation
from .exactmat import Matrix, row_abs_sums
from .wino import WinogradMode

ROLES = ("input", "weight")

# Growth figures reported for the original accelerator evaluation, per
# (omega, k, role).  Their counting convention is undocumented; they are
# surfaced for comparison and flagged on divergence, never asserted.
REFERENCE_GROWTH = {
    (4, 1): {"weight": 2, "input": 4},
    (4, 3): {"weight": 4, "input": 4},
    (6, 3): {"weight": 8, "input": 10},
    (6, 5): {"weight": 8, "input": 10},
}


def _transform_matrix(mode: WinogradMode, role: str) -> Matrix:
    if role == "input":
        return mode.b_t
    if role == "weight":
        return mode.g
    raise ContractViolation(f"role must be one of {ROLES}, got {role!r}")


def _signed_range(in_bits: int) -> tuple[int, int]:
    if not 2 <= in_bits <= 16:
        raise ContractViolation(f"in_bits must be in [2, 16], got {in_bits}")
    return -(1 << (in_bits - 1)), (1 << (in_bits - 1)) - 1


def _signed_bits(v) -> int:
    """Smallest signed width holding integer v."""
    v = int(v)
    if v >= 0:
        return v.bit_length() + 1
    return (-v - 1).bit_length() + 1


@dataclass(frozen=True)
class AnalyticGrowth:
    per_axis_int_bits: int
    per_axis_frac_bits: int
    total: int


@dataclass(frozen=True)
class OracleGrowth:
    dyadic: bool
    frac_bits: int | None
    max_value: Fraction
    min_value: Fraction
    total_bits: int | None
    growth: int | None


@dataclass(frozen=True)
class BitwidthReport:
    mode: WinogradMode
    role: str
    in_bits: int
    analytic: AnalyticGrowth
    oracle: OracleGrowth
    reference: int | None
    diverges_from_reference: bool | None


def analytic_growth(mode: WinogradMode, role: str) -> AnalyticGrowth:
    """Structural bound: ceil(log2(max row abs-sum)) per axis, applied on
    both axes, plus per-axis fractional bits from the entry denominators."""
    t = _transform_matrix(mode, role)
    worst = max(row_abs_sums(t))
    int_bits = 0
    while (1 << int_bits) < worst:
        int_bits += 1
    frac = max(
        ceil_log2(x.denominator) if x.denominator > 1 else 0
        for row in t for x in row
    )
    return AnalyticGrowth(int_bits, frac, 2 * (int_bits + frac))


def oracle_growth(mode: WinogradMode, role: str, in_bits: int) -> OracleGrowth:
    """Exact extremal growth over the full signed input box.

    The 2-D transform is linear in the tile with coefficient ``t[i][r] *
    t[j][c]`` on entry (r, c) of output entry (i, j), so the box extremum is
    attained entry-wise at the per-coefficient range ends; no enumeration is
    needed and the result equals what exhaustive search finds.
    """
    t = _transform_matrix(mode, role)
    lo, hi = _signed_range(in_bits)
    vmax = Fraction(0)
    vmin = Fraction(0)
    denom = 1
    n_rows = len(t)
    for i in range(n_rows):
        for j in range(n_rows):
            top = Fraction(0)
            bot = Fraction(0)
            for cr in t[i]:
                for cc in t[j]:
                    coeff = cr * cc
                    denom = lcm(denom, coeff.denominator)
                    if coeff > 0:
                        top += coeff * hi
                        bot += coeff * lo
                    elif coeff < 0:
                        top += coeff * lo
                        bot += coeff * hi
            vmax = max(vmax, top)
            vmin = min(vmin, bot)
    dyadic = denom & (denom - 1) == 0
    if not dyadic:
        return OracleGrowth(False, None, vmax, vmin, None, None)
    frac = ceil_log2(denom) if denom > 1 else 0
    scale = 1 << frac
    total = max(_signed_bits(vmax * scale), _signed_bits(vmin * scale))
    return OracleGrowth(True, frac, vmax, vmin, total, total - in_bits)


def exhaustive_growth(mode: WinogradMode, role: str, in_bits: int,
                      limit: int = 1 << 20) -> OracleGrowth:
    """Brute-force enumeration of every tile in the signed box.

    Only feasible for tiny search spaces (scalar kernels, or very low bit
    widths); raises ``ContractViolation`` beyond ``limit`` combinations.
    Exists to validate :func:`oracle_growth` independently.
    """
    t = _transform_matrix(mode, role)
    lo, hi = _signed_range(in_bits)
    n_in = len(t[0])
    cells = n_in * n_in
    space = (hi - lo + 1) ** cells
    if space > limit:
        raise ContractViolation(
            f"search space {space} exceeds limit {limit}; use oracle_growth"
        )
    vmax = Fraction(0)
    vmin = Fraction(0)
    denom = 1
    values = range(lo, hi + 1)
    for flat in itertools.product(values, repeat=cells):
        tile = [flat[r * n_in:(r + 1) * n_in] for r in range(n_in)]
        for i in range(len(t)):
            for j in range(len(t)):
                v = sum(
                    t[i][r] * t[j][c] * tile[r][c]
                    for r in range(n_in) for c in range(n_in)
                )
                denom = lcm(denom, v.denominator)
                vmax = max(vmax, v)
                vmin = min(vmin, v)
    dyadic = denom & (denom - 1) == 0
    if not dyadic:
        return OracleGrowth(False, None, vmax, vmin, None, None)
    frac = ceil_log2(denom) if denom > 1 else 0
    scale = 1 << frac
    total = max(_signed_bits(vmax * scale), _signed_bits(vmin * scale))
    return OracleGrowth(True, frac, vmax, vmin, total, total - in_bits)


def bitwidth_growth(mode: WinogradMode, role: str, in_bits: int) -> int:
    """The analytic growth bound in extra bits (see module docstring)."""
    _signed_range(in_bits)
    return analytic_growth(mode, role).total


def growth_report(mode: WinogradMode, role: str, in_bits: int) -> BitwidthReport:
    """Analytic and oracle growth side by side, flagged against reference."""
    ana = analytic_growth(mode, role)
    ora = oracle_growth(mode, role, in_bits)
    ref = REFERENCE_GROWTH.get((mode.omega, mode.k), {}).get(role)
    diverges = None
    if ref is not None:
        observed = ora.growth if ora.growth is not None else ana.total
        diverges = observed != ref
    return BitwidthReport(mode, role, in_bits, ana, ora, ref, diverges)
