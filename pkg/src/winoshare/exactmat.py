"""Exact rational matrix algebra.

Matrices are immutable tuples of equal-length row tuples whose entries are
``fractions.Fraction``.  All arithmetic is exact; no rounding ever occurs in
this representation.  The matrices involved are tiny (at most 6x6), so the
naive algorithms here are the right tool.
"""

from __future__ import annotations

from fractions import Fraction
from math import lcm

Matrix = tuple[tuple[Fraction, ...], ...]


def mat(rows) -> Matrix:
    """Freeze a nested iterable of numbers into an exact matrix."""
    frozen = tuple(tuple(Fraction(x) for x in row) for row in rows)
    if frozen and any(len(r) != len(frozen[0]) for r in frozen):
        raise ValueError("ragged rows")
    return frozen


def zeros(n_rows: int, n_cols: int) -> Matrix:
    row = (Fraction(0),) * n_cols
    return (row,) * n_rows


def identity(n: int) -> Matrix:
    return tuple(
        tuple(Fraction(1 if i == j else 0) for j in range(n)) for i in range(n)
    )


def shape(a: Matrix) -> tuple[int, int]:
    return (len(a), len(a[0]) if a else 0)


def transpose(a: Matrix) -> Matrix:
    return tuple(zip(*a))


def matmul(a: Matrix, b: Matrix) -> Matrix:
    if shape(a)[1] != shape(b)[0]:
        raise ValueError(f"shape mismatch {shape(a)} x {shape(b)}")
    bt = transpose(b)
    return tuple(
        tuple(sum(x * y for x, y in zip(row, col)) for col in bt) for row in a
    )


def hadamard(a: Matrix, b: Matrix) -> Matrix:
    if shape(a) != shape(b):
        raise ValueError(f"shape mismatch {shape(a)} vs {shape(b)}")
    return tuple(tuple(x * y for x, y in zip(ra, rb)) for ra, rb in zip(a, b))


def mat_add(a: Matrix, b: Matrix) -> Matrix:
    if shape(a) != shape(b):
        raise ValueError(f"shape mismatch {shape(a)} vs {shape(b)}")
    return tuple(tuple(x + y for x, y in zip(ra, rb)) for ra, rb in zip(a, b))


def scale(a: Matrix, c) -> Matrix:
    c = Fraction(c)
    return tuple(tuple(c * x for x in row) for row in a)


def common_denominator(a: Matrix) -> int:
    """Least common multiple of all entry denominators."""
    d = 1
    for row in a:
        for x in row:
            d = lcm(d, x.denominator)
    return d


def as_scaled_ints(a: Matrix) -> tuple[tuple[tuple[int, ...], ...], int]:
    """Return (d*a as integer rows, d) with d the common denominator.

    Useful as a fast path: integer tiles can then be transformed in pure
    integer arithmetic and divided back exactly at the end.
    """
    d = common_denominator(a)
    return tuple(tuple(int(x * d) for x in row) for row in a), d


def row_abs_sums(a: Matrix) -> tuple[Fraction, ...]:
    return tuple(sum(abs(x) for x in row) for row in a)


def solve_exact(a: list[list[Fraction]], b: list[Fraction]) -> list[Fraction]:
    """Solve the (possibly overdetermined but consistent) system a x = b.

    Gaussian elimination with exact rationals.  Raises ``ValueError`` if the
    system is inconsistent or does not pin down a unique solution.
    """
    n_rows = len(a)
    n_cols = len(a[0])
    aug = [list(row) + [rhs] for row, rhs in zip(a, b)]
    pivot_cols = []
    r = 0
    for c in range(n_cols):
        pivot = next((i for i in range(r, n_rows) if aug[i][c] != 0), None)
        if pivot is None:
            continue
        aug[r], aug[pivot] = aug[pivot], aug[r]
        inv = 1 / aug[r][c]
        aug[r] = [x * inv for x in aug[r]]
        for i in range(n_rows):
            if i != r and aug[i][c] != 0:
                f = aug[i][c]
                aug[i] = [x - f * y for x, y in zip(aug[i], aug[r])]
        pivot_cols.append(c)
        r += 1
        if r == n_rows:
            break
    for i in range(r, n_rows):
        if aug[i][n_cols] != 0:
            raise ValueError("inconsistent system")
    if len(pivot_cols) != n_cols:
        raise ValueError("underdetermined system")
    x = [Fraction(0)] * n_cols
    for row_idx, c in enumerate(pivot_cols):
        x[c] = aug[row_idx][n_cols]
    return x
