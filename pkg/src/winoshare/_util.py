"""Small shared helpers."""

from __future__ import annotations


def ceil_div(a: int, b: int) -> int:
    return -(-a // b)


def ceil_log2(n: int) -> int:
    """Smallest e with 2**e >= n (n >= 1)."""
    return (n - 1).bit_length()


def next_pow2(n: int) -> int:
    return 1 << ceil_log2(n)
