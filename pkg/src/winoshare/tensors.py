"""Dense tensor containers for feature maps and convolution weights.

Feature maps are 3-D, channel-major then row-major: ``t[c][r][col]``.
Weights are 4-D, indexed ``w[ic][oc][u][v]`` (input-channel major).
Elements are exact: Python ints or ``fractions.Fraction``.  Instances are
treated as immutable after construction; all operations build new tensors.
"""

from __future__ import annotations

from fractions import Fraction

from .errors import ContractViolation


class Tensor:
    """3-D feature map with channel-major flat storage."""

    __slots__ = ("channels", "height", "width", "data")

    def __init__(self, channels: int, height: int, width: int, data=None):
        if channels < 1 or height < 1 or width < 1:
            raise ContractViolation("tensor dims must be positive")
        self.channels = channels
        self.height = height
        self.width = width
        n = channels * height * width
        if data is None:
            self.data = [0] * n
        else:
            self.data = list(data)
            if len(self.data) != n:
                raise ContractViolation(
                    f"element count {len(self.data)} != {channels}x{height}x{width}"
                )

    @property
    def dims(self) -> tuple[int, int, int]:
        return (self.channels, self.height, self.width)

    def get(self, c: int, r: int, col: int):
        return self.data[(c * self.height + r) * self.width + col]

    def get_padded(self, c: int, r: int, col: int):
        """Read with zero fill outside the spatial extent."""
        if 0 <= r < self.height and 0 <= col < self.width:
            return self.data[(c * self.height + r) * self.width + col]
        return 0

    def set(self, c: int, r: int, col: int, value) -> None:
        self.data[(c * self.height + r) * self.width + col] = value

    def channel_rows(self, c: int) -> list[list]:
        base = c * self.height * self.width
        return [
            self.data[base + r * self.width: base + (r + 1) * self.width]
            for r in range(self.height)
        ]

    @classmethod
    def from_nested(cls, nested) -> "Tensor":
        channels = len(nested)
        height = len(nested[0])
        width = len(nested[0][0])
        flat = [x for ch in nested for row in ch for x in row]
        return cls(channels, height, width, flat)

    def to_nested(self) -> list:
        return [self.channel_rows(c) for c in range(self.channels)]

    def __eq__(self, other):
        if not isinstance(other, Tensor):
            return NotImplemented
        return self.dims == other.dims and all(
            a == b for a, b in zip(self.data, other.data)
        )

    def __repr__(self):
        return f"Tensor({self.channels}x{self.height}x{self.width})"


class WeightTensor:
    """4-D convolution weights ``w[ic][oc][u][v]``."""

    __slots__ = ("in_channels", "out_channels", "kernel_h", "kernel_w", "data")

    def __init__(self, in_channels, out_channels, kernel_h, kernel_w, data=None):
        if min(in_channels, out_channels, kernel_h, kernel_w) < 1:
            raise ContractViolation("weight dims must be positive")
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_h = kernel_h
        self.kernel_w = kernel_w
        n = in_channels * out_channels * kernel_h * kernel_w
        if data is None:
            self.data = [0] * n
        else:
            self.data = list(data)
            if len(self.data) != n:
                raise ContractViolation("element count mismatch")

    @property
    def dims(self):
        return (self.in_channels, self.out_channels, self.kernel_h, self.kernel_w)

    def _base(self, ic, oc):
        return ((ic * self.out_channels) + oc) * self.kernel_h * self.kernel_w

    def get(self, ic, oc, u, v):
        return self.data[self._base(ic, oc) + u * self.kernel_w + v]

    def set(self, ic, oc, u, v, value):
        self.data[self._base(ic, oc) + u * self.kernel_w + v] = value

    def kernel(self, ic, oc) -> list[list]:
        """The 2-D kernel slice for one (input, output) channel pair."""
        base = self._base(ic, oc)
        return [
            self.data[base + u * self.kernel_w: base + (u + 1) * self.kernel_w]
            for u in range(self.kernel_h)
        ]

    @classmethod
    def from_nested(cls, nested) -> "WeightTensor":
        ic = len(nested)
        oc = len(nested[0])
        kh = len(nested[0][0])
        kw = len(nested[0][0][0])
        flat = [x for a in nested for b in a for row in b for x in row]
        return cls(ic, oc, kh, kw, flat)

    def __eq__(self, other):
        if not isinstance(other, WeightTensor):
            return NotImplemented
        return self.dims == other.dims and all(
            a == b for a, b in zip(self.data, other.data)
        )

    def __repr__(self):
        return (
            f"WeightTensor({self.in_channels}x{self.out_channels}"
            f"x{self.kernel_h}x{self.kernel_w})"
        )


def random_tensor(rng, channels, height, width, lo=-8, hi=7) -> Tensor:
    return Tensor(
        channels, height, width,
        [rng.randint(lo, hi) for _ in range(channels * height * width)],
    )


def random_weights(rng, in_channels, out_channels, kh, kw, lo=-8, hi=7) -> WeightTensor:
    n = in_channels * out_channels * kh * kw
    return WeightTensor(in_channels, out_channels, kh, kw, [rng.randint(lo, hi) for _ in range(n)])


def as_exact(value):
    """Normalize a parsed number to int where possible, else Fraction."""
    f = Fraction(value)
    return int(f) if f.denominator == 1 else f
