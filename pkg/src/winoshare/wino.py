"""Minimal-filtering convolution algebra with kernel-sharing transform matrices.

A mode ``F_w(m x m, k x k)`` turns one ``w x w`` input tile and one ``k x k``
kernel into an ``m x m`` output tile (``w = m + k - 1``) using ``w**2``
element-wise multiplications instead of ``m**2 * k**2``:

    Y = A_T ((B_T d B) (*) (G g G_T)) A

All modes with the same ``w`` share an identical input transform ``B_T`` (and
therefore the same multiplier array); the kernel and output transforms differ
from each other only in a handful of *selection* entries, so a single datapath
with substituted selection constants serves every supported kernel size.
Everything here is exact rational arithmetic: results equal plain convolution
bit for bit.

Kernel sizes beyond a mode's ``k`` are handled by :func:`split_kernel`, which
decomposes an ``H_t x W_t`` kernel into zero-padded ``k x k`` pieces whose
offset convolutions sum to the original.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import ceil

from .errors import ConfigurationError, ContractViolation
from .exactmat import (
    Matrix,
    as_scaled_ints,
    hadamard,
    mat,
    matmul,
    shape,
    solve_exact,
    transpose,
)

# --------------------------------------------------------------------------
# Transform matrix templates.
#
# Entries written as strings ("s", "s0", ...) are selection slots, filled at
# mode-construction time.  The w=4 input transform is shared verbatim by both
# w=4 modes; likewise for w=6.  The w=6 input transform is the Cook-Toom
# matrix for sample points (0, 1, -1, 2, -2); tests re-derive it from
# :func:`cook_toom_matrices` and check the convolution identity.
# --------------------------------------------------------------------------

_B_T_4 = mat([
    [1, 0, -1, 0],
    [0, 1, 1, 0],
    [0, -1, 1, 0],
    [0, -1, 0, 1],
])

_G_4_TEMPLATE = (
    (1, 0, 0),
    (Fraction(1, 2), Fraction(1, 2), Fraction(1, 2)),
    (Fraction(1, 2), Fraction(-1, 2), Fraction(1, 2)),
    ("s", 0, 1),
)

_A_T_4_TEMPLATE = (
    (1, 1, 1, 0),
    (0, 1, -1, "s"),
    (0, 1, 1, 0),
    (0, 1, -1, 1),
)

_B_T_6 = mat([
    [4, 0, -5, 0, 1, 0],
    [0, -4, -4, 1, 1, 0],
    [0, 4, -4, -1, 1, 0],
    [0, -2, -1, 2, 1, 0],
    [0, 2, -1, -2, 1, 0],
    [0, 4, 0, -5, 0, 1],
])

_G_6_TEMPLATE = (
    (Fraction(1, 4), 0, 0, 0, 0),
    (Fraction(-1, 6),) * 5,
    (Fraction(-1, 6), Fraction(1, 6), Fraction(-1, 6), Fraction(1, 6), Fraction(-1, 6)),
    (Fraction(1, 24), Fraction(1, 12), Fraction(1, 6), Fraction(1, 3), Fraction(2, 3)),
    (Fraction(1, 24), Fraction(-1, 12), Fraction(1, 6), Fraction(-1, 3), Fraction(2, 3)),
    ("s0", 0, "s1", 0, "s2"),
)

_A_T_6_TEMPLATE = (
    (1, 1, 1, 1, 1, 0),
    (0, 1, -1, 2, -2, "s0"),
    (0, 1, 1, 4, 4, 0),
    (0, 1, -1, 8, -8, "s1"),
    (0, 1, 1, 16, 16, 0),
    (0, 1, -1, 32, -32, "s2"),
)

# Selection constants per (w, k).  Each entry is (G bits, A_T bits).
#
# The w=4 pair for k=3 deserves a note: with the shared B_T above (last row
# [0, -1, 0, 1]) the convolution identity forces the output-transform
# selection value to +1.  The commonly circulated variant pairs -1 with a
# sign-flipped B_T last row; the two are equivalent up to that compensating
# sign, and only +1 is consistent with the B_T that the k=1 mode shares.
_SELECTION = {
    (4, 1): ((1,), (0,)),
    (4, 3): ((0,), (1,)),
    (6, 1): ((1, 0, 0), (0, 0, 1)),
    (6, 3): ((0, 1, 0), (0, 1, 0)),
    (6, 5): ((0, 0, 1), (1, 0, 0)),
}

SUPPORTED_KERNEL_SIZES = {4: (1, 3), 6: (1, 3, 5)}


def _substitute(template, bits: dict[str, int], n_rows: int, n_cols: int) -> Matrix:
    rows = []
    for row in template[:n_rows]:
        rows.append([bits.get(x, x) if isinstance(x, str) else x for x in row[:n_cols]])
    return mat(rows)


@dataclass(frozen=True)
class WinogradMode:
    """One minimal-filtering configuration F_w(m x m, k x k).

    ``b_t`` is w x w, ``g`` is w x k, ``a_t`` is m x w; selection constants
    are already substituted, so the runtime never branches on kernel size
    inside the tile kernel.  Instances are immutable and safe to share.
    """

    omega: int
    m: int
    k: int
    b_t: Matrix
    g: Matrix
    a_t: Matrix
    selection_bits: tuple[tuple[int, ...], tuple[int, ...]]

    def __post_init__(self):
        assert self.omega == self.m + self.k - 1

    # Integer-scaled copies for the all-integer fast path.
    @property
    def _scaled(self):
        cached = _SCALED_CACHE.get((self.omega, self.k))
        if cached is None:
            b_i, b_d = as_scaled_ints(self.b_t)
            g_i, g_d = as_scaled_ints(self.g)
            a_i, a_d = as_scaled_ints(self.a_t)
            if b_d != 1 or a_d != 1:
                raise AssertionError("input/output transforms expected integral")
            cached = (b_i, g_i, g_d, a_i)
            _SCALED_CACHE[(self.omega, self.k)] = cached
        return cached

    def __repr__(self):
        return f"F{self.omega}({self.m}x{self.m},{self.k}x{self.k})"


_SCALED_CACHE: dict[tuple[int, int], tuple] = {}
_MODE_CACHE: dict[tuple[int, int], WinogradMode] = {}


def make_mode(omega: int, k: int) -> WinogradMode:
    """Build the mode for filter size ``omega`` and kernel side ``k``.

    Raises :class:`ConfigurationError` for unsupported (omega, k) pairs.
    """
    key = (omega, k)
    if key in _MODE_CACHE:
        return _MODE_CACHE[key]
    if omega not in SUPPORTED_KERNEL_SIZES or k not in SUPPORTED_KERNEL_SIZES[omega]:
        raise ConfigurationError(
            f"unsupported mode: omega={omega}, k={k}; "
            f"supported kernel sides per omega: {SUPPORTED_KERNEL_SIZES}"
        )
    m = omega - k + 1
    g_bits, a_bits = _SELECTION[key]
    if omega == 4:
        b_t = _B_T_4
        g = _substitute(_G_4_TEMPLATE, {"s": g_bits[0]}, 4, k)
        a_t = _substitute(_A_T_4_TEMPLATE, {"s": a_bits[0]}, m, 4)
    else:
        b_t = _B_T_6
        names = ("s0", "s1", "s2")
        g = _substitute(_G_6_TEMPLATE, dict(zip(names, g_bits)), 6, k)
        a_t = _substitute(_A_T_6_TEMPLATE, dict(zip(names, a_bits)), m, 6)
    mode = WinogradMode(omega, m, k, b_t, g, a_t, (g_bits, a_bits))
    _MODE_CACHE[key] = mode
    return mode


def all_modes() -> tuple[WinogradMode, ...]:
    return tuple(
        make_mode(w, k) for w in sorted(SUPPORTED_KERNEL_SIZES)
        for k in SUPPORTED_KERNEL_SIZES[w]
    )


# --------------------------------------------------------------------------
# Tile-level transforms.
# --------------------------------------------------------------------------

def _check_shape(name, value, expected):
    got = (len(value), len(value[0]) if value else 0)
    if got != expected:
        raise ContractViolation(f"{name} must be {expected[0]}x{expected[1]}, got {got[0]}x{got[1]}")


def transform_input(mode: WinogradMode, d) -> Matrix:
    """U = B_T d B for a w x w input tile."""
    _check_shape("input tile", d, (mode.omega, mode.omega))
    d = mat(d) if not isinstance(d, tuple) else d
    return matmul(matmul(mode.b_t, d), transpose(mode.b_t))


def transform_kernel(mode: WinogradMode, g) -> Matrix:
    """V = G g G_T for a k x k kernel."""
    _check_shape("kernel", g, (mode.k, mode.k))
    g = mat(g) if not isinstance(g, tuple) else g
    return matmul(matmul(mode.g, g), transpose(mode.g))


def transform_output(mode: WinogradMode, e) -> Matrix:
    """Y = A_T E A for a w x w element-wise product tile."""
    _check_shape("product tile", e, (mode.omega, mode.omega))
    e = mat(e) if not isinstance(e, tuple) else e
    return matmul(matmul(mode.a_t, e), transpose(mode.a_t))


def _all_int(rows) -> bool:
    return all(isinstance(x, int) for row in rows for x in row)


def _imatmul(a, b):
    bt = list(zip(*b))
    return [[sum(x * y for x, y in zip(row, col)) for col in bt] for row in a]


def tile_convolve(mode: WinogradMode, d, g):
    """Convolve one input tile with one kernel through the transform pipeline.

    Equals the valid (no-padding) direct convolution of ``d`` with ``g``,
    exactly.  Integer tiles take an all-integer scaled path; anything else
    goes through ``Fraction`` arithmetic.
    """
    _check_shape("input tile", d, (mode.omega, mode.omega))
    _check_shape("kernel", g, (mode.k, mode.k))
    if _all_int(d) and _all_int(g):
        b_i, g_i, g_den, a_i = mode._scaled
        u = _imatmul(_imatmul(b_i, d), list(zip(*b_i)))
        v = _imatmul(_imatmul(g_i, g), list(zip(*g_i)))
        e = [[x * y for x, y in zip(ru, rv)] for ru, rv in zip(u, v)]
        y = _imatmul(_imatmul(a_i, e), list(zip(*a_i)))
        den = g_den * g_den
        out = []
        for row in y:
            q = []
            for x in row:
                quot, rem = divmod(x, den)
                assert rem == 0, "integer convolution must divide exactly"
                q.append(quot)
            out.append(tuple(q))
        return tuple(out)
    u = transform_input(mode, d)
    v = transform_kernel(mode, g)
    return transform_output(mode, hadamard(u, v))


def multiplication_reduction_ratio(mode: WinogradMode) -> Fraction:
    """Multiplications saved vs direct convolution: m^2 k^2 / w^2."""
    return Fraction(mode.m ** 2 * mode.k ** 2, mode.omega ** 2)


# --------------------------------------------------------------------------
# Kernel splitting.
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SplitPlan:
    """Decomposition of an H_t x W_t kernel into k x k zero-padded pieces.

    ``pieces[(i, j)]`` is segmented from the target kernel at offset
    ``(i*k, j*k)``; positions past the target's extent are zero.  Convolving
    the feature map shifted by each piece's offset with that piece and
    summing reproduces the original convolution.
    """

    target_h: int
    target_w: int
    base_k: int
    pieces: tuple[tuple[int, int, Matrix], ...]

    @property
    def grid(self) -> tuple[int, int]:
        return (ceil(self.target_h / self.base_k), ceil(self.target_w / self.base_k))

    @property
    def n_pieces(self) -> int:
        gh, gw = self.grid
        return gh * gw

    def offsets(self) -> tuple[tuple[int, int], ...]:
        return tuple((i * self.base_k, j * self.base_k) for i, j, _ in self.pieces)


def split_kernel(kernel, base_k: int) -> SplitPlan:
    """Split a 2-D kernel into ceil(H_t/k) * ceil(W_t/k) zero-padded pieces."""
    kernel = mat(kernel)
    h_t, w_t = shape(kernel)
    if h_t < 1 or w_t < 1:
        raise ContractViolation("kernel must be at least 1x1")
    if base_k < 1:
        raise ContractViolation("base kernel side must be positive")
    zero = Fraction(0)
    pieces = []
    for i in range(ceil(h_t / base_k)):
        for j in range(ceil(w_t / base_k)):
            piece = tuple(
                tuple(
                    kernel[i * base_k + h][j * base_k + w]
                    if i * base_k + h < h_t and j * base_k + w < w_t
                    else zero
                    for w in range(base_k)
                )
                for h in range(base_k)
            )
            pieces.append((i, j, piece))
    return SplitPlan(h_t, w_t, base_k, tuple(pieces))


def reassemble_kernel(plan: SplitPlan) -> Matrix:
    """Undo :func:`split_kernel`: place pieces at their offsets, drop padding."""
    k = plan.base_k
    out = [[Fraction(0)] * plan.target_w for _ in range(plan.target_h)]
    for i, j, piece in plan.pieces:
        for h in range(k):
            for w in range(k):
                r, c = i * k + h, j * k + w
                if r < plan.target_h and c < plan.target_w:
                    out[r][c] = piece[h][w]
    return mat(out)


def split_count(k: int, h_t: int, w_t: int) -> int:
    return ceil(h_t / k) * ceil(w_t / k)


def mode_efficiency(omega: int, k: int, h_t: int, w_t: int) -> Fraction:
    """Effective target-convolution ops per multiplier per cycle when an
    H_t x W_t kernel runs through the k-sized mode (multiply+add = 2)."""
    m = omega - k + 1
    return Fraction(2 * m * m * h_t * w_t, split_count(k, h_t, w_t) * omega ** 2)


def choose_kernel_size(omega: int, h_t: int, w_t: int) -> int:
    """Pick the supported kernel side for an H_t x W_t kernel under ``omega``.

    Highest per-multiplier efficiency wins (that is what the shared datapath
    exists to maximize); ties go to fewer split pieces, then the larger
    side.  In particular 1x1 kernels run at full tile width rather than
    being zero-padded into a larger kernel.
    """
    if omega not in SUPPORTED_KERNEL_SIZES:
        raise ConfigurationError(f"unsupported filter size omega={omega}")
    if h_t < 1 or w_t < 1:
        raise ContractViolation("kernel dims must be positive")
    return max(
        SUPPORTED_KERNEL_SIZES[omega],
        key=lambda k: (mode_efficiency(omega, k, h_t, w_t),
                       -split_count(k, h_t, w_t), k),
    )


# --------------------------------------------------------------------------
# Cook-Toom construction.
# --------------------------------------------------------------------------

def cook_toom_matrices(m: int, k: int, points) -> tuple[Matrix, Matrix, Matrix]:
    """Generate (B_T, G, A_T) for F(m, k) from distinct sample points.

    ``points`` supplies the m + k - 2 finite evaluation points; the point at
    infinity is implicit.  G rows evaluate the kernel polynomial at each
    point scaled by the inverse Lagrange node product; A_T rows evaluate
    monomials; B_T is the unique matrix completing the interpolation
    identity, solved exactly column by column from

        A_T diag(G e_b) B_T e_a = conv(e_a, e_b)   for all basis pairs.
    """
    n = m + k - 1
    pts = [Fraction(p) for p in points]
    if len(pts) != n - 1 or len(set(pts)) != len(pts):
        raise ConfigurationError(f"need {n - 1} distinct points, got {points}")

    g_rows = []
    for i, p in enumerate(pts):
        node = Fraction(1)
        for l, q in enumerate(pts):
            if l != i:
                node *= p - q
        g_rows.append([(p ** j) / node for j in range(k)])
    g_rows.append([Fraction(0)] * (k - 1) + [Fraction(1)])
    g = mat(g_rows)

    a_rows = []
    for j in range(m):
        row = [p ** j for p in pts]
        row.append(Fraction(1 if j == m - 1 else 0))
        a_rows.append(row)
    a_t = mat(a_rows)

    # Solve for each column of B_T independently.
    b_cols = []
    for a in range(n):
        lhs: list[list[Fraction]] = []
        rhs: list[Fraction] = []
        for b in range(k):
            g_col = [g[r][b] for r in range(n)]
            for j in range(m):
                lhs.append([a_t[j][r] * g_col[r] for r in range(n)])
                rhs.append(Fraction(1 if a - b == j else 0))
        b_cols.append(solve_exact(lhs, rhs))
    b_t = transpose(mat(b_cols))
    return b_t, g, a_t


COOK_TOOM_POINTS = {4: (0, 1, -1), 6: (0, 1, -1, 2, -2)}
