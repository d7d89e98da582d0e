"""Accelerator hardware configuration.

A configuration fixes the systolic array shape (``rows`` x ``cols`` of PEs),
the per-PE channel group ``q`` and batch, the banked input-buffer geometry
(``h_b`` x ``w_b`` banks of depth ``d_in``), output buffer depth ``d_out``,
clock, external bandwidth, and the resource budgets of the target device.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from ._util import next_pow2
from .errors import ConfigurationError
from .wino import SUPPORTED_KERNEL_SIZES


def required_h_b(omega: int) -> int:
    """Bank rows needed for single-cycle planar access: 4 for w=4, 8 for w=6."""
    return 4 if omega == 4 else 8


def required_w_b(omega: int) -> int:
    """Bank columns: smallest power of two >= 2*omega."""
    return next_pow2(2 * omega)


@dataclass(frozen=True)
class AcceleratorConfig:
    omega: int
    rows: int          # systolic array height (output-channel parallelism)
    cols: int          # systolic array width (tile-column parallelism)
    q: int             # input channels accumulated per PE per cycle
    batch: int         # images processed in lockstep (fixed at 2)
    h_b: int           # input bank grid rows
    w_b: int           # input bank grid columns
    d_in: int          # input bank depth (words)
    d_out: int         # output buffer depth (words)
    freq_hz: int
    bandwidth: int     # external memory bandwidth, bytes/s (1 byte per element)
    dsp_budget: int | None = None
    bram_budget: int | None = None

    def with_overrides(self, **kw) -> "AcceleratorConfig":
        return replace(self, **kw)


def make_config(omega: int, rows: int, cols: int, q: int, d_in: int, d_out: int,
                freq_hz: int = 250_000_000, bandwidth: int = 10_664_000_000,
                dsp_budget: int | None = None, bram_budget: int | None = None,
                batch: int = 2) -> AcceleratorConfig:
    """Build a configuration with the bank grid derived from ``omega``."""
    cfg = AcceleratorConfig(
        omega=omega, rows=rows, cols=cols, q=q, batch=batch,
        h_b=required_h_b(omega), w_b=required_w_b(omega),
        d_in=d_in, d_out=d_out, freq_hz=freq_hz, bandwidth=bandwidth,
        dsp_budget=dsp_budget, bram_budget=bram_budget,
    )
    validate_config(cfg)
    return cfg


def validate_config(cfg: AcceleratorConfig) -> None:
    """Reject configurations outside the modeled envelope."""
    if cfg.omega not in SUPPORTED_KERNEL_SIZES:
        raise ConfigurationError(f"unsupported filter size omega={cfg.omega}")
    if cfg.batch != 2:
        raise ConfigurationError("batch size is fixed at 2")
    if min(cfg.rows, cfg.cols, cfg.q, cfg.d_in, cfg.d_out) < 1:
        raise ConfigurationError("array dims, q and buffer depths must be positive")
    if cfg.h_b != required_h_b(cfg.omega):
        raise ConfigurationError(
            f"h_b must be {required_h_b(cfg.omega)} for omega={cfg.omega}"
        )
    if cfg.w_b != required_w_b(cfg.omega):
        raise ConfigurationError(
            f"w_b must be {required_w_b(cfg.omega)} for omega={cfg.omega}"
        )
    if cfg.omega > cfg.h_b:
        # Unreachable under the rules above; kept as an explicit guard because
        # planar access has no defined semantics when a tile is taller than
        # the bank grid.
        raise ConfigurationError("tile height exceeds bank grid height")
    if cfg.freq_hz < 1 or cfg.bandwidth < 1:
        raise ConfigurationError("frequency and bandwidth must be positive")


# Published board configurations, usable as presets in tests and the CLI.
PRESETS = {
    "ultra96-f4": dict(omega=4, rows=2, cols=1, q=4, d_in=4096, d_out=1024,
                       freq_hz=250_000_000, bandwidth=10_664_000_000,
                       dsp_budget=360, bram_budget=432),
    "zcu102-f4": dict(omega=4, rows=8, cols=2, q=4, d_in=8192, d_out=1024,
                      freq_hz=250_000_000, bandwidth=21_328_000_000,
                      dsp_budget=2520, bram_budget=1824),
    "zcu102-f6": dict(omega=6, rows=4, cols=2, q=4, d_in=4096, d_out=1024,
                      freq_hz=214_000_000, bandwidth=21_328_000_000,
                      dsp_budget=2520, bram_budget=1824),
}


def preset(name: str) -> AcceleratorConfig:
    try:
        return make_config(**PRESETS[name])
    except KeyError:
        raise ConfigurationError(
            f"unknown preset {name!r}; available: {sorted(PRESETS)}"
        ) from None
