"""Kernel-sharing Winograd convolution accelerator model.

Exact minimal-filtering transform algebra with selection-bit kernel sharing,
a functional convolution engine, a cycle-level systolic array simulator with
a banked-memory behavioral model, analytical resource/latency models, and a
design-space explorer.
"""

from .bitwidth import (
    analytic_growth,
    bitwidth_growth,
    exhaustive_growth,
    growth_report,
    oracle_growth,
)
from .config import AcceleratorConfig, make_config, preset, validate_config
from .engine import (
    LayerDescriptor,
    conv_layer,
    conv_layer_quantized,
    make_conv_layer,
    round_half_even,
    run_graph,
    schedule_rows,
    tiled_loop_reference,
)
from .errors import (
    BankConflictError,
    CapacityError,
    ConfigurationError,
    ContractViolation,
    InfeasibleConfigError,
    ModelFileError,
    SimulationError,
    UnsupportedLayerError,
    WinoshareError,
)
from .membank import BramMatrix, PingPongBuffer, TileRequest, WeightBuffer, map_address
from .modelfile import parse_config, parse_model, serialize_model
from .perf import (
    bram_usage,
    dsp_per_pe,
    dsp_usage,
    explore,
    latency_model,
    model_report,
    theoretical_dsp_efficiency,
)
from .reference import direct_conv
from .systolic import SimReport, check_skew, simulate_layer
from .tensors import Tensor, WeightTensor
from .wino import (
    SplitPlan,
    WinogradMode,
    all_modes,
    choose_kernel_size,
    cook_toom_matrices,
    make_mode,
    multiplication_reduction_ratio,
    split_kernel,
    tile_convolve,
    transform_input,
    transform_kernel,
    transform_output,
)

__version__ = "0.1.0"

__all__ = [
    "AcceleratorConfig",
    "BankConflictError",
    "BramMatrix",
    "CapacityError",
    "ConfigurationError",
    "ContractViolation",
    "InfeasibleConfigError",
    "LayerDescriptor",
    "ModelFileError",
    "PingPongBuffer",
    "SimReport",
    "SimulationError",
    "SplitPlan",
    "Tensor",
    "TileRequest",
    "UnsupportedLayerError",
    "WeightBuffer",
    "WeightTensor",
    "WinogradMode",
    "WinoshareError",
    "all_modes",
    "analytic_growth",
    "bitwidth_growth",
    "bram_usage",
    "check_skew",
    "choose_kernel_size",
    "conv_layer",
    "conv_layer_quantized",
    "cook_toom_matrices",
    "round_half_even",
    "direct_conv",
    "dsp_per_pe",
    "dsp_usage",
    "exhaustive_growth",
    "explore",
    "growth_report",
    "latency_model",
    "make_config",
    "make_conv_layer",
    "make_mode",
    "map_address",
    "model_report",
    "multiplication_reduction_ratio",
    "oracle_growth",
    "parse_config",
    "parse_model",
    "preset",
    "run_graph",
    "schedule_rows",
    "serialize_model",
    "simulate_layer",
    "split_kernel",
    "theoretical_dsp_efficiency",
    "tile_convolve",
    "tiled_loop_reference",
    "transform_input",
    "transform_kernel",
    "transform_output",
    "validate_config",
]
