"""Zero-cost spatio-temporal channel shifts with exact cost accounting."""

from ._stsm import (
    ConfigError,
    ContractError,
    FormatError,
    Network,
    ShapeError,
    apply_shift,
    generate_clips,
    load_tensor,
    presets,
    save_tensor,
    shift_layout,
    softmax_cross_entropy,
    sparse_conv_reference,
)

__all__ = [
    "ConfigError",
    "ContractError",
    "FormatError",
    "Network",
    "ShapeError",
    "apply_shift",
    "generate_clips",
    "load_tensor",
    "presets",
    "save_tensor",
    "shift_layout",
    "softmax_cross_entropy",
    "sparse_conv_reference",
]

__version__ = "0.1.0"
