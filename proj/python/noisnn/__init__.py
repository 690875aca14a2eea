"""Noise-trained single-step spiking networks run as multi-step networks."""

from ._noisnn import (
    ArchParseError,
    ConfigError,
    DimensionError,
    FormatError,
    Model,
    NumericError,
    lif_step,
    load_idx,
    parameter_count,
    renormalize,
    surrogate_grad,
)

DEFAULT_ARCH = "64C3-AP2-128C3-AP2-128C3-AP2-512FC-10FC"

__all__ = [
    "ArchParseError",
    "ConfigError",
    "DimensionError",
    "FormatError",
    "Model",
    "NumericError",
    "DEFAULT_ARCH",
    "lif_step",
    "load_idx",
    "parameter_count",
    "renormalize",
    "surrogate_grad",
]
