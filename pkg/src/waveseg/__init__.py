"""Dual-domain segmentation decoder with a desk-scale numerical core."""

from .exceptions import (
    ConfigurationError,
    DataError,
    DimensionError,
    DomainError,
    NumericalError,
    WavesegError,
)
from .gradcheck import grad_check
from .model import DecoderConfig, FeaturePyramid, ToyEncoder, WaveSegModel
from .tensor import (
    Tape,
    Tensor,
    as_tensor,
    default_dtype,
    no_grad,
    set_default_dtype,
    set_finite_checks,
)
from .wavelet import WaveletSubbands, dwt2d, idwt2d

__all__ = [
    "ConfigurationError",
    "DataError",
    "DecoderConfig",
    "DimensionError",
    "DomainError",
    "FeaturePyramid",
    "NumericalError",
    "Tape",
    "Tensor",
    "ToyEncoder",
    "WaveSegModel",
    "WaveletSubbands",
    "WavesegError",
    "as_tensor",
    "default_dtype",
    "dwt2d",
    "grad_check",
    "idwt2d",
    "no_grad",
    "set_default_dtype",
    "set_finite_checks",
]

__version__ = "0.1.0"
