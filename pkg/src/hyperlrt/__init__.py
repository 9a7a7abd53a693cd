"""Likelihood-ratio test for hyperuniformity of point patterns on the torus."""
__version__ = "0.1.0"

from ._backend import BACKEND
from .core import PointPattern, WaveGrid, WaveVector, build_wave_grid, read_pattern, write_pattern
from .simulate import ModelConfig, simulate, thin
from .spectral import SpectralSample, scattering_intensity, spectral_sample, tapered_transform
from .inference import FitResult, lr_statistic, mle_full, mle_h0
from .calibrate import NullModel, REFERENCE_NULL, critical_value, p_value, test_sample

__all__ = [
    "BACKEND", "PointPattern", "WaveGrid", "WaveVector", "build_wave_grid", "read_pattern",
    "write_pattern", "ModelConfig", "simulate", "thin", "SpectralSample",
    "scattering_intensity", "spectral_sample", "tapered_transform", "FitResult",
    "lr_statistic", "mle_full", "mle_h0", "NullModel", "REFERENCE_NULL", "critical_value",
    "p_value", "test_sample",
]
