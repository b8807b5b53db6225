"""Parallel MRI reconstruction with coil sensitivities calibrated from a nullspace."""
from .calibration import CalibrationConfig, CalibrationResult, SensitivitySet, calibrate
from .errors import AcsCoverageError, FormatError, MoccaError, NumericalError
from .metrics import QualityReport, psnr, quality_report, ssim
from .phantom import PhantomSpec, simulate
from .reconstruct import ReconConfig, ReconResult, finalize_sos, reconstruct
from .sampling import SamplingPattern, make_pattern
from .smoothing import SmoothingConfig, smooth_step

__all__ = [
    "CalibrationConfig",
    "CalibrationResult",
    "SensitivitySet",
    "calibrate",
    "MoccaError",
    "FormatError",
    "AcsCoverageError",
    "NumericalError",
    "QualityReport",
    "psnr",
    "ssim",
    "quality_report",
    "PhantomSpec",
    "simulate",
    "ReconConfig",
    "ReconResult",
    "finalize_sos",
    "reconstruct",
    "SamplingPattern",
    "make_pattern",
    "SmoothingConfig",
    "smooth_step",
]
