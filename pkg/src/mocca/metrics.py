"""Image quality measures against a sum-of-squares reference."""
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter

__all__ = ["QualityReport", "psnr", "ssim", "relative_error_map", "quality_report"]


@dataclass
class QualityReport:
    psnr: float
    ssim: float
    max_rel_err: float
    error_map: np.ndarray

    def lines(self):
        return [
            f"psnr = {self.psnr!r}",
            f"ssim = {self.ssim!r}",
            f"max_rel_err = {self.max_rel_err!r}",
        ]


def _pair(reference, test):
    reference = np.asarray(reference, dtype=float)
    test = np.asarray(test, dtype=float)
    if reference.shape != test.shape:
        raise ValueError(f"shape mismatch: {reference.shape} vs {test.shape}")
    return reference, test


def psnr(reference, test):
    """Peak signal-to-noise ratio in dB, peak = max of the reference; ``inf`` for identical images."""
    reference, test = _pair(reference, test)
    peak = reference.max()
    if not np.any(reference):
        raise ValueError("reference image is all zero")
    mse = np.mean((reference - test) ** 2)
    if mse == 0:
        return float("inf")
    return float(10.0 * np.log10(peak * peak / mse))


def ssim(reference, test, sigma=1.5, k1=0.01, k2=0.03):
    """Mean SSIM with an 11x11 Gaussian window and symmetric padding.

    The dynamic range is ``max(reference) - min(reference)``.
    """
    reference, test = _pair(reference, test)
    if min(reference.shape) < 11:
        raise ValueError("SSIM needs images of at least 11x11 pixels")
    data_range = reference.max() - reference.min()
    if data_range <= 0:
        raise ValueError("reference image has zero dynamic range")
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2

    def blur(a):
        # radius int(3.5 * 1.5 + 0.5) = 5, i.e. an 11-tap window
        return gaussian_filter(a, sigma, mode="reflect", truncate=3.5)

    mu_x, mu_y = blur(reference), blur(test)
    sxx = blur(reference * reference) - mu_x * mu_x
    syy = blur(test * test) - mu_y * mu_y
    sxy = blur(reference * test) - mu_x * mu_y
    num = (2 * mu_x * mu_y + c1) * (2 * sxy + c2)
    den = (mu_x ** 2 + mu_y ** 2 + c1) * (sxx + syy + c2)
    return float(np.mean(num / den))


def relative_error_map(reference, test, clip=0.12):
    """``|test - reference| / max(reference)`` clipped to ``[0, clip]``."""
    reference, test = _pair(reference, test)
    peak = reference.max()
    if peak <= 0:
        raise ValueError("reference image has no positive peak")
    return np.clip(np.abs(test - reference) / peak, 0.0, clip)


def quality_report(reference, test, clip=0.12):
    reference, test = _pair(reference, test)
    err = np.abs(test - reference) / reference.max()
    return QualityReport(
        psnr=psnr(reference, test),
        ssim=ssim(reference, test),
        max_rel_err=float(err.max()),
        error_map=relative_error_map(reference, test, clip),
    )
