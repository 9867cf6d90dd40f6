"""Image quality metrics."""

import math

import numpy as np
from skimage.metrics import structural_similarity

from .exceptions import ShapeError
from .validation import check_grid

SSIM_MIN_SIZE = 11


def _pair(a, b):
    a, b = check_grid(a), check_grid(b)
    if a.shape != b.shape:
        raise ShapeError(f"image shapes differ: {a.shape} vs {b.shape}")
    return a.pixels.astype(np.float64), b.pixels.astype(np.float64)


def mse(a, b):
    x, y = _pair(a, b)
    return float(np.mean((x - y) ** 2))


def psnr(a, b):
    """Peak signal-to-noise ratio in dB; ``math.inf`` for identical images."""
    err = mse(a, b)
    if err == 0:
        return math.inf
    return 10.0 * math.log10(255.0 ** 2 / err)


def ssim(a, b):
    """Mean SSIM with an 11x11 Gaussian window (sigma 1.5), K1=0.01, K2=0.03, L=255."""
    x, y = _pair(a, b)
    if min(x.shape) < SSIM_MIN_SIZE:
        raise ShapeError(f"SSIM needs images of at least {SSIM_MIN_SIZE}x{SSIM_MIN_SIZE}")
    # truncate=3.5 at sigma=1.5 gives the 11-tap window
    return float(structural_similarity(
        x, y, data_range=255.0, gaussian_weights=True, sigma=1.5,
        use_sample_covariance=False, K1=0.01, K2=0.03))
