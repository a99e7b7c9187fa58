"""Multispectral non-local means denoising with SURE-tuned parameters.

Cubes are numpy float64 arrays of shape (H, L, P): H rows, L columns, P
spectral bands. Covariances are (P, P) float64 matrices. Pass varsigma <= 0 to
disable candidate preselection and average over the full image.
"""

from ._core import (
    add_gaussian_noise,
    candidate_counts,
    default_init,
    denoise,
    estimate_noise_covariance,
    optimize,
    psnr,
    read_cube,
    sigma_for_target_psnr,
    ssim,
    sure_risk,
    write_cube,
)

__all__ = [
    "add_gaussian_noise",
    "candidate_counts",
    "default_init",
    "denoise",
    "estimate_noise_covariance",
    "optimize",
    "psnr",
    "read_cube",
    "sigma_for_target_psnr",
    "ssim",
    "sure_risk",
    "write_cube",
]
