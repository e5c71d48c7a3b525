"""Image and segmentation quality measures."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .types import HardSegmentation

PSNR_VARIANTS = ("norm", "standard")


@dataclass(frozen=True)
class MetricReport:
    rre: float
    psnr_norm: float
    psnr_standard: float
    rse: float


def _pair(u, u_gt):
    u = np.asarray(u, dtype=float)
    u_gt = np.asarray(u_gt, dtype=float)
    if u.shape != u_gt.shape:
        raise ValueError(f"shape mismatch: {u.shape} vs {u_gt.shape}")
    return u, u_gt


def rre(u, u_gt) -> float:
    """Relative error ``||u_gt - u|| / ||u_gt||``."""
    u, u_gt = _pair(u, u_gt)
    ref = float(np.linalg.norm(u_gt))
    if ref == 0:
        raise ValueError("relative error is undefined for a zero ground truth")
    return float(np.linalg.norm(u_gt - u)) / ref


def psnr(u, u_gt, variant: str = "standard") -> float:
    """Peak signal-to-noise ratio in dB; ``inf`` for identical images.

    ``standard``: ``10 log10(max(u_gt)^2 N / ||u_gt - u||^2)``.
    ``norm``: ``10 log10(max(u_gt) / (||u_gt - u|| / N))``, no square on
    either the peak or the error norm.
    """
    if variant not in PSNR_VARIANTS:
        raise ValueError(f"unknown PSNR variant {variant!r}")
    u, u_gt = _pair(u, u_gt)
    err = float(np.linalg.norm(u_gt - u))
    if err == 0:
        return math.inf
    peak = float(np.max(u_gt))
    n = u_gt.size
    if variant == "norm":
        ratio = peak / (err / n)
    else:
        ratio = peak**2 * n / err**2
    return 10.0 * math.log10(ratio) if ratio > 0 else -math.inf


def rse(seg, seg_gt) -> float:
    """Fraction of pixels whose labels differ."""
    a = np.asarray(seg.labels if isinstance(seg, HardSegmentation) else seg)
    b = np.asarray(seg_gt.labels if isinstance(seg_gt, HardSegmentation) else seg_gt)
    if a.shape != b.shape:
        raise ValueError(f"segmentation grids differ: {a.shape} vs {b.shape}")
    return float(np.count_nonzero(a != b)) / a.size


def evaluate(u, u_gt, seg, seg_gt) -> MetricReport:
    return MetricReport(
        rre=rre(u, u_gt),
        psnr_norm=psnr(u, u_gt, "norm"),
        psnr_standard=psnr(u, u_gt, "standard"),
        rse=rse(seg, seg_gt),
    )
