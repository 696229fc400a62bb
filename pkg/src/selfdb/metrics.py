"""NRMSE and SSIM on magnitude images."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import InvalidArgument

__all__ = ["nrmse", "ssim", "MetricReport", "evaluate", "write_metrics_csv"]

WINDOW = 11
SIGMA = 1.5
K1, K2 = 0.01, 0.03


def _magnitudes(estimate, reference):
    a = np.abs(np.asarray(estimate))
    b = np.abs(np.asarray(reference))
    if a.shape != b.shape:
        raise InvalidArgument(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def nrmse(estimate, reference) -> float:
    """``|| |est| - |ref| ||_2 / || |ref| ||_2``."""
    a, b = _magnitudes(estimate, reference)
    denom = np.linalg.norm(b)
    if denom == 0:
        raise InvalidArgument("reference image is zero")
    return float(np.linalg.norm(a - b) / denom)


def ssim(estimate, reference, data_range: float | None = None) -> float:
    """Mean SSIM over an 11x11 Gaussian window (sigma 1.5).

    ``data_range`` defaults to the reference's max magnitude. Border pixels whose
    window would leave the image are excluded from the mean.
    """
    a, b = _magnitudes(estimate, reference)
    if a.ndim != 2 or min(a.shape) < WINDOW:
        raise InvalidArgument(f"images must be 2-D and at least {WINDOW}x{WINDOW}")
    L = float(b.max()) if data_range is None else float(data_range)
    if L <= 0:
        raise InvalidArgument("data range must be positive")
    c1, c2 = (K1 * L) ** 2, (K2 * L) ** 2
    # truncate=3.5 gives radius int(3.5 * 1.5 + 0.5) = 5, i.e. an 11-tap window
    filt = lambda z: gaussian_filter(z, sigma=SIGMA, truncate=3.5)
    mu_a, mu_b = filt(a), filt(b)
    var_a = filt(a * a) - mu_a**2
    var_b = filt(b * b) - mu_b**2
    cov = filt(a * b) - mu_a * mu_b
    s = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / ((mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2))
    p = (WINDOW - 1) // 2
    return float(s[p:-p, p:-p].mean())


@dataclass
class MetricReport:
    per_image: list[tuple[float, float]] = field(default_factory=list)

    @property
    def nrmse(self) -> float:
        return float(np.mean([r[0] for r in self.per_image]))

    @property
    def ssim(self) -> float:
        return float(np.mean([r[1] for r in self.per_image]))


def evaluate(recons, refs) -> MetricReport:
    if len(recons) != len(refs):
        raise InvalidArgument(f"{len(recons)} reconstructions for {len(refs)} references")
    return MetricReport([(nrmse(a, b), ssim(a, b)) for a, b in zip(recons, refs)])


def write_metrics_csv(report: MetricReport, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["image_index", "nrmse", "ssim"])
        for i, (n, s) in enumerate(report.per_image):
            w.writerow([i, repr(n), repr(s)])
        w.writerow(["mean", repr(report.nrmse), repr(report.ssim)])
