"""Contrast and speckle-preservation metrics.

Contrast is scored two ways: classic CNR in dB and the histogram-overlap
gCNR in [0, 1], both between a lesion region and a background region.
Speckle preservation is certified by a two-sample Kolmogorov-Smirnov
test between the processed image and its unprocessed reference inside a
fully developed speckle patch; p > 0.05 means the texture statistics
survived. The windowed protocol samples several small circular
foreground windows and reports mean and spread per metric.
"""

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .compounding import BModeImage


class DegenerateInputError(ValueError):
    """Raised when a metric is undefined for the given samples."""


@dataclass(frozen=True)
class RoiSpec:
    """Circular lesion/background regions plus a speckle test rectangle.

    Circles are (center_z, center_x, radius) in pixels; the rectangle is
    (z0, x0, height, width).
    """

    roi_circles: tuple
    background_circles: tuple
    speckle_rect: tuple

    def __post_init__(self):
        object.__setattr__(self, "roi_circles", tuple(tuple(map(float, c)) for c in self.roi_circles))
        object.__setattr__(
            self, "background_circles", tuple(tuple(map(float, c)) for c in self.background_circles)
        )
        object.__setattr__(self, "speckle_rect", tuple(int(v) for v in self.speckle_rect))
        if not self.roi_circles or not self.background_circles:
            raise ValueError("need at least one ROI and one background circle")
        for cz, cx, r in self.roi_circles + self.background_circles:
            if r <= 0:
                raise ValueError("circle radius must be positive")
        if len(self.speckle_rect) != 4 or min(self.speckle_rect[2:]) < 2:
            raise ValueError("speckle_rect must be (z0, x0, height, width) with size >= 2")

    def validate_for(self, shape):
        h, w = shape
        for cz, cx, r in self.roi_circles + self.background_circles:
            if cz - r < 0 or cx - r < 0 or cz + r > h - 1 or cx + r > w - 1:
                raise ValueError(f"circle ({cz}, {cx}, {r}) exceeds image bounds {shape}")
        z0, x0, rh, rw = self.speckle_rect
        if z0 < 0 or x0 < 0 or z0 + rh > h or x0 + rw > w:
            raise ValueError(f"speckle_rect {self.speckle_rect} exceeds image bounds {shape}")
        roi = _circles_mask(self.roi_circles, shape)
        bg = _circles_mask(self.background_circles, shape)
        if np.any(roi & bg):
            raise ValueError("ROI and background masks overlap")


@dataclass(frozen=True)
class MetricsReport:
    """Windowed contrast statistics plus the speckle KS verdict."""

    gcnr_mean: float
    gcnr_std: float
    cnr_db_mean: float
    cnr_db_std: float
    ks_statistic: float
    ks_p_value: float
    ks_pass: bool
    n_windows: int

    FIELDS = ("gcnr_mean", "gcnr_std", "cnr_db_mean", "cnr_db_std",
              "ks_statistic", "ks_p_value", "ks_pass", "n_windows")

    def to_text(self):
        return "".join(f"{k} = {getattr(self, k)}\n" for k in self.FIELDS)

    def to_csv_row(self, header=True):
        buf = io.StringIO()
        writer = csv.writer(buf)
        if header:
            writer.writerow(self.FIELDS)
        writer.writerow([getattr(self, k) for k in self.FIELDS])
        return buf.getvalue()


def cnr_db(pixels_roi, pixels_bg):
    """Contrast-to-noise ratio in dB with population variances.

    Returns -inf when the means coincide; raises DegenerateInputError
    when both samples are constant (zero pooled variance).
    """
    a = np.asarray(pixels_roi, dtype=np.float64).ravel()
    b = np.asarray(pixels_bg, dtype=np.float64).ravel()
    if a.size == 0 or b.size == 0:
        raise ValueError("samples must be nonempty")
    pooled = (a.var() + b.var()) / 2.0
    if pooled == 0.0:
        raise DegenerateInputError("zero pooled variance")
    diff = abs(a.mean() - b.mean())
    if diff == 0.0:
        return float("-inf")
    return float(20.0 * np.log10(diff / np.sqrt(pooled)))


def gcnr(pixels_roi, pixels_bg, bins=256):
    """Generalized CNR: one minus histogram overlap on shared [0, 1] bins."""
    a = np.asarray(pixels_roi, dtype=np.float64).ravel()
    b = np.asarray(pixels_bg, dtype=np.float64).ravel()
    if a.size == 0 or b.size == 0:
        raise ValueError("samples must be nonempty")
    if bins < 2:
        raise ValueError("need at least 2 bins")
    for s in (a, b):
        if s.min() < 0.0 or s.max() > 1.0:
            raise ValueError("samples must lie in [0, 1]")
    pa, _ = np.histogram(a, bins=bins, range=(0.0, 1.0))
    pb, _ = np.histogram(b, bins=bins, range=(0.0, 1.0))
    overlap = np.minimum(pa / a.size, pb / b.size).sum()
    return float(1.0 - overlap)


def ks_two_sample(a, b):
    """Two-sample Kolmogorov-Smirnov statistic and asymptotic p-value.

    D is the exact supremum ECDF distance. The p-value uses the
    asymptotic Kolmogorov series with the standard small-sample
    correction on the effective size n_e = |a||b| / (|a|+|b|).
    """
    a = np.sort(np.asarray(a, dtype=np.float64).ravel())
    b = np.sort(np.asarray(b, dtype=np.float64).ravel())
    if a.size < 2 or b.size < 2:
        raise ValueError("each sample needs at least 2 values")
    support = np.concatenate([a, b])
    cdf_a = np.searchsorted(a, support, side="right") / a.size
    cdf_b = np.searchsorted(b, support, side="right") / b.size
    d = float(np.abs(cdf_a - cdf_b).max())
    n_e = a.size * b.size / (a.size + b.size)
    lam = (math.sqrt(n_e) + 0.12 + 0.11 / math.sqrt(n_e)) * d
    return d, _kolmogorov_sf(lam)


def _kolmogorov_sf(lam):
    # 2 * sum_{j>=1} (-1)^(j-1) exp(-2 j^2 lam^2), truncated below 1e-10
    if lam <= 0.0:
        return 1.0
    total = 0.0
    sign = 1.0
    for j in range(1, 100000):
        term = math.exp(-2.0 * j * j * lam * lam)
        total += sign * term
        if term < 1e-10:
            break
        sign = -sign
    return float(min(max(2.0 * total, 0.0), 1.0))


def _circles_mask(circles, shape):
    h, w = shape
    zz, xx = np.ogrid[:h, :w]
    mask = np.zeros(shape, dtype=bool)
    for cz, cx, r in circles:
        mask |= (zz - cz) ** 2 + (xx - cx) ** 2 <= r * r
    return mask


def _window_centers(roi_circles, window_radius, shape):
    """All integer centers whose window disk fits inside some ROI circle."""
    h, w = shape
    centers = set()
    for cz, cx, r in roi_circles:
        fit = r - window_radius
        if fit < 0:
            continue
        z_lo, z_hi = int(np.ceil(cz - fit)), int(np.floor(cz + fit))
        for z in range(max(z_lo, 0), min(z_hi, h - 1) + 1):
            span = np.sqrt(max(fit * fit - (z - cz) ** 2, 0.0))
            x_lo, x_hi = int(np.ceil(cx - span)), int(np.floor(cx + span))
            for x in range(max(x_lo, 0), min(x_hi, w - 1) + 1):
                centers.add((z, x))
    return sorted(centers)


def evaluate(image, reference, roi, n_windows=20, window_radius=8, seed=0):
    """Windowed contrast metrics plus the speckle KS test.

    ``n_windows`` distinct circular foreground windows are drawn
    uniformly (seeded PCG64) from all positions that fit inside the ROI
    circles; each window is scored against the full background mask.
    The KS test compares ``image`` and ``reference`` inside the speckle
    rectangle; it passes when p > 0.05.
    """
    img = image.pixels if isinstance(image, BModeImage) else np.asarray(image, dtype=np.float64)
    ref = reference.pixels if isinstance(reference, BModeImage) else np.asarray(reference, dtype=np.float64)
    if img.shape != ref.shape:
        raise ValueError("image and reference must share a shape")
    if n_windows < 1:
        raise ValueError("n_windows must be >= 1")
    roi.validate_for(img.shape)

    centers = _window_centers(roi.roi_circles, window_radius, img.shape)
    if len(centers) < n_windows:
        raise ValueError(
            f"only {len(centers)} window positions of radius {window_radius} fit inside the ROI"
        )
    rng = np.random.Generator(np.random.PCG64(seed))
    chosen = rng.choice(len(centers), size=n_windows, replace=False)

    bg_pixels = img[_circles_mask(roi.background_circles, img.shape)]
    zz, xx = np.ogrid[: img.shape[0], : img.shape[1]]
    gcnrs = np.zeros(n_windows)
    cnrs = np.zeros(n_windows)
    for i, ci in enumerate(sorted(int(c) for c in chosen)):
        cz, cx = centers[ci]
        disk = (zz - cz) ** 2 + (xx - cx) ** 2 <= window_radius**2
        win_pixels = img[disk]
        gcnrs[i] = gcnr(win_pixels, bg_pixels)
        cnrs[i] = cnr_db(win_pixels, bg_pixels)

    z0, x0, rh, rw = roi.speckle_rect
    patch = (slice(z0, z0 + rh), slice(x0, x0 + rw))
    d, p = ks_two_sample(img[patch].ravel(), ref[patch].ravel())
    return MetricsReport(
        gcnr_mean=float(gcnrs.mean()),
        gcnr_std=float(gcnrs.std()),
        cnr_db_mean=float(cnrs.mean()),
        cnr_db_std=float(cnrs.std()),
        ks_statistic=d,
        ks_p_value=p,
        ks_pass=bool(p > 0.05),
        n_windows=n_windows,
    )
