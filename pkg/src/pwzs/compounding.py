"""Angle-stack compounding and B-mode conversion.

A plane-wave acquisition is a stack of per-angle beamformed envelope
images sharing one pixel grid. Compounding averages a subset of frames
in the envelope domain; log compression maps the result onto the usual
[0, 1] B-mode display scale. The even/odd split of the working angles
produces the pseudo-pair used for self-supervised training.
"""

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class AngleStack:
    """Per-angle beamformed envelope frames, shape [k, H, W]."""

    frames: np.ndarray
    angles_deg: tuple
    pixel_spacing_mm: tuple = (1.0, 1.0)
    source_id: str = ""

    def __post_init__(self):
        frames = np.asarray(self.frames)
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "angles_deg", tuple(float(a) for a in self.angles_deg))
        if frames.ndim != 3:
            raise ValueError(f"frames must be 3-D [k, H, W], got ndim={frames.ndim}")
        k = frames.shape[0]
        if k < 2:
            raise ValueError("k must be >= 2")
        if len(self.angles_deg) != k:
            raise ValueError(f"{len(self.angles_deg)} angles for {k} frames")
        if any(b <= a for a, b in zip(self.angles_deg, self.angles_deg[1:])):
            raise ValueError("angles_deg must be strictly increasing")
        if not np.all(np.isfinite(frames)) or frames.min() < 0:
            raise ValueError("frame values must be finite and non-negative")
        dz, dx = self.pixel_spacing_mm
        if dz <= 0 or dx <= 0:
            raise ValueError("pixel spacing must be positive")

    @property
    def k(self):
        return self.frames.shape[0]

    @property
    def shape(self):
        return self.frames.shape[1:]

    def subset(self, indices):
        """New stack containing only the selected frames."""
        indices = _check_indices(indices, self.k)
        if len(indices) < 2:
            raise ValueError("subset needs at least 2 frames")
        return AngleStack(
            frames=self.frames[list(indices)],
            angles_deg=tuple(self.angles_deg[i] for i in indices),
            pixel_spacing_mm=self.pixel_spacing_mm,
            source_id=self.source_id,
        )


@dataclass(frozen=True)
class BModeImage:
    """Log-compressed image with every pixel in [0, 1]."""

    pixels: np.ndarray
    dynamic_range_db: float = 80.0

    def __post_init__(self):
        pixels = np.asarray(self.pixels, dtype=np.float64)
        object.__setattr__(self, "pixels", pixels)
        if pixels.ndim != 2:
            raise ValueError("pixels must be 2-D")
        if not np.all(np.isfinite(pixels)):
            raise ValueError("pixels must be finite")
        if pixels.min() < 0.0 or pixels.max() > 1.0:
            raise ValueError("pixels must lie in [0, 1]")
        if self.dynamic_range_db <= 0:
            raise ValueError("dynamic_range_db must be positive")

    @property
    def shape(self):
        return self.pixels.shape


@dataclass(frozen=True)
class SubsetPair:
    """Two compounded B-mode images built from disjoint angle subsets."""

    s1: BModeImage
    s2: BModeImage
    indices_1: tuple = field(default=())
    indices_2: tuple = field(default=())

    def __post_init__(self):
        i1, i2 = set(self.indices_1), set(self.indices_2)
        if not i1 or not i2:
            raise ValueError("both index sets must be nonempty")
        if i1 & i2:
            raise ValueError("index sets must be disjoint")
        k = len(i1) + len(i2)
        if i1 | i2 != set(range(k)):
            raise ValueError("index sets must cover 0..k-1")
        if self.s1.shape != self.s2.shape:
            raise ValueError("subset images must share a shape")


def select_angles(total_angles, k):
    """Pick k working angles uniformly spread over the acquired set.

    Returns strictly increasing indices round(j * (M - 1) / (k - 1)) for
    j = 0..k-1, so both endpoint angles are always included. Rounding is
    half-up, which places midpoint ties on the later angle.
    """
    m = len(total_angles)
    if k < 2 or k > m:
        raise ValueError(f"need 2 <= k <= {m}, got k={k}")
    idx = [int(np.floor(j * (m - 1) / (k - 1) + 0.5)) for j in range(k)]
    if any(b <= a for a, b in zip(idx, idx[1:])):
        raise ValueError("selected indices collide; k too close to M")
    return idx


def parity_partition(k):
    """Split indices 0..k-1 into (even, odd) zero-based index sets."""
    if k < 2:
        raise ValueError("k must be >= 2")
    return tuple(range(0, k, 2)), tuple(range(1, k, 2))


def _check_indices(indices, k):
    idx = sorted(set(int(i) for i in indices))
    if not idx:
        raise ValueError("indices must be nonempty")
    if idx[0] < 0 or idx[-1] >= k:
        raise ValueError(f"indices out of range for k={k}")
    return tuple(idx)


def compound(stack, indices):
    """Pixelwise mean of the selected envelope frames."""
    idx = _check_indices(indices, stack.k)
    return stack.frames[list(idx)].mean(axis=0)


def log_compress(envelope, dynamic_range_db=80.0, ref_max=None):
    """Map envelope amplitudes to the [0, 1] B-mode scale.

    Values are expressed in dB relative to ``ref_max`` (the image maximum
    by default), clipped to [-dynamic_range_db, 0], then shifted into
    [0, 1]. Zero amplitudes land on the clip floor, 0.
    """
    env = np.asarray(envelope, dtype=np.float64)
    if env.max() <= 0:
        raise ValueError("log compression needs at least one positive pixel")
    if ref_max is None:
        ref_max = env.max()
    if ref_max <= 0:
        raise ValueError("ref_max must be positive")
    dr = float(dynamic_range_db)
    out = np.zeros_like(env)
    pos = env > 0
    db = 20.0 * np.log10(env[pos] / ref_max)
    out[pos] = np.clip(db, -dr, 0.0) / dr + 1.0
    return BModeImage(pixels=out, dynamic_range_db=dr)


def full_bmode(stack, dynamic_range_db=80.0):
    """Compound every frame and log-compress with the image's own maximum."""
    return log_compress(compound(stack, range(stack.k)), dynamic_range_db)


def make_pair(stack, dynamic_range_db=80.0):
    """Build the even/odd compounded pseudo-pair on a shared dB scale.

    Both subset images are normalized by the full-compound maximum so
    that intensity differences between them reflect noise rather than
    per-image rescaling.
    """
    idx1, idx2 = parity_partition(stack.k)
    ref = compound(stack, range(stack.k)).max()
    s1 = log_compress(compound(stack, idx1), dynamic_range_db, ref_max=ref)
    s2 = log_compress(compound(stack, idx2), dynamic_range_db, ref_max=ref)
    return SubsetPair(s1=s1, s2=s2, indices_1=idx1, indices_2=idx2)
