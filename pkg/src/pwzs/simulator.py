"""Synthetic plane-wave scenes with a known clean reference.

Real acoustic simulation is out of scope; this module builds a
statistically faithful stand-in. The scene is fully developed speckle
(circular complex Gaussian scattering, Rayleigh envelope) with
anechoic circular cysts. Each steered frame shares that scene exactly
but carries its own angle-keyed multiplicative streak pattern plus
independent additive noise, so compounding more angles genuinely
averages the corruption away while the anatomy stays coherent. That is
the property the zero-shot denoiser exploits, and it is what makes the
scene usable as ground truth in end-to-end tests.
"""

from dataclasses import dataclass

import numpy as np

from .compounding import AngleStack, full_bmode, log_compress, select_angles


@dataclass(frozen=True)
class PhantomSpec:
    """Speckle scene geometry: image size plus circular cyst inclusions.

    Each cyst is (center_z, center_x, radius, echogenicity_scale); a
    scale of 0 is anechoic, values below 1 are hypoechoic.
    """

    height: int = 300
    width: int = 384
    cysts: tuple = ((150, 192, 45, 0.0),)
    background_echogenicity: float = 1.0
    seed: int = 1234

    def __post_init__(self):
        object.__setattr__(self, "cysts", tuple(tuple(map(float, c)) for c in self.cysts))
        if self.height < 8 or self.width < 8:
            raise ValueError("phantom must be at least 8x8")
        if self.background_echogenicity <= 0:
            raise ValueError("background_echogenicity must be positive")
        for cz, cx, r, scale in self.cysts:
            if not 0.0 <= scale < 1.0:
                raise ValueError("echogenicity_scale must lie in [0, 1)")
            if cz - r < 0 or cx - r < 0 or cz + r > self.height - 1 or cx + r > self.width - 1:
                raise ValueError(f"cyst ({cz}, {cx}, {r}) exceeds the phantom bounds")


@dataclass(frozen=True)
class NoiseModel:
    """Per-frame corruption: angle-keyed streaks plus white noise.

    The streak pattern is a low-frequency sinusoid whose wavevector is
    orthogonal to the steering direction (so the streaks run along the
    insonification), applied multiplicatively; the additive term is
    zero-clipped white Gaussian noise in the envelope domain.
    """

    white_noise_sigma: float = 1.0
    artifact_amplitude: float = 1.0
    artifact_kind: str = "streak"
    streak_wavelengths_px: tuple = (4.0, 10.0)

    def __post_init__(self):
        if self.white_noise_sigma < 0 or self.artifact_amplitude < 0:
            raise ValueError("noise amplitudes must be non-negative")
        if self.artifact_amplitude > 1:
            raise ValueError("artifact_amplitude above 1 would break envelope positivity")
        if self.artifact_kind != "streak":
            raise ValueError(f"unknown artifact kind: {self.artifact_kind!r}")
        lo, hi = self.streak_wavelengths_px
        if lo < 2 or hi < lo:
            raise ValueError("streak wavelengths must satisfy 2 <= lo <= hi")


def make_phantom(spec):
    """Clean envelope scene: |z| with z circular complex Gaussian.

    The per-pixel scattering variance equals the local echogenicity, so
    fully developed regions have Rayleigh envelope statistics
    (mean/std ratio about 1.91) and an anechoic cyst is genuinely dark.
    """
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    echo = np.full((spec.height, spec.width), spec.background_echogenicity)
    zz, xx = np.ogrid[: spec.height, : spec.width]
    for cz, cx, r, scale in spec.cysts:
        inside = (zz - cz) ** 2 + (xx - cx) ** 2 <= r * r
        echo[inside] = spec.background_echogenicity * scale
    sigma = np.sqrt(echo / 2.0)
    re = rng.standard_normal(echo.shape) * sigma
    im = rng.standard_normal(echo.shape) * sigma
    return np.hypot(re, im)


def simulate_stack(clean, angles_deg, noise, seed):
    """Build an AngleStack whose frames share ``clean`` exactly.

    frame_i = clean * (1 + streak_i) + w_i, with streak_i a zero-mean
    sinusoid keyed to angle i (random phase and wavelength, wavevector
    orthogonal to the steering direction) and w_i independent
    non-negative-clipped Gaussian noise. Deterministic under ``seed``.
    """
    clean = np.asarray(clean, dtype=np.float64)
    h, w = clean.shape
    angles = [float(a) for a in angles_deg]
    rng = np.random.Generator(np.random.PCG64(seed))
    zz, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    frames = np.empty((len(angles), h, w))
    lo, hi = noise.streak_wavelengths_px
    for i, theta_deg in enumerate(angles):
        theta = np.deg2rad(theta_deg)
        # wavelengths short enough that a small-receptive-field denoiser
        # can identify the pattern locally, as grating-lobe clutter is
        wavelength = rng.uniform(lo, hi)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        kz, kx = -np.sin(theta), np.cos(theta)
        streak = noise.artifact_amplitude * np.sin(
            2.0 * np.pi * (kz * zz + kx * xx) / wavelength + phase
        )
        white = np.clip(rng.normal(0.0, noise.white_noise_sigma, size=(h, w)), 0.0, None)
        frames[i] = clean * (1.0 + streak) + white
    return AngleStack(frames=frames, angles_deg=tuple(angles), source_id=f"simulated(seed={seed})")


def reference_images(clean, noise, seed, n_angles=75, span_deg=16.0, k=5):
    """Low-angle, full-angle, and ground-truth B-mode images of one scene.

    A ``n_angles``-frame stack is simulated once; the low-angle image
    compounds the k frames picked by uniform angle selection, the
    full-angle image compounds everything, and the truth image is the
    log-compressed clean scene. Returns (low, full, truth).
    """
    angles = np.linspace(-span_deg, span_deg, n_angles)
    stack = simulate_stack(clean, angles, noise, seed)
    idx = select_angles(list(angles), k)
    low = full_bmode(stack.subset(idx))
    full = full_bmode(stack)
    truth = log_compress(clean)
    return low, full, truth
