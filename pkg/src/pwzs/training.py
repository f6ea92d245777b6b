"""Per-image self-supervised training and residual-subtraction inference.

The denoiser is trained on the test acquisition alone. The even/odd
compounded images act as a noisy pseudo-pair: each side predicts its
own noise residual and the cleaned result is compared against the other
side, symmetrically. A gradient-domain consistency term anchors the
denoised full compound to a smoothed copy of itself so edges survive.
Inference subtracts the predicted residual from the full compound.
"""

from dataclasses import dataclass, field

import numpy as np

from .compounding import BModeImage, SubsetPair, full_bmode, make_pair
from .network import (
    ConvEngine,
    GradientAccumulator,
    NumericError,
    _TapParams,
    gaussian3x3,
    image_gradient,
    image_gradient_adjoint,
    init_params,
    sgd_step,
)


@dataclass
class TrainConfig:
    """Zero-shot optimization settings."""

    iterations: int = 1000
    learning_rate: float = 0.001
    alpha: float = 0.25
    seed: int = 0
    verify_gradients: bool = False

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")


@dataclass
class LossTrace:
    """Per-iteration loss record (residual, consistency, total)."""

    residual: np.ndarray = field(default_factory=lambda: np.zeros(0))
    consistency: np.ndarray = field(default_factory=lambda: np.zeros(0))
    total: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        if not (len(self.residual) == len(self.consistency) == len(self.total)):
            raise ValueError("trace arrays must share a length")
        for a in (self.residual, self.consistency, self.total):
            if not np.all(np.isfinite(a)):
                raise ValueError("trace values must be finite")

    def __len__(self):
        return len(self.total)

    def to_text(self):
        """One line per iteration: ``iter L_res L_cons L_total``."""
        lines = [
            f"{i} {r:.9g} {c:.9g} {t:.9g}"
            for i, (r, c, t) in enumerate(zip(self.residual, self.consistency, self.total))
        ]
        return "\n".join(lines) + "\n"


def _pixels(img, dtype):
    arr = img.pixels if isinstance(img, BModeImage) else np.asarray(img)
    return np.ascontiguousarray(arr, dtype=dtype)


class _Session:
    """Shared conv buffers and cached per-input columns for one image set."""

    def __init__(self, params, s1=None, s2=None, image=None):
        self.dtype = np.dtype(params.dtype).type
        ref = next(a for a in (s1, s2, image) if a is not None)
        shape = ref.shape
        for other in (s1, s2, image):
            if other is not None and other.shape != shape:
                raise ValueError("all images must share a shape")
        self.engine = ConvEngine(shape[0], shape[1], dtype=self.dtype)
        if s1 is not None:
            self.s1 = _pixels(s1, self.dtype)
            self.s2 = _pixels(s2, self.dtype)
            self.cols_s1 = self.engine.prepare(self.s1)
            self.cols_s2 = self.engine.prepare(self.s2)
        if image is not None:
            self.img = _pixels(image, self.dtype)
            self.cols_img = self.engine.prepare(self.img)
            # smoothed-gradient target; constant throughout training
            tx, ty = image_gradient(gaussian3x3(self.img))
            self.target_gx, self.target_gy = tx, ty

    def residual(self, taps, grads):
        """Symmetric residual loss and its parameter gradients."""
        la = self._residual_branch(taps, grads, self.cols_s1, self.s1, self.s2)
        lb = self._residual_branch(taps, grads, self.cols_s2, self.s2, self.s1)
        return 0.5 * (la + lb)

    def _residual_branch(self, taps, grads, cols, src, other):
        out = self.engine.forward(taps, cols)
        resid = src - out - other
        loss = float(np.abs(resid).mean())
        dout = np.sign(resid) * (-0.5 / resid.size)
        self.engine.backward(taps, cols, dout, grads)
        return loss

    def consistency(self, taps, grads, scale=1.0):
        """Gradient-anchoring loss; only the network branch carries gradient."""
        out = self.engine.forward(taps, self.cols_img)
        denoised = self.img - out
        gx, gy = image_gradient(denoised)
        ex = gx - self.target_gx
        ey = gy - self.target_gy
        count = 2 * ex.size
        loss = float((np.abs(ex).sum() + np.abs(ey).sum()) / count)
        if scale != 0.0:
            du = image_gradient_adjoint(np.sign(ex) / count, np.sign(ey) / count)
            self.engine.backward(taps, self.cols_img, -scale * du, grads)
        return loss

    def total_value(self, taps, alpha):
        """Loss value without gradients; used by finite-difference audits."""
        la = self._branch_value(taps, self.cols_s1, self.s1, self.s2)
        lb = self._branch_value(taps, self.cols_s2, self.s2, self.s1)
        out = self.engine.forward(taps, self.cols_img)
        gx, gy = image_gradient(self.img - out)
        count = 2 * gx.size
        l_cons = float(
            (np.abs(gx - self.target_gx).sum() + np.abs(gy - self.target_gy).sum()) / count
        )
        return 0.5 * (la + lb) + alpha * l_cons

    def _branch_value(self, taps, cols, src, other):
        out = self.engine.forward(taps, cols)
        return float(np.abs(src - out - other).mean())


def residual_loss(params, s1, s2):
    """Evaluate the symmetric residual loss; returns (value, gradients)."""
    sess = _Session(params, s1=s1, s2=s2)
    grads = GradientAccumulator(dtype=sess.dtype)
    value = sess.residual(_TapParams(params, sess.dtype), grads)
    return value, grads


def consistency_loss(params, image):
    """Evaluate the gradient-consistency loss; returns (value, gradients)."""
    sess = _Session(params, image=image)
    grads = GradientAccumulator(dtype=sess.dtype)
    value = sess.consistency(_TapParams(params, sess.dtype), grads)
    return value, grads


def total_loss(params, pair, image, alpha):
    """Combined objective: residual plus ``alpha`` times consistency."""
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    sess = _Session(params, s1=pair.s1, s2=pair.s2, image=image)
    grads = GradientAccumulator(dtype=sess.dtype)
    taps = _TapParams(params, sess.dtype)
    l_res = sess.residual(taps, grads)
    l_cons = sess.consistency(taps, grads, scale=alpha)
    return l_res + alpha * l_cons, grads


def train_zero_shot(stack, cfg=None):
    """Optimize the denoiser on one angle stack; returns (params, trace).

    The full compound and its parity pseudo-pair are built once, then
    ``cfg.iterations`` full-image SGD steps minimize the combined loss.
    Deterministic for a fixed config and seed.
    """
    cfg = cfg or TrainConfig()
    pair = make_pair(stack)
    image = full_bmode(stack)
    params = init_params(cfg.seed)
    if cfg.verify_gradients:
        _gradient_audit(params, pair, image, cfg.seed)
    sess = _Session(params, s1=pair.s1, s2=pair.s2, image=image)
    grads = GradientAccumulator(dtype=sess.dtype)
    res = np.zeros(cfg.iterations)
    cons = np.zeros(cfg.iterations)
    tot = np.zeros(cfg.iterations)
    for i in range(cfg.iterations):
        grads.zero()
        taps = _TapParams(params, sess.dtype)
        l_res = sess.residual(taps, grads)
        l_cons = sess.consistency(taps, grads, scale=cfg.alpha)
        l_total = l_res + cfg.alpha * l_cons
        if not np.isfinite(l_total):
            raise NumericError(f"non-finite loss at iteration {i}")
        res[i], cons[i], tot[i] = l_res, l_cons, l_total
        sgd_step(params, grads, cfg.learning_rate)
    return params, LossTrace(residual=res, consistency=cons, total=tot)


def denoise(params, image):
    """Subtract the predicted residual from ``image`` and re-clip to [0, 1]."""
    if isinstance(image, BModeImage):
        pixels, dr = image.pixels, image.dynamic_range_db
    else:
        pixels, dr = np.asarray(image, dtype=np.float64), 80.0
    sess = _Session(params, image=pixels)
    out = sess.engine.forward(_TapParams(params, sess.dtype), sess.cols_img)
    cleaned = np.clip(pixels - out.astype(np.float64), 0.0, 1.0)
    return BModeImage(pixels=cleaned, dynamic_range_db=dr)


def _gradient_audit(params, pair, image, seed, samples=64, rel_tol=1e-3, h=1e-5):
    """Spot-check analytic gradients against central differences.

    Runs in float64 on centered 8x8 crops of the training images and
    raises NumericError if any sampled parameter disagrees beyond
    ``rel_tol``. Coordinates whose perturbation straddles an L1 or
    LeakyReLU kink are inherently noisy, so the audit ignores
    coordinates where both values are tiny and uses a looser tolerance
    than the offline verification suite.
    """
    crop = _audit_crop(pair, image)
    p64 = params.astype(np.float64)
    alpha = 0.25
    sess = _Session(p64, s1=crop["pair"].s1, s2=crop["pair"].s2, image=crop["image"])
    grads = GradientAccumulator(dtype=sess.dtype)
    taps = _TapParams(p64, sess.dtype)
    sess.residual(taps, grads)
    sess.consistency(taps, grads, scale=alpha)
    rng = np.random.Generator(np.random.PCG64(seed))
    flat_grads = np.concatenate([g.ravel() for g in grads.arrays()])
    arrays = p64.arrays()
    sizes = np.array([a.size for a in arrays])
    bounds = np.concatenate([[0], np.cumsum(sizes)])
    for idx in rng.choice(flat_grads.size, size=min(samples, flat_grads.size), replace=False):
        layer = np.searchsorted(bounds, idx, side="right") - 1
        arr = arrays[layer].ravel()
        j = idx - bounds[layer]
        orig = arr[j]
        arr[j] = orig + h
        up = sess.total_value(_TapParams(p64, sess.dtype), alpha)
        arr[j] = orig - h
        dn = sess.total_value(_TapParams(p64, sess.dtype), alpha)
        arr[j] = orig
        fd = (up - dn) / (2 * h)
        an = flat_grads[idx]
        denom = max(abs(fd), abs(an))
        if denom > 1e-6 and abs(fd - an) / denom > rel_tol:
            raise NumericError(
                f"gradient check failed at parameter {idx}: analytic {an:.6e} vs fd {fd:.6e}"
            )


def _audit_crop(pair, image, size=8):
    h, w = image.shape
    if h < size or w < size:
        raise ValueError("images too small for a gradient audit")
    z0, x0 = (h - size) // 2, (w - size) // 2
    win = (slice(z0, z0 + size), slice(x0, x0 + size))
    crop_pair = SubsetPair(
        s1=BModeImage(pair.s1.pixels[win]),
        s2=BModeImage(pair.s2.pixels[win]),
        indices_1=pair.indices_1,
        indices_2=pair.indices_2,
    )
    return {"pair": crop_pair, "image": BModeImage(image.pixels[win])}
