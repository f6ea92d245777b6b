"""Differentiable compute core for the residual denoiser.

The network is three convolutions: 3x3 (1 -> 48 channels), 3x3
(48 -> 48), and a final 1x1 (48 -> 1), with LeakyReLU(0.2) after each
3x3 layer and reflect padding so output size equals input size. All
forward passes and exact reverse-mode gradients are implemented here
directly on top of BLAS matrix products; there is no general autodiff
graph.

Implementation notes. Images are stored channel-last as flat
``[lane, channel]`` matrices over a 1-pixel-padded grid, where the pad
lanes duplicate the values of their reflected source pixels. A 3x3
convolution then becomes nine GEMMs on shifted contiguous views of the
same buffer, which is the fastest exact formulation available to a
single CPU core. Training and inference run in float32; every routine
also accepts float64 parameters, which is the mode used by the
gradient and adjoint verification suite.
"""

from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.linalg import blas as _blas

CHANNELS = 48
LEAKY_SLOPE = 0.2

# (out_ch, in_ch, kh, kw) per layer, biases per out channel
LAYER_SHAPES = (
    ("layer1.weights", (CHANNELS, 1, 3, 3)),
    ("layer1.bias", (CHANNELS,)),
    ("layer2.weights", (CHANNELS, CHANNELS, 3, 3)),
    ("layer2.bias", (CHANNELS,)),
    ("layer3.weights", (1, CHANNELS, 1, 1)),
    ("layer3.bias", (1,)),
)


class NumericError(ArithmeticError):
    """Raised when a computation produced non-finite values."""


@dataclass
class DenoiserParams:
    """Weights and biases of the three-layer residual network."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    w3: np.ndarray
    b3: np.ndarray
    leaky_slope: float = LEAKY_SLOPE

    def __post_init__(self):
        for (name, shape), arr in zip(LAYER_SHAPES, self.arrays()):
            if arr.shape != shape:
                raise ValueError(f"{name}: expected shape {shape}, got {arr.shape}")

    def arrays(self):
        return (self.w1, self.b1, self.w2, self.b2, self.w3, self.b3)

    def named_arrays(self):
        return tuple(zip((n for n, _ in LAYER_SHAPES), self.arrays()))

    @property
    def dtype(self):
        return self.w1.dtype

    def astype(self, dtype):
        w1, b1, w2, b2, w3, b3 = (a.astype(dtype) for a in self.arrays())
        return DenoiserParams(w1, b1, w2, b2, w3, b3, self.leaky_slope)

    def copy(self):
        return self.astype(self.dtype)


class GradientAccumulator:
    """Additive parameter-gradient buffers, one per layer array."""

    def __init__(self, dtype=np.float32):
        self.w1, self.b1, self.w2, self.b2, self.w3, self.b3 = (
            np.zeros(shape, dtype=dtype) for _, shape in LAYER_SHAPES
        )

    def arrays(self):
        return (self.w1, self.b1, self.w2, self.b2, self.w3, self.b3)

    def named_arrays(self):
        return tuple(zip((n for n, _ in LAYER_SHAPES), self.arrays()))

    def zero(self):
        for a in self.arrays():
            a[...] = 0


def param_count(params=None):
    """Total number of scalar parameters (21,313 for this architecture)."""
    return sum(int(np.prod(shape)) for _, shape in LAYER_SHAPES)


def init_params(seed):
    """Deterministic initial weights.

    Weights are drawn uniformly from +-sqrt(1/fan_in) per layer using a
    PCG64 generator seeded with ``seed`` (draw order: layer1, layer2,
    layer3 weights); biases start at zero. The same seed reproduces the
    parameters bit for bit.
    """
    rng = np.random.Generator(np.random.PCG64(seed))

    def draw(shape, fan_in):
        lim = np.sqrt(1.0 / fan_in)
        return rng.uniform(-lim, lim, size=shape).astype(np.float32)

    w1 = draw(LAYER_SHAPES[0][1], 1 * 9)
    w2 = draw(LAYER_SHAPES[2][1], CHANNELS * 9)
    w3 = draw(LAYER_SHAPES[4][1], CHANNELS)
    zeros = lambda i: np.zeros(LAYER_SHAPES[i][1], dtype=np.float32)
    return DenoiserParams(w1, zeros(1), w2, zeros(3), w3, zeros(5))


# ---------------------------------------------------------------------------
# elementwise kernels (fused to one memory pass each)


@njit(cache=True)
def _bias_lrelu(a, bias, slope):
    m, n = a.shape
    for i in range(m):
        for c in range(n):
            v = a[i, c] + bias[c]
            a[i, c] = v if v >= 0.0 else slope * v


@njit(cache=True)
def _lrelu_backward(d, act, slope):
    # act holds post-activation values; slope > 0 keeps their sign
    m, n = d.shape
    for i in range(m):
        for c in range(n):
            if act[i, c] < 0.0:
                d[i, c] *= slope


@njit(cache=True)
def _conv1x1_backward(dout, w_row, act, slope, out):
    m, n = out.shape
    for i in range(m):
        dv = dout[i]
        for c in range(n):
            g = dv * w_row[c]
            if act[i, c] < 0.0:
                g *= slope
            out[i, c] = g


def _gemm_acc(out, x, w, beta):
    """out [M,N] = x [M,K] @ w [K,N] + beta * out, all C-contiguous.

    BLAS works on the transposed (Fortran-order) views so the product
    accumulates in place without temporaries.
    """
    f = _blas.sgemm if out.dtype == np.float32 else _blas.dgemm
    f(1.0, w.T, x.T, beta=beta, c=out.T, overwrite_c=1)


class _TapParams:
    """GEMM-layout copies of the parameters for one pass."""

    def __init__(self, params, dtype):
        w1, b1, w2, b2, w3, b3 = (np.asarray(a, dtype=dtype) for a in params.arrays())
        self.w1m = np.ascontiguousarray(w1.reshape(CHANNELS, 9).T)
        self.b1 = np.ascontiguousarray(b1)
        # per-tap [in, out] matrices and their transposes
        self.w2t = np.ascontiguousarray(w2.transpose(2, 3, 1, 0).reshape(9, CHANNELS, CHANNELS))
        self.w2tT = np.ascontiguousarray(w2.transpose(2, 3, 0, 1).reshape(9, CHANNELS, CHANNELS))
        self.b2 = np.ascontiguousarray(b2)
        self.w3col = np.ascontiguousarray(w3.reshape(CHANNELS, 1))
        self.w3row = np.ascontiguousarray(w3.reshape(CHANNELS))
        self.b3 = dtype(b3[0]) if not np.isscalar(b3) else dtype(b3)
        self.slope = dtype(params.leaky_slope)


def _reflect_indices(padded_len, size):
    idx = np.arange(padded_len) - 1
    idx[idx < 0] = -idx[idx < 0]
    over = idx >= size
    idx[over] = 2 * size - 2 - idx[over]
    return idx


class ConvEngine:
    """Reusable buffers for forward/backward passes at one image size."""

    def __init__(self, height, width, dtype=np.float32):
        if height < 3 or width < 3:
            raise ValueError("image must be at least 3x3")
        self.H, self.W = int(height), int(width)
        self.dtype = np.dtype(dtype).type
        self.Hp, self.Wp = self.H + 2, self.W + 2
        self.T = self.Hp * self.Wp
        self.L = self.T - 2 * self.Wp - 2
        self.win = slice(self.Wp + 1, self.Wp + 1 + self.L)
        self.offsets = tuple(dy * self.Wp + dx for dy in range(3) for dx in range(3))
        z = lambda shape: np.zeros(shape, dtype=self.dtype)
        self.a1 = z((self.T, CHANNELS))
        self.o2 = z((self.T, CHANNELS))
        self.do2 = z((self.T, CHANNELS))
        self.da1 = z((self.T, CHANNELS))
        self.dr = z(self.T)
        self.rcol = z((self.T, 1))
        # scratch for tap-layout weight gradients
        self._dw1m = z((9, CHANNELS))
        self._dw2t = z((9, CHANNELS, CHANNELS))

    def prepare(self, image):
        """Cache the reflect-padded 3x3 column matrix of one input image.

        Pad lanes duplicate the columns of their reflected source pixels,
        so layer-1 output computed on the padded grid is exactly the
        reflect padding of the layer-1 output on the real grid.
        """
        x = np.ascontiguousarray(image, dtype=self.dtype)
        if x.shape != (self.H, self.W):
            raise ValueError(f"expected image of shape {(self.H, self.W)}, got {x.shape}")
        if not np.all(np.isfinite(x)):
            raise ValueError("image must be finite")
        xp = np.pad(x, 1, mode="reflect")
        cols_img = np.empty((self.H, self.W, 9), dtype=self.dtype)
        for t, (dy, dx) in enumerate((dy, dx) for dy in range(3) for dx in range(3)):
            cols_img[:, :, t] = xp[dy : dy + self.H, dx : dx + self.W]
        src_i = _reflect_indices(self.Hp, self.H)
        src_j = _reflect_indices(self.Wp, self.W)
        cols = cols_img[src_i[:, None], src_j[None, :]].reshape(self.T, 9)
        return np.ascontiguousarray(cols)

    def forward(self, taps, cols):
        """Run the network; retains activations for an immediate backward."""
        np.matmul(cols, taps.w1m, out=self.a1)
        _bias_lrelu(self.a1, taps.b1, taps.slope)
        o2w = self.o2[self.win]
        for t, off in enumerate(self.offsets):
            _gemm_acc(o2w, self.a1[off : off + self.L], taps.w2t[t], beta=0.0 if t == 0 else 1.0)
        _bias_lrelu(o2w, taps.b2, taps.slope)
        np.matmul(self.o2, taps.w3col, out=self.rcol)
        out = self.rcol.reshape(self.Hp, self.Wp)[1 : self.H + 1, 1 : self.W + 1] + taps.b3
        return out

    def backward(self, taps, cols, dout, grads):
        """Accumulate d(loss)/d(params) given d(loss)/d(output).

        Must be called directly after ``forward`` with the same column
        cache; activations are reused from that pass.
        """
        H, W, Wp, L, win = self.H, self.W, self.Wp, self.L, self.win
        self.dr[:] = 0
        self.dr.reshape(self.Hp, Wp)[1 : H + 1, 1 : W + 1] = dout
        db3 = self.dr.sum()
        dw3row = np.matmul(self.dr, self.o2)
        _conv1x1_backward(self.dr, taps.w3row, self.o2, taps.slope, self.do2)
        do2w = self.do2[win]
        db2 = do2w.sum(axis=0)
        self.da1[self.L :] = 0
        for t, off in enumerate(self.offsets):
            a1v = self.a1[off : off + L]
            np.matmul(a1v.T, do2w, out=self._dw2t[t])
            _gemm_acc(self.da1[off : off + L], do2w, taps.w2tT[t], beta=0.0 if t == 0 else 1.0)
        _lrelu_backward(self.da1, self.a1, taps.slope)
        np.matmul(cols.T, self.da1, out=self._dw1m)
        db1 = self.da1.sum(axis=0)
        grads.w1 += self._dw1m.T.reshape(grads.w1.shape)
        grads.b1 += db1
        grads.w2 += self._dw2t.transpose(2, 1, 0).reshape(grads.w2.shape)
        grads.b2 += db2
        grads.w3 += dw3row.reshape(grads.w3.shape)
        grads.b3 += db3


def forward(params, x):
    """Network output for a single image; shape is preserved.

    Computation runs in the parameter dtype (float32 after
    ``init_params``, float64 for verification-mode parameters).
    """
    x = np.asarray(x)
    engine = ConvEngine(x.shape[0], x.shape[1], dtype=params.dtype)
    taps = _TapParams(params, engine.dtype)
    return engine.forward(taps, engine.prepare(x))


def forward_backward(params, x, dout):
    """One transient forward/backward pass.

    Returns the network output and a GradientAccumulator holding
    d(sum(dout * output))/d(params).
    """
    x = np.asarray(x)
    engine = ConvEngine(x.shape[0], x.shape[1], dtype=params.dtype)
    taps = _TapParams(params, engine.dtype)
    cols = engine.prepare(x)
    out = engine.forward(taps, cols)
    grads = GradientAccumulator(dtype=engine.dtype)
    engine.backward(taps, cols, np.asarray(dout, dtype=engine.dtype), grads)
    return out, grads


# ---------------------------------------------------------------------------
# fixed linear image operators and the L1 reduction


def leaky_relu(x, slope=LEAKY_SLOPE):
    x = np.asarray(x)
    return np.where(x >= 0, x, slope * x)


def leaky_relu_grad(x, slope=LEAKY_SLOPE):
    # subgradient choice: derivative 1 at exactly 0
    x = np.asarray(x)
    return np.where(x >= 0, 1.0, slope)


_GAUSS_W = np.array([[1.0, 2.0, 1.0], [2.0, 4.0, 2.0], [1.0, 2.0, 1.0]]) / 16.0


def gaussian3x3(x):
    """Smooth with the fixed 3x3 binomial kernel, reflect padding."""
    x = np.asarray(x)
    h, w = x.shape
    if h < 2 or w < 2:
        raise ValueError("image must be at least 2x2")
    xp = np.pad(x, 1, mode="reflect")
    out = np.zeros_like(x)
    for dy in range(3):
        for dx in range(3):
            out += _GAUSS_W[dy, dx] * xp[dy : dy + h, dx : dx + w]
    return out


def gaussian3x3_adjoint(u):
    """Transpose of :func:`gaussian3x3` as a linear operator."""
    u = np.asarray(u)
    h, w = u.shape
    full = np.zeros((h + 2, w + 2), dtype=u.dtype)
    for dy in range(3):
        for dx in range(3):
            full[dy : dy + h, dx : dx + w] += _GAUSS_W[dy, dx] * u
    v = full[1 : h + 1, 1 : w + 1].copy()
    # fold pad contributions back onto their reflect sources
    v[1, :] += full[0, 1 : w + 1]
    v[h - 2, :] += full[h + 1, 1 : w + 1]
    v[:, 1] += full[1 : h + 1, 0]
    v[:, w - 2] += full[1 : h + 1, w + 1]
    v[1, 1] += full[0, 0]
    v[1, w - 2] += full[0, w + 1]
    v[h - 2, 1] += full[h + 1, 0]
    v[h - 2, w - 2] += full[h + 1, w + 1]
    return v


def image_gradient(x):
    """Forward-difference gradients (gx, gy); last column/row are zero."""
    x = np.asarray(x)
    if x.shape[0] < 2 or x.shape[1] < 2:
        raise ValueError("image must be at least 2x2")
    gx = np.zeros_like(x)
    gy = np.zeros_like(x)
    gx[:, :-1] = x[:, 1:] - x[:, :-1]
    gy[:-1, :] = x[1:, :] - x[:-1, :]
    return gx, gy


def image_gradient_adjoint(gx, gy):
    """Transpose of :func:`image_gradient`; maps (gx, gy) back to image space."""
    v = np.zeros_like(gx)
    v[:, :-1] -= gx[:, :-1]
    v[:, 1:] += gx[:, :-1]
    v[:-1, :] -= gy[:-1, :]
    v[1:, :] += gy[:-1, :]
    return v


def l1_mean(a, b):
    """Mean absolute difference of two same-shaped arrays."""
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.abs(a - b).mean())


def l1_mean_grad(a, b):
    """Gradient of :func:`l1_mean` with respect to ``a`` (sign(0) = 0)."""
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return np.sign(a - b) / a.size


def sgd_step(params, grads, lr):
    """Plain gradient step theta <- theta - lr * g, updating in place."""
    if lr < 0:
        raise ValueError("learning rate must be non-negative")
    for (name, p), g in zip(params.named_arrays(), grads.arrays()):
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient in {name}")
        p -= lr * g
    return params
