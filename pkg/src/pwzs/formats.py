"""Binary file formats: angle stacks, PGM previews, rasters, checkpoints.

Stack file layout (all little-endian):
    magic   4 bytes  b"PWZS"
    version u16      currently 1
    k       u16      number of frames (>= 2)
    H, W    u32, u32 frame size
    angles  k * f64  steering angles in degrees
    payload k*H*W * f32, frame-major, row-major within a frame

Checkpoint layout: 16-byte header (magic b"PWZSNET\\0", u16 version,
u16 reserved, u32 scalar count) followed by the parameters as f32 in
layer order: layer1 weights, layer1 bias, layer2 weights, layer2 bias,
layer3 weights, layer3 bias. The LeakyReLU slope is an architecture
constant and is not stored.
"""

import struct

import numpy as np

from .compounding import AngleStack, BModeImage
from .network import LAYER_SHAPES, DenoiserParams, param_count

STACK_MAGIC = b"PWZS"
STACK_VERSION = 1
_STACK_HEADER = struct.Struct("<4sHHII")

PARAMS_MAGIC = b"PWZSNET\x00"
PARAMS_VERSION = 1
_PARAMS_HEADER = struct.Struct("<8sHHI")


class DataFormatError(ValueError):
    """Raised for corrupt or mismatched binary files."""


def write_stack(path, stack):
    """Serialize an AngleStack; payload is cast to float32."""
    k = stack.k
    h, w = stack.shape
    with open(path, "wb") as f:
        f.write(_STACK_HEADER.pack(STACK_MAGIC, STACK_VERSION, k, h, w))
        f.write(np.asarray(stack.angles_deg, dtype="<f8").tobytes())
        f.write(np.ascontiguousarray(stack.frames, dtype="<f4").tobytes())


def read_stack(path):
    """Load an AngleStack written by :func:`write_stack`."""
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < _STACK_HEADER.size:
        raise DataFormatError(f"{path}: truncated header")
    magic, version, k, h, w = _STACK_HEADER.unpack_from(raw)
    if magic != STACK_MAGIC:
        raise DataFormatError(f"{path}: bad magic {magic!r}")
    if version != STACK_VERSION:
        raise DataFormatError(f"{path}: unsupported version {version}")
    if k < 2:
        raise DataFormatError(f"{path}: k must be >= 2, got {k}")
    offset = _STACK_HEADER.size
    need = offset + 8 * k + 4 * k * h * w
    if len(raw) != need:
        raise DataFormatError(f"{path}: expected {need} bytes, found {len(raw)}")
    angles = np.frombuffer(raw, dtype="<f8", count=k, offset=offset)
    frames = np.frombuffer(raw, dtype="<f4", count=k * h * w, offset=offset + 8 * k)
    return AngleStack(
        frames=frames.reshape(k, h, w).astype(np.float32),
        angles_deg=tuple(angles),
        source_id=str(path),
    )


def write_pgm(path, image):
    """8-bit binary PGM (P5); pixel = round(255 * value), half rounds up."""
    pixels = image.pixels if isinstance(image, BModeImage) else np.asarray(image)
    data = np.floor(255.0 * pixels + 0.5).clip(0, 255).astype(np.uint8)
    h, w = data.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(data.tobytes())


def read_pgm(path):
    """Load a binary PGM back onto the [0, 1] scale."""
    with open(path, "rb") as f:
        raw = f.read()
    fields = raw.split(maxsplit=4)
    if len(fields) < 5 or fields[0] != b"P5":
        raise DataFormatError(f"{path}: not a binary PGM")
    w, h, maxval = int(fields[1]), int(fields[2]), int(fields[3])
    if maxval != 255:
        raise DataFormatError(f"{path}: unsupported maxval {maxval}")
    data = np.frombuffer(fields[4][: h * w], dtype=np.uint8)
    if data.size != h * w:
        raise DataFormatError(f"{path}: truncated pixel data")
    return data.reshape(h, w).astype(np.float64) / 255.0


def write_f32(path, array):
    """Raw row-major little-endian float32 raster (no header)."""
    np.ascontiguousarray(array, dtype="<f4").tofile(path)


def read_f32(path, height, width):
    data = np.fromfile(path, dtype="<f4")
    if data.size != height * width:
        raise DataFormatError(f"{path}: expected {height * width} floats, found {data.size}")
    return data.reshape(height, width).astype(np.float64)


def save_params(path, params):
    """Write a parameter checkpoint (float32 payload)."""
    with open(path, "wb") as f:
        f.write(_PARAMS_HEADER.pack(PARAMS_MAGIC, PARAMS_VERSION, 0, param_count()))
        for arr in params.arrays():
            f.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_params(path):
    """Load a checkpoint written by :func:`save_params`."""
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < _PARAMS_HEADER.size:
        raise DataFormatError(f"{path}: truncated header")
    magic, version, _, count = _PARAMS_HEADER.unpack_from(raw)
    if magic != PARAMS_MAGIC:
        raise DataFormatError(f"{path}: bad magic {magic!r}")
    if version != PARAMS_VERSION:
        raise DataFormatError(f"{path}: unsupported version {version}")
    if count != param_count() or len(raw) != _PARAMS_HEADER.size + 4 * count:
        raise DataFormatError(f"{path}: parameter count mismatch")
    flat = np.frombuffer(raw, dtype="<f4", offset=_PARAMS_HEADER.size).astype(np.float32)
    arrays = []
    pos = 0
    for _, shape in LAYER_SHAPES:
        n = int(np.prod(shape))
        arrays.append(flat[pos : pos + n].reshape(shape).copy())
        pos += n
    return DenoiserParams(*arrays)
