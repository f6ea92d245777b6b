#!/usr/bin/env python3
"""Convert HDF5 plane-wave acquisitions into the pwzs stack format.

The input must hold already-beamformed per-angle frames (real envelope
or complex beamformed data; complex frames are reduced to their
magnitude) plus a matching list of steering angles. Dataset paths vary
between acquisition setups, so the manifest names them explicitly.

Manifest (flat ``key = value`` lines, ``#`` comments):

    input          = acquisition.hdf5
    frames_dataset = /dataset/beamformed
    angles_dataset = /dataset/angles
    output         = stack.pwzs
    crop           = z0,x0,height,width   # optional

Output stack layout (little-endian): magic "PWZS", version u16, k u16,
H u32, W u32, k float64 angles in degrees, then k*H*W float32 samples,
frame-major, row-major within a frame.
"""

import argparse
import struct
import sys

import h5py
import numpy as np

STACK_MAGIC = b"PWZS"
STACK_VERSION = 1
_HEADER = struct.Struct("<4sHHII")

MANIFEST_KEYS = ("input", "frames_dataset", "angles_dataset", "output", "crop")


class ConversionError(ValueError):
    pass


def parse_manifest(path):
    values = {}
    with open(path, "r", encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConversionError(f"line {lineno}: expected 'key = value', got {line!r}")
            key, _, value = (s.strip() for s in line.partition("="))
            if key not in MANIFEST_KEYS:
                raise ConversionError(f"line {lineno}: unknown key {key!r}")
            values[key] = value
    missing = [k for k in ("input", "frames_dataset", "angles_dataset", "output") if k not in values]
    if missing:
        raise ConversionError(f"manifest is missing keys: {', '.join(missing)}")
    if "crop" in values:
        parts = [int(v) for v in values["crop"].split(",")]
        if len(parts) != 4:
            raise ConversionError("crop needs 4 values: z0,x0,height,width")
        values["crop"] = tuple(parts)
    return values


def load_frames(h5_path, frames_dataset, angles_dataset):
    with h5py.File(h5_path, "r") as f:
        for name in (frames_dataset, angles_dataset):
            if name not in f:
                raise ConversionError(f"dataset not found in {h5_path}: {name}")
        frames = np.asarray(f[frames_dataset])
        angles = np.asarray(f[angles_dataset], dtype=np.float64).ravel()
    if frames.ndim != 3:
        raise ConversionError(f"{frames_dataset}: expected [k, H, W] frames, got shape {frames.shape}")
    if np.iscomplexobj(frames):
        frames = np.abs(frames)
    frames = frames.astype(np.float64)
    if frames.shape[0] != angles.size:
        raise ConversionError(
            f"angle count {angles.size} does not match frame count {frames.shape[0]}"
        )
    return frames, angles


def write_stack(path, frames, angles):
    k, h, w = frames.shape
    if k < 2:
        raise ConversionError("k must be >= 2")
    if np.any(np.diff(angles) <= 0):
        raise ConversionError("angles must be strictly increasing")
    if not np.all(np.isfinite(frames)) or frames.min() < 0:
        raise ConversionError("frames must be finite and non-negative")
    with open(path, "wb") as f:
        f.write(_HEADER.pack(STACK_MAGIC, STACK_VERSION, k, h, w))
        f.write(angles.astype("<f8").tobytes())
        f.write(np.ascontiguousarray(frames, dtype="<f4").tobytes())


def convert(manifest):
    frames, angles = load_frames(
        manifest["input"], manifest["frames_dataset"], manifest["angles_dataset"]
    )
    if "crop" in manifest:
        z0, x0, ch, cw = manifest["crop"]
        if z0 < 0 or x0 < 0 or z0 + ch > frames.shape[1] or x0 + cw > frames.shape[2]:
            raise ConversionError(f"crop {manifest['crop']} exceeds frame shape {frames.shape[1:]}")
        frames = frames[:, z0 : z0 + ch, x0 : x0 + cw]
    write_stack(manifest["output"], frames, angles)
    k, h, w = frames.shape
    print(f"wrote {manifest['output']}: k={k}, {h}x{w}, angles {angles[0]:g}..{angles[-1]:g} deg")


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    parser.add_argument("--manifest", required=True, help="conversion manifest file")
    args = parser.parse_args(argv)
    try:
        convert(parse_manifest(args.manifest))
    except (ConversionError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
