import pathlib
import subprocess
import sys

import h5py
import numpy as np
import pytest

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1]))
import convert  # noqa: E402

from pwzs.formats import read_stack  # the primary tool's loader


def make_h5(path, frames, angles, frames_name="/data/frames", angles_name="/data/angles"):
    with h5py.File(path, "w") as f:
        f.create_dataset(frames_name, data=frames)
        f.create_dataset(angles_name, data=angles)


def write_manifest(path, **kv):
    path.write_text("".join(f"{k} = {v}\n" for k, v in kv.items()))
    return path


@pytest.fixture
def known_values(tmp_path):
    rng = np.random.default_rng(0)
    real = rng.random((2, 4, 4)) * 3.0
    complex_frame = rng.random((4, 4)) + 1j * rng.random((4, 4))
    frames = np.stack([real[0] + 0j, real[1] + 0j, complex_frame])
    angles = np.array([-8.0, 0.0, 8.0])
    h5 = tmp_path / "acq.hdf5"
    make_h5(h5, frames, angles)
    manifest = write_manifest(
        tmp_path / "m.cfg",
        input=h5,
        frames_dataset="/data/frames",
        angles_dataset="/data/angles",
        output=tmp_path / "stack.pwzs",
    )
    return manifest, frames, angles, tmp_path / "stack.pwzs"


def test_roundtrip_known_values(known_values):
    manifest, frames, angles, out = known_values
    assert convert.main(["--manifest", str(manifest)]) == 0
    stack = read_stack(out)
    assert stack.k == 3
    assert stack.angles_deg == tuple(angles)
    expected = np.abs(frames)
    assert np.allclose(stack.frames, expected, rtol=1e-6, atol=0)


def test_complex_frame_becomes_magnitude(tmp_path):
    frames = np.array([[[3.0 + 4.0j]], [[0.0 + 1.0j]]])
    make_h5(tmp_path / "c.hdf5", frames, np.array([-1.0, 1.0]))
    manifest = write_manifest(
        tmp_path / "m.cfg",
        input=tmp_path / "c.hdf5",
        frames_dataset="/data/frames",
        angles_dataset="/data/angles",
        output=tmp_path / "c.pwzs",
    )
    assert convert.main(["--manifest", str(manifest)]) == 0
    stack = read_stack(tmp_path / "c.pwzs")
    assert stack.frames[0, 0, 0] == pytest.approx(5.0, rel=1e-6)
    assert stack.frames[1, 0, 0] == pytest.approx(1.0, rel=1e-6)


def test_angle_frame_count_mismatch_rejected(tmp_path):
    make_h5(tmp_path / "bad.hdf5", np.ones((4, 3, 3)), np.array([-8.0, 0.0, 4.0, 8.0, 12.0]))
    manifest = write_manifest(
        tmp_path / "m.cfg",
        input=tmp_path / "bad.hdf5",
        frames_dataset="/data/frames",
        angles_dataset="/data/angles",
        output=tmp_path / "bad.pwzs",
    )
    assert convert.main(["--manifest", str(manifest)]) == 2


def test_missing_dataset_names_the_path(tmp_path, capsys):
    make_h5(tmp_path / "x.hdf5", np.ones((2, 3, 3)), np.array([-1.0, 1.0]))
    manifest = write_manifest(
        tmp_path / "m.cfg",
        input=tmp_path / "x.hdf5",
        frames_dataset="/data/missing",
        angles_dataset="/data/angles",
        output=tmp_path / "x.pwzs",
    )
    assert convert.main(["--manifest", str(manifest)]) == 2
    assert "/data/missing" in capsys.readouterr().err


def test_crop_applies(tmp_path):
    frames = np.arange(2 * 4 * 6, dtype=float).reshape(2, 4, 6)
    make_h5(tmp_path / "crop.hdf5", frames, np.array([-1.0, 1.0]))
    manifest = write_manifest(
        tmp_path / "m.cfg",
        input=tmp_path / "crop.hdf5",
        frames_dataset="/data/frames",
        angles_dataset="/data/angles",
        output=tmp_path / "crop.pwzs",
        crop="1,2,2,3",
    )
    assert convert.main(["--manifest", str(manifest)]) == 0
    stack = read_stack(tmp_path / "crop.pwzs")
    assert stack.frames.shape == (2, 2, 3)
    assert np.allclose(stack.frames[0], frames[0, 1:3, 2:5], rtol=1e-6)


def test_cli_invocation(known_values):
    manifest, _, _, out = known_values
    script = pathlib.Path(__file__).resolve().parents[1] / "convert.py"
    r = subprocess.run(
        [sys.executable, str(script), "--manifest", str(manifest)],
        capture_output=True,
        text=True,
    )
    assert r.returncode == 0, r.stderr
    assert "k=3" in r.stdout
    assert out.exists()


def test_unknown_manifest_key_rejected(tmp_path):
    manifest = tmp_path / "m.cfg"
    manifest.write_text("input = x\nwhatever = y\n")
    assert convert.main(["--manifest", str(manifest)]) == 2
