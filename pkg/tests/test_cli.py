import subprocess
import sys

import numpy as np
import pytest

from pwzs import formats as fm
from pwzs.compounding import AngleStack, BModeImage
from pwzs.config import ConfigError, parse_config


# --- stack format -------------------------------------------------------------


def test_stack_roundtrip_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    stack = AngleStack(
        frames=rng.random((3, 5, 7)).astype(np.float32),
        angles_deg=(-4.0, 0.0, 4.0),
    )
    path = tmp_path / "s.pwzs"
    fm.write_stack(path, stack)
    loaded = fm.read_stack(path)
    assert np.array_equal(loaded.frames, stack.frames)
    assert loaded.angles_deg == stack.angles_deg
    fm.write_stack(tmp_path / "s2.pwzs", loaded)
    assert (tmp_path / "s.pwzs").read_bytes() == (tmp_path / "s2.pwzs").read_bytes()


def test_stack_rejects_corruption(tmp_path):
    stack = AngleStack(frames=np.ones((2, 2, 2), np.float32), angles_deg=(-1.0, 1.0))
    path = tmp_path / "s.pwzs"
    fm.write_stack(path, stack)
    raw = bytearray(path.read_bytes())
    raw[0] ^= 0xFF
    path.write_bytes(bytes(raw))
    with pytest.raises(fm.DataFormatError):
        fm.read_stack(path)
    fm.write_stack(path, stack)
    path.write_bytes(path.read_bytes()[:-4])  # truncate payload
    with pytest.raises(fm.DataFormatError):
        fm.read_stack(path)


# --- pgm ------------------------------------------------------------------------


def test_pgm_extreme_values(tmp_path):
    img = BModeImage(np.zeros((2, 3)))
    fm.write_pgm(tmp_path / "z.pgm", img)
    raw = (tmp_path / "z.pgm").read_bytes()
    assert raw.endswith(b"\x00" * 6)
    fm.write_pgm(tmp_path / "o.pgm", BModeImage(np.ones((2, 3))))
    assert (tmp_path / "o.pgm").read_bytes().endswith(b"\xff" * 6)


def test_pgm_rounds_half_up(tmp_path):
    fm.write_pgm(tmp_path / "h.pgm", BModeImage(np.full((1, 1), 0.5)))
    raw = (tmp_path / "h.pgm").read_bytes()
    assert raw.endswith(bytes([128]))  # 127.5 rounds up


def test_pgm_roundtrip(tmp_path):
    img = BModeImage(np.round(np.random.default_rng(0).random((6, 4)) * 255) / 255)
    fm.write_pgm(tmp_path / "r.pgm", img)
    back = fm.read_pgm(tmp_path / "r.pgm")
    assert np.allclose(back, img.pixels, atol=0.5 / 255)


def test_f32_roundtrip(tmp_path):
    arr = np.random.default_rng(1).random((4, 6))
    fm.write_f32(tmp_path / "a.f32", arr)
    back = fm.read_f32(tmp_path / "a.f32", 4, 6)
    assert np.allclose(back, arr, atol=1e-7)


# --- config ----------------------------------------------------------------------


def write_cfg(tmp_path, text):
    p = tmp_path / "run.cfg"
    p.write_text(text)
    return p


def test_config_parses_values_and_comments(tmp_path):
    cfg = parse_config(write_cfg(tmp_path, """
# comment line
k = 5
roi_circles = 10,20,5; 30,40,6  # trailing comment
speckle_rect = 1,2,3,4
"""))
    assert cfg.k == 5
    assert cfg.roi_circles == ((10.0, 20.0, 5.0), (30.0, 40.0, 6.0))
    assert cfg.speckle_rect == (1, 2, 3, 4)


def test_config_rejects_unknown_key_with_line(tmp_path):
    with pytest.raises(ConfigError) as err:
        parse_config(write_cfg(tmp_path, "k = 5\nbogus = 1\n"))
    assert err.value.line == 2


def test_config_rejects_malformed_line(tmp_path):
    with pytest.raises(ConfigError) as err:
        parse_config(write_cfg(tmp_path, "k = 5\nthis is not a pair\n"))
    assert err.value.line == 2


def test_config_rejects_small_k(tmp_path):
    with pytest.raises(ConfigError, match="k must be >= 2"):
        parse_config(write_cfg(tmp_path, "k = 1\n"))


# --- CLI end to end ----------------------------------------------------------------


CFG_TEMPLATE = """
output_dir = {out}
input = {out}/stack.pwzs
height = 64
width = 80
n_angles = 9
angle_span_deg = 16
cysts = 32,40,12,0.0
background_echogenicity = 1.0
white_noise_sigma = 0.5
artifact_amplitude = 0.6
k = 5
iterations = {iters}
learning_rate = 0.001
alpha = 0.25
seed = 7
image = {out}/denoised.f32
reference = {out}/y.f32
n_windows = 4
window_radius = 5
roi_circles = 32,40,10
background_circles = 10,12,8; 52,66,8
speckle_rect = 2,56,14,20
"""


def run_cli(*args):
    return subprocess.run(
        [sys.executable, "-m", "pwzs.cli", *args], capture_output=True, text=True
    )


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli")
    cfg = out / "run.cfg"
    cfg.write_text(CFG_TEMPLATE.format(out=out, iters=10))
    r = run_cli("simulate", "--config", str(cfg))
    assert r.returncode == 0, r.stderr
    r = run_cli("denoise", "--config", str(cfg))
    assert r.returncode == 0, r.stderr
    return out, cfg


def test_simulate_outputs_and_rerun_identical(pipeline, tmp_path):
    out, cfg = pipeline
    stack = fm.read_stack(out / "stack.pwzs")
    assert stack.k == 9
    first = (out / "stack.pwzs").read_bytes()
    r = run_cli("simulate", "--config", str(cfg))
    assert r.returncode == 0
    assert (out / "stack.pwzs").read_bytes() == first


def test_denoise_outputs_exist_with_input_dims(pipeline):
    out, _ = pipeline
    for name in ("y.pgm", "y.f32", "denoised.pgm", "denoised.f32", "trace.txt"):
        assert (out / name).exists()
    den = fm.read_f32(out / "denoised.f32", 64, 80)
    assert den.shape == (64, 80)
    assert len((out / "trace.txt").read_text().strip().split("\n")) == 10


def test_denoise_rerun_byte_identical(pipeline):
    out, cfg = pipeline
    first_f32 = (out / "denoised.f32").read_bytes()
    first_trace = (out / "trace.txt").read_bytes()
    r = run_cli("denoise", "--config", str(cfg))
    assert r.returncode == 0
    assert (out / "denoised.f32").read_bytes() == first_f32
    assert (out / "trace.txt").read_bytes() == first_trace


def test_denoise_rejects_zero_iterations(pipeline):
    out, cfg = pipeline
    r = run_cli("denoise", "--config", str(cfg), "--iterations", "0")
    assert r.returncode == 2
    assert "iterations" in r.stderr


def test_denoise_reports_corrupt_stack(pipeline, tmp_path):
    out, _ = pipeline
    bad = tmp_path / "bad.pwzs"
    bad.write_bytes(b"NOPE" + (out / "stack.pwzs").read_bytes()[4:])
    cfg2 = tmp_path / "bad.cfg"
    cfg2.write_text(
        CFG_TEMPLATE.format(out=out, iters=5).replace(
            f"input = {out}/stack.pwzs", f"input = {bad}"
        )
    )
    r = run_cli("denoise", "--config", str(cfg2))
    assert r.returncode == 2
    assert "magic" in r.stderr


def test_evaluate_identity_reference(pipeline, tmp_path):
    out, cfg = pipeline
    cfg2 = tmp_path / "ident.cfg"
    cfg2.write_text(
        CFG_TEMPLATE.format(out=out, iters=10).replace(
            f"image = {out}/denoised.f32", f"image = {out}/y.f32"
        )
    )
    r = run_cli("evaluate", "--config", str(cfg2))
    assert r.returncode == 0, r.stderr
    text = (out / "metrics.txt").read_text()
    assert "ks_statistic = 0.0" in text
    assert "ks_pass = True" in text


def test_evaluate_csv_reflects_quality_ordering(pipeline, tmp_path):
    # a long-compound stands in for a cleaned image: better contrast than noisy
    out, cfg = pipeline
    import pwzs.compounding as cp

    stack = fm.read_stack(out / "stack.pwzs")
    y75 = cp.full_bmode(stack)
    fm.write_f32(out / "fullcompound.f32", y75.pixels)
    scores = {}
    for name in ("fullcompound", "y"):
        cfg2 = tmp_path / f"{name}.cfg"
        cfg2.write_text(
            CFG_TEMPLATE.format(out=out, iters=10).replace(
                f"image = {out}/denoised.f32", f"image = {out}/{name}.f32"
            )
        )
        r = run_cli("evaluate", "--config", str(cfg2))
        assert r.returncode == 0, r.stderr
        row = (out / "metrics.csv").read_text().strip().split("\n")[1]
        scores[name] = float(row.split(",")[0])
    assert scores["fullcompound"] > scores["y"]


def test_evaluate_rejects_out_of_bounds_roi(pipeline, tmp_path):
    out, _ = pipeline
    cfg2 = tmp_path / "roi.cfg"
    cfg2.write_text(
        CFG_TEMPLATE.format(out=out, iters=10).replace(
            "roi_circles = 32,40,10", "roi_circles = 32,40,60"
        )
    )
    r = run_cli("evaluate", "--config", str(cfg2))
    assert r.returncode == 2


def test_malformed_config_exits_2(pipeline, tmp_path):
    bad = tmp_path / "broken.cfg"
    bad.write_text("k = 5\nwhat even is this\n")
    r = run_cli("denoise", "--config", str(bad))
    assert r.returncode == 2
    assert "line 2" in r.stderr


def test_default_config_simulates_75_angle_stack(tmp_path):
    import pathlib

    cfg = pathlib.Path(__file__).resolve().parents[1] / "configs" / "default.cfg"
    r = subprocess.run(
        [sys.executable, "-m", "pwzs.cli", "simulate", "--config", str(cfg)],
        capture_output=True,
        text=True,
        cwd=tmp_path,
    )
    assert r.returncode == 0, r.stderr
    stack = fm.read_stack(tmp_path / "out" / "stack.pwzs")
    assert stack.k == 75
    assert stack.shape == (300, 384)
    assert stack.angles_deg[0] == -16.0 and stack.angles_deg[-1] == 16.0
    # lossless reload
    fm.write_stack(tmp_path / "out" / "again.pwzs", stack)
    assert (tmp_path / "out" / "again.pwzs").read_bytes() == (
        tmp_path / "out" / "stack.pwzs"
    ).read_bytes()
