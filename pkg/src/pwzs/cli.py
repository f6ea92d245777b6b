"""Command-line pipeline: simulate -> denoise -> evaluate.

Every command takes a config file; a few flags override file values.
Exit codes: 0 success, 2 usage/config/data errors, 3 numeric failure.
"""

import argparse
import sys
from pathlib import Path

import numpy as np

from . import compounding, simulator
from .compounding import BModeImage
from .config import ConfigError, apply_overrides, parse_config, require_keys
from .formats import DataFormatError, read_f32, read_pgm, read_stack, write_f32, write_pgm, write_stack
from .metrics import RoiSpec, evaluate
from .network import NumericError
from .training import TrainConfig, denoise, train_zero_shot

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERIC = 3


def _out_dir(cfg):
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(cfg):
    require_keys(cfg, "simulate")
    out = _out_dir(cfg)
    spec = simulator.PhantomSpec(
        height=cfg.height,
        width=cfg.width,
        cysts=cfg.cysts,
        background_echogenicity=cfg.background_echogenicity,
        seed=cfg.seed,
    )
    noise = simulator.NoiseModel(
        white_noise_sigma=cfg.white_noise_sigma,
        artifact_amplitude=cfg.artifact_amplitude,
    )
    clean = simulator.make_phantom(spec)
    angles = np.linspace(-cfg.angle_span_deg, cfg.angle_span_deg, cfg.n_angles)
    stack = simulator.simulate_stack(clean, angles, noise, seed=cfg.seed)
    truth = compounding.log_compress(clean)

    stack_path = out / "stack.pwzs"
    write_stack(stack_path, stack)
    write_pgm(out / "truth.pgm", truth)
    write_f32(out / "truth.f32", truth.pixels)
    print(f"wrote {stack_path} (k={stack.k}, {stack.shape[0]}x{stack.shape[1]})")
    print(f"wrote {out / 'truth.pgm'}")
    print(f"wrote {out / 'truth.f32'}")
    return EXIT_OK


def cmd_denoise(cfg):
    require_keys(cfg, "denoise")
    out = _out_dir(cfg)
    stack = read_stack(cfg.input)
    idx = compounding.select_angles(stack.angles_deg, cfg.k)
    working = stack.subset(idx)
    image = compounding.full_bmode(working)
    train_cfg = TrainConfig(
        iterations=cfg.iterations,
        learning_rate=cfg.learning_rate,
        alpha=cfg.alpha,
        seed=cfg.seed,
    )
    params, trace = train_zero_shot(working, train_cfg)
    cleaned = denoise(params, image)

    write_pgm(out / "y.pgm", image)
    write_f32(out / "y.f32", image.pixels)
    write_pgm(out / "denoised.pgm", cleaned)
    write_f32(out / "denoised.f32", cleaned.pixels)
    (out / "trace.txt").write_text(trace.to_text())
    print(f"angles used: {[round(working.angles_deg[i], 3) for i in range(working.k)]}")
    print(f"final loss: {trace.total[-1]:.9g}")
    for name in ("y.pgm", "y.f32", "denoised.pgm", "denoised.f32", "trace.txt"):
        print(f"wrote {out / name}")
    return EXIT_OK


def _load_image(path, cfg):
    path = str(path)
    if path.endswith(".pgm"):
        return BModeImage(read_pgm(path))
    return BModeImage(np.clip(read_f32(path, cfg.height, cfg.width), 0.0, 1.0))


def cmd_evaluate(cfg):
    require_keys(cfg, "evaluate")
    out = _out_dir(cfg)
    image = _load_image(cfg.image, cfg)
    reference = _load_image(cfg.reference, cfg)
    roi = RoiSpec(
        roi_circles=cfg.roi_circles,
        background_circles=cfg.background_circles,
        speckle_rect=cfg.speckle_rect,
    )
    report = evaluate(
        image,
        reference,
        roi,
        n_windows=cfg.n_windows,
        window_radius=cfg.window_radius,
        seed=cfg.seed,
    )
    (out / "metrics.txt").write_text(report.to_text())
    (out / "metrics.csv").write_text(report.to_csv_row())
    print(report.to_text(), end="")
    print(f"wrote {out / 'metrics.txt'}")
    print(f"wrote {out / 'metrics.csv'}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="pwzs",
        description="Zero-shot denoising of low-angle plane-wave compounded ultrasound images.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("simulate", "generate a synthetic angle stack and ground truth"),
        ("denoise", "train the zero-shot denoiser on a stack and write results"),
        ("evaluate", "compute contrast metrics and the speckle KS test"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="flat key = value config file")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--iterations", type=int, help="override training iterations")
        p.add_argument("--alpha", type=float, help="override the consistency weight")
        p.add_argument("--lr", type=float, help="override the learning rate")
        p.add_argument("--k", type=int, help="override the number of working angles")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    commands = {"simulate": cmd_simulate, "denoise": cmd_denoise, "evaluate": cmd_evaluate}
    try:
        cfg = apply_overrides(parse_config(args.config), args)
        return commands[args.command](cfg)
    except (ConfigError, DataFormatError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
