"""Flat key-value run configuration.

One ``key = value`` pair per line, ``#`` starts a comment, blank lines
are ignored. Unknown keys are rejected so typos fail loudly. Circle
lists are semicolon-separated comma triples, e.g.
``roi_circles = 150,192,34`` or ``bg = 60,80,30; 60,300,30``.
"""

from dataclasses import dataclass, fields


class ConfigError(ValueError):
    """Configuration file or value problem; carries a line number when known."""

    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


def _parse_circles(text):
    circles = []
    for part in text.split(";"):
        part = part.strip()
        if not part:
            continue
        vals = [float(v) for v in part.split(",")]
        if len(vals) != 3:
            raise ValueError(f"circle needs 3 values, got {len(vals)}")
        circles.append(tuple(vals))
    if not circles:
        raise ValueError("empty circle list")
    return tuple(circles)


def _parse_cysts(text):
    cysts = []
    for part in text.split(";"):
        part = part.strip()
        if not part:
            continue
        vals = [float(v) for v in part.split(",")]
        if len(vals) != 4:
            raise ValueError(f"cyst needs 4 values, got {len(vals)}")
        cysts.append(tuple(vals))
    return tuple(cysts)


def _parse_rect(text):
    vals = [int(v) for v in text.split(",")]
    if len(vals) != 4:
        raise ValueError(f"rect needs 4 values, got {len(vals)}")
    return tuple(vals)


@dataclass
class RunConfig:
    """Every tunable of the simulate/denoise/evaluate pipeline."""

    # paths
    input: str = None
    output_dir: str = None
    image: str = None
    reference: str = None
    # scene geometry and simulation
    height: int = None
    width: int = None
    n_angles: int = None
    angle_span_deg: float = None
    cysts: tuple = None
    background_echogenicity: float = None
    white_noise_sigma: float = None
    artifact_amplitude: float = None
    # training
    k: int = None
    iterations: int = None
    learning_rate: float = None
    alpha: float = None
    seed: int = None
    # evaluation
    n_windows: int = None
    window_radius: int = None
    roi_circles: tuple = None
    background_circles: tuple = None
    speckle_rect: tuple = None


_PARSERS = {
    "input": str,
    "output_dir": str,
    "image": str,
    "reference": str,
    "height": int,
    "width": int,
    "n_angles": int,
    "angle_span_deg": float,
    "cysts": _parse_cysts,
    "background_echogenicity": float,
    "white_noise_sigma": float,
    "artifact_amplitude": float,
    "k": int,
    "iterations": int,
    "learning_rate": float,
    "alpha": float,
    "seed": int,
    "n_windows": int,
    "window_radius": int,
    "roi_circles": _parse_circles,
    "background_circles": _parse_circles,
    "speckle_rect": _parse_rect,
}

REQUIRED_KEYS = {
    "simulate": (
        "output_dir", "height", "width", "n_angles", "angle_span_deg", "cysts",
        "background_echogenicity", "white_noise_sigma", "artifact_amplitude", "seed",
    ),
    "denoise": ("input", "output_dir", "k", "iterations", "learning_rate", "alpha", "seed"),
    "evaluate": (
        "image", "reference", "output_dir", "height", "width", "roi_circles",
        "background_circles", "speckle_rect", "n_windows", "window_radius", "seed",
    ),
}


def parse_config(path):
    """Read a config file into a RunConfig; malformed lines name themselves."""
    cfg = RunConfig()
    seen = set()
    with open(path, "r", encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"expected 'key = value', got {line!r}", line=lineno)
            key, _, value = (s.strip() for s in line.partition("="))
            if key not in _PARSERS:
                raise ConfigError(f"unknown key {key!r}", line=lineno)
            if key in seen:
                raise ConfigError(f"duplicate key {key!r}", line=lineno)
            seen.add(key)
            try:
                setattr(cfg, key, _PARSERS[key](value))
            except ValueError as exc:
                raise ConfigError(f"bad value for {key!r}: {exc}", line=lineno) from exc
    _validate(cfg)
    return cfg


def _validate(cfg):
    if cfg.k is not None and cfg.k < 2:
        raise ConfigError("k must be >= 2")
    if cfg.n_angles is not None and cfg.n_angles < 2:
        raise ConfigError("n_angles must be >= 2")
    if cfg.iterations is not None and cfg.iterations < 1:
        raise ConfigError("iterations must be >= 1")
    if cfg.learning_rate is not None and cfg.learning_rate <= 0:
        raise ConfigError("learning_rate must be positive")
    if cfg.alpha is not None and cfg.alpha < 0:
        raise ConfigError("alpha must be non-negative")
    if cfg.seed is not None and cfg.seed < 0:
        raise ConfigError("seed must be non-negative")


def require_keys(cfg, command):
    missing = [key for key in REQUIRED_KEYS[command] if getattr(cfg, key) is None]
    if missing:
        raise ConfigError(f"{command} needs config keys: {', '.join(missing)}")


def apply_overrides(cfg, args):
    """Fold command-line flag values over the file values."""
    for flag, key in (
        ("seed", "seed"), ("iterations", "iterations"), ("alpha", "alpha"),
        ("lr", "learning_rate"), ("k", "k"),
    ):
        value = getattr(args, flag, None)
        if value is not None:
            setattr(cfg, key, value)
    _validate(cfg)
    return cfg


def config_fields():
    return tuple(f.name for f in fields(RunConfig))
