"""
TOML training configuration.

Every field has a default, so an empty file (or no file at all) is a valid
config. Keys are grouped in sections:

    [loss]     lambda_dssim, l2_loss
    [optim]    iterations, lr_*, sh_warmup
    [control]  densify_grad_threshold, densify_interval, densify_from,
               densify_until_frac, prune_opacity_threshold
    [voxel]    root_size, max_depth, eta_threshold, min_points, sensor_origin
    [init]     points_per_voxel, opacity_init, alpha_min, alpha_max
    [render]   max_sh_degree, sh_frame, background, tile_size, near_clip,
               skip_low_alpha, early_stop
    [run]      seed, structure_mode, checkpoint_interval, eval_interval
"""

import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Dict, Optional, Tuple, Union

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from gaussmap.errors import ConfigError

_PROJECT_ROOT = Path(__file__).resolve().parents[2]
if str(_PROJECT_ROOT) not in sys.path:
    sys.path.insert(0, str(_PROJECT_ROOT))

import config

PathLike = Union[str, Path]

STRUCTURE_MODES = ("baseline", "frozen", "position", "full")
SH_FRAMES = ("camera", "world")

SECTIONS: Dict[str, Tuple[str, ...]] = {
    "loss": ("lambda_dssim", "l2_loss"),
    "optim": ("iterations", "lr_mean", "lr_scale", "lr_rotation", "lr_opacity", "lr_sh_dc", "lr_sh_rest", "sh_warmup"),
    "control": ("densify_grad_threshold", "densify_interval", "densify_from", "densify_until_frac", "prune_opacity_threshold"),
    "voxel": ("root_size", "max_depth", "eta_threshold", "min_points", "sensor_origin"),
    "init": ("points_per_voxel", "opacity_init", "alpha_min", "alpha_max"),
    "render": ("max_sh_degree", "sh_frame", "background", "tile_size", "near_clip", "skip_low_alpha", "early_stop"),
    "run": ("seed", "structure_mode", "checkpoint_interval", "eval_interval"),
}


@dataclass(frozen=True)
class TrainConfig:
    # [loss]
    lambda_dssim: float = 0.2
    l2_loss: bool = False

    # [optim]
    iterations: int = 7000
    lr_mean: float = 1.6e-4
    lr_scale: float = 5e-3
    lr_rotation: float = 1e-3
    lr_opacity: float = 5e-2
    lr_sh_dc: float = 2.5e-3
    lr_sh_rest: float = 1.25e-4
    sh_warmup: int = 1000

    # [control]
    densify_grad_threshold: float = 2e-4
    densify_interval: int = 100
    densify_from: int = 500
    densify_until_frac: float = 0.8
    prune_opacity_threshold: float = 0.005

    # [voxel]
    root_size: float = 1.0
    max_depth: int = 3
    eta_threshold: float = 0.05
    min_points: int = 10
    sensor_origin: Optional[Tuple[float, float, float]] = None

    # [init]
    points_per_voxel: int = 50
    opacity_init: float = 0.9
    alpha_min: float = 1e-4
    alpha_max: float = 100.0

    # [render]
    max_sh_degree: int = 2
    sh_frame: str = "camera"
    background: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    tile_size: int = 16
    near_clip: float = 0.05
    skip_low_alpha: bool = True
    early_stop: bool = True

    # [run]
    seed: int = field(default_factory=lambda: config.DEFAULT_SEED)
    structure_mode: str = "full"
    checkpoint_interval: int = field(default_factory=lambda: config.CHECKPOINT_INTERVAL)
    eval_interval: int = field(default_factory=lambda: config.EVAL_INTERVAL)

    def __post_init__(self):
        if self.sensor_origin is not None:
            object.__setattr__(self, "sensor_origin", tuple(float(v) for v in self.sensor_origin))
        object.__setattr__(self, "background", tuple(float(v) for v in self.background))

        errors = validate_train_config(self)
        if errors:
            raise ConfigError("; ".join(errors))

    def with_overrides(self, **changes) -> "TrainConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        """Nested {section: {key: value}} form, as written in TOML."""
        flat = asdict(self)
        return {section: {key: flat[key] for key in keys} for section, keys in SECTIONS.items()}

    @property
    def densify_until(self) -> int:
        return int(self.densify_until_frac * self.iterations)


def validate_train_config(cfg: TrainConfig) -> list:
    errors = []
    if not 0.0 <= cfg.lambda_dssim <= 1.0:
        errors.append(f"lambda_dssim must be in [0, 1], got {cfg.lambda_dssim}")
    if cfg.iterations < 0:
        errors.append(f"iterations must be >= 0, got {cfg.iterations}")
    if cfg.max_sh_degree not in (0, 1, 2):
        errors.append(f"max_sh_degree must be 0, 1 or 2, got {cfg.max_sh_degree}")
    if cfg.sh_frame not in SH_FRAMES:
        errors.append(f"sh_frame must be one of {SH_FRAMES}, got '{cfg.sh_frame}'")
    if cfg.structure_mode not in STRUCTURE_MODES:
        errors.append(f"structure_mode must be one of {STRUCTURE_MODES}, got '{cfg.structure_mode}'")
    if cfg.root_size <= 0:
        errors.append(f"root_size must be > 0, got {cfg.root_size}")
    if cfg.max_depth < 0:
        errors.append(f"max_depth must be >= 0, got {cfg.max_depth}")
    if cfg.min_points < 4:
        errors.append(f"min_points must be >= 4, got {cfg.min_points}")
    if cfg.points_per_voxel < 1:
        errors.append(f"points_per_voxel must be >= 1, got {cfg.points_per_voxel}")
    if not 0.0 < cfg.opacity_init < 1.0:
        errors.append(f"opacity_init must be in (0, 1), got {cfg.opacity_init}")
    if not 0.0 < cfg.alpha_min <= cfg.alpha_max:
        errors.append(f"need 0 < alpha_min <= alpha_max, got {cfg.alpha_min}, {cfg.alpha_max}")
    if cfg.tile_size < 1:
        errors.append(f"tile_size must be >= 1, got {cfg.tile_size}")
    if cfg.near_clip <= 0:
        errors.append(f"near_clip must be > 0, got {cfg.near_clip}")
    if len(cfg.background) != 3:
        errors.append(f"background must have 3 channels, got {len(cfg.background)}")
    if cfg.sensor_origin is not None and len(cfg.sensor_origin) != 3:
        errors.append("sensor_origin must have 3 coordinates")
    if cfg.densify_interval < 1:
        errors.append(f"densify_interval must be >= 1, got {cfg.densify_interval}")
    if not 0.0 <= cfg.densify_until_frac <= 1.0:
        errors.append(f"densify_until_frac must be in [0, 1], got {cfg.densify_until_frac}")
    for name in ("lr_mean", "lr_scale", "lr_rotation", "lr_opacity", "lr_sh_dc", "lr_sh_rest"):
        if getattr(cfg, name) < 0:
            errors.append(f"{name} must be >= 0")
    if cfg.checkpoint_interval < 0 or cfg.eval_interval < 0:
        errors.append("checkpoint_interval and eval_interval must be >= 0")
    return errors


def train_config_from_dict(data: dict, source: str = "<dict>") -> TrainConfig:
    """Build a TrainConfig from the nested TOML structure, rejecting unknown keys."""
    known = {f.name for f in fields(TrainConfig)}
    values = {}
    for section, entries in data.items():
        if section not in SECTIONS:
            raise ConfigError(f"{source}: unknown section [{section}] (expected one of {', '.join(SECTIONS)})")
        if not isinstance(entries, dict):
            raise ConfigError(f"{source}: [{section}] must be a table")
        for key, value in entries.items():
            if key not in SECTIONS[section] or key not in known:
                raise ConfigError(f"{source}: unknown key '{key}' in [{section}]")
            values[key] = value

    try:
        return TrainConfig(**values)
    except TypeError as e:
        raise ConfigError(f"{source}: {e}") from e


def load_train_config(path: Optional[PathLike] = None) -> TrainConfig:
    """
    Parse a TOML training config.

    Args:
        path: TOML file, or None for all defaults

    Raises:
        ConfigError: unreadable TOML, unknown section/key or out-of-range value
    """
    if path is None:
        return TrainConfig()

    path = Path(path)
    try:
        with open(path, "rb") as f:
            data = tomllib.load(f)
    except FileNotFoundError as e:
        raise ConfigError(f"Config file not found: {path}") from e
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{path}: invalid TOML: {e}") from e

    return train_config_from_dict(data, source=str(path))
