"""
Exception types raised across gaussmap.

Loaders wrap third-party failures (plyfile, pandas, Pillow) into these so callers
only ever need to catch GaussmapError.
"""

from pathlib import Path
from typing import Optional


class GaussmapError(Exception):
    """Base class for every error raised by this package."""


class ParseError(GaussmapError, ValueError):
    """A file could not be parsed. Carries the path and the line/byte offset when known."""

    def __init__(self, message: str, path: Optional[Path] = None, line: Optional[int] = None, offset: Optional[int] = None):
        self.path = Path(path) if path is not None else None
        self.line = line
        self.offset = offset

        location = []
        if self.path is not None:
            location.append(str(self.path))
        if line is not None:
            location.append(f"line {line}")
        if offset is not None:
            location.append(f"offset {offset}")

        prefix = f"[{', '.join(location)}] " if location else ""
        super().__init__(f"{prefix}{message}")


class ConfigError(GaussmapError, ValueError):
    """Invalid TOML training config."""


class ManifestError(GaussmapError, ValueError):
    """Invalid dataset manifest."""


class TrajectoryError(ParseError):
    """Trajectory file violates monotonicity or quaternion sanity checks."""


class ImageFormatError(GaussmapError, ValueError):
    """PNG with an unsupported mode or bit depth."""


class DimensionMismatchError(GaussmapError, ValueError):
    """Two images (or an image and intrinsics) disagree in size."""


class DegenerateDirectionError(GaussmapError, ValueError):
    """Viewing direction is undefined (point coincides with the camera centre)."""


class InsufficientSupportError(GaussmapError, ValueError):
    """Too few points to fit plane statistics."""


class StaleForwardStateError(GaussmapError, RuntimeError):
    """Backward pass requested for a scene other than the one rendered."""


class EmptyCloudError(GaussmapError, ValueError):
    """A metric or sampler received an empty point set."""


class NonFiniteLossError(GaussmapError, FloatingPointError):
    """Training produced NaN/Inf. `dump_path` points at the diagnostic JSON."""

    def __init__(self, message: str, dump_path: Optional[Path] = None):
        self.dump_path = dump_path
        suffix = f" (diagnostics: {dump_path})" if dump_path else ""
        super().__init__(f"{message}{suffix}")
