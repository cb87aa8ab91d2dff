"""
8-bit sRGB PNG <-> linear ImageBuffer.
"""

from pathlib import Path
from typing import Union

import numpy as np
from PIL import Image, UnidentifiedImageError

from gaussmap.errors import ImageFormatError
from gaussmap.scene_core import ImageBuffer

PathLike = Union[str, Path]

# Pillow modes that carry 8 bits per channel
_EIGHT_BIT_MODES = {"RGB", "RGBA", "L", "LA", "P"}


def srgb_to_linear(values: np.ndarray) -> np.ndarray:
    v = np.asarray(values, dtype=np.float64)
    return np.where(v <= 0.04045, v / 12.92, ((v + 0.055) / 1.055) ** 2.4)


def linear_to_srgb(values: np.ndarray) -> np.ndarray:
    v = np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0)
    return np.where(v <= 0.0031308, v * 12.92, 1.055 * np.power(v, 1.0 / 2.4) - 0.055)


def to_srgb8(buffer: ImageBuffer) -> np.ndarray:
    """Quantize with round-to-nearest. Values outside [0, 1] are clamped here and only here."""
    return np.rint(linear_to_srgb(buffer.rgb) * 255.0).astype(np.uint8)


def from_srgb8(pixels: np.ndarray) -> ImageBuffer:
    return ImageBuffer(srgb_to_linear(np.asarray(pixels, dtype=np.float64) / 255.0))


def load_image(path: PathLike) -> ImageBuffer:
    """
    Read an 8-bit sRGB PNG into linear RGB.

    Raises:
        ImageFormatError: unreadable file or a mode that is not 8 bits per channel
    """
    path = Path(path)
    try:
        with Image.open(path) as img:
            if img.mode not in _EIGHT_BIT_MODES:
                raise ImageFormatError(f"{path}: unsupported PNG mode '{img.mode}' (need 8-bit RGB/RGBA/L/P)")
            pixels = np.asarray(img.convert("RGB"))
    except (UnidentifiedImageError, OSError) as e:
        raise ImageFormatError(f"{path}: could not read image: {e}") from e
    return from_srgb8(pixels)


def save_image(buffer: ImageBuffer, path: PathLike) -> Path:
    """Write linear RGB as 8-bit sRGB PNG. No metadata, so equal pixels give equal bytes."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(to_srgb8(buffer)).save(path, format="PNG")
    return path
