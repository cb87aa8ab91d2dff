"""
SSIM with an 11x11 Gaussian window (sigma 1.5, K1 = 0.01, K2 = 0.03, data range 1).

Borders are handled by symmetric reflection and the SSIM map is averaged over
the interior, skipping a window half-width at each edge, the same convention
as scikit-image's structural_similarity(gaussian_weights=True). The gradient
w.r.t. the first image is exact for that definition.
"""

from typing import Tuple

import numpy as np
from scipy.ndimage import correlate1d

from gaussmap.errors import DimensionMismatchError

WINDOW_SIZE = 11
WINDOW_SIGMA = 1.5
K1 = 0.01
K2 = 0.03
C1 = K1 ** 2
C2 = K2 ** 2
HALF = WINDOW_SIZE // 2


def gaussian_window(size: int = WINDOW_SIZE, sigma: float = WINDOW_SIGMA) -> np.ndarray:
    offsets = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    weights = np.exp(-0.5 * (offsets / sigma) ** 2)
    return weights / weights.sum()


_WINDOW = gaussian_window()


def _blur(image: np.ndarray) -> np.ndarray:
    """Separable Gaussian filter over the first two axes, reflected borders."""
    out = correlate1d(image, _WINDOW, axis=0, mode="reflect")
    return correlate1d(out, _WINDOW, axis=1, mode="reflect")


def _fold_reflected(padded: np.ndarray, axis: int, n: int) -> np.ndarray:
    """Adjoint of symmetric padding by HALF along `axis`: add the mirrored margins back."""
    padded = np.moveaxis(padded, axis, 0)
    core = padded[HALF : HALF + n].copy()
    for i in range(HALF):
        core[HALF - 1 - i] += padded[i]
        core[n - HALF + i] += padded[HALF + n + (HALF - 1 - i)]
    return np.moveaxis(core, 0, axis)


def _blur_adjoint_axis(grad: np.ndarray, axis: int) -> np.ndarray:
    n = grad.shape[axis]
    pad = [(0, 0)] * grad.ndim
    pad[axis] = (HALF, HALF)
    # correlation of the zero-padded gradient with the (symmetric) window spreads
    # each output gradient over the padded input it read from
    spread = correlate1d(np.pad(grad, pad), _WINDOW, axis=axis, mode="constant", cval=0.0)
    return _fold_reflected(spread, axis, n)


def _blur_adjoint(grad: np.ndarray) -> np.ndarray:
    return _blur_adjoint_axis(_blur_adjoint_axis(grad, 1), 0)


def _check_pair(x: np.ndarray, y: np.ndarray) -> None:
    if x.shape != y.shape:
        raise DimensionMismatchError(f"SSIM inputs differ in shape: {x.shape} vs {y.shape}")
    if min(x.shape[0], x.shape[1]) < WINDOW_SIZE:
        raise DimensionMismatchError(f"Image {x.shape[1]}x{x.shape[0]} is smaller than the {WINDOW_SIZE}x{WINDOW_SIZE} SSIM window")


def _interior_weights(shape) -> np.ndarray:
    weights = np.zeros(shape)
    weights[HALF : shape[0] - HALF, HALF : shape[1] - HALF] = 1.0
    return weights / weights.sum()


def ssim_with_grad(x: np.ndarray, y: np.ndarray, need_grad: bool = True) -> Tuple[float, np.ndarray]:
    """
    Mean SSIM of (H, W, C) images and its gradient w.r.t. x.

    Returns:
        (ssim, d ssim / d x) with the gradient None when need_grad is False
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    _check_pair(x, y)

    mu_x = _blur(x)
    mu_y = _blur(y)
    e_xx = _blur(x * x)
    e_yy = _blur(y * y)
    e_xy = _blur(x * y)

    a1 = 2.0 * mu_x * mu_y + C1
    a2 = 2.0 * (e_xy - mu_x * mu_y) + C2
    b1 = mu_x * mu_x + mu_y * mu_y + C1
    b2 = (e_xx - mu_x * mu_x) + (e_yy - mu_y * mu_y) + C2
    s = (a1 * a2) / (b1 * b2)

    weights = _interior_weights(x.shape)
    value = float(np.sum(weights * s))
    if not need_grad:
        return value, None

    g = weights * s
    g_mu_x = g * (2.0 * mu_y / a1 - 2.0 * mu_y / a2 - 2.0 * mu_x / b1 + 2.0 * mu_x / b2)
    g_e_xx = -g / b2
    g_e_xy = 2.0 * g / a2

    grad = _blur_adjoint(g_mu_x) + 2.0 * x * _blur_adjoint(g_e_xx) + y * _blur_adjoint(g_e_xy)
    return value, grad


def ssim(x: np.ndarray, y: np.ndarray) -> float:
    value, _ = ssim_with_grad(x, y, need_grad=False)
    return value
