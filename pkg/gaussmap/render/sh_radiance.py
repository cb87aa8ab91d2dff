"""
View-dependent color from degree <= 2 real spherical harmonics.

Basis order: (0,0), (1,-1), (1,0), (1,1), (2,-2), (2,-1), (2,0), (2,1), (2,2),
with the sign convention used by common splatting viewers so exported maps
shade the same there.
"""

from typing import Tuple

import numpy as np

from gaussmap.errors import DegenerateDirectionError
from gaussmap.scene_core import SH_COEFFS, Y00_NORM, Pose

SH_C0 = Y00_NORM
SH_C1 = 0.4886025119029199
SH_C2 = (
    1.0925484305920792,
    -1.0925484305920792,
    0.31539156525252005,
    -1.0925484305920792,
    0.5462742152960396,
)

MIN_DIRECTION_NORM = 1e-9


def active_coefficients(degree: int) -> int:
    return (degree + 1) ** 2


def sh_basis(dirs: np.ndarray) -> np.ndarray:
    """(..., 3) unit directions -> (..., 9) basis values."""
    d = np.asarray(dirs, dtype=np.float64)
    x, y, z = d[..., 0], d[..., 1], d[..., 2]
    return np.stack(
        [
            np.full_like(x, SH_C0),
            -SH_C1 * y,
            SH_C1 * z,
            -SH_C1 * x,
            SH_C2[0] * x * y,
            SH_C2[1] * y * z,
            SH_C2[2] * (2.0 * z * z - x * x - y * y),
            SH_C2[3] * x * z,
            SH_C2[4] * (x * x - y * y),
        ],
        axis=-1,
    )


def sh_basis_jacobian(dirs: np.ndarray) -> np.ndarray:
    """(..., 9, 3): derivative of each basis value w.r.t. the direction components."""
    d = np.asarray(dirs, dtype=np.float64)
    x, y, z = d[..., 0], d[..., 1], d[..., 2]
    zero = np.zeros_like(x)
    rows = [
        (zero, zero, zero),
        (zero, np.full_like(x, -SH_C1), zero),
        (zero, zero, np.full_like(x, SH_C1)),
        (np.full_like(x, -SH_C1), zero, zero),
        (SH_C2[0] * y, SH_C2[0] * x, zero),
        (zero, SH_C2[1] * z, SH_C2[1] * y),
        (-2.0 * SH_C2[2] * x, -2.0 * SH_C2[2] * y, 4.0 * SH_C2[2] * z),
        (SH_C2[3] * z, zero, SH_C2[3] * x),
        (2.0 * SH_C2[4] * x, -2.0 * SH_C2[4] * y, zero),
    ]
    return np.stack([np.stack(r, axis=-1) for r in rows], axis=-2)


def view_direction(point: np.ndarray, view_pose: Pose) -> Tuple[np.ndarray, float, float]:
    """
    Unit direction of a world point in the camera frame, with its polar angle
    theta in [0, pi] and azimuth phi in (-pi, pi].

    Raises:
        DegenerateDirectionError: the point coincides with the camera centre
    """
    v = view_pose.world_to_camera(np.asarray(point, dtype=np.float64).reshape(1, 3))[0]
    norm = np.linalg.norm(v)
    if norm <= MIN_DIRECTION_NORM:
        raise DegenerateDirectionError(f"degenerate direction: point {np.asarray(point).tolist()} is at the camera centre")
    v = v / norm
    theta = float(np.arccos(np.clip(v[2], -1.0, 1.0)))
    phi = float(np.arctan2(v[1], v[0]))
    if phi == -np.pi:
        phi = np.pi
    return v, theta, phi


def direction_vectors(means: np.ndarray, view_pose: Pose, frame: str = "camera") -> np.ndarray:
    """Un-normalized viewing vectors: camera-frame point (frame='camera') or mean - centre (frame='world')."""
    means = np.asarray(means, dtype=np.float64)
    if frame == "camera":
        return view_pose.world_to_camera(means)
    if frame == "world":
        return means - view_pose.camera_center
    raise ValueError(f"Unknown SH frame '{frame}'")


def normalize_directions(vectors: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    norms = np.linalg.norm(vectors, axis=-1, keepdims=True)
    return vectors / np.maximum(norms, MIN_DIRECTION_NORM), norms[..., 0]


def eval_sh_colors(sh: np.ndarray, dirs: np.ndarray, degree: int = 2) -> Tuple[np.ndarray, np.ndarray]:
    """
    Batched color evaluation.

    Args:
        sh: (N, 3, 9) coefficients
        dirs: (N, 3) unit directions
        degree: highest SH band used (coefficients above it are ignored)

    Returns:
        (colors (N, 3) clamped at zero, unclamped values (N, 3))
    """
    basis = sh_basis(dirs)
    basis[..., active_coefficients(degree):] = 0.0
    raw = np.einsum("ncj,nj->nc", np.asarray(sh, dtype=np.float64), basis) + 0.5
    return np.maximum(raw, 0.0), raw


def eval_sh_color(sh: np.ndarray, direction: np.ndarray, degree: int = 2) -> np.ndarray:
    """Color of one 3x9 coefficient set seen along a unit direction."""
    sh = np.asarray(sh, dtype=np.float64).reshape(1, 3, SH_COEFFS)
    colors, _ = eval_sh_colors(sh, np.asarray(direction, dtype=np.float64).reshape(1, 3), degree)
    return colors[0]


def eval_sh_colors_backward(
    sh: np.ndarray, dirs: np.ndarray, dir_norms: np.ndarray, raw: np.ndarray, grad_colors: np.ndarray, degree: int = 2
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Gradients of eval_sh_colors.

    Returns:
        (d/d sh (N, 3, 9), d/d un-normalized direction vector (N, 3))
    """
    g = np.where(raw > 0.0, grad_colors, 0.0)
    basis = sh_basis(dirs)
    n_active = active_coefficients(degree)
    basis[..., n_active:] = 0.0
    grad_sh = g[:, :, None] * basis[:, None, :]

    jac = sh_basis_jacobian(dirs)
    jac[:, n_active:, :] = 0.0
    # d color_c / d dir = sum_j k_cj dY_j/d dir
    grad_dir = np.einsum("nc,ncj,nji->ni", g, sh, jac)

    # through normalization: (I - d d^T) / |v|
    radial = np.sum(grad_dir * dirs, axis=-1, keepdims=True)
    grad_vec = (grad_dir - radial * dirs) / np.maximum(dir_norms, MIN_DIRECTION_NORM)[:, None]
    return grad_sh, grad_vec
