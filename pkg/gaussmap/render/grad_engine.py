"""
Photometric loss and its analytic gradient w.r.t. every Gaussian parameter.

The backward pass replays each tile of the retained forward state (projection,
sorted tile lists, settings) and chains through blending, the 2D conic, EWA
projection, the covariance factors and the SH color. Tiles are reduced in a
fixed order so results are reproducible bit for bit.
"""

from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from gaussmap.errors import DimensionMismatchError, StaleForwardStateError
from gaussmap.render.sh_radiance import eval_sh_colors_backward
from gaussmap.render.splat_render import RenderOutput, blend_tile, tile_pixels
from gaussmap.render.ssim import ssim_with_grad
from gaussmap.scene_core import SH_COEFFS, GaussianScene, ImageBuffer, View, quaternion_to_matrix

# below this remaining transmittance the suffix color falls back to the background
_TINY_TRANSMITTANCE = 1e-12


def _as_array(image) -> np.ndarray:
    return image.rgb if isinstance(image, ImageBuffer) else np.asarray(image, dtype=np.float64)


def loss_and_grad(rendered, reference, lambda_dssim: float = 0.2, l2_loss: bool = False, need_grad: bool = True) -> Tuple[float, Optional[np.ndarray]]:
    """
    (1 - lambda) * mean|I_hat - I| + lambda * (1 - SSIM(I_hat, I)) / 2, and its
    gradient w.r.t. the rendered image. The mean runs over pixels and channels;
    l2_loss swaps the first term for the mean squared error.

    Raises:
        DimensionMismatchError: images differ in size
    """
    x = _as_array(rendered)
    y = _as_array(reference)
    if x.shape != y.shape:
        raise DimensionMismatchError(f"Rendered image {x.shape} does not match reference {y.shape}")

    diff = x - y
    n = diff.size
    if l2_loss:
        data = float(np.mean(diff * diff))
        grad = 2.0 * diff / n
    else:
        data = float(np.mean(np.abs(diff)))
        grad = np.sign(diff) / n

    value = (1.0 - lambda_dssim) * data
    grad = (1.0 - lambda_dssim) * grad
    if lambda_dssim > 0.0:
        s, ds = ssim_with_grad(x, y, need_grad=need_grad)
        value += lambda_dssim * (1.0 - s) / 2.0
        if need_grad:
            grad = grad - 0.5 * lambda_dssim * ds
    return value, grad if need_grad else None


def loss(rendered, reference, lambda_dssim: float = 0.2, l2_loss: bool = False) -> float:
    value, _ = loss_and_grad(rendered, reference, lambda_dssim, l2_loss, need_grad=False)
    return value


@dataclass(eq=False)
class ParamGrads:
    """Per-Gaussian gradients, rows aligned with the scene. `screen` is d loss / d pixel centre."""

    means: np.ndarray
    scales: np.ndarray
    rotations: np.ndarray
    opacity_logits: np.ndarray
    sh: np.ndarray
    screen: np.ndarray
    visible: np.ndarray
    loss: float = 0.0

    @classmethod
    def zeros(cls, n: int) -> "ParamGrads":
        return cls(
            means=np.zeros((n, 3)),
            scales=np.zeros((n, 3)),
            rotations=np.zeros((n, 4)),
            opacity_logits=np.zeros(n),
            sh=np.zeros((n, 3, SH_COEFFS)),
            screen=np.zeros((n, 2)),
            visible=np.zeros(n, dtype=bool),
        )

    def groups(self) -> dict:
        return {
            "means": self.means,
            "scales": self.scales,
            "rotations": self.rotations,
            "opacity_logits": self.opacity_logits,
            "sh": self.sh,
        }

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(g)) for g in self.groups().values())


def rotation_matrix_grad_to_quaternion(rotations: np.ndarray, grad_R: np.ndarray) -> np.ndarray:
    """Chain d loss / d R through R(q / |q|); the result is tangent to the unit sphere at q."""
    q = np.asarray(rotations, dtype=np.float64)
    norm = np.linalg.norm(q, axis=1, keepdims=True)
    qn = q / norm
    w, x, y, z = qn[:, 0], qn[:, 1], qn[:, 2], qn[:, 3]
    G = grad_R

    gw = 2.0 * (-z * G[:, 0, 1] + y * G[:, 0, 2] + z * G[:, 1, 0] - x * G[:, 1, 2] - y * G[:, 2, 0] + x * G[:, 2, 1])
    gx = 2.0 * (
        y * G[:, 0, 1] + z * G[:, 0, 2] + y * G[:, 1, 0] - 2.0 * x * G[:, 1, 1]
        - w * G[:, 1, 2] + z * G[:, 2, 0] + w * G[:, 2, 1] - 2.0 * x * G[:, 2, 2]
    )
    gy = 2.0 * (
        -2.0 * y * G[:, 0, 0] + x * G[:, 0, 1] + w * G[:, 0, 2] + x * G[:, 1, 0]
        + z * G[:, 1, 2] - w * G[:, 2, 0] + z * G[:, 2, 1] - 2.0 * y * G[:, 2, 2]
    )
    gz = 2.0 * (
        -2.0 * z * G[:, 0, 0] - w * G[:, 0, 1] + x * G[:, 0, 2] + w * G[:, 1, 0]
        - 2.0 * z * G[:, 1, 1] + y * G[:, 1, 2] + x * G[:, 2, 0] + y * G[:, 2, 1]
    )
    g_hat = np.stack([gw, gx, gy, gz], axis=1)
    radial = np.sum(g_hat * qn, axis=1, keepdims=True)
    return (g_hat - radial * qn) / norm


def _blend_backward(output: RenderOutput, grad_image: np.ndarray):
    """d loss / d (pixel centre, conic, opacity, color) per projected splat."""
    proj = output.projection
    settings = output.settings
    height, width = grad_image.shape[:2]
    background = np.asarray(settings.background, dtype=np.float64)

    m = len(proj)
    g_center = np.zeros((m, 2))
    g_conic = np.zeros((m, 2, 2))
    g_opacity = np.zeros(m)
    g_color = np.zeros((m, 3))

    for tile, members in enumerate(output.tile_lists):
        if len(members) == 0:
            continue
        xs, ys = tile_pixels(tile, width, height, settings.tile_size)
        state = blend_tile(proj, members, xs, ys, settings)
        d_pixel = grad_image[ys, xs]
        colors = proj.colors[members]

        weights = state.alpha * state.t_before
        weighted = weights[:, :, None] * colors[None, :, :]
        behind = weighted.sum(axis=1, keepdims=True) - np.cumsum(weighted, axis=1)
        suffix = behind + state.t_final[:, None, None] * background

        t_after = state.t_before * (1.0 - state.alpha)
        safe = t_after > _TINY_TRANSMITTANCE
        remainder = np.where(safe[:, :, None], suffix / np.where(safe, t_after, 1.0)[:, :, None], background)

        d_alpha = state.t_before * np.einsum("pkc,pc->pk", colors[None, :, :] - remainder, d_pixel)
        d_alpha = np.where(state.alpha > 0.0, d_alpha, 0.0)

        d_power = d_alpha * proj.opacities[members][None, :] * state.gauss
        conics = proj.conics[members]
        a, b, c = conics[:, 0, 0], conics[:, 0, 1], conics[:, 1, 1]
        dx, dy = state.dx, state.dy

        tile_center = np.stack([(d_power * (a * dx + b * dy)).sum(axis=0), (d_power * (b * dx + c * dy)).sum(axis=0)], axis=1)
        tile_conic = np.empty((len(members), 2, 2))
        tile_conic[:, 0, 0] = -0.5 * (d_power * dx * dx).sum(axis=0)
        tile_conic[:, 0, 1] = tile_conic[:, 1, 0] = -0.5 * (d_power * dx * dy).sum(axis=0)
        tile_conic[:, 1, 1] = -0.5 * (d_power * dy * dy).sum(axis=0)

        np.add.at(g_center, members, tile_center)
        np.add.at(g_conic, members, tile_conic)
        np.add.at(g_opacity, members, (d_alpha * state.gauss).sum(axis=0))
        np.add.at(g_color, members, weights.T @ d_pixel)

    return g_center, g_conic, g_opacity, g_color


def backward_from_image_grad(output: RenderOutput, scene: GaussianScene, view: View, grad_image: np.ndarray) -> ParamGrads:
    """
    Chain an image-space gradient back to the scene parameters.

    Raises:
        StaleForwardStateError: `scene` is not the instance that produced `output`
    """
    if output.scene_token != scene.token or output.scene_size != len(scene):
        raise StaleForwardStateError("stale forward state: the scene changed since it was rendered; render again before backward")

    grads = ParamGrads.zeros(len(scene))
    proj = output.projection
    if len(proj) == 0:
        return grads

    settings = output.settings
    intr = view.intrinsics
    ids = proj.ids
    g_center, g_conic, g_opacity, g_color = _blend_backward(output, np.asarray(grad_image, dtype=np.float64))

    # conic = inverse(cov2d)
    Q = proj.conics
    g_cov2d = -np.einsum("mij,mjk,mkl->mil", Q, g_conic, Q)

    # cov2d = M cov3d M^T + lowpass I, M = J W
    W = proj.world_to_camera
    J = proj.jacobians
    Mx = np.einsum("mij,jk->mik", J, W)
    g_cov3d = np.einsum("mji,mjk,mkl->mil", Mx, g_cov2d, Mx)
    g_M = 2.0 * np.einsum("mij,mjk,mkl->mil", g_cov2d, Mx, proj.cov3d)
    g_J = np.einsum("mij,kj->mik", g_M, W)

    t = proj.cam_means
    tx, ty, tz = t[:, 0], t[:, 1], t[:, 2]
    fx, fy = intr.fx, intr.fy
    inv_z2 = 1.0 / (tz * tz)
    g_t = np.zeros_like(t)
    g_t[:, 0] = g_J[:, 0, 2] * (-fx * inv_z2) + g_center[:, 0] * fx / tz
    g_t[:, 1] = g_J[:, 1, 2] * (-fy * inv_z2) + g_center[:, 1] * fy / tz
    g_t[:, 2] = (
        g_J[:, 0, 0] * (-fx * inv_z2)
        + g_J[:, 0, 2] * (2.0 * fx * tx * inv_z2 / tz)
        + g_J[:, 1, 1] * (-fy * inv_z2)
        + g_J[:, 1, 2] * (2.0 * fy * ty * inv_z2 / tz)
        - g_center[:, 0] * fx * tx * inv_z2
        - g_center[:, 1] * fy * ty * inv_z2
    )

    g_sh, g_dir_vec = eval_sh_colors_backward(scene.sh[ids], proj.dirs, proj.dir_norms, proj.raw_colors, g_color, settings.max_sh_degree)
    if settings.sh_frame == "camera":
        g_t = g_t + g_dir_vec
        g_mean = g_t @ W
    else:
        g_mean = g_t @ W + g_dir_vec

    # cov3d = R diag(exp(2 s)) R^T
    R = quaternion_to_matrix(scene.rotations[ids])
    variances = np.exp(2.0 * scene.scales[ids])
    g_cov3d = 0.5 * (g_cov3d + np.swapaxes(g_cov3d, 1, 2))
    local = np.einsum("mji,mjk,mkl->mil", R, g_cov3d, R)
    g_scale = 2.0 * variances * np.diagonal(local, axis1=1, axis2=2)
    g_R = 2.0 * np.einsum("mij,mjk->mik", g_cov3d, R) * variances[:, None, :]
    g_rot = rotation_matrix_grad_to_quaternion(scene.rotations[ids], g_R)

    sigma = proj.opacities
    grads.means[ids] = g_mean
    grads.scales[ids] = g_scale
    grads.rotations[ids] = g_rot
    grads.opacity_logits[ids] = g_opacity * sigma * (1.0 - sigma)
    grads.sh[ids] = g_sh
    grads.screen[ids] = g_center
    grads.visible[ids] = True
    return grads


def backward(output: RenderOutput, reference, lambda_dssim: float, scene: GaussianScene, view: View, l2_loss: bool = False) -> ParamGrads:
    """Loss of `output` against `reference` and its gradient w.r.t. `scene` (loss stored on the result)."""
    value, grad_image = loss_and_grad(output.image, reference, lambda_dssim, l2_loss)
    grads = backward_from_image_grad(output, scene, view, grad_image)
    grads.loss = value
    return grads


@dataclass(eq=False)
class ScreenGradAccumulator:
    """
    Running mean of |d loss / d centre| in normalized device units (pixels scaled
    by W/2, H/2) over the views in which each Gaussian was visible.
    """

    norm_sum: np.ndarray = field(default_factory=lambda: np.zeros(0))
    counts: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    @classmethod
    def for_scene(cls, n: int) -> "ScreenGradAccumulator":
        return cls(np.zeros(n), np.zeros(n, dtype=np.int64))

    def add(self, grads: ParamGrads, width: int, height: int) -> None:
        ndc = grads.screen * np.array([width / 2.0, height / 2.0])
        norms = np.linalg.norm(ndc, axis=1)
        self.norm_sum[grads.visible] += norms[grads.visible]
        self.counts[grads.visible] += 1

    def mean(self) -> np.ndarray:
        return np.where(self.counts > 0, self.norm_sum / np.maximum(self.counts, 1), 0.0)

    def reset(self, n: Optional[int] = None) -> None:
        n = len(self.norm_sum) if n is None else n
        self.norm_sum = np.zeros(n)
        self.counts = np.zeros(n, dtype=np.int64)
