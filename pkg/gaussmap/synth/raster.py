"""
Flat-shaded ray caster for preset surfaces: each pixel takes the albedo of the
nearest rectangle its ray hits. No splats, no view dependence; used to produce
reference images the Gaussian model can only approximate.
"""

from typing import Sequence, Tuple

import numpy as np

from gaussmap.scene_core import CameraIntrinsics, ImageBuffer, Pose
from gaussmap.synth.presets import SurfacePatch

_MIN_HIT_DISTANCE = 1e-6


def pixel_rays(pose: Pose, intrinsics: CameraIntrinsics) -> Tuple[np.ndarray, np.ndarray]:
    """World-frame ray origin (3,) and directions (H*W, 3) through integer pixel coordinates."""
    ys, xs = np.mgrid[0 : intrinsics.height, 0 : intrinsics.width]
    cam = np.stack(
        [(xs.ravel() - intrinsics.cx) / intrinsics.fx, (ys.ravel() - intrinsics.cy) / intrinsics.fy, np.ones(xs.size)],
        axis=1,
    )
    return pose.camera_center, cam @ pose.rotation_matrix.T


def rasterize_flat(
    surfaces: Sequence[SurfacePatch],
    pose: Pose,
    intrinsics: CameraIntrinsics,
    background: Sequence[float] = (0.0, 0.0, 0.0),
) -> ImageBuffer:
    origin, dirs = pixel_rays(pose, intrinsics)
    nearest = np.full(len(dirs), np.inf)
    colors = np.tile(np.asarray(background, dtype=np.float64), (len(dirs), 1))

    for patch in surfaces:
        centre, u, v, normal = patch.frame
        denom = dirs @ normal
        with np.errstate(divide="ignore", invalid="ignore"):
            t = ((centre - origin) @ normal) / denom
            hit = origin + t[:, None] * dirs
            local = np.stack([(hit - centre) @ u, (hit - centre) @ v], axis=1)
        inside = (
            (np.abs(denom) > 0)
            & (t > _MIN_HIT_DISTANCE)
            & (np.abs(local[:, 0]) <= patch.half_u)
            & (np.abs(local[:, 1]) <= patch.half_v)
            & (t < nearest)
        )
        if np.any(inside):
            nearest[inside] = t[inside]
            colors[inside] = patch.albedo_at(local[inside])

    return ImageBuffer(colors.reshape(intrinsics.height, intrinsics.width, 3))
