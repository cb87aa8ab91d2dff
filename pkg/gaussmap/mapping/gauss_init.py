"""
Initial surface Gaussians from the voxel map.

Planar leaves seed one Gaussian per retained point with the leaf covariance
rescaled by a density factor alpha, so the per-point footprints tile the leaf.
Sparse and non-planar terminal leaves seed small isotropic Gaussians.
"""

from dataclasses import asdict, dataclass
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial import cKDTree

from gaussmap.mapping.voxel_map import PLANAR, VoxelKey, VoxelNode, VoxelParams, build_voxel_map
from gaussmap.scene_core import (
    EPS_EIG,
    SH_COEFFS,
    Y00_NORM,
    GaussianScene,
    PointCloud,
    View,
    factors_from_covariance,
    logit,
)

IDENTITY_QUATERNION = np.array([1.0, 0.0, 0.0, 0.0])


@dataclass(frozen=True)
class InitParams:
    points_per_voxel: int = 50
    opacity_init: float = 0.9
    alpha_min: float = 1e-4
    alpha_max: float = 100.0
    near_clip: float = 0.05

    @classmethod
    def from_config(cls, cfg) -> "InitParams":
        return cls(cfg.points_per_voxel, cfg.opacity_init, cfg.alpha_min, cfg.alpha_max, cfg.near_clip)


@dataclass(frozen=True)
class InitReport:
    gaussians_created: int
    planar_count: int
    sparse_count: int
    mean_alpha: float
    points_budget: int
    planar_leaves: int = 0
    sparse_leaves: int = 0
    points_dropped: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def density_alpha(node: VoxelNode, retained: int, params: InitParams) -> float:
    """Scale factor making `retained` one-sigma ellipses cover the leaf face (edge^2)."""
    spread = np.sqrt(node.plane.lambda_mid * node.plane.lambda_max)
    if spread <= 0.0:
        return params.alpha_max
    alpha = node.edge ** 2 / (np.pi * retained * spread)
    return float(np.clip(alpha, params.alpha_min, params.alpha_max))


def _retained_indices(node: VoxelNode, budget: int, rng: np.random.Generator) -> np.ndarray:
    if len(node.point_indices) <= budget:
        return node.point_indices
    return np.sort(rng.choice(node.point_indices, size=budget, replace=False))


def seed_from_voxel(node: VoxelNode, points: np.ndarray, params: InitParams, rng: np.random.Generator) -> Tuple[GaussianScene, Optional[float]]:
    """
    Gaussians for one leaf, one per retained point. Colors are neutral (dc = 0)
    until seed_colors runs.

    Returns:
        (scene chunk, alpha used or None for isotropic leaves)
    """
    kept = _retained_indices(node, params.points_per_voxel, rng)
    n = len(kept)
    means = points[kept]

    if node.kind == PLANAR:
        alpha = density_alpha(node, n, params)
        log_scale, rotation = factors_from_covariance(alpha * node.stats.scatter.to_matrix(), EPS_EIG)
        scales = np.broadcast_to(log_scale, (n, 3))
        rotations = np.broadcast_to(rotation, (n, 4))
    else:
        alpha = None
        scales = np.full((n, 3), np.log(node.edge / 2.0))
        rotations = np.broadcast_to(IDENTITY_QUATERNION, (n, 4))

    scene = GaussianScene(
        means=means,
        scales=scales,
        rotations=rotations,
        opacity_logits=np.full(n, logit(params.opacity_init)),
        sh=np.zeros((n, 3, SH_COEFFS)),
    )
    return scene, alpha


def seed_colors(scene: GaussianScene, views: Sequence[View], opacity_init: Optional[float] = 0.9, near_clip: float = 0.05) -> GaussianScene:
    """
    Set the SH DC term from the pixel each Gaussian projects to in the first view
    that sees it (in front of the camera, inside the image). Unseen Gaussians get
    dc = 0 (mid-gray). Higher-order coefficients are zeroed; opacity is reset to
    opacity_init unless it is None.
    """
    n = len(scene)
    dc = np.zeros((n, 3))
    assigned = np.zeros(n, dtype=bool)

    for view in views:
        if assigned.all():
            break
        intr = view.intrinsics
        cam = view.pose.world_to_camera(scene.means)
        z = cam[:, 2]
        front = z > near_clip
        safe_z = np.where(front, z, 1.0)
        px = np.rint(intr.fx * cam[:, 0] / safe_z + intr.cx)
        py = np.rint(intr.fy * cam[:, 1] / safe_z + intr.cy)
        inside = front & (px >= 0) & (px < intr.width) & (py >= 0) & (py < intr.height) & ~assigned
        if not np.any(inside):
            continue
        rgb = view.image.rgb[py[inside].astype(np.int64), px[inside].astype(np.int64)]
        dc[inside] = (rgb - 0.5) / Y00_NORM
        assigned |= inside

    sh = np.zeros((n, 3, SH_COEFFS))
    sh[:, :, 0] = dc
    opacity_logits = scene.opacity_logits if opacity_init is None else np.full(n, logit(opacity_init))
    return scene.with_params(sh=sh, opacity_logits=opacity_logits)


def initialize_scene(
    cloud: PointCloud,
    views: Sequence[View],
    voxel_params: Optional[VoxelParams] = None,
    init_params: Optional[InitParams] = None,
    seed: int = 0,
) -> Tuple[GaussianScene, InitReport, Dict[VoxelKey, VoxelNode]]:
    """
    Build the voxel map, seed Gaussians leaf by leaf and color them from the views.

    Returns:
        (scene, report, voxel leaves)
    """
    voxel_params = voxel_params or VoxelParams()
    init_params = init_params or InitParams()
    rng = np.random.default_rng(seed)

    leaves = build_voxel_map(cloud, voxel_params)
    chunks = []
    alphas = []
    planar_count = sparse_count = planar_leaves = sparse_leaves = 0
    for node in leaves.values():
        chunk, alpha = seed_from_voxel(node, cloud.points, init_params, rng)
        chunks.append(chunk)
        if alpha is None:
            sparse_count += len(chunk)
            sparse_leaves += 1
        else:
            planar_count += len(chunk)
            planar_leaves += 1
            alphas.append(alpha)

    scene = GaussianScene.stack(chunks)

    if views:
        scene = seed_colors(scene, views, init_params.opacity_init, init_params.near_clip)

    report = InitReport(
        gaussians_created=len(scene),
        planar_count=planar_count,
        sparse_count=sparse_count,
        mean_alpha=float(np.mean(alphas)) if alphas else 0.0,
        points_budget=init_params.points_per_voxel,
        planar_leaves=planar_leaves,
        sparse_leaves=sparse_leaves,
        points_dropped=len(cloud) - len(scene),
    )
    return scene, report, leaves


def random_init(cloud: PointCloud, count: int, views: Sequence[View], seed: int = 0, opacity_init: float = 0.1, near_clip: float = 0.05) -> GaussianScene:
    """
    Vision-only style baseline: `count` Gaussians uniform in the cloud's bounding box,
    isotropic with scale from the mean squared distance to the 3 nearest neighbours.
    """
    if count <= 0 or len(cloud) == 0:
        return GaussianScene.empty()
    rng = np.random.default_rng(seed)
    lo, hi = cloud.points.min(axis=0), cloud.points.max(axis=0)
    means = rng.uniform(lo, hi, size=(count, 3))

    k = min(4, count)
    if k > 1:
        distances, _ = cKDTree(means).query(means, k=k)
        mean_sq = np.mean(distances[:, 1:] ** 2, axis=1)
    else:
        mean_sq = np.array([np.sum((hi - lo) ** 2) / 4.0])
    radius = np.sqrt(np.maximum(mean_sq, 1e-7))

    scene = GaussianScene(
        means=means,
        scales=np.repeat(np.log(radius)[:, None], 3, axis=1),
        rotations=np.broadcast_to(IDENTITY_QUATERNION, (count, 4)),
        opacity_logits=np.full(count, logit(opacity_init)),
        sh=np.zeros((count, 3, SH_COEFFS)),
    )
    if views:
        scene = seed_colors(scene, views, opacity_init, near_clip)
    return scene
