"""
Image metrics (PSNR, SSIM) and point-cloud structure metrics (Chamfer, EMD, F-score).
"""

import sys
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist

from gaussmap.errors import DimensionMismatchError, EmptyCloudError
from gaussmap.render.ssim import ssim as ssim_map_mean
from gaussmap.scene_core import GaussianScene, ImageBuffer, PointCloud, quaternion_to_matrix

_PROJECT_ROOT = Path(__file__).resolve().parents[2]
if str(_PROJECT_ROOT) not in sys.path:
    sys.path.insert(0, str(_PROJECT_ROOT))

import config

PSNR_CAP_DB = 99.0
_MSE_FLOOR = 1e-10


def _pixels(image) -> np.ndarray:
    return image.rgb if isinstance(image, ImageBuffer) else np.asarray(image, dtype=np.float64)


def psnr(a, b) -> float:
    """10 log10(1 / MSE) over all channels, capped at 99 dB."""
    x, y = _pixels(a), _pixels(b)
    if x.shape != y.shape:
        raise DimensionMismatchError(f"PSNR inputs differ in shape: {x.shape} vs {y.shape}")
    mse = float(np.mean((x - y) ** 2))
    if mse < _MSE_FLOOR:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 10.0 * np.log10(1.0 / mse))


def ssim(a, b) -> float:
    return ssim_map_mean(_pixels(a), _pixels(b))


def _points(cloud, name: str) -> np.ndarray:
    points = cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=np.float64).reshape(-1, 3)
    if len(points) == 0:
        raise EmptyCloudError(f"{name} point cloud is empty")
    return points


def nearest_distances(query: np.ndarray, reference: np.ndarray) -> np.ndarray:
    distances, _ = cKDTree(reference).query(query, k=1)
    return distances


def chamfer(pred, gt) -> float:
    """0.5 * (mean nearest distance pred->gt + mean nearest distance gt->pred), in meters."""
    p, g = _points(pred, "predicted"), _points(gt, "ground-truth")
    return 0.5 * (float(nearest_distances(p, g).mean()) + float(nearest_distances(g, p).mean()))


def fscore(pred, gt, tau: Optional[float] = None) -> float:
    """Harmonic mean of precision (pred within tau of gt) and recall (gt within tau of pred)."""
    tau = config.FSCORE_TAU if tau is None else tau
    if tau <= 0:
        raise ValueError(f"tau must be > 0, got {tau}")
    p, g = _points(pred, "predicted"), _points(gt, "ground-truth")
    precision = float(np.mean(nearest_distances(p, g) <= tau))
    recall = float(np.mean(nearest_distances(g, p) <= tau))
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def _subsample(points: np.ndarray, size: int, rng: np.random.Generator) -> np.ndarray:
    if len(points) <= size:
        return points
    return points[np.sort(rng.choice(len(points), size=size, replace=False))]


def emd(pred, gt, max_points: Optional[int] = None, seed: int = 0) -> float:
    """
    Mean distance under the optimal one-to-one assignment. Clouds of unequal size
    are subsampled to the smaller size, then both to max_points (seeded).
    """
    max_points = config.EMD_MAX_POINTS if max_points is None else max_points
    p, g = _points(pred, "predicted"), _points(gt, "ground-truth")
    rng = np.random.default_rng(seed)
    size = min(len(p), len(g), max_points)
    p = _subsample(p, size, rng)
    g = _subsample(g, size, rng)

    cost = cdist(p, g)
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].mean())


def gaussians_to_cloud(scene: GaussianScene, samples_per_gaussian: int = 1, seed: int = 0) -> PointCloud:
    """Gaussian means (samples_per_gaussian == 1) or i.i.d. draws from every Gaussian."""
    if len(scene) == 0:
        raise EmptyCloudError("Cannot sample an empty Gaussian scene")
    if samples_per_gaussian <= 1:
        return PointCloud(scene.means)

    rng = np.random.default_rng(seed)
    R = quaternion_to_matrix(scene.rotations)
    draws = rng.standard_normal((len(scene), samples_per_gaussian, 3)) * np.exp(scene.scales)[:, None, :]
    samples = scene.means[:, None, :] + np.einsum("nij,nsj->nsi", R, draws)
    return PointCloud(samples.reshape(-1, 3))


@dataclass(frozen=True)
class StructureReport:
    cd: float
    emd: float
    fscore: float
    tau: float
    pred_points: int
    gt_points: int

    def to_dict(self) -> dict:
        return asdict(self)


def structure_report(pred, gt, tau: Optional[float] = None, emd_max_points: Optional[int] = None, seed: int = 0) -> StructureReport:
    tau = config.FSCORE_TAU if tau is None else tau
    p, g = _points(pred, "predicted"), _points(gt, "ground-truth")
    return StructureReport(
        cd=chamfer(p, g),
        emd=emd(p, g, emd_max_points, seed),
        fscore=fscore(p, g, tau),
        tau=tau,
        pred_points=len(p),
        gt_points=len(g),
    )
