"""
Size-adaptive voxel map over a world-frame LiDAR cloud.

Root cells of edge `root_size` are split octree-style while their points are
not planar enough (eta >= eta_threshold) and depth < max_depth. Only leaves are
returned; every input point lands in exactly one leaf.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from gaussmap.errors import InsufficientSupportError
from gaussmap.scene_core import PointCloud, SymMat3

PathLike = Union[str, Path]

PLANAR = "planar"
SPARSE = "sparse"
TERMINAL = "terminal"

# Eigenvalue sign noise below this is treated as zero
_EIG_FLOOR = 1e-12
_SIGN_TIE = 1e-12


@dataclass(frozen=True)
class VoxelParams:
    root_size: float = 1.0
    max_depth: int = 3
    eta_threshold: float = 0.05
    min_points: int = 10
    sensor_origin: Optional[Tuple[float, float, float]] = None

    def __post_init__(self):
        if self.root_size <= 0:
            raise ValueError(f"root_size must be > 0, got {self.root_size}")
        if self.max_depth < 0:
            raise ValueError(f"max_depth must be >= 0, got {self.max_depth}")
        if self.min_points < 4:
            raise ValueError(f"min_points must be >= 4, got {self.min_points}")

    @classmethod
    def from_config(cls, cfg) -> "VoxelParams":
        return cls(cfg.root_size, cfg.max_depth, cfg.eta_threshold, cfg.min_points, cfg.sensor_origin)


@dataclass(frozen=True, order=True)
class VoxelKey:
    depth: int
    i: int
    j: int
    k: int

    def edge(self, root_size: float) -> float:
        return root_size / (2 ** self.depth)

    def bounds(self, root_size: float) -> Tuple[np.ndarray, np.ndarray]:
        edge = self.edge(root_size)
        lo = np.array([self.i, self.j, self.k], dtype=np.float64) * edge
        return lo, lo + edge

    def child(self, a: int, b: int, c: int) -> "VoxelKey":
        return VoxelKey(self.depth + 1, 2 * self.i + a, 2 * self.j + b, 2 * self.k + c)


@dataclass(frozen=True, eq=False)
class VoxelStats:
    """Point count, mean and scatter sum M2 = sum (p - mean)(p - mean)^T."""

    count: int
    mean: np.ndarray
    m2: np.ndarray

    @classmethod
    def empty(cls) -> "VoxelStats":
        return cls(0, np.zeros(3), np.zeros((3, 3)))

    @classmethod
    def from_points(cls, points: np.ndarray) -> "VoxelStats":
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        if len(pts) == 0:
            return cls.empty()
        mean = pts.mean(axis=0)
        centered = pts - mean
        return cls(len(pts), mean, centered.T @ centered)

    @property
    def scatter(self) -> SymMat3:
        """Covariance of the inserted points (M2 / N)."""
        if self.count == 0:
            return SymMat3.from_matrix(np.zeros((3, 3)))
        cov = self.m2 / self.count
        return SymMat3.from_matrix(0.5 * (cov + cov.T))


def insert_point(stats: VoxelStats, point: np.ndarray) -> VoxelStats:
    """Welford update; matches VoxelStats.from_points over the same points."""
    p = np.asarray(point, dtype=np.float64).reshape(3)
    if not np.all(np.isfinite(p)):
        raise ValueError("insert_point needs a finite point")
    n = stats.count + 1
    delta = p - stats.mean
    mean = stats.mean + delta / n
    m2 = stats.m2 + np.outer(delta, p - mean)
    return VoxelStats(n, mean, 0.5 * (m2 + m2.T))


@dataclass(frozen=True, eq=False)
class PlaneStats:
    eigenvalues: np.ndarray  # ascending: lambda_min, lambda_mid, lambda_max
    eigenvectors: np.ndarray  # columns match eigenvalues; column 0 is the normal
    normal: np.ndarray
    eta: float

    @property
    def lambda_min(self) -> float:
        return float(self.eigenvalues[0])

    @property
    def lambda_mid(self) -> float:
        return float(self.eigenvalues[1])

    @property
    def lambda_max(self) -> float:
        return float(self.eigenvalues[2])


def planarity(eigenvalues: np.ndarray) -> float:
    """lambda_min / ||lambda||; a point-like voxel (all zero) counts as isotropic."""
    lam = np.asarray(eigenvalues, dtype=np.float64)
    norm = np.sqrt(np.sum(lam * lam))
    if norm == 0.0:
        return 1.0 / np.sqrt(3.0)
    return float(lam[0] / norm)


def voxel_plane_stats(stats: VoxelStats, min_points: int = 10, sensor_origin: Optional[np.ndarray] = None) -> PlaneStats:
    """
    Eigen-analysis of a voxel's scatter.

    The normal is oriented toward `sensor_origin` (toward +z when unknown). When that
    test is a tie the first non-zero component is made positive.

    Raises:
        InsufficientSupportError: fewer than min_points points
    """
    if stats.count < min_points:
        raise InsufficientSupportError(f"insufficient support: {stats.count} points, need {min_points}")

    cov = stats.scatter.to_matrix()
    if not np.all(np.isfinite(cov)):
        raise ValueError("voxel scatter is not finite")

    eigvals, eigvecs = np.linalg.eigh(cov)
    eigvals = np.where(np.abs(eigvals) < _EIG_FLOOR, 0.0, eigvals)
    eigvals = np.maximum(eigvals, 0.0)

    normal = eigvecs[:, 0].copy()
    toward = np.array([0.0, 0.0, 1.0]) if sensor_origin is None else np.asarray(sensor_origin, dtype=np.float64) - stats.mean
    facing = float(normal @ toward)
    if abs(facing) <= _SIGN_TIE:
        facing = normal[np.argmax(np.abs(normal) > _SIGN_TIE)]
    if facing < 0:
        normal = -normal
    eigvecs[:, 0] = normal
    if np.linalg.det(eigvecs) < 0:
        eigvecs[:, 2] = -eigvecs[:, 2]

    return PlaneStats(eigvals, eigvecs, normal, planarity(eigvals))


@dataclass(frozen=True, eq=False)
class VoxelNode:
    key: VoxelKey
    stats: VoxelStats
    kind: str
    point_indices: np.ndarray
    edge: float
    plane: Optional[PlaneStats] = None

    @property
    def is_planar(self) -> bool:
        return self.kind == PLANAR


def _child_keys(points: np.ndarray, key: VoxelKey, root_size: float) -> np.ndarray:
    """Child offsets (a, b, c) in {0, 1}^3 for points of `key`, robust to boundary rounding."""
    child_edge = key.edge(root_size) / 2.0
    coords = np.floor(points / child_edge).astype(np.int64)
    base = 2 * np.array([key.i, key.j, key.k], dtype=np.int64)
    return np.clip(coords - base, 0, 1)


def _split(cloud_points: np.ndarray, key: VoxelKey, indices: np.ndarray, params: VoxelParams, leaves: Dict[VoxelKey, VoxelNode]) -> None:
    points = cloud_points[indices]
    stats = VoxelStats.from_points(points)
    edge = key.edge(params.root_size)

    if stats.count < params.min_points:
        leaves[key] = VoxelNode(key, stats, SPARSE, indices, edge)
        return

    plane = voxel_plane_stats(stats, params.min_points, params.sensor_origin)
    if plane.eta < params.eta_threshold:
        leaves[key] = VoxelNode(key, stats, PLANAR, indices, edge, plane)
        return
    if key.depth >= params.max_depth:
        leaves[key] = VoxelNode(key, stats, TERMINAL, indices, edge, plane)
        return

    offsets = _child_keys(points, key, params.root_size)
    codes = offsets[:, 0] * 4 + offsets[:, 1] * 2 + offsets[:, 2]
    for code in np.unique(codes):
        a, b, c = (code >> 2) & 1, (code >> 1) & 1, code & 1
        _split(cloud_points, key.child(int(a), int(b), int(c)), indices[codes == code], params, leaves)


def build_voxel_map(cloud: PointCloud, params: Optional[VoxelParams] = None) -> Dict[VoxelKey, VoxelNode]:
    """
    Partition the cloud into adaptive voxels.

    Returns:
        Leaves keyed by VoxelKey, in sorted key order. Point counts sum to len(cloud).
    """
    params = params or VoxelParams()
    points = cloud.points
    if len(points) == 0:
        return {}

    root_coords = np.floor(points / params.root_size).astype(np.int64)
    roots, inverse = np.unique(root_coords, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)

    leaves: Dict[VoxelKey, VoxelNode] = {}
    for r, (i, j, k) in enumerate(roots):
        _split(points, VoxelKey(0, int(i), int(j), int(k)), np.flatnonzero(inverse == r), params, leaves)
    return dict(sorted(leaves.items()))


def summarize_voxel_map(leaves: Dict[VoxelKey, VoxelNode]) -> dict:
    stats = {"leaves": len(leaves), PLANAR: 0, SPARSE: 0, TERMINAL: 0, "points": 0, "max_depth": 0}
    for node in leaves.values():
        stats[node.kind] += 1
        stats["points"] += node.stats.count
        stats["max_depth"] = max(stats["max_depth"], node.key.depth)
    return stats


def dump_voxel_map(leaves: Dict[VoxelKey, VoxelNode], path: PathLike) -> Path:
    """One line per leaf: depth i,j,k N eta lambda_min lambda_mid lambda_max nx ny nz (nan without plane stats)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines: List[str] = ["# depth key N eta lambda_min lambda_mid lambda_max nx ny nz"]
    for key, node in leaves.items():
        if node.plane is not None:
            values = [node.plane.eta, *node.plane.eigenvalues, *node.plane.normal]
        else:
            values = [float("nan")] * 7
        numbers = " ".join(f"{v:.12g}" for v in values)
        lines.append(f"{key.depth} {key.i},{key.j},{key.k} {node.stats.count} {numbers}")
    path.write_text("\n".join(lines) + "\n")
    return path
