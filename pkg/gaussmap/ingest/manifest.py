"""
Dataset manifest (TOML) and view assembly.

Example manifest.toml:

    point_cloud = "cloud.ply"
    trajectory = "trajectory.txt"
    images = "images"
    gt_cloud = "gt_cloud.ply"            # optional, for structure metrics
    gt_gaussians = "gt_gaussians.ply"    # optional
    units_scale = 1.0

    [intrinsics]
    fx = 110.85
    fy = 110.85
    cx = 63.5
    cy = 63.5
    width = 128
    height = 128

    [split]
    test_ids = [6, 7, 8]
    extrapolated_ids = [8]               # optional; convex-hull test otherwise

Relative paths resolve against the manifest's directory.
"""

import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

import numpy as np
from scipy.spatial import Delaunay, QhullError

from gaussmap.errors import ManifestError
from gaussmap.ingest.images import load_image
from gaussmap.ingest.ply_io import load_point_cloud
from gaussmap.ingest.trajectory import associate_frames, load_trajectory
from gaussmap.scene_core import CameraIntrinsics, Pose, PointCloud, View

PathLike = Union[str, Path]

MANIFEST_NAME = "manifest.toml"
IMAGE_SUFFIXES = {".png"}
INTERPOLATED = "interpolated"
EXTRAPOLATED = "extrapolated"


@dataclass(frozen=True)
class DatasetManifest:
    root: Path
    point_cloud_path: Path
    trajectory_path: Path
    image_directory: Path
    intrinsics: CameraIntrinsics
    test_ids: Tuple[int, ...] = ()
    extrapolated_ids: Optional[Tuple[int, ...]] = None
    units_scale: float = 1.0
    gt_cloud_path: Optional[Path] = None
    gt_gaussians_path: Optional[Path] = None

    def load_cloud(self) -> PointCloud:
        cloud = load_point_cloud(self.point_cloud_path)
        if self.units_scale == 1.0:
            return cloud
        return PointCloud(cloud.points * self.units_scale, cloud.timestamps)

    def load_gt_cloud(self) -> Optional[PointCloud]:
        if self.gt_cloud_path is None:
            return None
        cloud = load_point_cloud(self.gt_cloud_path)
        return PointCloud(cloud.points * self.units_scale)

    def image_paths(self) -> List[Path]:
        return sorted(p for p in self.image_directory.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)

    def load_views(self) -> List[View]:
        """Every image bound to its pose, ordered by frame id."""
        trajectory = load_trajectory(self.trajectory_path)
        if self.units_scale != 1.0:
            trajectory = [(t, Pose(pose.rotation, pose.translation * self.units_scale)) for t, pose in trajectory]

        views = []
        for binding in associate_frames(self.image_paths(), trajectory):
            image = load_image(binding.image_path)
            if (image.width, image.height) != (self.intrinsics.width, self.intrinsics.height):
                raise ManifestError(
                    f"{binding.image_path.name} is {image.width}x{image.height}, "
                    f"manifest intrinsics say {self.intrinsics.width}x{self.intrinsics.height}"
                )
            views.append(View(binding.pose, self.intrinsics, image, binding.frame_id))

        ids = [v.id for v in views]
        if len(set(ids)) != len(ids):
            raise ManifestError(f"Duplicate frame ids in {self.image_directory}")
        return sorted(views, key=lambda v: v.id)

    def split_views(self, views: Sequence[View]) -> Tuple[List[View], List[View]]:
        """(train, test) by the held-out id list; the two sets are disjoint by construction."""
        held_out = set(self.test_ids)
        train = [v for v in views if v.id not in held_out]
        test = [v for v in views if v.id in held_out]
        return train, test

    def tag_views(self, train_views: Sequence[View], test_views: Sequence[View]) -> Dict[int, str]:
        """'interpolated' / 'extrapolated' per held-out view id."""
        if self.extrapolated_ids is not None:
            extrapolated = set(self.extrapolated_ids)
            return {v.id: EXTRAPOLATED if v.id in extrapolated else INTERPOLATED for v in test_views}
        centres = np.array([v.pose.camera_center for v in train_views]).reshape(-1, 3)
        return {v.id: INTERPOLATED if inside_camera_hull(centres, v.pose.camera_center) else EXTRAPOLATED for v in test_views}


def inside_camera_hull(centres: np.ndarray, point: np.ndarray, rel_tol: float = 1e-6) -> bool:
    """
    True when `point` lies in the convex hull of the training camera centres.

    Degenerate (coplanar / collinear) centre sets are handled in their principal
    subspace; any offset out of that subspace beyond rel_tol * extent counts as outside.
    """
    centres = np.asarray(centres, dtype=np.float64)
    point = np.asarray(point, dtype=np.float64)
    if len(centres) == 0:
        return False

    origin = centres.mean(axis=0)
    offsets = centres - origin
    extent = max(float(np.max(np.linalg.norm(offsets, axis=1))), 1.0)
    tol = rel_tol * extent

    _, singular, vt = np.linalg.svd(offsets, full_matrices=True)
    rank = int(np.sum(singular > tol))

    rel = point - origin
    basis = vt[:rank]
    residual = rel - basis.T @ (basis @ rel)
    if np.linalg.norm(residual) > tol:
        return False
    if rank == 0:
        return True

    local_centres = offsets @ basis.T
    local_point = basis @ rel
    if rank == 1:
        return bool(local_centres.min() - tol <= local_point[0] <= local_centres.max() + tol)

    try:
        hull = Delaunay(local_centres)
    except QhullError:
        return False
    return bool(hull.find_simplex(local_point, tol=tol) >= 0)


def _resolve(root: Path, value: Optional[str], key: str, required: bool = True) -> Optional[Path]:
    if value is None:
        if required:
            raise ManifestError(f"Manifest is missing '{key}'")
        return None
    path = Path(value)
    if not path.is_absolute():
        path = root / path
    if not path.exists():
        raise ManifestError(f"'{key}' points at a missing path: {path}")
    return path


def _id_tuple(values, key: str) -> Tuple[int, ...]:
    try:
        return tuple(int(v) for v in values)
    except (TypeError, ValueError) as e:
        raise ManifestError(f"'{key}' must be a list of integer frame ids") from e


def load_manifest(path: PathLike) -> DatasetManifest:
    """
    Parse a dataset manifest.

    Args:
        path: manifest TOML file, or the directory holding manifest.toml

    Raises:
        ManifestError: missing keys or paths, invalid intrinsics, overlapping splits
    """
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    try:
        with open(path, "rb") as f:
            data = tomllib.load(f)
    except FileNotFoundError as e:
        raise ManifestError(f"Manifest not found: {path}") from e
    except tomllib.TOMLDecodeError as e:
        raise ManifestError(f"{path}: invalid TOML: {e}") from e

    root = path.parent
    intr = data.get("intrinsics")
    if not isinstance(intr, dict):
        raise ManifestError("Manifest is missing the [intrinsics] table")
    try:
        intrinsics = CameraIntrinsics(
            fx=float(intr["fx"]), fy=float(intr["fy"]), cx=float(intr["cx"]), cy=float(intr["cy"]),
            width=int(intr["width"]), height=int(intr["height"]),
        )
    except KeyError as e:
        raise ManifestError(f"[intrinsics] is missing {e}") from e
    except ValueError as e:
        raise ManifestError(f"Invalid intrinsics: {e}") from e

    split = data.get("split", {})
    test_ids = _id_tuple(split.get("test_ids", []), "split.test_ids")
    train_ids = split.get("train_ids")
    if train_ids is not None:
        overlap = set(_id_tuple(train_ids, "split.train_ids")) & set(test_ids)
        if overlap:
            raise ManifestError(f"train_ids and test_ids overlap: {sorted(overlap)}")

    extrapolated_ids = None
    if "extrapolated_ids" in split:
        extrapolated_ids = _id_tuple(split["extrapolated_ids"], "split.extrapolated_ids")
        stray = set(extrapolated_ids) - set(test_ids)
        if stray:
            raise ManifestError(f"extrapolated_ids must be held-out ids; not in test_ids: {sorted(stray)}")

    units_scale = float(data.get("units_scale", 1.0))
    if units_scale <= 0:
        raise ManifestError(f"units_scale must be > 0, got {units_scale}")

    image_directory = _resolve(root, data.get("images"), "images")
    if not image_directory.is_dir():
        raise ManifestError(f"'images' must be a directory: {image_directory}")

    return DatasetManifest(
        root=root,
        point_cloud_path=_resolve(root, data.get("point_cloud"), "point_cloud"),
        trajectory_path=_resolve(root, data.get("trajectory"), "trajectory"),
        image_directory=image_directory,
        intrinsics=intrinsics,
        test_ids=test_ids,
        extrapolated_ids=extrapolated_ids,
        units_scale=units_scale,
        gt_cloud_path=_resolve(root, data.get("gt_cloud"), "gt_cloud", required=False),
        gt_gaussians_path=_resolve(root, data.get("gt_gaussians"), "gt_gaussians", required=False),
    )


def _toml_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_toml_value(v) for v in value) + "]"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return '"' + str(value).replace("\\", "\\\\").replace('"', '\\"') + '"'


def write_manifest(path: PathLike, entries: dict) -> Path:
    """Write a manifest (top-level keys first, then tables) in a fixed key order."""
    path = Path(path)
    lines = []
    tables = {k: v for k, v in entries.items() if isinstance(v, dict)}
    for key, value in entries.items():
        if key not in tables and value is not None:
            lines.append(f"{key} = {_toml_value(value)}")
    for name, table in tables.items():
        lines.append("")
        lines.append(f"[{name}]")
        for key, value in table.items():
            if value is not None:
                lines.append(f"{key} = {_toml_value(value)}")
    path.write_text("\n".join(lines) + "\n")
    return path
