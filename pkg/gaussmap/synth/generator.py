"""
Synthetic dataset generator.

Writes a complete dataset directory for a preset:

    manifest.toml
    cloud.ply           noisy LiDAR samples of the visible surfaces
    gt_cloud.ply        noise-free surface samples (structure metrics reference)
    gt_gaussians.ply    the Gaussians the reference images were rendered from
    trajectory.txt      TUM poses, one per camera
    images/0000_1.000000.png ...

Reference images are rendered from the ground-truth Gaussians as reloaded from
their PLY, with the poses as reloaded from the trajectory, so loading the
dataset and re-rendering reproduces every image exactly.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import List, Tuple, Union

import numpy as np

from gaussmap.ingest.images import save_image
from gaussmap.ingest.manifest import MANIFEST_NAME, write_manifest
from gaussmap.ingest.ply_io import export_gaussians, load_gaussians, save_point_cloud
from gaussmap.ingest.trajectory import load_trajectory, save_trajectory
from gaussmap.render.splat_render import RenderSettings, render
from gaussmap.scene_core import SH_COEFFS, Y00_NORM, GaussianScene, ImageBuffer, PointCloud, View, logit, matrix_to_quaternion
from gaussmap.synth.presets import ScenePreset, SurfacePatch, get_preset
from gaussmap.synth.raster import rasterize_flat

PathLike = Union[str, Path]

GAUSSIAN_RENDERER = "gaussians"
FLAT_RENDERER = "flat"

GT_OPACITY = 0.98
# in-plane std dev as a fraction of the grid pitch; normal std dev in meters
FOOTPRINT_FRACTION = 0.6
SURFACE_THICKNESS = 1e-3
FIRST_TIMESTAMP = 1.0
FRAME_PERIOD = 0.1


@dataclass(frozen=True)
class GeneratedDataset:
    root: Path
    manifest_path: Path
    preset: str
    seed: int
    cloud_points: int
    gt_points: int
    gaussians: int
    image_paths: Tuple[Path, ...]


def sample_surface(patch: SurfacePatch, density: float, rng: np.random.Generator, coverage: float = 1.0) -> np.ndarray:
    """Uniform samples over the first `coverage` fraction (in u) of the patch; count = round(density * area)."""
    count = int(round(density * patch.area * coverage))
    u = rng.uniform(-patch.half_u, -patch.half_u + 2.0 * patch.half_u * coverage, count)
    v = rng.uniform(-patch.half_v, patch.half_v, count)
    return patch.to_world(np.stack([u, v], axis=1))


def lidar_cloud(preset: ScenePreset, rng: np.random.Generator) -> PointCloud:
    chunks = [sample_surface(p, preset.lidar_density, rng, p.lidar_coverage) for p in preset.surfaces]
    points = np.concatenate(chunks)
    if preset.lidar_noise > 0:
        points = points + rng.normal(0.0, preset.lidar_noise, points.shape)
    return PointCloud(points)


def ground_truth_cloud(preset: ScenePreset, rng: np.random.Generator) -> PointCloud:
    return PointCloud(np.concatenate([sample_surface(p, preset.gt_density, rng) for p in preset.surfaces]))


def _grid(half: float, spacing: float) -> np.ndarray:
    n = max(1, int(np.ceil(2.0 * half / spacing)))
    pitch = 2.0 * half / n
    return -half + pitch * (np.arange(n) + 0.5)


def surface_gaussians(patch: SurfacePatch, spacing: float) -> GaussianScene:
    """Flat discs on a regular grid over the patch, colored by the albedo at their centres."""
    us, vs = _grid(patch.half_u, spacing), _grid(patch.half_v, spacing)
    uv = np.stack(np.meshgrid(us, vs, indexing="ij"), axis=-1).reshape(-1, 2)
    n = len(uv)
    pitch_u, pitch_v = 2.0 * patch.half_u / len(us), 2.0 * patch.half_v / len(vs)

    _, u, v, normal = patch.frame
    rotation = matrix_to_quaternion(np.stack([u, v, normal], axis=1))
    scales = np.log([FOOTPRINT_FRACTION * pitch_u, FOOTPRINT_FRACTION * pitch_v, SURFACE_THICKNESS])

    sh = np.zeros((n, 3, SH_COEFFS))
    sh[:, :, 0] = (patch.albedo_at(uv) - 0.5) / Y00_NORM
    if patch.specular > 0:
        # degree-1 lobe, tinted slightly differently per channel
        sh[:, :, 1] = -0.5 * patch.specular
        sh[:, :, 3] = patch.specular * np.array([1.0, 0.8, 0.6])
    return GaussianScene(
        means=patch.to_world(uv),
        scales=np.tile(scales, (n, 1)),
        rotations=np.tile(rotation, (n, 1)),
        opacity_logits=np.full(n, float(logit(GT_OPACITY))),
        sh=sh,
    )


def ground_truth_scene(preset: ScenePreset) -> GaussianScene:
    return GaussianScene.stack([surface_gaussians(p, preset.gaussian_spacing) for p in preset.surfaces])


def frame_timestamps(count: int) -> np.ndarray:
    return FIRST_TIMESTAMP + FRAME_PERIOD * np.arange(count)


def frame_name(frame_id: int, timestamp: float) -> str:
    return f"{frame_id:04d}_{timestamp:.6f}.png"


def generate(
    preset: Union[str, ScenePreset],
    seed: int = 0,
    out_dir: PathLike = "synthetic",
    renderer: str = GAUSSIAN_RENDERER,
) -> GeneratedDataset:
    """
    Emit a synthetic dataset for `preset` under `out_dir`.

    Args:
        preset: preset name or ScenePreset
        seed: drives the LiDAR and ground-truth cloud samples
        out_dir: dataset directory (created)
        renderer: "gaussians" (exactly realizable supervision) or "flat" (ray-cast albedo)

    Returns:
        GeneratedDataset with the emitted paths and counts
    """
    if renderer not in (GAUSSIAN_RENDERER, FLAT_RENDERER):
        raise ValueError(f"Unknown renderer '{renderer}'")
    preset = get_preset(preset) if isinstance(preset, str) else preset
    root = Path(out_dir)
    image_dir = root / "images"
    image_dir.mkdir(parents=True, exist_ok=True)

    print(f"🔄 Generating '{preset.name}' (seed {seed}) in {root}")

    cloud = lidar_cloud(preset, np.random.default_rng([seed, 0]))
    save_point_cloud(cloud, root / "cloud.ply")
    gt_cloud = ground_truth_cloud(preset, np.random.default_rng([seed, 1]))
    save_point_cloud(gt_cloud, root / "gt_cloud.ply")
    print(f"   ✅ {len(cloud)} LiDAR points, {len(gt_cloud)} ground-truth points")

    export_gaussians(ground_truth_scene(preset), root / "gt_gaussians.ply")
    scene = load_gaussians(root / "gt_gaussians.ply")

    timestamps = frame_timestamps(preset.camera_count)
    save_trajectory(list(zip(timestamps.tolist(), preset.poses())), root / "trajectory.txt")
    trajectory = load_trajectory(root / "trajectory.txt")

    intrinsics = preset.ring.intrinsics()
    settings = RenderSettings(background=tuple(preset.background))
    placeholder = ImageBuffer.filled(intrinsics.width, intrinsics.height)
    image_paths: List[Path] = []
    for frame_id, (timestamp, pose) in enumerate(trajectory):
        if renderer == FLAT_RENDERER:
            image = rasterize_flat(preset.surfaces, pose, intrinsics, preset.background)
        else:
            image = render(scene, View(pose, intrinsics, placeholder, frame_id), settings).image
        image_paths.append(save_image(image, image_dir / frame_name(frame_id, timestamp)))
    print(f"   ✅ {len(image_paths)} images rendered ({renderer}, {intrinsics.width}x{intrinsics.height})")

    # no explicit list leaves the extrapolated tags to the training camera hull
    split = {"test_ids": list(preset.test_ids)}
    if preset.extrapolated_ids:
        split["extrapolated_ids"] = list(preset.extrapolated_ids)

    manifest_path = write_manifest(
        root / MANIFEST_NAME,
        {
            "point_cloud": "cloud.ply",
            "trajectory": "trajectory.txt",
            "images": "images",
            "gt_cloud": "gt_cloud.ply",
            "gt_gaussians": "gt_gaussians.ply",
            "units_scale": 1.0,
            "intrinsics": {
                "fx": intrinsics.fx,
                "fy": intrinsics.fy,
                "cx": intrinsics.cx,
                "cy": intrinsics.cy,
                "width": intrinsics.width,
                "height": intrinsics.height,
            },
            "split": split,
        },
    )
    print(f"📝 Manifest written to {manifest_path}")

    return GeneratedDataset(
        root=root,
        manifest_path=manifest_path,
        preset=preset.name,
        seed=seed,
        cloud_points=len(cloud),
        gt_points=len(gt_cloud),
        gaussians=len(scene),
        image_paths=tuple(image_paths),
    )
