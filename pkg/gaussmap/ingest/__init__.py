"""
On-disk artifacts: point clouds, trajectories, images, manifests, configs and Gaussian maps.
"""

from gaussmap.ingest.images import load_image, save_image
from gaussmap.ingest.manifest import DatasetManifest, load_manifest, write_manifest
from gaussmap.ingest.ply_io import export_gaussians, load_gaussians, load_point_cloud, save_point_cloud
from gaussmap.ingest.train_config import TrainConfig, load_train_config
from gaussmap.ingest.trajectory import associate_frames, load_trajectory, save_trajectory

__all__ = [
    "DatasetManifest",
    "TrainConfig",
    "associate_frames",
    "export_gaussians",
    "load_gaussians",
    "load_image",
    "load_manifest",
    "load_point_cloud",
    "load_train_config",
    "load_trajectory",
    "save_image",
    "save_point_cloud",
    "save_trajectory",
    "write_manifest",
]
