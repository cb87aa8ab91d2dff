from gaussmap.synth.generator import GeneratedDataset, generate, ground_truth_scene, lidar_cloud
from gaussmap.synth.presets import PRESETS, CameraRing, ScenePreset, SurfacePatch, get_preset, look_at_pose
from gaussmap.synth.raster import rasterize_flat

__all__ = [
    "PRESETS",
    "CameraRing",
    "GeneratedDataset",
    "ScenePreset",
    "SurfacePatch",
    "generate",
    "get_preset",
    "ground_truth_scene",
    "lidar_cloud",
    "look_at_pose",
    "rasterize_flat",
]
