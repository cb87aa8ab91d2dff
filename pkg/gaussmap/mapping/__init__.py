from gaussmap.mapping.gauss_init import InitParams, InitReport, initialize_scene, random_init, seed_colors, seed_from_voxel
from gaussmap.mapping.voxel_map import (
    PlaneStats,
    VoxelKey,
    VoxelNode,
    VoxelParams,
    VoxelStats,
    build_voxel_map,
    dump_voxel_map,
    insert_point,
    voxel_plane_stats,
)

__all__ = [
    "InitParams",
    "InitReport",
    "PlaneStats",
    "VoxelKey",
    "VoxelNode",
    "VoxelParams",
    "VoxelStats",
    "build_voxel_map",
    "dump_voxel_map",
    "initialize_scene",
    "insert_point",
    "random_init",
    "seed_colors",
    "seed_from_voxel",
    "voxel_plane_stats",
]
