"""
Adaptive voxel map: incremental statistics, plane fitting and the octree split.
"""

import numpy as np
import pytest

from gaussmap.errors import InsufficientSupportError
from gaussmap.mapping.voxel_map import (
    PLANAR,
    SPARSE,
    TERMINAL,
    VoxelParams,
    VoxelStats,
    build_voxel_map,
    dump_voxel_map,
    insert_point,
    planarity,
    summarize_voxel_map,
    voxel_plane_stats,
)
from gaussmap.scene_core import PointCloud, normalize_quaternion, quaternion_to_matrix


def _plane_points(rng, n=500, z=0.3):
    xy = rng.uniform(0.05, 0.95, (n, 2))
    return np.column_stack([xy, np.full(n, z)])


def test_incremental_stats_match_batch():
    points = np.random.default_rng(0).normal(3.0, 0.2, (200, 3))
    stats = VoxelStats.empty()
    for p in points:
        stats = insert_point(stats, p)
    batch = VoxelStats.from_points(points)
    assert stats.count == 200
    np.testing.assert_allclose(stats.mean, batch.mean, rtol=1e-12)
    np.testing.assert_allclose(stats.m2, batch.m2, rtol=1e-9, atol=1e-12)
    np.testing.assert_allclose(stats.scatter.to_matrix(), np.cov(points.T, bias=True), rtol=1e-9, atol=1e-12)


def test_insert_rejects_non_finite():
    with pytest.raises(ValueError):
        insert_point(VoxelStats.empty(), [0.0, np.nan, 0.0])


def test_plane_stats_of_flat_patch():
    stats = VoxelStats.from_points(_plane_points(np.random.default_rng(1)))
    plane = voxel_plane_stats(stats)
    assert plane.lambda_min == 0.0
    assert plane.eta == 0.0
    assert plane.lambda_mid <= plane.lambda_max
    np.testing.assert_allclose(plane.normal, [0.0, 0.0, 1.0], atol=1e-9)
    assert np.linalg.det(plane.eigenvectors) == pytest.approx(1.0)


def test_normal_faces_the_sensor():
    stats = VoxelStats.from_points(_plane_points(np.random.default_rng(2)))
    below = voxel_plane_stats(stats, sensor_origin=np.array([0.5, 0.5, -5.0]))
    np.testing.assert_allclose(below.normal, [0.0, 0.0, -1.0], atol=1e-9)


def test_normal_sign_tie_uses_first_component():
    rng = np.random.default_rng(3)
    yz = rng.uniform(0.05, 0.95, (300, 2))
    wall = np.column_stack([np.full(300, 0.5), yz])
    plane = voxel_plane_stats(VoxelStats.from_points(wall))
    np.testing.assert_allclose(plane.normal, [1.0, 0.0, 0.0], atol=1e-9)


def test_insufficient_support():
    stats = VoxelStats.from_points(np.random.default_rng(4).normal(size=(5, 3)))
    with pytest.raises(InsufficientSupportError):
        voxel_plane_stats(stats, min_points=10)


def test_planarity_of_point_like_voxel():
    assert planarity(np.zeros(3)) == pytest.approx(1.0 / np.sqrt(3.0))
    assert planarity(np.array([0.0, 1.0, 2.0])) == 0.0


def test_planarity_is_rotation_invariant():
    rng = np.random.default_rng(6)
    points = rng.normal(size=(400, 3)) * [1.0, 0.4, 0.05]
    eta = voxel_plane_stats(VoxelStats.from_points(points)).eta
    for _ in range(5):
        rotated = points @ quaternion_to_matrix(normalize_quaternion(rng.normal(size=4))).T
        assert voxel_plane_stats(VoxelStats.from_points(rotated)).eta == pytest.approx(eta, rel=1e-9)


def test_isotropic_scatter():
    axes = np.vstack([np.eye(3), -np.eye(3)])
    plane = voxel_plane_stats(VoxelStats.from_points(np.vstack([axes, axes])))
    assert plane.eta == pytest.approx(1.0 / np.sqrt(3.0), abs=1e-12)


def test_flat_patch_stays_one_planar_leaf():
    leaves = build_voxel_map(PointCloud(_plane_points(np.random.default_rng(5))))
    assert len(leaves) == 1
    (node,) = leaves.values()
    assert node.kind == PLANAR and node.key.depth == 0
    assert node.stats.count == 500


def test_every_point_lands_in_exactly_one_leaf():
    points = np.random.default_rng(6).uniform(-1.0, 1.0, (3000, 3))
    params = VoxelParams(root_size=1.0, max_depth=2, min_points=10)
    leaves = build_voxel_map(PointCloud(points), params)

    indices = np.concatenate([node.point_indices for node in leaves.values()])
    assert np.array_equal(np.sort(indices), np.arange(len(points)))

    for key, node in leaves.items():
        lo, hi = key.bounds(params.root_size)
        inside = points[node.point_indices]
        assert np.all(inside >= lo - 1e-12) and np.all(inside <= hi + 1e-12)
        assert node.stats.count == len(node.point_indices)
        assert node.edge == pytest.approx(params.root_size / 2 ** key.depth)

    summary = summarize_voxel_map(leaves)
    assert summary["points"] == 3000
    assert summary["max_depth"] == 2
    assert summary[TERMINAL] > 0
    assert summary[PLANAR] + summary[SPARSE] + summary[TERMINAL] == summary["leaves"]
    assert list(leaves) == sorted(leaves)


def test_corner_splits_into_planar_children():
    rng = np.random.default_rng(7)
    floor = np.column_stack([rng.uniform(0.01, 0.99, (2000, 2)), np.full(2000, 0.1)])
    wall = np.column_stack([np.full(2000, 0.9), rng.uniform(0.01, 0.99, (2000, 2))])
    leaves = build_voxel_map(PointCloud(np.vstack([floor, wall])), VoxelParams(max_depth=3))

    summary = summarize_voxel_map(leaves)
    assert summary["max_depth"] >= 1
    planar_points = sum(node.stats.count for node in leaves.values() if node.kind == PLANAR)
    assert planar_points >= 0.8 * 4000


def test_repeated_point_ends_terminal():
    leaves = build_voxel_map(PointCloud(np.tile([0.3, 0.3, 0.3], (20, 1))), VoxelParams(max_depth=2))
    (node,) = leaves.values()
    assert node.kind == TERMINAL
    assert node.key.depth == 2


def test_empty_cloud_gives_no_leaves():
    assert build_voxel_map(PointCloud(np.zeros((0, 3)))) == {}


def test_dump_lists_every_leaf(tmp_path):
    points = np.vstack([_plane_points(np.random.default_rng(8)), [[5.5, 5.5, 5.5]]])
    leaves = build_voxel_map(PointCloud(points))
    lines = dump_voxel_map(leaves, tmp_path / "voxels.txt").read_text().splitlines()
    assert lines[0].startswith("#")
    assert len(lines) == len(leaves) + 1
    sparse_line = next(line for line in lines[1:] if line.startswith("0 5,5,5 "))
    assert sparse_line.split()[3] == "nan"
