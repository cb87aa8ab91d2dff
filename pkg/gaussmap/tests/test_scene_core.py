"""
Poses, quaternions and the covariance factorization.
"""

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from gaussmap.scene_core import (
    WARNING_COUNTS,
    CameraIntrinsics,
    GaussianScene,
    ImageBuffer,
    Pose,
    SymMat3,
    View,
    covariance_from_factors,
    factors_from_covariance,
    logistic,
    matrix_to_quaternion,
    normalize_quaternion,
    quaternion_multiply,
    quaternion_to_matrix,
)
from gaussmap.tests.scene_factory import random_scene


def test_logistic_midpoint_is_exact():
    assert logistic(0.0) == 0.5


def test_quaternion_matrix_matches_scipy():
    rng = np.random.default_rng(1)
    q = normalize_quaternion(rng.normal(size=(50, 4)))
    expected = Rotation.from_quat(np.column_stack([q[:, 1:], q[:, :1]])).as_matrix()
    np.testing.assert_allclose(quaternion_to_matrix(q), expected, atol=1e-12)

    back = matrix_to_quaternion(expected)
    assert np.all(back[:, 0] >= 0)
    np.testing.assert_allclose(np.abs(np.sum(back * q, axis=1)), 1.0, atol=1e-12)


def test_quaternion_multiply_composes_rotations():
    rng = np.random.default_rng(2)
    a, b = normalize_quaternion(rng.normal(size=(2, 4)))
    np.testing.assert_allclose(quaternion_to_matrix(quaternion_multiply(a, b)), quaternion_to_matrix(a) @ quaternion_to_matrix(b), atol=1e-12)


def test_zero_quaternion_rejected():
    with pytest.raises(ValueError):
        normalize_quaternion(np.zeros(4))


def test_pose_inverse_and_compose():
    rng = np.random.default_rng(3)
    pose = Pose(rng.normal(size=4), rng.normal(size=3))
    points = rng.normal(size=(10, 3))

    np.testing.assert_allclose(pose.world_to_camera(pose.apply(points)), points, atol=1e-12)
    np.testing.assert_allclose(pose.inverse().apply(points), pose.world_to_camera(points), atol=1e-12)
    np.testing.assert_allclose(pose.compose(pose.inverse()).matrix(), np.eye(4), atol=1e-12)
    np.testing.assert_allclose(Pose.from_matrix(pose.matrix()).matrix(), pose.matrix(), atol=1e-12)


def test_intrinsics_validation():
    with pytest.raises(ValueError):
        CameraIntrinsics(fx=0.0, fy=10.0, cx=5.0, cy=5.0, width=10, height=10)
    with pytest.raises(ValueError):
        CameraIntrinsics(fx=10.0, fy=10.0, cx=12.0, cy=5.0, width=10, height=10)


def test_view_rejects_mismatched_image():
    intr = CameraIntrinsics(fx=10.0, fy=10.0, cx=4.5, cy=4.5, width=10, height=10)
    with pytest.raises(ValueError):
        View(Pose.identity(), intr, ImageBuffer.filled(12, 10))


def test_covariance_factor_round_trip():
    rng = np.random.default_rng(4)
    for _ in range(20):
        scale = rng.uniform(-3.0, 0.5, 3)
        rotation = normalize_quaternion(rng.normal(size=4))
        cov = covariance_from_factors(scale, rotation)
        assert np.all(np.linalg.eigvalsh(cov.to_matrix()) > 0)

        s2, r2 = factors_from_covariance(cov)
        np.testing.assert_allclose(covariance_from_factors(s2, r2).to_matrix(), cov.to_matrix(), rtol=1e-9, atol=1e-14)


def test_factors_clamp_flat_covariance():
    before = WARNING_COUNTS["eigen_clamp"]
    scale, rotation = factors_from_covariance(SymMat3.from_matrix(np.diag([1.0, 1.0, 0.0])))
    assert WARNING_COUNTS["eigen_clamp"] == before + 1
    assert np.all(np.isfinite(scale))
    assert scale.min() == pytest.approx(0.5 * np.log(1e-12))
    assert np.linalg.det(quaternion_to_matrix(rotation)) == pytest.approx(1.0)


def test_scene_arrays_are_read_only_and_tokens_unique():
    scene = random_scene(np.random.default_rng(5), n=4)
    with pytest.raises(ValueError):
        scene.means[0, 0] = 1.0
    other = scene.with_params(opacity_logits=np.zeros(4))
    assert other.token != scene.token
    assert len(GaussianScene.stack([scene, other])) == 8
    assert len(scene.subset(np.array([2, 0]))) == 2


def test_scene_shape_validation():
    with pytest.raises(ValueError):
        GaussianScene(np.zeros((2, 3)), np.zeros((2, 3)), np.zeros((2, 4)), np.zeros(3), np.zeros((2, 3, 9)))


def test_gaussian_accessor_round_trip():
    scene = random_scene(np.random.default_rng(6), n=3)
    rebuilt = GaussianScene.from_gaussians(scene.to_gaussians())
    np.testing.assert_array_equal(rebuilt.means, scene.means)
    np.testing.assert_allclose(rebuilt.rotations, scene.rotations, atol=1e-15)
    assert scene.gaussian(1).opacity == pytest.approx(scene.opacities[1])
