"""
Image and structure metrics against brute-force references.
"""

from itertools import permutations

import numpy as np
import pytest
from scipy.spatial.distance import cdist

from gaussmap.errors import DimensionMismatchError, EmptyCloudError
from gaussmap.evaluation.metrics import (
    PSNR_CAP_DB,
    chamfer,
    emd,
    fscore,
    gaussians_to_cloud,
    psnr,
    structure_report,
)
from gaussmap.scene_core import ImageBuffer, PointCloud, normalize_quaternion, quaternion_to_matrix
from gaussmap.tests.scene_factory import random_scene


def test_psnr_values():
    a = np.full((8, 8, 3), 0.5)
    assert psnr(a, a) == PSNR_CAP_DB
    assert psnr(ImageBuffer(a + 0.1), ImageBuffer(a)) == pytest.approx(20.0)
    assert psnr(a + 0.01, a) == pytest.approx(40.0)
    with pytest.raises(DimensionMismatchError):
        psnr(a, a[:4])


def test_chamfer_matches_brute_force():
    rng = np.random.default_rng(0)
    p, g = rng.normal(size=(500, 3)), rng.normal(size=(400, 3)) + 0.2
    d = cdist(p, g)
    expected = 0.5 * (d.min(axis=1).mean() + d.min(axis=0).mean())
    assert chamfer(PointCloud(p), PointCloud(g)) == pytest.approx(expected, rel=1e-12)
    assert chamfer(p, p) == 0.0


def test_emd_matches_exhaustive_assignment():
    rng = np.random.default_rng(1)
    p, g = rng.uniform(size=(8, 3)), rng.uniform(size=(8, 3))
    d = cdist(p, g)
    best = min(d[np.arange(8), list(perm)].mean() for perm in permutations(range(8)))
    assert emd(p, g) == pytest.approx(best, rel=1e-12)


def test_emd_subsamples_to_the_smaller_cloud():
    rng = np.random.default_rng(2)
    p = rng.uniform(size=(50, 3))
    assert emd(p, p) == 0.0
    value = emd(p, p[:10], seed=1)
    assert 0.0 <= value <= np.sqrt(3.0)
    assert emd(p, p[:10], seed=1) == value


def test_fscore_matches_counting():
    rng = np.random.default_rng(4)
    p, g = rng.uniform(size=(200, 3)), rng.uniform(size=(150, 3))
    tau = 0.1
    d = cdist(p, g)
    precision = np.mean(d.min(axis=1) <= tau)
    recall = np.mean(d.min(axis=0) <= tau)
    assert fscore(p, g, tau) == pytest.approx(2 * precision * recall / (precision + recall))
    assert fscore(p, p + 10.0, tau) == 0.0
    with pytest.raises(ValueError):
        fscore(p, g, 0.0)


def test_chamfer_never_exceeds_emd():
    rng = np.random.default_rng(5)
    for _ in range(100):
        p, g = rng.normal(size=(20, 3)), rng.normal(size=(20, 3))
        assert chamfer(p, g) <= emd(p, g) + 1e-12


def test_empty_clouds_rejected():
    with pytest.raises(EmptyCloudError):
        chamfer(np.zeros((0, 3)), np.zeros((3, 3)))
    with pytest.raises(EmptyCloudError):
        emd(np.zeros((3, 3)), PointCloud(np.zeros((0, 3))))


def test_gaussians_to_cloud_and_report():
    scene = random_scene(np.random.default_rng(6), n=10)
    np.testing.assert_array_equal(gaussians_to_cloud(scene).points, scene.means)
    samples = gaussians_to_cloud(scene, samples_per_gaussian=4, seed=1)
    assert len(samples) == 40

    report = structure_report(gaussians_to_cloud(scene), PointCloud(scene.means), tau=0.05)
    assert report.cd == 0.0 and report.emd == 0.0 and report.fscore == 1.0
    assert report.to_dict()["pred_points"] == 10


def test_structure_metrics_are_symmetric_and_rigid_invariant():
    rng = np.random.default_rng(7)
    p, g = rng.normal(size=(150, 3)), rng.normal(size=(150, 3)) * 0.8 + 0.1
    tau = 0.3
    R = quaternion_to_matrix(normalize_quaternion(np.array([0.4, -0.7, 0.2, 0.5])))
    t = np.array([3.0, -1.5, 0.25])
    moved_p, moved_g = p @ R.T + t, g @ R.T + t

    assert chamfer(p, g) == pytest.approx(chamfer(g, p), rel=1e-12)
    assert emd(p, g, max_points=150) == pytest.approx(emd(g, p, max_points=150), rel=1e-12)
    assert fscore(p, g, tau) == pytest.approx(fscore(g, p, tau), rel=1e-12)

    assert chamfer(moved_p, moved_g) == pytest.approx(chamfer(p, g), rel=1e-9)
    assert emd(moved_p, moved_g, max_points=150) == pytest.approx(emd(p, g, max_points=150), rel=1e-9)
    assert fscore(moved_p, moved_g, tau) == pytest.approx(fscore(p, g, tau), rel=1e-9)
