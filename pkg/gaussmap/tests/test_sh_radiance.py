"""
Spherical-harmonic radiance: basis normalization, view directions, color
evaluation and its gradients.
"""

import numpy as np
import pytest

from gaussmap.errors import DegenerateDirectionError
from gaussmap.render.sh_radiance import (
    eval_sh_color,
    eval_sh_colors,
    eval_sh_colors_backward,
    normalize_directions,
    sh_basis,
    sh_basis_jacobian,
    view_direction,
)
from gaussmap.scene_core import SH_COEFFS, Y00_NORM, Pose


def _unit(rng, n):
    v = rng.normal(size=(n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def test_basis_is_orthonormal_on_the_sphere():
    dirs = _unit(np.random.default_rng(0), 400_000)
    basis = sh_basis(dirs)
    gram = 4.0 * np.pi * (basis.T @ basis) / len(dirs)
    np.testing.assert_allclose(gram, np.eye(SH_COEFFS), atol=0.02)


def test_basis_jacobian_matches_finite_differences():
    rng = np.random.default_rng(1)
    dirs = rng.normal(size=(10, 3))
    jac = sh_basis_jacobian(dirs)
    h = 1e-6
    for axis in range(3):
        step = np.zeros(3)
        step[axis] = h
        fd = (sh_basis(dirs + step) - sh_basis(dirs - step)) / (2 * h)
        np.testing.assert_allclose(jac[:, :, axis], fd, atol=1e-8)


def test_view_direction_angles():
    pose = Pose.identity()
    v, theta, phi = view_direction([0.0, 0.0, 2.0], pose)
    np.testing.assert_allclose(v, [0.0, 0.0, 1.0])
    assert theta == 0.0

    v, theta, phi = view_direction([0.0, 3.0, 0.0], pose)
    assert theta == pytest.approx(np.pi / 2)
    assert phi == pytest.approx(np.pi / 2)

    moved = Pose(np.array([1.0, 0.0, 0.0, 0.0]), np.array([1.0, 1.0, 1.0]))
    with pytest.raises(DegenerateDirectionError):
        view_direction([1.0, 1.0, 1.0], moved)


def test_dc_only_color_is_view_independent():
    sh = np.zeros((3, SH_COEFFS))
    sh[:, 0] = [0.4, -0.2, -3.0]
    expected = np.maximum(0.5 + Y00_NORM * sh[:, 0], 0.0)
    for d in _unit(np.random.default_rng(2), 5):
        np.testing.assert_allclose(eval_sh_color(sh, d), expected)
    assert eval_sh_color(sh, [0.0, 0.0, 1.0])[2] == 0.0


def test_degree_masks_higher_bands():
    rng = np.random.default_rng(3)
    sh = rng.normal(size=(4, 3, SH_COEFFS))
    dirs = _unit(rng, 4)
    _, raw0 = eval_sh_colors(sh, dirs, degree=0)
    np.testing.assert_allclose(raw0, 0.5 + Y00_NORM * sh[:, :, 0])

    truncated = sh.copy()
    truncated[:, :, 4:] = 0.0
    np.testing.assert_allclose(eval_sh_colors(sh, dirs, degree=1)[1], eval_sh_colors(truncated, dirs, degree=2)[1])


def test_color_gradients_match_finite_differences():
    rng = np.random.default_rng(4)
    n = 6
    sh = rng.normal(0.0, 0.2, (n, 3, SH_COEFFS))
    sh[:, :, 0] = 2.0  # keeps every channel above the clamp
    vectors = rng.normal(size=(n, 3)) * 3.0
    weights = rng.normal(size=(n, 3))

    def loss(sh_in, vec_in):
        dirs, _ = normalize_directions(vec_in)
        colors, _ = eval_sh_colors(sh_in, dirs)
        return float(np.sum(weights * colors))

    dirs, norms = normalize_directions(vectors)
    _, raw = eval_sh_colors(sh, dirs)
    assert np.all(raw > 0)
    grad_sh, grad_vec = eval_sh_colors_backward(sh, dirs, norms, raw, weights)

    h = 1e-6
    for i in range(n):
        for axis in range(3):
            up, down = vectors.copy(), vectors.copy()
            up[i, axis] += h
            down[i, axis] -= h
            fd = (loss(sh, up) - loss(sh, down)) / (2 * h)
            assert grad_vec[i, axis] == pytest.approx(fd, rel=1e-5, abs=1e-8)

    for i, c, j in [(0, 0, 0), (1, 2, 3), (5, 1, 8)]:
        up, down = sh.copy(), sh.copy()
        up[i, c, j] += h
        down[i, c, j] -= h
        fd = (loss(up, vectors) - loss(down, vectors)) / (2 * h)
        assert grad_sh[i, c, j] == pytest.approx(fd, rel=1e-6, abs=1e-9)


def test_clamped_channels_pass_no_gradient():
    sh = np.zeros((1, 3, SH_COEFFS))
    sh[0, :, 0] = -5.0
    dirs = np.array([[0.0, 0.0, 1.0]])
    colors, raw = eval_sh_colors(sh, dirs)
    assert np.all(colors == 0.0)
    grad_sh, grad_vec = eval_sh_colors_backward(sh, dirs, np.ones(1), raw, np.ones((1, 3)))
    assert np.all(grad_sh == 0.0) and np.all(grad_vec == 0.0)
