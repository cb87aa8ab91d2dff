"""
Loaders and writers: PLY / XYZ clouds, Gaussian maps, PNG, TUM trajectories,
manifests and training configs.
"""

from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from gaussmap.errors import ConfigError, ImageFormatError, ManifestError, ParseError, TrajectoryError
from gaussmap.ingest.images import load_image, save_image, to_srgb8
from gaussmap.ingest.manifest import EXTRAPOLATED, INTERPOLATED, inside_camera_hull, load_manifest, write_manifest
from gaussmap.ingest.ply_io import export_gaussians, load_gaussians, load_point_cloud, save_point_cloud
from gaussmap.ingest.train_config import TrainConfig, load_train_config, train_config_from_dict
from gaussmap.ingest.trajectory import associate_frames, load_trajectory, parse_frame_name, save_trajectory
from gaussmap.scene_core import WARNING_COUNTS, ImageBuffer, PointCloud, Pose
from gaussmap.synth.presets import CameraRing, look_at_pose
from gaussmap.tests.scene_factory import random_scene

ASCII_PLY = """ply
format ascii 1.0
comment written by hand
element vertex 3
property float x
property float y
property double z
property uchar red
end_header
0 0 0 255
1.5 2 3 0
-1 -2 -3.25 12
"""


def _write(path: Path, text: str) -> Path:
    path.write_text(text)
    return path


# ============================================================================
# Point clouds
# ============================================================================


def test_ascii_ply_ignores_extra_properties(tmp_path):
    cloud = load_point_cloud(_write(tmp_path / "cloud.ply", ASCII_PLY))
    np.testing.assert_array_equal(cloud.points, [[0, 0, 0], [1.5, 2, 3], [-1, -2, -3.25]])
    assert cloud.timestamps is None


def test_binary_ply_round_trip_is_float32_exact(tmp_path):
    points = np.random.default_rng(0).normal(size=(100, 3))
    path = save_point_cloud(PointCloud(points, np.arange(100.0)), tmp_path / "cloud.ply")
    cloud = load_point_cloud(path)
    np.testing.assert_array_equal(cloud.points, points.astype(np.float32).astype(np.float64))
    np.testing.assert_array_equal(cloud.timestamps, np.arange(100.0))


def test_malformed_ply_header_raises_parse_error(tmp_path):
    path = _write(tmp_path / "bad.ply", "ply\nformat ascii 1.0\nelemnt vertex 2\nend_header\n")
    with pytest.raises(ParseError) as info:
        load_point_cloud(path)
    assert info.value.path == path


def test_ply_missing_or_integer_coordinates(tmp_path):
    missing = _write(tmp_path / "missing.ply", "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\nend_header\n1 2\n")
    with pytest.raises(ParseError, match="'z'"):
        load_point_cloud(missing)

    integer = _write(
        tmp_path / "int.ply",
        "ply\nformat ascii 1.0\nelement vertex 1\nproperty int x\nproperty float y\nproperty float z\nend_header\n1 2 3\n",
    )
    with pytest.raises(ParseError, match="Unsupported type"):
        load_point_cloud(integer)


def test_ply_non_finite_vertex_reports_offset(tmp_path):
    text = ASCII_PLY.replace("1.5 2 3 0", "nan 2 3 0")
    with pytest.raises(ParseError) as info:
        load_point_cloud(_write(tmp_path / "nan.ply", text))
    assert info.value.offset == 1


def test_xyz_text_cloud(tmp_path):
    cloud = load_point_cloud(_write(tmp_path / "cloud.xyz", "# x y z\n1 2 3\n4 5 6\n"))
    np.testing.assert_array_equal(cloud.points, [[1, 2, 3], [4, 5, 6]])
    with pytest.raises(ParseError):
        load_point_cloud(_write(tmp_path / "bad.xyz", "1 2 x\n"))


def test_unknown_cloud_format(tmp_path):
    with pytest.raises(ParseError):
        load_point_cloud(_write(tmp_path / "cloud.bin", "nothing"))
    with pytest.raises(ParseError):
        load_point_cloud(tmp_path / "absent.ply")


# ============================================================================
# Gaussian maps
# ============================================================================


def test_gaussian_ply_round_trip_bit_exact(tmp_path):
    scene = random_scene(np.random.default_rng(1), n=25)
    first = load_gaussians(export_gaussians(scene, tmp_path / "a.ply"))
    np.testing.assert_allclose(first.means, scene.means, rtol=1e-6)
    np.testing.assert_allclose(first.sh, scene.sh, rtol=1e-6, atol=1e-7)

    second = load_gaussians(export_gaussians(first, tmp_path / "b.ply"))
    for name in ("means", "scales", "rotations", "opacity_logits", "sh"):
        np.testing.assert_array_equal(getattr(second, name), getattr(first, name))
    assert (tmp_path / "a.ply").read_bytes() == (tmp_path / "b.ply").read_bytes()


def test_gaussian_ply_rejects_plain_cloud(tmp_path):
    path = save_point_cloud(PointCloud(np.zeros((2, 3))), tmp_path / "cloud.ply")
    with pytest.raises(ParseError, match="missing"):
        load_gaussians(path)


# ============================================================================
# Images
# ============================================================================


def test_png_round_trip_is_stable(tmp_path):
    rgb = np.random.default_rng(2).uniform(0.0, 1.0, (12, 9, 3))
    first = save_image(ImageBuffer(rgb), tmp_path / "a.png")
    loaded = load_image(first)
    assert (loaded.width, loaded.height) == (9, 12)
    np.testing.assert_array_equal(to_srgb8(loaded), to_srgb8(ImageBuffer(rgb)))

    second = save_image(loaded, tmp_path / "b.png")
    assert first.read_bytes() == second.read_bytes()


def test_png_out_of_range_values_are_clamped(tmp_path):
    rgb = np.full((4, 4, 3), 0.5)
    rgb[0, 0] = [-1.0, 2.0, 0.5]
    loaded = load_image(save_image(ImageBuffer(rgb), tmp_path / "clamp.png"))
    np.testing.assert_array_equal(loaded.rgb[0, 0, :2], [0.0, 1.0])


def test_sixteen_bit_png_rejected(tmp_path):
    path = tmp_path / "deep.png"
    Image.fromarray(np.full((4, 4), 40000, dtype=np.uint16)).save(path)
    with pytest.raises(ImageFormatError):
        load_image(path)
    with pytest.raises(ImageFormatError):
        load_image(_write(tmp_path / "junk.png", "not a png"))


# ============================================================================
# Trajectories
# ============================================================================


def test_tum_trajectory_round_trip(tmp_path):
    text = "# t tx ty tz qx qy qz qw\n1.0 0 0 0 0 0 0 1\n1.5 1 2 3 0 0 0.7071067811865476 0.7071067811865476\n"
    poses = load_trajectory(_write(tmp_path / "traj.txt", text))
    assert [t for t, _ in poses] == [1.0, 1.5]
    np.testing.assert_allclose(poses[1][1].translation, [1, 2, 3])
    np.testing.assert_allclose(poses[1][1].rotation_matrix @ [1, 0, 0], [0, 1, 0], atol=1e-12)

    again = load_trajectory(save_trajectory(poses, tmp_path / "copy.txt"))
    for (t0, p0), (t1, p1) in zip(poses, again):
        assert t0 == t1
        np.testing.assert_allclose(p0.matrix(), p1.matrix(), atol=1e-15)


def test_circular_trajectory_reproduces_generator_poses(tmp_path):
    ring = CameraRing(count=12, radius=2.0, height=1.0)
    poses = [look_at_pose(eye, ring.look_at) for eye in ring.eyes()]
    loaded = load_trajectory(save_trajectory(list(zip(np.arange(12) * 0.1, poses)), tmp_path / "ring.txt"))
    for original, (_, pose) in zip(poses, loaded):
        np.testing.assert_allclose(pose.matrix(), original.matrix(), atol=1e-6)


def test_non_monotone_timestamps_raise_trajectory_error(tmp_path):
    text = "1.0 0 0 0 0 0 0 1\n2.0 0 0 0 0 0 0 1\n2.0 0 0 0 0 0 0 1\n"
    with pytest.raises(TrajectoryError) as info:
        load_trajectory(_write(tmp_path / "traj.txt", text))
    assert info.value.line == 3


def test_bad_quaternion_and_column_count(tmp_path):
    with pytest.raises(TrajectoryError):
        load_trajectory(_write(tmp_path / "q.txt", "1.0 0 0 0 0 0 0 2\n"))
    with pytest.raises(ParseError):
        load_trajectory(_write(tmp_path / "cols.txt", "1.0 0 0 0 0 0 1\n"))


def test_frame_names_and_association():
    assert parse_frame_name(Path("0007_1.250000.png")) == (7, 1.25)
    assert parse_frame_name(Path("1.250000.png")) == (None, 1.25)

    trajectory = [(1.0, Pose.identity()), (1.1, Pose(np.array([1.0, 0, 0, 0]), np.array([1.0, 0, 0])))]
    names = [Path("0000_1.000000.png"), Path("0001_1.100000.png"), Path("0002_5.000000.png")]
    before = WARNING_COUNTS["frame_dropped"]
    bindings = associate_frames(names, trajectory)
    assert [b.frame_id for b in bindings] == [0, 1]
    np.testing.assert_array_equal(bindings[1].pose.translation, [1.0, 0, 0])
    assert WARNING_COUNTS["frame_dropped"] == before + 1


# ============================================================================
# Manifests
# ============================================================================


def _dataset_files(root: Path) -> dict:
    save_point_cloud(PointCloud(np.zeros((4, 3))), root / "cloud.ply")
    save_trajectory([(1.0, Pose.identity()), (1.1, Pose.identity())], root / "traj.txt")
    (root / "images").mkdir()
    for i, t in enumerate((1.0, 1.1)):
        save_image(ImageBuffer.filled(16, 12, (0.2, 0.4, 0.6)), root / "images" / f"{i:04d}_{t:.6f}.png")
    return {
        "point_cloud": "cloud.ply",
        "trajectory": "traj.txt",
        "images": "images",
        "intrinsics": {"fx": 20.0, "fy": 20.0, "cx": 7.5, "cy": 5.5, "width": 16, "height": 12},
        "split": {"test_ids": [1]},
    }


def test_manifest_loads_views_and_split(tmp_path):
    write_manifest(tmp_path / "manifest.toml", _dataset_files(tmp_path))
    manifest = load_manifest(tmp_path)
    views = manifest.load_views()
    assert [v.id for v in views] == [0, 1]
    train, test = manifest.split_views(views)
    assert [v.id for v in train] == [0] and [v.id for v in test] == [1]
    np.testing.assert_allclose(views[0].image.rgb[0, 0], [0.2, 0.4, 0.6], atol=5e-3)


@pytest.mark.parametrize(
    "change, message",
    [
        (lambda e: e.pop("intrinsics"), "intrinsics"),
        (lambda e: e["split"].update(extrapolated_ids=[0]), "extrapolated_ids"),
        (lambda e: e["split"].update(train_ids=[0, 1]), "overlap"),
        (lambda e: e.update(point_cloud="nowhere.ply"), "missing path"),
        (lambda e: e.update(units_scale=0.0), "units_scale"),
    ],
)
def test_manifest_validation(tmp_path, change, message):
    entries = _dataset_files(tmp_path)
    change(entries)
    write_manifest(tmp_path / "manifest.toml", entries)
    with pytest.raises(ManifestError, match=message):
        load_manifest(tmp_path / "manifest.toml")


def test_manifest_image_size_mismatch(tmp_path):
    entries = _dataset_files(tmp_path)
    entries["intrinsics"].update(width=20, cx=9.5)
    write_manifest(tmp_path / "manifest.toml", entries)
    with pytest.raises(ManifestError, match="manifest intrinsics"):
        load_manifest(tmp_path).load_views()


def test_camera_hull_tags():
    square = np.array([[-1.0, -1.0, 0.0], [1.0, -1.0, 0.0], [1.0, 1.0, 0.0], [-1.0, 1.0, 0.0]])
    assert inside_camera_hull(square, [0.2, 0.3, 0.0])
    assert not inside_camera_hull(square, [2.0, 0.0, 0.0])
    assert not inside_camera_hull(square, [0.0, 0.0, 0.5])

    line = np.array([[0.0, 0.0, 0.0], [2.0, 0.0, 0.0]])
    assert inside_camera_hull(line, [1.0, 0.0, 0.0])
    assert not inside_camera_hull(line, [3.0, 0.0, 0.0])

    tetra = np.array([[0.0, 0, 0], [1.0, 0, 0], [0, 1.0, 0], [0, 0, 1.0]])
    assert inside_camera_hull(tetra, [0.1, 0.1, 0.1])
    assert not inside_camera_hull(tetra, [1.0, 1.0, 1.0])


def test_tag_views_uses_hull_without_explicit_list(tmp_path):
    write_manifest(tmp_path / "manifest.toml", _dataset_files(tmp_path))
    manifest = load_manifest(tmp_path)
    train, test = manifest.split_views(manifest.load_views())
    # both poses share one centre, so the held-out view sits in the (point) hull
    assert manifest.tag_views(train, test) == {1: INTERPOLATED}

    other = tmp_path / "explicit"
    other.mkdir()
    entries = _dataset_files(other)
    entries["split"]["extrapolated_ids"] = [1]
    write_manifest(other / "manifest.toml", entries)
    manifest = load_manifest(other)
    train, test = manifest.split_views(manifest.load_views())
    assert manifest.tag_views(train, test) == {1: EXTRAPOLATED}


# ============================================================================
# Training config
# ============================================================================


def test_empty_config_is_all_defaults(tmp_path):
    cfg = load_train_config(_write(tmp_path / "train.toml", ""))
    assert cfg == TrainConfig()
    assert load_train_config() == TrainConfig()
    assert cfg.densify_until == int(0.8 * cfg.iterations)


def test_config_sections_map_to_fields(tmp_path):
    text = '[loss]\nlambda_dssim = 0.0\n\n[render]\nbackground = [1.0, 1.0, 1.0]\nsh_frame = "world"\n\n[run]\nstructure_mode = "frozen"\n'
    cfg = load_train_config(_write(tmp_path / "train.toml", text))
    assert cfg.lambda_dssim == 0.0
    assert cfg.background == (1.0, 1.0, 1.0)
    assert cfg.sh_frame == "world"
    assert cfg.structure_mode == "frozen"
    assert train_config_from_dict(cfg.to_dict()) == cfg


@pytest.mark.parametrize(
    "text",
    [
        "[loss]\nlambda = 0.1\n",
        "[optimizer]\niterations = 5\n",
        "[loss]\nlambda_dssim = 1.5\n",
        "[render]\nmax_sh_degree = 3\n",
        "[run]\nstructure_mode = \"magic\"\n",
        "[loss\n",
    ],
)
def test_invalid_config_raises(tmp_path, text):
    with pytest.raises(ConfigError):
        load_train_config(_write(tmp_path / "train.toml", text))
