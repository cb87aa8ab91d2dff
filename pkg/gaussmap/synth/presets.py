"""
Synthetic scene presets: textured rectangles seen from a ring of cameras.
"""

from dataclasses import dataclass, replace
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np

from gaussmap.errors import ConfigError
from gaussmap.scene_core import CameraIntrinsics, Pose, matrix_to_quaternion

Vec3 = Tuple[float, float, float]

CHECKER = "checker"
GRADIENT = "gradient"
SOLID = "solid"
ALBEDO_KINDS = (CHECKER, GRADIENT, SOLID)


@dataclass(frozen=True)
class SurfacePatch:
    """
    Rectangle centre + u_axis * [-half_u, half_u] + v_axis * [-half_v, half_v].

    `lidar_coverage` is the fraction of the u range (starting at -half_u) that
    the LiDAR samples; the camera always sees the whole patch. `specular` is the
    degree-1 SH amplitude of the ground-truth Gaussians (0 = Lambertian).
    """

    name: str
    center: Vec3
    u_axis: Vec3
    v_axis: Vec3
    half_u: float
    half_v: float
    albedo: str = CHECKER
    colors: Tuple[Vec3, Vec3] = ((0.8, 0.2, 0.1), (0.1, 0.3, 0.8))
    checker_size: float = 0.25
    specular: float = 0.0
    lidar_coverage: float = 1.0

    def __post_init__(self):
        if self.albedo not in ALBEDO_KINDS:
            raise ConfigError(f"Surface '{self.name}': unknown albedo '{self.albedo}'")
        if self.half_u <= 0 or self.half_v <= 0:
            raise ConfigError(f"Surface '{self.name}': half extents must be > 0")
        if not 0.0 < self.lidar_coverage <= 1.0:
            raise ConfigError(f"Surface '{self.name}': lidar_coverage must be in (0, 1]")
        if abs(float(np.dot(self.u_axis, self.v_axis))) > 1e-9:
            raise ConfigError(f"Surface '{self.name}': u_axis and v_axis must be orthogonal")

    @property
    def frame(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """(centre, unit u, unit v, unit normal)."""
        u = np.asarray(self.u_axis, dtype=np.float64)
        v = np.asarray(self.v_axis, dtype=np.float64)
        u, v = u / np.linalg.norm(u), v / np.linalg.norm(v)
        return np.asarray(self.center, dtype=np.float64), u, v, np.cross(u, v)

    @property
    def area(self) -> float:
        return 4.0 * self.half_u * self.half_v

    @property
    def lidar_area(self) -> float:
        return self.area * self.lidar_coverage

    def to_world(self, uv: np.ndarray) -> np.ndarray:
        centre, u, v, _ = self.frame
        uv = np.asarray(uv, dtype=np.float64).reshape(-1, 2)
        return centre + uv[:, :1] * u + uv[:, 1:] * v

    def albedo_at(self, uv: np.ndarray) -> np.ndarray:
        """(K, 2) local coordinates -> (K, 3) linear RGB."""
        uv = np.asarray(uv, dtype=np.float64).reshape(-1, 2)
        first, second = (np.asarray(c, dtype=np.float64) for c in self.colors)
        if self.albedo == SOLID:
            return np.tile(first, (len(uv), 1))
        if self.albedo == GRADIENT:
            ramp = np.clip((uv[:, 0] + self.half_u) / (2.0 * self.half_u), 0.0, 1.0)[:, None]
            return (1.0 - ramp) * first + ramp * second
        cells = np.floor(uv / self.checker_size).astype(np.int64)
        odd = ((cells[:, 0] + cells[:, 1]) % 2 == 1)[:, None]
        return np.where(odd, second, first)


@dataclass(frozen=True)
class CameraRing:
    """
    `count` cameras on a horizontal circle (or arc) around `look_at`, all looking at it.
    A full circle is spaced 360/count apart; an arc includes both endpoints.
    """

    count: int
    radius: float
    height: float
    look_at: Vec3 = (0.0, 0.0, 0.0)
    start_deg: float = 0.0
    arc_deg: float = 360.0
    image_size: int = 64
    fov_deg: float = 60.0

    def angles(self) -> np.ndarray:
        if self.arc_deg >= 360.0:
            steps = np.arange(self.count) * (360.0 / self.count)
        else:
            steps = np.linspace(0.0, self.arc_deg, self.count)
        return np.radians(self.start_deg + steps)

    def eyes(self) -> np.ndarray:
        a = self.angles()
        centre = np.asarray(self.look_at, dtype=np.float64)
        return np.stack([centre[0] + self.radius * np.cos(a), centre[1] + self.radius * np.sin(a), np.full_like(a, self.height)], axis=1)

    def intrinsics(self) -> CameraIntrinsics:
        return CameraIntrinsics.from_fov(self.image_size, self.image_size, self.fov_deg)


@dataclass(frozen=True)
class ExtraCamera:
    eye: Vec3
    look_at: Vec3


def look_at_pose(eye: Sequence[float], target: Sequence[float], up: Sequence[float] = (0.0, 0.0, 1.0)) -> Pose:
    """Camera-to-world pose looking from `eye` at `target` (camera x right, y down, z forward)."""
    eye = np.asarray(eye, dtype=np.float64)
    forward = np.asarray(target, dtype=np.float64) - eye
    forward /= np.linalg.norm(forward)
    right = np.cross(forward, np.asarray(up, dtype=np.float64))
    if np.linalg.norm(right) < 1e-9:
        right = np.cross(forward, np.array([0.0, 1.0, 0.0]))
    right /= np.linalg.norm(right)
    down = np.cross(forward, right)
    return Pose(matrix_to_quaternion(np.stack([right, down, forward], axis=1)), eye)


@dataclass(frozen=True)
class ScenePreset:
    name: str
    surfaces: Tuple[SurfacePatch, ...]
    ring: CameraRing
    test_ids: Tuple[int, ...]
    extrapolated_ids: Tuple[int, ...] = ()
    extra_cameras: Tuple[ExtraCamera, ...] = ()
    lidar_density: float = 400.0  # points per m^2
    lidar_noise: float = 0.005  # meters, isotropic
    gt_density: float = 400.0
    gaussian_spacing: float = 0.1  # ground-truth Gaussian grid pitch, meters
    background: Vec3 = (0.0, 0.0, 0.0)
    description: str = ""

    def __post_init__(self):
        problems = []
        if not self.surfaces:
            problems.append("needs at least one surface")
        if self.camera_count < 2:
            problems.append("needs at least two cameras")
        if not self.test_ids:
            problems.append("needs at least one held-out view")
        stray = [i for i in self.test_ids if not 0 <= i < self.camera_count]
        if stray:
            problems.append(f"held-out ids {stray} do not name a camera")
        if not set(self.extrapolated_ids) <= set(self.test_ids):
            problems.append("extrapolated_ids must be held-out ids")
        if self.lidar_density <= 0 or self.lidar_noise < 0 or self.gaussian_spacing <= 0:
            problems.append("densities and spacing must be positive, noise non-negative")
        if problems:
            raise ConfigError(f"Preset '{self.name}': " + "; ".join(problems))

    @property
    def camera_count(self) -> int:
        return self.ring.count + len(self.extra_cameras)

    def poses(self) -> list:
        target = self.ring.look_at
        poses = [look_at_pose(eye, target) for eye in self.ring.eyes()]
        poses.extend(look_at_pose(cam.eye, cam.look_at) for cam in self.extra_cameras)
        return poses

    def with_image_size(self, size: int) -> "ScenePreset":
        return replace(self, ring=replace(self.ring, image_size=size))


def plane_lambert() -> ScenePreset:
    floor = SurfacePatch("floor", (0.0, 0.0, 0.0), (1.0, 0.0, 0.0), (0.0, 1.0, 0.0), 1.0, 1.0, CHECKER)
    return ScenePreset(
        name="plane-lambert",
        surfaces=(floor,),
        ring=CameraRing(count=6, radius=1.6, height=1.4, image_size=64, fov_deg=60.0),
        test_ids=(5,),
        description="Checkered floor, six cameras on a ring, one held out.",
    )


def box_room() -> ScenePreset:
    half, height = 1.5, 2.0
    walls = (
        SurfacePatch("floor", (0.0, 0.0, 0.0), (1.0, 0.0, 0.0), (0.0, 1.0, 0.0), half, half, CHECKER, ((0.7, 0.7, 0.6), (0.2, 0.2, 0.25)), 0.3),
        SurfacePatch("wall_east", (half, 0.0, height / 2), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0), half, height / 2, GRADIENT, ((0.9, 0.3, 0.2), (0.9, 0.8, 0.2))),
        SurfacePatch("wall_west", (-half, 0.0, height / 2), (0.0, -1.0, 0.0), (0.0, 0.0, 1.0), half, height / 2, CHECKER, ((0.2, 0.6, 0.3), (0.9, 0.9, 0.85)), 0.5),
        SurfacePatch("wall_north", (0.0, half, height / 2), (-1.0, 0.0, 0.0), (0.0, 0.0, 1.0), half, height / 2, GRADIENT, ((0.2, 0.3, 0.9), (0.6, 0.2, 0.7))),
        SurfacePatch("wall_south", (0.0, -half, height / 2), (1.0, 0.0, 0.0), (0.0, 0.0, 1.0), half, height / 2, CHECKER, ((0.85, 0.5, 0.1), (0.3, 0.2, 0.1)), 0.4),
    )
    # ring ids 0-7 (2 and 5 held out), id 8 is raised and pulled back out of the ring
    return ScenePreset(
        name="box-room",
        surfaces=walls,
        ring=CameraRing(count=8, radius=0.6, height=1.0, look_at=(0.0, 0.0, 0.8), image_size=128, fov_deg=70.0),
        test_ids=(2, 5, 8),
        extrapolated_ids=(8,),
        extra_cameras=(ExtraCamera((0.9, -0.9, 1.5), (-0.5, 0.5, 0.6)),),
        lidar_density=300.0,
        gt_density=300.0,
        description="Closed room without a ceiling; 6 training, 2 interpolated and 1 extrapolated view.",
    )


def two_walls_specular() -> ScenePreset:
    walls = (
        SurfacePatch("wall_x", (0.0, 1.0, 1.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0), 1.0, 1.0, CHECKER, ((0.6, 0.6, 0.6), (0.2, 0.3, 0.5)), 0.3, specular=0.15),
        SurfacePatch("wall_y", (1.0, 0.0, 1.0), (-1.0, 0.0, 0.0), (0.0, 0.0, 1.0), 1.0, 1.0, GRADIENT, ((0.8, 0.4, 0.2), (0.3, 0.7, 0.4)), specular=0.15),
    )
    return ScenePreset(
        name="two-walls-specular",
        surfaces=walls,
        ring=CameraRing(count=6, radius=2.5, height=1.2, look_at=(0.0, 0.0, 1.0), start_deg=20.0, arc_deg=50.0, image_size=64, fov_deg=60.0),
        test_ids=(2,),
        description="Corner of two walls with degree-1 view-dependent shading, cameras on an arc.",
    )


def half_coverage() -> ScenePreset:
    floor = SurfacePatch("floor", (0.0, 0.0, 0.0), (1.0, 0.0, 0.0), (0.0, 1.0, 0.0), 1.0, 1.0, GRADIENT, lidar_coverage=0.5)
    return ScenePreset(
        name="half-coverage",
        surfaces=(floor,),
        ring=CameraRing(count=5, radius=1.4, height=1.6, image_size=48, fov_deg=65.0),
        test_ids=(4,),
        lidar_noise=0.0,
        description="Floor whose LiDAR samples cover only the u < 0 half.",
    )


PRESETS: Dict[str, Callable[[], "ScenePreset"]] = {
    "plane-lambert": plane_lambert,
    "box-room": box_room,
    "two-walls-specular": two_walls_specular,
    "half-coverage": half_coverage,
}


def get_preset(name: str, image_size: Optional[int] = None) -> ScenePreset:
    if name not in PRESETS:
        raise ConfigError(f"Unknown preset '{name}'. Available: {', '.join(sorted(PRESETS))}")
    preset = PRESETS[name]()
    return preset.with_image_size(image_size) if image_size else preset
