"""
Shared geometric and appearance types.

Everything here is an immutable value: numpy payloads are copied on construction
and flagged read-only. Updates build a new scene with a new token.

Conventions:
    - quaternions are (w, x, y, z)
    - Pose is camera-to-world (world point = R @ camera point + t)
    - colors are linear RGB; sRGB only exists at PNG import/export
"""

import itertools
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial.transform import Rotation
from scipy.special import expit
from scipy.special import logit as special_logit

# 1 / (2 * sqrt(pi)), the constant degree-0 real SH basis value
Y00_NORM = 0.28209479177387814
SH_COEFFS = 9
EPS_EIG = 1e-12

# Non-fatal anomaly counters ("eigen_clamp", "frame_dropped", ...)
WARNING_COUNTS: Counter = Counter()

_scene_tokens = itertools.count(1)


def _frozen(array, dtype=np.float64) -> np.ndarray:
    out = np.array(array, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


def logistic(x):
    """Opacity activation. logistic(0) == 0.5 exactly."""
    return expit(x)


def logit(p):
    return special_logit(p)


# ============================================================================
# Quaternions / rotations
# ============================================================================


def normalize_quaternion(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    norm = np.linalg.norm(q, axis=-1, keepdims=True)
    if np.any(norm == 0) or not np.all(np.isfinite(norm)):
        raise ValueError("Quaternion must be finite and non-zero")
    return q / norm


def quaternion_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Hamilton product a ⊗ b for (..., 4) arrays."""
    aw, ax, ay, az = np.moveaxis(np.asarray(a, dtype=np.float64), -1, 0)
    bw, bx, by, bz = np.moveaxis(np.asarray(b, dtype=np.float64), -1, 0)
    return np.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        axis=-1,
    )


def quaternion_to_matrix(q: np.ndarray) -> np.ndarray:
    """Rotation matrices for (..., 4) quaternions; inputs are normalized first."""
    w, x, y, z = np.moveaxis(normalize_quaternion(q), -1, 0)
    return np.stack(
        [
            np.stack([1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)], axis=-1),
            np.stack([2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)], axis=-1),
            np.stack([2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)], axis=-1),
        ],
        axis=-2,
    )


def matrix_to_quaternion(matrix: np.ndarray) -> np.ndarray:
    """(w, x, y, z) with w >= 0 for (..., 3, 3) proper rotation matrices."""
    xyzw = Rotation.from_matrix(np.asarray(matrix, dtype=np.float64)).as_quat()
    wxyz = np.concatenate([xyzw[..., 3:], xyzw[..., :3]], axis=-1)
    sign = np.where(wxyz[..., :1] < 0, -1.0, 1.0)
    return wxyz * sign


# ============================================================================
# Small value types
# ============================================================================


@dataclass(frozen=True)
class SymMat3:
    """Symmetric 3x3 matrix stored as its upper triangle (xx, xy, xz, yy, yz, zz)."""

    entries: Tuple[float, float, float, float, float, float]

    @classmethod
    def from_matrix(cls, matrix: np.ndarray) -> "SymMat3":
        m = np.asarray(matrix, dtype=np.float64)
        if m.shape != (3, 3):
            raise ValueError(f"Expected a 3x3 matrix, got {m.shape}")
        return cls((m[0, 0], m[0, 1], m[0, 2], m[1, 1], m[1, 2], m[2, 2]))

    def to_matrix(self) -> np.ndarray:
        xx, xy, xz, yy, yz, zz = self.entries
        return np.array([[xx, xy, xz], [xy, yy, yz], [xz, yz, zz]], dtype=np.float64)


@dataclass(frozen=True, eq=False)
class Pose:
    """Camera-to-world rigid transform."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.rotation, dtype=np.float64).reshape(4)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(t))):
            raise ValueError("Pose must be finite")
        object.__setattr__(self, "rotation", _frozen(normalize_quaternion(q)))
        object.__setattr__(self, "translation", _frozen(t))

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.array([1.0, 0.0, 0.0, 0.0]), np.zeros(3))

    @classmethod
    def from_matrix(cls, matrix: np.ndarray) -> "Pose":
        m = np.asarray(matrix, dtype=np.float64)
        return cls(matrix_to_quaternion(m[:3, :3]), m[:3, 3])

    @property
    def rotation_matrix(self) -> np.ndarray:
        return quaternion_to_matrix(self.rotation)

    @property
    def camera_center(self) -> np.ndarray:
        return self.translation

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation_matrix
        m[:3, 3] = self.translation
        return m

    def inverse(self) -> "Pose":
        conj = self.rotation * np.array([1.0, -1.0, -1.0, -1.0])
        return Pose(conj, -(self.rotation_matrix.T @ self.translation))

    def compose(self, other: "Pose") -> "Pose":
        """self ∘ other: apply `other` first."""
        q = quaternion_multiply(self.rotation, other.rotation)
        t = self.rotation_matrix @ other.translation + self.translation
        return Pose(q, t)

    def apply(self, points: np.ndarray) -> np.ndarray:
        p = np.asarray(points, dtype=np.float64)
        return p @ self.rotation_matrix.T + self.translation

    def world_to_camera(self, points: np.ndarray) -> np.ndarray:
        """Apply the inverse transform (world frame -> camera frame)."""
        p = np.asarray(points, dtype=np.float64)
        return (p - self.translation) @ self.rotation_matrix


@dataclass(frozen=True, eq=False)
class PointCloud:
    points: np.ndarray
    timestamps: Optional[np.ndarray] = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        if not np.all(np.isfinite(pts)):
            raise ValueError("PointCloud coordinates must be finite")
        object.__setattr__(self, "points", _frozen(pts))
        if self.timestamps is not None:
            ts = np.asarray(self.timestamps, dtype=np.float64).reshape(-1)
            if ts.shape[0] != pts.shape[0]:
                raise ValueError(f"{ts.shape[0]} timestamps for {pts.shape[0]} points")
            object.__setattr__(self, "timestamps", _frozen(ts))

    def __len__(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError(f"Focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if not (0 < self.cx < self.width and 0 < self.cy < self.height):
            raise ValueError(f"Principal point ({self.cx}, {self.cy}) outside {self.width}x{self.height} image")

    @classmethod
    def from_fov(cls, width: int, height: int, fov_x_deg: float) -> "CameraIntrinsics":
        fx = 0.5 * width / np.tan(np.radians(fov_x_deg) / 2.0)
        return cls(fx=float(fx), fy=float(fx), cx=(width - 1) / 2.0, cy=(height - 1) / 2.0, width=int(width), height=int(height))


@dataclass(frozen=True, eq=False)
class ImageBuffer:
    """H x W x 3 linear RGB. Values are unclamped until export."""

    rgb: np.ndarray

    def __post_init__(self):
        rgb = np.asarray(self.rgb, dtype=np.float64)
        if rgb.ndim != 3 or rgb.shape[2] != 3:
            raise ValueError(f"ImageBuffer expects (H, W, 3), got {rgb.shape}")
        if not np.all(np.isfinite(rgb)):
            raise ValueError("ImageBuffer values must be finite")
        object.__setattr__(self, "rgb", _frozen(rgb))

    @classmethod
    def filled(cls, width: int, height: int, color: Sequence[float] = (0.0, 0.0, 0.0)) -> "ImageBuffer":
        return cls(np.broadcast_to(np.asarray(color, dtype=np.float64), (height, width, 3)))

    @property
    def width(self) -> int:
        return self.rgb.shape[1]

    @property
    def height(self) -> int:
        return self.rgb.shape[0]

    def clamped(self) -> np.ndarray:
        return np.clip(self.rgb, 0.0, 1.0)


@dataclass(frozen=True, eq=False)
class View:
    pose: Pose
    intrinsics: CameraIntrinsics
    image: ImageBuffer
    id: int = 0

    def __post_init__(self):
        if (self.image.width, self.image.height) != (self.intrinsics.width, self.intrinsics.height):
            raise ValueError(
                f"View {self.id}: image is {self.image.width}x{self.image.height}, "
                f"intrinsics say {self.intrinsics.width}x{self.intrinsics.height}"
            )


# ============================================================================
# Gaussians
# ============================================================================


@dataclass(frozen=True, eq=False)
class SurfaceGaussian:
    mean: np.ndarray
    scale: np.ndarray
    rotation: np.ndarray
    opacity_logit: float
    sh: np.ndarray

    def __post_init__(self):
        sh = np.asarray(self.sh, dtype=np.float64)
        if sh.shape != (3, SH_COEFFS):
            raise ValueError(f"SurfaceGaussian needs 3x{SH_COEFFS} SH coefficients, got {sh.shape}")
        object.__setattr__(self, "mean", _frozen(np.reshape(self.mean, 3)))
        object.__setattr__(self, "scale", _frozen(np.reshape(self.scale, 3)))
        object.__setattr__(self, "rotation", _frozen(normalize_quaternion(np.reshape(self.rotation, 4))))
        object.__setattr__(self, "opacity_logit", float(self.opacity_logit))
        object.__setattr__(self, "sh", _frozen(sh))

    @property
    def opacity(self) -> float:
        return logistic(self.opacity_logit)

    @property
    def covariance(self) -> SymMat3:
        return covariance_from_factors(self.scale, self.rotation)


@dataclass(frozen=True, eq=False)
class GaussianScene:
    """
    Structure-of-arrays Gaussian map.

    Row i of every array describes Gaussian id i. `token` identifies this exact
    instance; the renderer records it so a backward pass can refuse to run
    against a different scene.
    """

    means: np.ndarray
    scales: np.ndarray
    rotations: np.ndarray
    opacity_logits: np.ndarray
    sh: np.ndarray
    token: int = field(default=0, compare=False)

    def __post_init__(self):
        means = np.asarray(self.means, dtype=np.float64).reshape(-1, 3)
        n = means.shape[0]
        shapes = {
            "scales": (n, 3),
            "rotations": (n, 4),
            "opacity_logits": (n,),
            "sh": (n, 3, SH_COEFFS),
        }
        object.__setattr__(self, "means", _frozen(means))
        for name, shape in shapes.items():
            value = np.asarray(getattr(self, name), dtype=np.float64)
            if value.shape != shape:
                raise ValueError(f"GaussianScene.{name} has shape {value.shape}, expected {shape}")
            object.__setattr__(self, name, _frozen(value))
        object.__setattr__(self, "token", next(_scene_tokens))

    @classmethod
    def empty(cls) -> "GaussianScene":
        return cls(np.zeros((0, 3)), np.zeros((0, 3)), np.zeros((0, 4)), np.zeros(0), np.zeros((0, 3, SH_COEFFS)))

    @classmethod
    def from_gaussians(cls, gaussians: Sequence[SurfaceGaussian]) -> "GaussianScene":
        if not gaussians:
            return cls.empty()
        return cls(
            means=np.stack([g.mean for g in gaussians]),
            scales=np.stack([g.scale for g in gaussians]),
            rotations=np.stack([g.rotation for g in gaussians]),
            opacity_logits=np.array([g.opacity_logit for g in gaussians]),
            sh=np.stack([g.sh for g in gaussians]),
        )

    def __len__(self) -> int:
        return self.means.shape[0]

    def gaussian(self, index: int) -> SurfaceGaussian:
        return SurfaceGaussian(self.means[index], self.scales[index], self.rotations[index], self.opacity_logits[index], self.sh[index])

    def to_gaussians(self) -> List[SurfaceGaussian]:
        return [self.gaussian(i) for i in range(len(self))]

    def with_params(self, **changes) -> "GaussianScene":
        return replace(self, **changes)

    def subset(self, indices: np.ndarray) -> "GaussianScene":
        idx = np.asarray(indices)
        return GaussianScene(self.means[idx], self.scales[idx], self.rotations[idx], self.opacity_logits[idx], self.sh[idx])

    def concat(self, other: "GaussianScene") -> "GaussianScene":
        return GaussianScene.stack([self, other])

    @classmethod
    def stack(cls, scenes: Sequence["GaussianScene"]) -> "GaussianScene":
        if not scenes:
            return cls.empty()
        return cls(
            np.concatenate([s.means for s in scenes]),
            np.concatenate([s.scales for s in scenes]),
            np.concatenate([s.rotations for s in scenes]),
            np.concatenate([s.opacity_logits for s in scenes]),
            np.concatenate([s.sh for s in scenes]),
        )

    @property
    def opacities(self) -> np.ndarray:
        return logistic(self.opacity_logits)

    def covariances(self) -> np.ndarray:
        return covariances_from_factors(self.scales, self.rotations)


# ============================================================================
# Covariance factorization
# ============================================================================


def covariances_from_factors(scales: np.ndarray, rotations: np.ndarray) -> np.ndarray:
    """Batched R diag(exp(2 s)) R^T for (N, 3) log-scales and (N, 4) quaternions."""
    R = quaternion_to_matrix(rotations)
    variances = np.exp(2.0 * np.asarray(scales, dtype=np.float64))
    return np.einsum("nij,nj,nkj->nik", R, variances, R)


def covariance_from_factors(scale: np.ndarray, rotation: np.ndarray) -> SymMat3:
    scale = np.asarray(scale, dtype=np.float64).reshape(3)
    rotation = np.asarray(rotation, dtype=np.float64).reshape(4)
    if not (np.all(np.isfinite(scale)) and np.all(np.isfinite(rotation))):
        raise ValueError("covariance_from_factors needs finite scale and rotation")
    cov = covariances_from_factors(scale[None], rotation[None])[0]
    return SymMat3.from_matrix(0.5 * (cov + cov.T))


def factors_from_covariance(cov, eps_eig: float = EPS_EIG) -> Tuple[np.ndarray, np.ndarray]:
    """
    Inverse of covariance_from_factors.

    Eigenvalues below eps_eig are clamped (counted under WARNING_COUNTS["eigen_clamp"]).
    The eigenvector frame is made right-handed by flipping the third column.
    """
    matrix = cov.to_matrix() if isinstance(cov, SymMat3) else np.asarray(cov, dtype=np.float64)
    if not np.all(np.isfinite(matrix)):
        raise ValueError("factors_from_covariance needs a finite covariance")

    eigvals, eigvecs = np.linalg.eigh(0.5 * (matrix + matrix.T))
    clamped = eigvals < eps_eig
    if np.any(clamped):
        WARNING_COUNTS["eigen_clamp"] += int(clamped.sum())
        eigvals = np.maximum(eigvals, eps_eig)

    if np.linalg.det(eigvecs) < 0:
        eigvecs[:, 2] = -eigvecs[:, 2]

    return 0.5 * np.log(eigvals), matrix_to_quaternion(eigvecs)
