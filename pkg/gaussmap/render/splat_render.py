"""
Tile-based splat renderer (CPU, numpy).

Each Gaussian is projected with the local affine (EWA) approximation, binned
into 16x16 pixel tiles by its 3-sigma box, sorted per tile by (depth, id) and
alpha-blended front to back. Pixel (x, y) is sampled at image-plane
coordinates (x, y). The per-tile lists and projections are kept on the
RenderOutput so the backward pass can replay the blend exactly.
"""

from dataclasses import dataclass
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from gaussmap.render.sh_radiance import direction_vectors, eval_sh_colors, normalize_directions
from gaussmap.scene_core import GaussianScene, ImageBuffer, SurfaceGaussian, View

LOWPASS = 0.3
NEAR_CLIP = 0.05
ALPHA_SKIP = 1.0 / 255.0
T_MIN = 1e-4
CUTOFF_SIGMA = 3.0


@dataclass(frozen=True)
class RenderSettings:
    tile_size: int = 16
    near_clip: float = NEAR_CLIP
    background: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    skip_low_alpha: bool = True
    early_stop: bool = True
    max_sh_degree: int = 2
    sh_frame: str = "camera"
    lowpass: float = LOWPASS

    @classmethod
    def from_config(cls, cfg) -> "RenderSettings":
        return cls(
            tile_size=cfg.tile_size,
            near_clip=cfg.near_clip,
            background=tuple(cfg.background),
            skip_low_alpha=cfg.skip_low_alpha,
            early_stop=cfg.early_stop,
            max_sh_degree=cfg.max_sh_degree,
            sh_frame=cfg.sh_frame,
        )

    def exact(self) -> "RenderSettings":
        """Same settings with the skip and early-stop thresholds disabled."""
        return RenderSettings(self.tile_size, self.near_clip, self.background, False, False, self.max_sh_degree, self.sh_frame, self.lowpass)


@dataclass(frozen=True, eq=False)
class Splat2D:
    center: np.ndarray
    cov2d: np.ndarray
    depth: float
    color: np.ndarray
    opacity: float
    gaussian_id: int


@dataclass(frozen=True, eq=False)
class Projection:
    """Screen-space state of the Gaussians that survived culling (row m is scene id ids[m])."""

    ids: np.ndarray
    world_to_camera: np.ndarray
    cam_means: np.ndarray
    centers: np.ndarray
    jacobians: np.ndarray
    cov3d: np.ndarray
    cov2d: np.ndarray
    conics: np.ndarray
    opacities: np.ndarray
    colors: np.ndarray
    raw_colors: np.ndarray
    dirs: np.ndarray
    dir_norms: np.ndarray
    pixel_bounds: np.ndarray  # (M, 4) inclusive x0, x1, y0, y1

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def depths(self) -> np.ndarray:
        return self.cam_means[:, 2]

    def splat(self, m: int) -> Splat2D:
        return Splat2D(self.centers[m], self.cov2d[m], float(self.depths[m]), self.colors[m], float(self.opacities[m]), int(self.ids[m]))


@dataclass(frozen=True, eq=False)
class RenderOutput:
    image: ImageBuffer
    transmittance: np.ndarray
    contributors: np.ndarray
    weight_sum: np.ndarray
    projection: Projection
    tile_lists: Tuple[np.ndarray, ...]
    settings: RenderSettings
    scene_token: int
    scene_size: int
    view_id: int = 0


def pinhole_jacobians(cam_means: np.ndarray, fx: float, fy: float) -> np.ndarray:
    """(M, 2, 3) Jacobian of (fx x/z, fy y/z) at each camera-frame mean."""
    tx, ty, tz = cam_means[:, 0], cam_means[:, 1], cam_means[:, 2]
    J = np.zeros((len(cam_means), 2, 3))
    J[:, 0, 0] = fx / tz
    J[:, 0, 2] = -fx * tx / (tz * tz)
    J[:, 1, 1] = fy / tz
    J[:, 1, 2] = -fy * ty / (tz * tz)
    return J


def project_gaussians(scene: GaussianScene, view: View, settings: Optional[RenderSettings] = None) -> Projection:
    """Project every Gaussian; drop those behind near_clip or whose 3-sigma box holds no pixel centre."""
    settings = settings or RenderSettings()
    intr = view.intrinsics
    W = view.pose.rotation_matrix.T

    cam_all = view.pose.world_to_camera(scene.means)
    front = np.flatnonzero(cam_all[:, 2] > settings.near_clip)
    cam = cam_all[front]

    J = pinhole_jacobians(cam, intr.fx, intr.fy)
    cov3d = scene.covariances()[front]
    M = np.einsum("mij,jk->mik", J, W)
    cov2d = np.einsum("mij,mjk,mlk->mil", M, cov3d, M)
    cov2d = 0.5 * (cov2d + np.swapaxes(cov2d, 1, 2)) + settings.lowpass * np.eye(2)

    centers = np.stack([intr.fx * cam[:, 0] / cam[:, 2] + intr.cx, intr.fy * cam[:, 1] / cam[:, 2] + intr.cy], axis=1)
    ext_x = CUTOFF_SIGMA * np.sqrt(cov2d[:, 0, 0])
    ext_y = CUTOFF_SIGMA * np.sqrt(cov2d[:, 1, 1])

    x0 = np.ceil(np.clip(centers[:, 0] - ext_x, -1.0, intr.width))
    x1 = np.floor(np.clip(centers[:, 0] + ext_x, -1.0, intr.width))
    y0 = np.ceil(np.clip(centers[:, 1] - ext_y, -1.0, intr.height))
    y1 = np.floor(np.clip(centers[:, 1] + ext_y, -1.0, intr.height))
    x0, x1 = np.maximum(x0, 0), np.minimum(x1, intr.width - 1)
    y0, y1 = np.maximum(y0, 0), np.minimum(y1, intr.height - 1)
    keep = (x0 <= x1) & (y0 <= y1)

    ids = front[keep]
    cam = cam[keep]
    dirs, dir_norms = normalize_directions(direction_vectors(scene.means[ids], view.pose, settings.sh_frame))
    colors, raw = eval_sh_colors(scene.sh[ids], dirs, settings.max_sh_degree)

    cov2d = cov2d[keep]
    return Projection(
        ids=ids,
        world_to_camera=W,
        cam_means=cam,
        centers=centers[keep],
        jacobians=J[keep],
        cov3d=cov3d[keep],
        cov2d=cov2d,
        conics=np.linalg.inv(cov2d),
        opacities=scene.opacities[ids],
        colors=colors,
        raw_colors=raw,
        dirs=dirs,
        dir_norms=dir_norms,
        pixel_bounds=np.stack([x0[keep], x1[keep], y0[keep], y1[keep]], axis=1).astype(np.int64),
    )


def project_gaussian(gaussian: SurfaceGaussian, view: View, settings: Optional[RenderSettings] = None) -> Optional[Splat2D]:
    """Single-Gaussian projection; None when culled."""
    proj = project_gaussians(GaussianScene.from_gaussians([gaussian]), view, settings)
    if len(proj) == 0:
        return None
    return proj.splat(0)


def depth_order(depths: np.ndarray, ids: Optional[np.ndarray] = None) -> np.ndarray:
    """Stable ascending depth order, ties broken by ascending id."""
    depths = np.asarray(depths, dtype=np.float64)
    ids = np.arange(len(depths)) if ids is None else np.asarray(ids)
    return np.lexsort((ids, depths))


def tile_grid(width: int, height: int, tile_size: int) -> Tuple[int, int]:
    return -(-width // tile_size), -(-height // tile_size)


def tile_pixels(tile: int, width: int, height: int, tile_size: int) -> Tuple[np.ndarray, np.ndarray]:
    """Flattened (x, y) pixel coordinates of one tile, row-major."""
    tiles_x, _ = tile_grid(width, height, tile_size)
    tx, ty = tile % tiles_x, tile // tiles_x
    ys, xs = np.mgrid[ty * tile_size : min((ty + 1) * tile_size, height), tx * tile_size : min((tx + 1) * tile_size, width)]
    return xs.ravel(), ys.ravel()


def bin_tiles(proj: Projection, width: int, height: int, tile_size: int) -> Tuple[np.ndarray, ...]:
    """Per-tile arrays of projection rows, each sorted by (depth, id)."""
    tiles_x, tiles_y = tile_grid(width, height, tile_size)
    n_tiles = tiles_x * tiles_y
    if len(proj) == 0:
        return tuple(np.zeros(0, dtype=np.int64) for _ in range(n_tiles))

    tx0, tx1 = proj.pixel_bounds[:, 0] // tile_size, proj.pixel_bounds[:, 1] // tile_size
    ty0, ty1 = proj.pixel_bounds[:, 2] // tile_size, proj.pixel_bounds[:, 3] // tile_size
    span_x = tx1 - tx0 + 1
    counts = span_x * (ty1 - ty0 + 1)

    rows = np.repeat(np.arange(len(proj)), counts)
    local = np.arange(len(rows)) - np.repeat(np.cumsum(counts) - counts, counts)
    tiles = (ty0[rows] + local // span_x[rows]) * tiles_x + tx0[rows] + local % span_x[rows]

    order = np.lexsort((proj.ids[rows], proj.depths[rows], tiles))
    rows, tiles = rows[order], tiles[order]
    bounds = np.searchsorted(tiles, np.arange(n_tiles + 1))
    return tuple(rows[bounds[t] : bounds[t + 1]] for t in range(n_tiles))


class BlendState(NamedTuple):
    dx: np.ndarray
    dy: np.ndarray
    gauss: np.ndarray
    alpha: np.ndarray
    t_before: np.ndarray
    t_final: np.ndarray


def blend_tile(proj: Projection, members: np.ndarray, xs: np.ndarray, ys: np.ndarray, settings: RenderSettings) -> BlendState:
    """
    Per-pixel blend state for one tile: (P, K) arrays over the tile's pixels and
    its depth-sorted splats. Skipped contributions (alpha < 1/255) and those
    reached after transmittance fell below 1e-4 have alpha 0.
    """
    centers = proj.centers[members]
    conics = proj.conics[members]
    dx = xs[:, None] - centers[None, :, 0]
    dy = ys[:, None] - centers[None, :, 1]
    power = -0.5 * (conics[:, 0, 0] * dx * dx + conics[:, 1, 1] * dy * dy) - conics[:, 0, 1] * dx * dy
    gauss = np.exp(power)
    alpha = proj.opacities[members][None, :] * gauss

    if settings.skip_low_alpha:
        alpha = np.where(alpha < ALPHA_SKIP, 0.0, alpha)
    t_after = np.cumprod(1.0 - alpha, axis=1)
    t_before = np.concatenate([np.ones((len(xs), 1)), t_after[:, :-1]], axis=1)
    if settings.early_stop:
        # transmittance only falls along the list, so the kept splats form a prefix
        alpha = np.where(t_before >= T_MIN, alpha, 0.0)
        t_after = np.cumprod(1.0 - alpha, axis=1)
        t_before = np.concatenate([np.ones((len(xs), 1)), t_after[:, :-1]], axis=1)
    t_final = t_after[:, -1] if alpha.shape[1] else np.ones(len(xs))
    return BlendState(dx, dy, gauss, alpha, t_before, t_final)


def render(scene: GaussianScene, view: View, settings: Optional[RenderSettings] = None) -> RenderOutput:
    """
    Render `scene` from `view`.

    Returns:
        RenderOutput with the image, final transmittance, contributor counts and
        the retained projection / tile lists
    """
    settings = settings or RenderSettings()
    width, height = view.intrinsics.width, view.intrinsics.height
    background = np.asarray(settings.background, dtype=np.float64)

    proj = project_gaussians(scene, view, settings)
    tile_lists = bin_tiles(proj, width, height, settings.tile_size)

    image = np.empty((height, width, 3))
    image[:] = background
    transmittance = np.ones((height, width))
    contributors = np.zeros((height, width), dtype=np.int64)
    weight_sum = np.zeros((height, width))

    for tile, members in enumerate(tile_lists):
        if len(members) == 0:
            continue
        xs, ys = tile_pixels(tile, width, height, settings.tile_size)
        state = blend_tile(proj, members, xs, ys, settings)
        weights = state.alpha * state.t_before
        image[ys, xs] = weights @ proj.colors[members] + state.t_final[:, None] * background
        transmittance[ys, xs] = state.t_final
        contributors[ys, xs] = np.count_nonzero(state.alpha, axis=1)
        weight_sum[ys, xs] = weights.sum(axis=1)

    return RenderOutput(
        image=ImageBuffer(image),
        transmittance=transmittance,
        contributors=contributors,
        weight_sum=weight_sum,
        projection=proj,
        tile_lists=tile_lists,
        settings=settings,
        scene_token=scene.token,
        scene_size=len(scene),
        view_id=view.id,
    )


def render_views(scene: GaussianScene, views: Sequence[View], settings: Optional[RenderSettings] = None) -> List[RenderOutput]:
    return [render(scene, view, settings) for view in views]
