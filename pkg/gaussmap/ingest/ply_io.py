"""
PLY / XYZ point cloud loading and Gaussian map export.

Point clouds: ASCII or binary-little-endian PLY with float x, y, z on the vertex
element (other properties are ignored), or whitespace separated XYZ text.

Gaussian maps use the usual splatting interchange layout so external viewers can
open them: x y z, f_dc_0..2, f_rest_0..23 (channel-major), opacity (logit),
scale_0..2 (log), rot_0..3 (w, x, y, z), all float32.
"""

from pathlib import Path
from typing import List, Union

import numpy as np
import pandas as pd
from plyfile import PlyData, PlyElement, PlyListProperty, PlyParseError

from gaussmap.errors import ParseError
from gaussmap.scene_core import SH_COEFFS, GaussianScene, PointCloud

PathLike = Union[str, Path]

XYZ_SUFFIXES = {".xyz", ".txt", ".pts"}
SH_REST_PER_CHANNEL = SH_COEFFS - 1


def gaussian_property_names() -> List[str]:
    """Vertex property order of an exported Gaussian map."""
    names = ["x", "y", "z"]
    names += [f"f_dc_{i}" for i in range(3)]
    names += [f"f_rest_{i}" for i in range(3 * SH_REST_PER_CHANNEL)]
    names += ["opacity"]
    names += [f"scale_{i}" for i in range(3)]
    names += [f"rot_{i}" for i in range(4)]
    return names


def _read_ply(path: Path) -> PlyData:
    try:
        plydata = PlyData.read(str(path))
    except PlyParseError as e:
        raise ParseError(f"Malformed PLY: {e}", path=path, line=getattr(e, "line", None), offset=getattr(e, "row", None)) from e
    except (OSError, ValueError, UnicodeDecodeError) as e:
        raise ParseError(f"Could not read PLY: {e}", path=path) from e

    if not plydata.text and plydata.byte_order == ">":
        raise ParseError("Big-endian binary PLY is not supported", path=path)
    return plydata


def _vertex_element(plydata: PlyData, path: Path) -> PlyElement:
    try:
        return plydata["vertex"]
    except KeyError:
        raise ParseError("PLY has no 'vertex' element", path=path)


def _check_finite_rows(values: np.ndarray, path: Path) -> None:
    bad = ~np.all(np.isfinite(values), axis=1)
    if np.any(bad):
        row = int(np.argmax(bad))
        raise ParseError(f"Non-finite coordinate in vertex {row}", path=path, offset=row)


def _load_ply_points(path: Path) -> PointCloud:
    vertex = _vertex_element(_read_ply(path), path)

    props = {p.name: p for p in vertex.properties}
    for axis in ("x", "y", "z"):
        prop = props.get(axis)
        if prop is None:
            raise ParseError(f"Vertex element lacks property '{axis}'", path=path)
        if isinstance(prop, PlyListProperty) or not np.dtype(prop.dtype()).kind == "f":
            raise ParseError(f"Unsupported type for property '{axis}': expected float or double", path=path)

    if vertex.count == 0:
        return PointCloud(np.zeros((0, 3)))

    points = np.stack([np.asarray(vertex[axis], dtype=np.float64) for axis in ("x", "y", "z")], axis=1)
    _check_finite_rows(points, path)

    timestamps = None
    for name in ("timestamp", "t", "time"):
        if name in props and not isinstance(props[name], PlyListProperty):
            timestamps = np.asarray(vertex[name], dtype=np.float64)
            break
    return PointCloud(points, timestamps)


def _load_xyz_points(path: Path) -> PointCloud:
    try:
        df = pd.read_csv(path, sep=r"\s+", header=None, comment="#", usecols=[0, 1, 2], dtype=np.float64, engine="python")
    except pd.errors.EmptyDataError:
        return PointCloud(np.zeros((0, 3)))
    except (pd.errors.ParserError, ValueError) as e:
        raise ParseError(f"Malformed XYZ text: {e}", path=path) from e

    points = df.to_numpy(dtype=np.float64)
    bad = ~np.all(np.isfinite(points), axis=1)
    if np.any(bad):
        row = int(np.argmax(bad))
        raise ParseError("Non-finite coordinate", path=path, line=row + 1)
    return PointCloud(points)


def load_point_cloud(path: PathLike) -> PointCloud:
    """
    Load a world-frame point cloud.

    Args:
        path: PLY (ASCII or binary little-endian) or XYZ text file

    Returns:
        PointCloud with every point of the file, in file order

    Raises:
        ParseError: malformed header, non-finite values or unsupported property types
    """
    path = Path(path)
    if not path.exists():
        raise ParseError("File not found", path=path)

    with open(path, "rb") as f:
        magic = f.read(3)

    if magic == b"ply":
        return _load_ply_points(path)
    if path.suffix.lower() in XYZ_SUFFIXES:
        return _load_xyz_points(path)
    raise ParseError("Unrecognized point cloud format (expected PLY magic or .xyz/.txt/.pts)", path=path, offset=0)


def save_point_cloud(cloud: PointCloud, path: PathLike, binary: bool = True) -> Path:
    """Write x, y, z (float32) and, when present, a float64 timestamp per vertex."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    fields = [("x", "f4"), ("y", "f4"), ("z", "f4")]
    if cloud.timestamps is not None:
        fields.append(("timestamp", "f8"))

    elements = np.empty(len(cloud), dtype=fields)
    elements["x"], elements["y"], elements["z"] = cloud.points.T
    if cloud.timestamps is not None:
        elements["timestamp"] = cloud.timestamps

    PlyData([PlyElement.describe(elements, "vertex")], text=not binary, byte_order="<").write(str(path))
    return path


def export_gaussians(scene: GaussianScene, path: PathLike) -> Path:
    """Write the Gaussian map as binary little-endian PLY (float32 payload)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    n = len(scene)
    f_rest = scene.sh[:, :, 1:].reshape(n, 3 * SH_REST_PER_CHANNEL)
    attributes = np.concatenate(
        [scene.means, scene.sh[:, :, 0], f_rest, scene.opacity_logits[:, None], scene.scales, scene.rotations],
        axis=1,
    ).astype(np.float32)

    names = gaussian_property_names()
    elements = np.empty(n, dtype=[(name, "f4") for name in names])
    for column, name in enumerate(names):
        elements[name] = attributes[:, column]

    PlyData([PlyElement.describe(elements, "vertex")], text=False, byte_order="<").write(str(path))
    return path


def load_gaussians(path: PathLike) -> GaussianScene:
    """
    Inverse of export_gaussians. float32 payloads round-trip bit-exactly.

    Raises:
        ParseError: missing or unexpected Gaussian properties
    """
    path = Path(path)
    vertex = _vertex_element(_read_ply(path), path)

    expected = gaussian_property_names()
    present = [p.name for p in vertex.properties]

    missing = [name for name in expected if name not in present]
    extra_rest = [name for name in present if name.startswith("f_rest_") and name not in expected]
    if missing or extra_rest:
        n_rest = sum(1 for name in present if name.startswith("f_rest_"))
        details = []
        if missing:
            details.append(f"missing: {', '.join(missing)}")
        if extra_rest:
            details.append(f"unexpected: {', '.join(extra_rest)}")
        raise ParseError(
            f"Gaussian PLY property mismatch ({n_rest} f_rest_* properties, expected {3 * SH_REST_PER_CHANNEL}; {'; '.join(details)})",
            path=path,
        )

    columns = np.stack([np.asarray(vertex[name]) for name in expected], axis=1) if vertex.count else np.zeros((0, len(expected)))
    columns = columns.astype(np.float32).astype(np.float64)
    n = columns.shape[0]

    sh = np.zeros((n, 3, SH_COEFFS))
    sh[:, :, 0] = columns[:, 3:6]
    sh[:, :, 1:] = columns[:, 6 : 6 + 3 * SH_REST_PER_CHANNEL].reshape(n, 3, SH_REST_PER_CHANNEL)
    offset = 6 + 3 * SH_REST_PER_CHANNEL

    return GaussianScene(
        means=columns[:, 0:3],
        scales=columns[:, offset + 1 : offset + 4],
        rotations=columns[:, offset + 4 : offset + 8],
        opacity_logits=columns[:, offset],
        sh=sh,
    )
