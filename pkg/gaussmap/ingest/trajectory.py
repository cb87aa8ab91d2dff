"""
TUM trajectory files ("t tx ty tz qx qy qz qw") and image/pose association.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from gaussmap.errors import ParseError, TrajectoryError
from gaussmap.scene_core import WARNING_COUNTS, Pose

PathLike = Union[str, Path]

TUM_COLUMNS = ["t", "tx", "ty", "tz", "qx", "qy", "qz", "qw"]
QUATERNION_NORM_RANGE = (0.9, 1.1)
ASSOCIATION_TOLERANCE_S = 0.005


def load_trajectory(path: PathLike) -> List[Tuple[float, Pose]]:
    """
    Load a TUM trajectory.

    Returns:
        List of (timestamp, camera-to-world Pose), timestamps strictly increasing

    Raises:
        ParseError: wrong column count or non-numeric values
        TrajectoryError: non-monotone timestamps or a quaternion norm outside [0.9, 1.1]
    """
    path = Path(path)
    try:
        df = pd.read_csv(path, sep=r"\s+", header=None, comment="#", engine="python", dtype=np.float64)
    except FileNotFoundError as e:
        raise ParseError("File not found", path=path) from e
    except pd.errors.EmptyDataError:
        return []
    except (pd.errors.ParserError, ValueError) as e:
        raise ParseError(f"Malformed TUM trajectory: {e}", path=path) from e

    if df.shape[1] != len(TUM_COLUMNS):
        raise ParseError(f"Expected {len(TUM_COLUMNS)} columns (t tx ty tz qx qy qz qw), got {df.shape[1]}", path=path)
    df.columns = TUM_COLUMNS

    values = df.to_numpy()
    bad = ~np.all(np.isfinite(values), axis=1)
    if np.any(bad):
        row = int(np.argmax(bad))
        raise ParseError("Non-finite value", path=path, line=row + 1)

    timestamps = values[:, 0]
    steps = np.diff(timestamps)
    if np.any(steps <= 0):
        row = int(np.argmax(steps <= 0)) + 1
        raise TrajectoryError(f"Timestamps must be strictly increasing ({timestamps[row - 1]} then {timestamps[row]})", path=path, line=row + 1)

    quats_xyzw = values[:, 4:8]
    norms = np.linalg.norm(quats_xyzw, axis=1)
    lo, hi = QUATERNION_NORM_RANGE
    outside = (norms < lo) | (norms > hi)
    if np.any(outside):
        row = int(np.argmax(outside))
        raise TrajectoryError(f"Quaternion norm {norms[row]:.4f} outside [{lo}, {hi}]; file looks corrupt", path=path, line=row + 1)

    poses = []
    for t, (tx, ty, tz), (qx, qy, qz, qw) in zip(timestamps, values[:, 1:4], quats_xyzw):
        poses.append((float(t), Pose(np.array([qw, qx, qy, qz]), np.array([tx, ty, tz]))))
    return poses


def save_trajectory(entries: Sequence[Tuple[float, Pose]], path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["# timestamp tx ty tz qx qy qz qw"]
    for t, pose in entries:
        w, x, y, z = pose.rotation
        tx, ty, tz = pose.translation
        lines.append(" ".join(f"{v:.17g}" for v in (t, tx, ty, tz, x, y, z, w)))
    path.write_text("\n".join(lines) + "\n")
    return path


@dataclass(frozen=True)
class FrameBinding:
    frame_id: int
    image_path: Path
    timestamp: float
    pose: Pose


def parse_frame_name(path: Path) -> Tuple[Optional[int], float]:
    """
    Image stems encode the timestamp as their last '_' token and optionally the
    frame id as the token before it: "1.250000.png" or "0007_1.250000.png".
    """
    tokens = path.stem.split("_")
    try:
        timestamp = float(tokens[-1])
    except ValueError as e:
        raise ParseError(f"Image name does not end in a timestamp: {path.name}", path=path) from e

    frame_id = None
    if len(tokens) >= 2 and tokens[-2].isdigit():
        frame_id = int(tokens[-2])
    return frame_id, timestamp


def associate_frames(image_paths: Sequence[Path], trajectory: Sequence[Tuple[float, Pose]], tolerance: float = ASSOCIATION_TOLERANCE_S) -> List[FrameBinding]:
    """
    Bind each image to the nearest trajectory timestamp within `tolerance` seconds.
    Images without a close enough pose are dropped with a warning.
    """
    if not trajectory:
        return []
    stamps = np.array([t for t, _ in trajectory])

    bindings = []
    for ordinal, image_path in enumerate(sorted(Path(p) for p in image_paths)):
        frame_id, timestamp = parse_frame_name(image_path)
        nearest = int(np.argmin(np.abs(stamps - timestamp)))
        if abs(stamps[nearest] - timestamp) > tolerance:
            WARNING_COUNTS["frame_dropped"] += 1
            print(f"   ⚠️  Dropping {image_path.name}: no pose within {tolerance * 1000:.0f} ms")
            continue
        bindings.append(FrameBinding(frame_id if frame_id is not None else ordinal, image_path, timestamp, trajectory[nearest][1]))
    return bindings
