"""
Adam over the Gaussian parameter groups, with row-coherent resizing for
densification (clones copy their parent's moments) and pruning.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional, Tuple, Union

import numpy as np

from gaussmap.ingest.ply_io import export_gaussians, load_gaussians
from gaussmap.render.grad_engine import ParamGrads, ScreenGradAccumulator
from gaussmap.scene_core import SH_COEFFS, GaussianScene, normalize_quaternion

PathLike = Union[str, Path]

BETA1 = 0.9
BETA2 = 0.999
EPSILON = 1e-15

PARAM_GROUPS = ("means", "scales", "rotations", "opacity_logits", "sh_dc", "sh_rest")

_GROUP_SHAPES = {
    "means": (3,),
    "scales": (3,),
    "rotations": (4,),
    "opacity_logits": (),
    "sh_dc": (3, 1),
    "sh_rest": (3, SH_COEFFS - 1),
}


def scene_group(scene: GaussianScene, name: str) -> np.ndarray:
    if name == "sh_dc":
        return scene.sh[:, :, :1]
    if name == "sh_rest":
        return scene.sh[:, :, 1:]
    return getattr(scene, name)


def grad_group(grads: ParamGrads, name: str) -> np.ndarray:
    if name == "sh_dc":
        return grads.sh[:, :, :1]
    if name == "sh_rest":
        return grads.sh[:, :, 1:]
    return getattr(grads, name)


@dataclass(eq=False)
class AdamState:
    exp_avg: Dict[str, np.ndarray] = field(default_factory=dict)
    exp_avg_sq: Dict[str, np.ndarray] = field(default_factory=dict)
    steps: Dict[str, int] = field(default_factory=dict)

    @classmethod
    def for_scene(cls, n: int) -> "AdamState":
        state = cls()
        for name in PARAM_GROUPS:
            state.exp_avg[name] = np.zeros((n, *_GROUP_SHAPES[name]))
            state.exp_avg_sq[name] = np.zeros((n, *_GROUP_SHAPES[name]))
            state.steps[name] = 0
        return state

    def __len__(self) -> int:
        return len(self.exp_avg["means"])

    def keep(self, indices: np.ndarray) -> None:
        """Drop every row not in `indices` (survivor order preserved)."""
        for name in PARAM_GROUPS:
            self.exp_avg[name] = self.exp_avg[name][indices]
            self.exp_avg_sq[name] = self.exp_avg_sq[name][indices]

    def clone(self, parents: np.ndarray) -> None:
        """Append one row per parent, copied from the parent's moments."""
        for name in PARAM_GROUPS:
            self.exp_avg[name] = np.concatenate([self.exp_avg[name], self.exp_avg[name][parents]])
            self.exp_avg_sq[name] = np.concatenate([self.exp_avg_sq[name], self.exp_avg_sq[name][parents]])


def adam_step(scene: GaussianScene, grads: ParamGrads, state: AdamState, learning_rates: Dict[str, float]) -> GaussianScene:
    """
    One Adam update. Groups with a zero (or missing) learning rate are frozen:
    neither the parameters nor their moments move. Quaternions are renormalized.
    """
    if len(state) != len(scene):
        raise ValueError(f"AdamState has {len(state)} rows for a scene of {len(scene)} Gaussians")

    updated = {}
    for name in PARAM_GROUPS:
        lr = learning_rates.get(name, 0.0)
        if lr <= 0.0:
            continue
        g = grad_group(grads, name)
        m = BETA1 * state.exp_avg[name] + (1.0 - BETA1) * g
        v = BETA2 * state.exp_avg_sq[name] + (1.0 - BETA2) * g * g
        state.exp_avg[name], state.exp_avg_sq[name] = m, v
        state.steps[name] += 1
        t = state.steps[name]
        m_hat = m / (1.0 - BETA1 ** t)
        v_hat = v / (1.0 - BETA2 ** t)
        updated[name] = scene_group(scene, name) - lr * m_hat / (np.sqrt(v_hat) + EPSILON)

    if not updated:
        return scene

    changes = {}
    for name in ("means", "scales", "opacity_logits"):
        if name in updated:
            changes[name] = updated[name]
    if "rotations" in updated:
        changes["rotations"] = normalize_quaternion(updated["rotations"])
    if "sh_dc" in updated or "sh_rest" in updated:
        sh = np.array(scene.sh)
        if "sh_dc" in updated:
            sh[:, :, :1] = updated["sh_dc"]
        if "sh_rest" in updated:
            sh[:, :, 1:] = updated["sh_rest"]
        changes["sh"] = sh
    return scene.with_params(**changes)


@dataclass(eq=False)
class ControlState:
    """Densification bookkeeping carried across a checkpoint: the screen-gradient window and the clone rng."""

    accumulator: ScreenGradAccumulator
    rng: np.random.Generator


def checkpoint_paths(directory: PathLike, iteration: int) -> Tuple[Path, Path]:
    directory = Path(directory)
    return directory / f"point_cloud_{iteration}.ply", directory / f"adam_{iteration}.npz"


def save_checkpoint(scene: GaussianScene, state: AdamState, directory: PathLike, iteration: int, control: Optional[ControlState] = None) -> Path:
    ply_path, adam_path = checkpoint_paths(directory, iteration)
    export_gaussians(scene, ply_path)
    arrays = {}
    for name in PARAM_GROUPS:
        arrays[f"exp_avg__{name}"] = state.exp_avg[name]
        arrays[f"exp_avg_sq__{name}"] = state.exp_avg_sq[name]
        arrays[f"steps__{name}"] = np.array(state.steps[name])
    if control is not None:
        arrays["control__norm_sum"] = control.accumulator.norm_sum
        arrays["control__counts"] = control.accumulator.counts
        arrays["control__rng"] = np.array(json.dumps(control.rng.bit_generator.state))
    np.savez(adam_path, **arrays)
    return ply_path


def latest_checkpoint(directory: PathLike) -> Optional[int]:
    iterations = []
    for path in Path(directory).glob("point_cloud_*.ply"):
        suffix = path.stem[len("point_cloud_"):]
        if suffix.isdigit() and checkpoint_paths(directory, int(suffix))[1].exists():
            iterations.append(int(suffix))
    return max(iterations) if iterations else None


def load_checkpoint(directory: PathLike, iteration: Optional[int] = None) -> Tuple[GaussianScene, AdamState, int]:
    """
    Restore (scene, AdamState, iteration); the latest checkpoint when iteration is None.

    Raises:
        FileNotFoundError: no checkpoint in `directory`
    """
    if iteration is None:
        iteration = latest_checkpoint(directory)
        if iteration is None:
            raise FileNotFoundError(f"No checkpoint found in {directory}")
    ply_path, adam_path = checkpoint_paths(directory, iteration)
    scene = load_gaussians(ply_path)

    state = AdamState()
    with np.load(adam_path) as data:
        for name in PARAM_GROUPS:
            state.exp_avg[name] = np.array(data[f"exp_avg__{name}"])
            state.exp_avg_sq[name] = np.array(data[f"exp_avg_sq__{name}"])
            state.steps[name] = int(data[f"steps__{name}"])
    return scene, state, iteration


def load_control_state(directory: PathLike, iteration: int) -> Optional[ControlState]:
    """The densification state saved with checkpoint `iteration`, or None if it carries none."""
    _, adam_path = checkpoint_paths(directory, iteration)
    with np.load(adam_path) as data:
        if "control__rng" not in data.files:
            return None
        accumulator = ScreenGradAccumulator(np.array(data["control__norm_sum"]), np.array(data["control__counts"], dtype=np.int64))
        rng_state = json.loads(str(data["control__rng"]))
    rng = np.random.default_rng()
    rng.bit_generator.state = rng_state
    return ControlState(accumulator, rng)
