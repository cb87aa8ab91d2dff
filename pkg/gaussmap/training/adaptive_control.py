"""
Densification by cloning high-gradient Gaussians, and opacity pruning.
"""

from dataclasses import asdict, dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from gaussmap.scene_core import GaussianScene, quaternion_to_matrix

CLONE_SCALE_DIVISOR = 1.6


@dataclass(frozen=True)
class ControlEvent:
    iteration: int
    kind: str
    cloned_from: List[int] = field(default_factory=list)
    cloned_to: List[int] = field(default_factory=list)
    pruned: List[int] = field(default_factory=list)
    # surviving old ids in their new order (new id = position); empty when nothing was pruned
    survivors: List[int] = field(default_factory=list)
    triggers: List[float] = field(default_factory=list)
    count_before: int = 0
    count_after: int = 0

    @property
    def is_empty(self) -> bool:
        return not self.cloned_from and not self.pruned

    def to_record(self) -> dict:
        record = {"type": "control"}
        record.update(asdict(self))
        return record


def densify(
    scene: GaussianScene,
    screen_grad_norms: np.ndarray,
    threshold: float = 2e-4,
    rng: Optional[np.random.Generator] = None,
    iteration: int = 0,
) -> Tuple[GaussianScene, ControlEvent]:
    """
    Clone every Gaussian whose mean screen-space gradient norm exceeds `threshold`.

    A clone's mean is its parent's mean plus one draw from the parent's own
    Gaussian; its log-scale shrinks by log(1.6); rotation, opacity and SH are
    copied. Clones are appended after the existing Gaussians, parents stay.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    norms = np.asarray(screen_grad_norms, dtype=np.float64)
    parents = np.flatnonzero(norms > threshold)
    n = len(scene)
    if len(parents) == 0:
        return scene, ControlEvent(iteration, "densify", count_before=n, count_after=n)

    R = quaternion_to_matrix(scene.rotations[parents])
    draws = rng.standard_normal((len(parents), 3)) * np.exp(scene.scales[parents])
    offsets = np.einsum("kij,kj->ki", R, draws)

    clones = GaussianScene(
        means=scene.means[parents] + offsets,
        scales=scene.scales[parents] - np.log(CLONE_SCALE_DIVISOR),
        rotations=scene.rotations[parents],
        opacity_logits=scene.opacity_logits[parents],
        sh=scene.sh[parents],
    )
    grown = scene.concat(clones)
    event = ControlEvent(
        iteration=iteration,
        kind="densify",
        cloned_from=parents.tolist(),
        cloned_to=list(range(n, n + len(parents))),
        triggers=norms[parents].tolist(),
        count_before=n,
        count_after=len(grown),
    )
    return grown, event


def prune(scene: GaussianScene, min_opacity: float = 0.005, iteration: int = 0) -> Tuple[GaussianScene, ControlEvent]:
    """Remove Gaussians with opacity < min_opacity; survivors keep their relative order."""
    opacities = scene.opacities
    keep = opacities >= min_opacity
    n = len(scene)
    if keep.all():
        return scene, ControlEvent(iteration, "prune", count_before=n, count_after=n)

    pruned = np.flatnonzero(~keep)
    survivors = np.flatnonzero(keep)
    event = ControlEvent(
        iteration=iteration,
        kind="prune",
        pruned=pruned.tolist(),
        survivors=survivors.tolist(),
        triggers=opacities[pruned].tolist(),
        count_before=n,
        count_after=len(survivors),
    )
    return scene.subset(survivors), event
