"""
Training orchestration: view schedule, render, loss, backward, Adam, adaptive
control, evaluation, checkpoints and the JSON-lines training log.
"""

import json
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from tqdm import tqdm

from gaussmap.errors import ManifestError, NonFiniteLossError
from gaussmap.ingest.manifest import EXTRAPOLATED, INTERPOLATED, DatasetManifest
from gaussmap.ingest.ply_io import export_gaussians
from gaussmap.ingest.train_config import STRUCTURE_MODES, TrainConfig
from gaussmap.mapping.gauss_init import InitParams, InitReport, initialize_scene, random_init
from gaussmap.mapping.voxel_map import VoxelParams, dump_voxel_map, summarize_voxel_map
from gaussmap.render.grad_engine import ParamGrads, ScreenGradAccumulator, backward
from gaussmap.render.splat_render import RenderSettings, render
from gaussmap.render.ssim import WINDOW_SIZE
from gaussmap.scene_core import WARNING_COUNTS, GaussianScene, View
from gaussmap.training.adaptive_control import densify, prune
from gaussmap.training.optimizer import AdamState, ControlState, adam_step, load_checkpoint, load_control_state, save_checkpoint

_PROJECT_ROOT = Path(__file__).resolve().parents[2]
if str(_PROJECT_ROOT) not in sys.path:
    sys.path.insert(0, str(_PROJECT_ROOT))

import config

PathLike = Union[str, Path]

FINAL_GAUSSIANS_NAME = "gaussians.ply"
VOXEL_DUMP_NAME = "voxels.txt"


@dataclass(eq=False)
class TrainLog:
    """
    Training records, optionally mirrored to a JSON-lines file. Wall-clock timings
    stay in memory (and the run summary) so equal seeds give byte-equal logs.
    """

    path: Optional[Path] = None
    records: List[dict] = field(default_factory=list)
    timings: List[float] = field(default_factory=list)

    def append(self, record: dict) -> None:
        iteration = record.get("iteration")
        if iteration is not None and self.records:
            last = self.records[-1].get("iteration")
            if last is not None and iteration < last:
                raise ValueError(f"Log iterations must be monotone ({last} then {iteration})")
        self.records.append(record)
        if self.path is not None:
            with open(self.path, "a", encoding="utf-8") as f:
                f.write(json.dumps(record) + "\n")

    def of_type(self, kind: str) -> List[dict]:
        return [r for r in self.records if r.get("type") == kind]

    def losses(self) -> np.ndarray:
        return np.array([r["loss"] for r in self.of_type("iteration")])

    def to_frame(self, kind: str = "iteration") -> pd.DataFrame:
        return pd.DataFrame(self.of_type(kind))


@dataclass(eq=False)
class TrainResult:
    scene: GaussianScene
    log: TrainLog
    train_views: List[View]
    test_views: List[View]
    tags: Dict[int, str]
    init_report: Optional[InitReport] = None
    run_dir: Optional[Path] = None


def scene_extent(views: Sequence[View]) -> float:
    """1.1 x the largest distance of a camera centre from their mean (1.0 for a single view)."""
    if len(views) <= 1:
        return 1.0
    centres = np.array([v.pose.camera_center for v in views])
    radius = float(np.max(np.linalg.norm(centres - centres.mean(axis=0), axis=1)))
    return max(1.1 * radius, 1e-6)


def learning_rates(cfg: TrainConfig, extent: float, iteration: int) -> Dict[str, float]:
    """Per-group learning rates at `iteration` (1-based) under the configured structure mode."""
    rates = {
        "means": cfg.lr_mean * extent,
        "scales": cfg.lr_scale,
        "rotations": cfg.lr_rotation,
        "opacity_logits": cfg.lr_opacity,
        "sh_dc": cfg.lr_sh_dc,
        "sh_rest": cfg.lr_sh_rest if iteration > cfg.sh_warmup else 0.0,
    }
    if cfg.structure_mode == "frozen":
        rates["means"] = rates["scales"] = rates["rotations"] = 0.0
    elif cfg.structure_mode == "position":
        rates["scales"] = rates["rotations"] = 0.0
    return rates


def control_enabled(cfg: TrainConfig) -> bool:
    return cfg.structure_mode != "frozen"


def control_due(cfg: TrainConfig, iteration: int) -> bool:
    return control_enabled(cfg) and cfg.densify_from < iteration <= cfg.densify_until and iteration % cfg.densify_interval == 0


def view_schedule(n_views: int, iteration: int, seed: int) -> int:
    """Index of the view used at `iteration`: a seeded permutation, reshuffled every epoch."""
    epoch, position = divmod(iteration - 1, n_views)
    return int(np.random.default_rng([seed, epoch]).permutation(n_views)[position])


def _extrema(values: np.ndarray) -> dict:
    finite = values[np.isfinite(values)]
    return {
        "min": float(finite.min()) if finite.size else None,
        "max": float(finite.max()) if finite.size else None,
        "non_finite": int(values.size - finite.size),
    }


def dump_diagnostics(scene: GaussianScene, grads: ParamGrads, view: View, iteration: int, directory: Optional[Path]) -> Path:
    directory = Path(directory) if directory is not None else config.OUTPUT_DIR / "diagnostics"
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / f"nonfinite_{iteration}.json"
    report = {
        "iteration": iteration,
        "view_id": view.id,
        "loss": grads.loss if np.isfinite(grads.loss) else str(grads.loss),
        "gaussians": len(scene),
        "parameters": {name: _extrema(np.asarray(getattr(scene, name))) for name in ("means", "scales", "rotations", "opacity_logits", "sh")},
        "gradients": {name: _extrema(g) for name, g in grads.groups().items()},
    }
    path.write_text(json.dumps(report, indent=2))
    return path


def mean_psnr(scene: GaussianScene, views: Sequence[View], settings: RenderSettings) -> float:
    frame = evaluate(scene, views, settings=settings, with_ssim=False)
    return float(frame["psnr"].mean()) if len(frame) else float("nan")


def optimize(
    scene: GaussianScene,
    views: Sequence[View],
    cfg: TrainConfig,
    log: Optional[TrainLog] = None,
    adam: Optional[AdamState] = None,
    start_iteration: int = 0,
    run_dir: Optional[Path] = None,
    eval_views: Sequence[View] = (),
    control: Optional[ControlState] = None,
) -> Tuple[GaussianScene, AdamState]:
    """
    Run iterations start_iteration + 1 .. cfg.iterations over `views`.

    `control` continues the densification window and clone rng of a resumed
    run; without it both start fresh at start_iteration.

    Raises:
        NonFiniteLossError: the loss or a gradient became NaN/Inf
    """
    if not views:
        raise ValueError("optimize needs at least one training view")
    log = log if log is not None else TrainLog()
    adam = adam if adam is not None else AdamState.for_scene(len(scene))
    settings = RenderSettings.from_config(cfg)
    extent = scene_extent(views)
    if control is None:
        control = ControlState(ScreenGradAccumulator.for_scene(len(scene)), np.random.default_rng([cfg.seed, start_iteration]))
    accumulator, rng = control.accumulator, control.rng

    iterations = range(start_iteration + 1, cfg.iterations + 1)
    for iteration in tqdm(iterations, desc="Training", disable=not config.VERBOSE_LOGGING):
        started = time.perf_counter()
        view = views[view_schedule(len(views), iteration, cfg.seed)]

        output = render(scene, view, settings)
        grads = backward(output, view.image, cfg.lambda_dssim, scene, view, cfg.l2_loss)
        if not (np.isfinite(grads.loss) and grads.all_finite()):
            dump_path = dump_diagnostics(scene, grads, view, iteration, run_dir)
            raise NonFiniteLossError(f"Non-finite loss or gradient at iteration {iteration} (view {view.id})", dump_path)

        if control_enabled(cfg) and iteration <= cfg.densify_until:
            accumulator.add(grads, view.intrinsics.width, view.intrinsics.height)

        scene = adam_step(scene, grads, adam, learning_rates(cfg, extent, iteration))
        log.append({"type": "iteration", "iteration": iteration, "view": view.id, "loss": grads.loss, "gaussians": len(scene)})

        if control_due(cfg, iteration):
            scene, grown = densify(scene, accumulator.mean(), cfg.densify_grad_threshold, rng, iteration)
            adam.clone(np.asarray(grown.cloned_from, dtype=np.int64))
            scene, pruned = prune(scene, cfg.prune_opacity_threshold, iteration)
            if pruned.pruned:
                adam.keep(np.asarray(pruned.survivors, dtype=np.int64))
            accumulator.reset(len(scene))
            for event in (grown, pruned):
                if not event.is_empty:
                    log.append(event.to_record())
            if config.VERBOSE_LOGGING:
                print(f"   🔄 iter {iteration}: +{len(grown.cloned_from)} cloned, -{len(pruned.pruned)} pruned -> {len(scene)} Gaussians")

        if cfg.eval_interval and iteration % cfg.eval_interval == 0:
            record = {"type": "eval", "iteration": iteration, "train_psnr": mean_psnr(scene, views, settings)}
            if eval_views:
                record["test_psnr"] = mean_psnr(scene, eval_views, settings)
            log.append(record)

        if run_dir is not None and cfg.checkpoint_interval and iteration % cfg.checkpoint_interval == 0:
            save_checkpoint(scene, adam, run_dir, iteration, control)

        log.timings.append(time.perf_counter() - started)

    return scene, adam


def evaluate(
    scene: GaussianScene,
    views: Sequence[View],
    tags: Optional[Dict[int, str]] = None,
    settings: Optional[RenderSettings] = None,
    with_ssim: bool = True,
) -> pd.DataFrame:
    """Per-view PSNR / SSIM table with an interpolated/extrapolated tag column."""
    from gaussmap.evaluation.metrics import psnr, ssim

    settings = settings or RenderSettings()
    tags = tags or {}
    rows = []
    for view in views:
        image = render(scene, view, settings).image
        row = {"view_id": view.id, "tag": tags.get(view.id, INTERPOLATED), "psnr": psnr(image, view.image)}
        if with_ssim:
            small = min(view.intrinsics.width, view.intrinsics.height) < WINDOW_SIZE
            row["ssim"] = float("nan") if small else ssim(image, view.image)
        rows.append(row)
    columns = ["view_id", "tag", "psnr"] + (["ssim"] if with_ssim else [])
    return pd.DataFrame(rows, columns=columns)


def summarize_evaluation(frame: pd.DataFrame) -> dict:
    """Mean metrics overall and per tag, e.g. {"psnr": .., "interpolated_psnr": ..}."""
    summary = {}
    metrics = [c for c in ("psnr", "ssim") if c in frame.columns]
    for metric in metrics:
        summary[metric] = float(frame[metric].mean()) if len(frame) else float("nan")
        for tag in (INTERPOLATED, EXTRAPOLATED):
            subset = frame[frame["tag"] == tag]
            summary[f"{tag}_{metric}"] = float(subset[metric].mean()) if len(subset) else float("nan")
    return summary


def initial_scene(cloud, train_views: Sequence[View], cfg: TrainConfig, run_dir: Optional[Path] = None, dump_voxels: bool = False) -> Tuple[GaussianScene, InitReport]:
    """LiDAR-seeded scene, or for structure_mode='baseline' the same count of random Gaussians."""
    scene, report, leaves = initialize_scene(cloud, train_views, VoxelParams.from_config(cfg), InitParams.from_config(cfg), cfg.seed)
    if config.VERBOSE_LOGGING:
        stats = summarize_voxel_map(leaves)
        print(f"   📦 {stats['leaves']} voxel leaves ({stats['planar']} planar, {stats['sparse']} sparse, {stats['terminal']} terminal)")
    if dump_voxels and run_dir is not None:
        dump_voxel_map(leaves, run_dir / VOXEL_DUMP_NAME)
    if cfg.structure_mode == "baseline":
        scene = random_init(cloud, len(scene), train_views, cfg.seed, near_clip=cfg.near_clip)
    return scene, report


def train(
    manifest: DatasetManifest,
    cfg: TrainConfig,
    run_dir: Optional[PathLike] = None,
    resume: bool = False,
    dump_voxels: bool = False,
) -> TrainResult:
    """
    Load the dataset, initialize Gaussians and optimize them.

    Args:
        manifest: dataset description
        cfg: training configuration
        run_dir: where logs, checkpoints and the final map go (nothing written when None)
        resume: continue from the latest checkpoint in run_dir, including its
            densification window and clone rng; the map itself is restored from
            float32 PLY, so the continuation matches an uninterrupted run only to
            that precision
        dump_voxels: also write the voxel debug dump

    Returns:
        TrainResult with the final scene and the training log

    Raises:
        ManifestError: no training views
        NonFiniteLossError: optimization diverged
    """
    run_dir = Path(run_dir) if run_dir is not None else None
    if run_dir is not None:
        run_dir.mkdir(parents=True, exist_ok=True)

    print("🔄 Loading dataset...")
    views = manifest.load_views()
    train_views, test_views = manifest.split_views(views)
    if not train_views:
        raise ManifestError("No training views: every frame is held out or no image matched a pose")
    tags = manifest.tag_views(train_views, test_views)
    print(f"   ✅ {len(train_views)} training views, {len(test_views)} held-out views")

    print(f"🔄 Initializing Gaussians (mode: {cfg.structure_mode})...")
    cloud = manifest.load_cloud()
    scene, report = initial_scene(cloud, train_views, cfg, run_dir, dump_voxels)
    print(f"   ✅ {len(scene)} Gaussians ({report.planar_count} planar, {report.sparse_count} sparse)")
    if WARNING_COUNTS:
        print(f"   ⚠️  Warnings so far: {dict(WARNING_COUNTS)}")

    adam = None
    control = None
    start = 0
    log = TrainLog()
    if run_dir is not None:
        log.path = run_dir / config.TRAIN_LOG_NAME
        if resume:
            scene, adam, start = load_checkpoint(run_dir)
            control = load_control_state(run_dir, start)
            print(f"   🔄 Resuming from iteration {start}")
        elif log.path.exists():
            log.path.unlink()

    print(f"🔄 Optimizing for {cfg.iterations - start} iterations...")
    scene, adam = optimize(scene, train_views, cfg, log, adam, start, run_dir, test_views, control)

    if run_dir is not None:
        final_path = export_gaussians(scene, run_dir / FINAL_GAUSSIANS_NAME)
        summary = {
            "iterations": cfg.iterations,
            "gaussians": len(scene),
            "init": report.to_dict(),
            "config": cfg.to_dict(),
            "warnings": dict(WARNING_COUNTS),
            "seconds_total": float(sum(log.timings)),
        }
        (run_dir / config.RUN_SUMMARY_NAME).write_text(json.dumps(summary, indent=2))
        print(f"📝 Gaussian map written to {final_path}")

    print(f"✅ Training finished with {len(scene)} Gaussians")
    return TrainResult(scene, log, train_views, test_views, tags, report, run_dir)


def run_ablation(
    manifest: DatasetManifest,
    cfg: TrainConfig,
    out_dir: Optional[PathLike] = None,
    modes: Sequence[str] = STRUCTURE_MODES,
) -> pd.DataFrame:
    """
    Train once per structure mode and compare image and structure metrics.

    Returns:
        DataFrame indexed by mode with interpolated/extrapolated PSNR and SSIM, and
        CD / EMD / F-score against the manifest's ground-truth cloud when it has one
    """
    from gaussmap.evaluation.metrics import gaussians_to_cloud, structure_report

    out_dir = Path(out_dir) if out_dir is not None else None
    gt_cloud = manifest.load_gt_cloud()
    rows = []
    for mode in modes:
        print(f"\n{'►' * 40}\n► Ablation: {mode}\n{'►' * 40}")
        mode_cfg = cfg.with_overrides(structure_mode=mode)
        result = train(manifest, mode_cfg, out_dir / mode if out_dir is not None else None)
        frame = evaluate(result.scene, result.test_views, result.tags, RenderSettings.from_config(mode_cfg))
        row = {"mode": mode, "gaussians": len(result.scene)}
        row.update(summarize_evaluation(frame))
        if gt_cloud is not None and len(result.scene):
            row.update(structure_report(gaussians_to_cloud(result.scene), gt_cloud, seed=cfg.seed).to_dict())
        rows.append(row)

    table = pd.DataFrame(rows).set_index("mode")
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        table.to_csv(out_dir / "ablation.csv")
        print(f"📝 Ablation table written to {out_dir / 'ablation.csv'}")
    return table
