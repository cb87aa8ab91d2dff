"""
Command line entry point.

Usage:
    python -m gaussmap train --manifest data/manifest.toml --config train.toml --out runs/box
    python -m gaussmap eval --manifest data/manifest.toml --gaussians runs/box/gaussians.ply
    python -m gaussmap render --manifest data/manifest.toml --gaussians G.ply --out renders/
    python -m gaussmap synth --preset box-room --seed 0 --out data/box-room
    python -m gaussmap eval-structure --pred G.ply --gt data/box-room/gt_cloud.ply --tau 0.05
    python -m gaussmap ablate --manifest data/manifest.toml --out runs/ablation
"""

import argparse
import json
import sys
from datetime import datetime
from pathlib import Path
from typing import List, Optional

from gaussmap.errors import GaussmapError
from gaussmap.evaluation.metrics import gaussians_to_cloud, structure_report
from gaussmap.ingest.images import save_image
from gaussmap.ingest.manifest import load_manifest
from gaussmap.ingest.ply_io import load_gaussians, load_point_cloud
from gaussmap.ingest.train_config import STRUCTURE_MODES, load_train_config
from gaussmap.render.splat_render import RenderSettings, render
from gaussmap.synth.generator import FLAT_RENDERER, GAUSSIAN_RENDERER, generate
from gaussmap.synth.presets import PRESETS, get_preset
from gaussmap.training.train_loop import evaluate, run_ablation, summarize_evaluation, train

_PROJECT_ROOT = Path(__file__).resolve().parents[1]
if str(_PROJECT_ROOT) not in sys.path:
    sys.path.insert(0, str(_PROJECT_ROOT))

import config


def print_banner(title: str):
    print("\n╔" + "=" * 78 + "╗")
    print("║" + title.center(78) + "║")
    print("║" + datetime.now().strftime("%Y-%m-%d %H:%M:%S").center(78) + "║")
    print("╚" + "=" * 78 + "╝\n")


def _load_config(args):
    cfg = load_train_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg = cfg.with_overrides(seed=args.seed)
    if getattr(args, "iterations", None) is not None:
        cfg = cfg.with_overrides(iterations=args.iterations)
    return cfg


def cmd_train(args) -> None:
    print_banner("GAUSSMAP TRAIN")
    errors = config.validate_config()
    if errors:
        for error in errors:
            print(f"   - {error}")
        raise GaussmapError("Environment configuration is invalid")
    if config.VERBOSE_LOGGING:
        config.print_config_summary()

    cfg = _load_config(args)
    manifest = load_manifest(args.manifest)
    out_dir = Path(args.out) if args.out else config.OUTPUT_DIR / datetime.now().strftime("%Y%m%d_%H%M%S")
    result = train(manifest, cfg, out_dir, resume=args.resume, dump_voxels=args.dump_voxels)

    if result.test_views:
        frame = evaluate(result.scene, result.test_views, result.tags, RenderSettings.from_config(cfg))
        summary = summarize_evaluation(frame)
        print(f"\n   Held-out PSNR: {summary['psnr']:.2f} dB   SSIM: {summary['ssim']:.4f}")


def cmd_eval(args) -> None:
    print_banner("GAUSSMAP EVAL")
    cfg = _load_config(args)
    manifest = load_manifest(args.manifest)
    scene = load_gaussians(args.gaussians)
    views = manifest.load_views()
    train_views, test_views = manifest.split_views(views)
    tags = manifest.tag_views(train_views, test_views)
    targets = views if args.all_views else test_views
    if not targets:
        raise GaussmapError("No views to evaluate (manifest has no held-out ids; pass --all-views)")

    frame = evaluate(scene, targets, tags, RenderSettings.from_config(cfg))
    print(frame.to_string(index=False))
    summary = summarize_evaluation(frame)
    print(f"\n   Mean PSNR: {summary['psnr']:.2f} dB   Mean SSIM: {summary['ssim']:.4f}")
    if args.out:
        frame.to_csv(args.out, index=False)
        print(f"📝 Per-view metrics written to {args.out}")


def cmd_render(args) -> None:
    print_banner("GAUSSMAP RENDER")
    cfg = _load_config(args)
    manifest = load_manifest(args.manifest)
    scene = load_gaussians(args.gaussians)
    settings = RenderSettings.from_config(cfg)
    wanted = set(args.views) if args.views else None

    out_dir = Path(args.out)
    count = 0
    for view in manifest.load_views():
        if wanted is not None and view.id not in wanted:
            continue
        save_image(render(scene, view, settings).image, out_dir / f"render_{view.id:04d}.png")
        count += 1
    print(f"📝 {count} renders written to {out_dir}")


def cmd_synth(args) -> None:
    print_banner("GAUSSMAP SYNTH")
    preset = get_preset(args.preset, args.image_size)
    dataset = generate(preset, args.seed, args.out, FLAT_RENDERER if args.flat else GAUSSIAN_RENDERER)
    print(f"✅ {dataset.preset}: {dataset.gaussians} ground-truth Gaussians, {len(dataset.image_paths)} images")


def cmd_eval_structure(args) -> None:
    pred_path = Path(args.pred)
    try:
        pred = gaussians_to_cloud(load_gaussians(pred_path))
    except GaussmapError:
        pred = load_point_cloud(pred_path)
    gt = load_point_cloud(args.gt)
    report = structure_report(pred, gt, tau=args.tau, emd_max_points=args.emd_max_points, seed=args.seed)
    print(json.dumps(report.to_dict(), indent=2))


def cmd_ablate(args) -> None:
    print_banner("GAUSSMAP ABLATION")
    cfg = _load_config(args)
    manifest = load_manifest(args.manifest)
    table = run_ablation(manifest, cfg, args.out, args.modes)
    print("\n" + table.to_string(float_format=lambda v: f"{v:.4f}"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gaussmap",
        description="LiDAR-seeded Gaussian splatting maps",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="Initialize from LiDAR and optimize a Gaussian map")
    p.add_argument("--manifest", required=True, help="Dataset manifest (file or directory)")
    p.add_argument("--config", default=None, help="Training TOML (defaults for every key)")
    p.add_argument("--out", default=None, help="Run directory (default: GAUSSMAP_OUTPUT_DIR/<timestamp>)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--iterations", type=int, default=None)
    p.add_argument("--resume", action="store_true", help="Continue from the latest checkpoint in --out")
    p.add_argument("--dump-voxels", action="store_true", help="Write voxels.txt with one line per voxel leaf")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="Per-view PSNR / SSIM of a Gaussian map")
    p.add_argument("--manifest", required=True)
    p.add_argument("--gaussians", required=True, help="Gaussian PLY")
    p.add_argument("--config", default=None)
    p.add_argument("--all-views", action="store_true", help="Evaluate training views too")
    p.add_argument("--out", default=None, help="CSV path for the per-view table")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("render", help="Render a Gaussian map at the manifest's poses")
    p.add_argument("--manifest", required=True)
    p.add_argument("--gaussians", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--views", type=int, nargs="*", default=None, help="Frame ids (default: all)")
    p.add_argument("--out", required=True, help="Output directory for PNGs")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("synth", help="Generate a synthetic dataset")
    p.add_argument("--preset", required=True, choices=sorted(PRESETS))
    p.add_argument("--seed", type=int, default=config.DEFAULT_SEED)
    p.add_argument("--out", required=True)
    p.add_argument("--image-size", type=int, default=None)
    p.add_argument("--flat", action="store_true", help="Ray-cast flat albedo instead of rendering the ground-truth Gaussians")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("eval-structure", help="Chamfer / EMD / F-score between two clouds")
    p.add_argument("--pred", required=True, help="Gaussian PLY (means are used) or point cloud")
    p.add_argument("--gt", required=True, help="Ground-truth point cloud")
    p.add_argument("--tau", type=float, default=config.FSCORE_TAU)
    p.add_argument("--emd-max-points", type=int, default=config.EMD_MAX_POINTS)
    p.add_argument("--seed", type=int, default=config.DEFAULT_SEED)
    p.set_defaults(func=cmd_eval_structure)

    p = sub.add_parser("ablate", help="Train every structure mode and compare")
    p.add_argument("--manifest", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--iterations", type=int, default=None)
    p.add_argument("--modes", nargs="+", choices=STRUCTURE_MODES, default=list(STRUCTURE_MODES))
    p.set_defaults(func=cmd_ablate)

    return parser


def main(argv: Optional[List[str]] = None) -> None:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except GaussmapError as e:
        print(f"\n❌ {e}")
        sys.exit(1)
    except KeyboardInterrupt:
        print("\n\n⚠️  Interrupted by user. Exiting...")
        sys.exit(130)
