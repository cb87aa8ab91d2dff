"""
Training loop: schedules, convergence, determinism, resume, divergence
handling, evaluation tables and the structure ablation.
"""

import json

import numpy as np
import pytest

from gaussmap.errors import ManifestError, NonFiniteLossError
from gaussmap.ingest.manifest import EXTRAPOLATED, INTERPOLATED, load_manifest
from gaussmap.ingest.train_config import TrainConfig
from gaussmap.render.grad_engine import backward as real_backward
from gaussmap.scene_core import GaussianScene
from gaussmap.synth.generator import generate
from gaussmap.synth.presets import get_preset
from gaussmap.training import train_loop
from gaussmap.training.train_loop import (
    FINAL_GAUSSIANS_NAME,
    TrainLog,
    control_due,
    evaluate,
    learning_rates,
    optimize,
    run_ablation,
    scene_extent,
    summarize_evaluation,
    train,
    view_schedule,
)
from gaussmap.tests.scene_factory import blank_view, single_gaussian

import config

QUICK = dict(iterations=12, densify_from=4, densify_interval=4, densify_until_frac=1.0, eval_interval=6, checkpoint_interval=0, seed=0)


@pytest.fixture
def plane_dataset(tmp_path):
    return generate(get_preset("plane-lambert", image_size=24), seed=0, out_dir=tmp_path / "data")


def test_scene_extent():
    assert scene_extent([blank_view(8)]) == 1.0
    views = [blank_view(8, pose) for pose in get_preset("plane-lambert").poses()]
    assert scene_extent(views) == pytest.approx(1.1 * 1.6)


def test_learning_rates_follow_structure_mode():
    cfg = TrainConfig(sh_warmup=10)
    rates = learning_rates(cfg, 2.0, 5)
    assert rates["means"] == pytest.approx(2.0 * cfg.lr_mean)
    assert rates["sh_rest"] == 0.0
    assert learning_rates(cfg, 2.0, 11)["sh_rest"] == cfg.lr_sh_rest

    frozen = learning_rates(cfg.with_overrides(structure_mode="frozen"), 1.0, 20)
    assert frozen["means"] == frozen["scales"] == frozen["rotations"] == 0.0
    assert frozen["sh_dc"] > 0 and frozen["opacity_logits"] > 0

    position = learning_rates(cfg.with_overrides(structure_mode="position"), 1.0, 20)
    assert position["means"] > 0 and position["scales"] == position["rotations"] == 0.0


def test_control_schedule():
    cfg = TrainConfig(iterations=1000, densify_from=100, densify_interval=100, densify_until_frac=0.5)
    assert [i for i in range(1, 1001) if control_due(cfg, i)] == [200, 300, 400, 500]
    assert not any(control_due(cfg.with_overrides(structure_mode="frozen"), i) for i in range(1, 1001))


def test_view_schedule_visits_every_view_each_epoch():
    for epoch in range(3):
        picks = [view_schedule(7, epoch * 7 + k, seed=4) for k in range(1, 8)]
        assert sorted(picks) == list(range(7))
    assert view_schedule(7, 3, seed=4) == view_schedule(7, 3, seed=4)


def test_train_log_rejects_going_backwards(tmp_path):
    log = TrainLog(tmp_path / "log.jsonl")
    log.append({"type": "iteration", "iteration": 1, "loss": 0.5})
    log.append({"type": "eval", "iteration": 1, "train_psnr": 20.0})
    with pytest.raises(ValueError):
        log.append({"type": "iteration", "iteration": 0, "loss": 0.4})
    lines = (tmp_path / "log.jsonl").read_text().splitlines()
    assert [json.loads(line)["type"] for line in lines] == ["iteration", "eval"]
    assert list(log.losses()) == [0.5]
    assert list(log.to_frame("eval")["train_psnr"]) == [20.0]


def test_single_gaussian_converges_to_flat_target():
    scene = single_gaussian([0.0, 0.0, 5.0], log_scale=np.log(50.0), opacity_logit=6.0)
    view = blank_view(16, color=(0.6, 0.6, 0.6))
    cfg = TrainConfig(iterations=300, lambda_dssim=0.0, lr_sh_dc=0.01, densify_from=10 ** 6, eval_interval=0, checkpoint_interval=0)
    log = TrainLog()
    optimize(scene, [view], cfg, log)

    losses = log.losses()
    assert len(losses) == 300
    assert losses[-1] < 0.02
    assert losses[-1] < 0.2 * losses[0]


def test_training_is_deterministic(plane_dataset, tmp_path):
    manifest = load_manifest(plane_dataset.manifest_path)
    cfg = TrainConfig(**QUICK)
    first = train(manifest, cfg, tmp_path / "run_a")
    second = train(manifest, cfg, tmp_path / "run_b")

    for name in (config.TRAIN_LOG_NAME, FINAL_GAUSSIANS_NAME):
        assert (tmp_path / "run_a" / name).read_bytes() == (tmp_path / "run_b" / name).read_bytes()

    assert len(first.log.of_type("iteration")) == 12
    evals = first.log.of_type("eval")
    assert [r["iteration"] for r in evals] == [6, 12]
    assert all("test_psnr" in r for r in evals)
    assert len(first.scene) == len(second.scene)

    summary = json.loads((tmp_path / "run_a" / config.RUN_SUMMARY_NAME).read_text())
    assert summary["iterations"] == 12
    assert summary["gaussians"] == len(first.scene)


def test_resume_appends_to_the_log(plane_dataset, tmp_path):
    manifest = load_manifest(plane_dataset.manifest_path)
    run_dir = tmp_path / "run"
    train(manifest, TrainConfig(**dict(QUICK, iterations=6, checkpoint_interval=3)), run_dir)
    assert (run_dir / "point_cloud_6.ply").exists()

    train(manifest, TrainConfig(**dict(QUICK, iterations=8, checkpoint_interval=3)), run_dir, resume=True)
    records = [json.loads(line) for line in (run_dir / config.TRAIN_LOG_NAME).read_text().splitlines()]
    iterations = [r["iteration"] for r in records if r["type"] == "iteration"]
    assert iterations == list(range(1, 9))


def test_resume_inside_a_densify_window_continues_the_same_run(plane_dataset, tmp_path):
    manifest = load_manifest(plane_dataset.manifest_path)
    # iterations 5 and 6 feed the window that closes at 8; the checkpoint sits in between
    cfg = TrainConfig(**dict(QUICK, densify_grad_threshold=0.0, eval_interval=0, checkpoint_interval=6))
    straight = train(manifest, cfg, tmp_path / "straight")

    train(manifest, cfg.with_overrides(iterations=6), tmp_path / "resumed")
    resumed = train(manifest, cfg, tmp_path / "resumed", resume=True)

    expected, actual = straight.log.of_type("control"), resumed.log.of_type("control")
    assert {e["iteration"] for e in expected} == {8, 12}
    assert [(e["kind"], e["cloned_from"], e["pruned"]) for e in actual] == [(e["kind"], e["cloned_from"], e["pruned"]) for e in expected]
    for left, right in zip(actual, expected):
        np.testing.assert_allclose(left["triggers"], right["triggers"], rtol=1e-3, atol=1e-12)

    assert len(resumed.scene) == len(straight.scene)
    np.testing.assert_allclose(resumed.scene.means, straight.scene.means, atol=5e-3)


def test_frozen_mode_keeps_geometry(plane_dataset):
    manifest = load_manifest(plane_dataset.manifest_path)
    cfg = TrainConfig(**dict(QUICK, iterations=4, eval_interval=0, structure_mode="frozen"))
    result = train(manifest, cfg)
    initial, _ = train_loop.initial_scene(manifest.load_cloud(), result.train_views, cfg)
    np.testing.assert_array_equal(result.scene.means, initial.means)
    np.testing.assert_array_equal(result.scene.scales, initial.scales)
    assert not result.log.of_type("control")


def test_non_finite_loss_stops_with_diagnostics(tmp_path, monkeypatch):
    def poisoned(*args, **kwargs):
        grads = real_backward(*args, **kwargs)
        grads.loss = float("nan")
        return grads

    monkeypatch.setattr(train_loop, "backward", poisoned)
    scene = single_gaussian([0.0, 0.0, 3.0])
    with pytest.raises(NonFiniteLossError) as info:
        optimize(scene, [blank_view(16)], TrainConfig(iterations=3, eval_interval=0, checkpoint_interval=0), run_dir=tmp_path)

    assert info.value.dump_path == tmp_path / "nonfinite_1.json"
    report = json.loads(info.value.dump_path.read_text())
    assert report["iteration"] == 1 and report["loss"] == "nan"


def test_evaluate_table_and_summary():
    scene = GaussianScene.empty()
    views = [blank_view(16, color=(0.1, 0.1, 0.1), view_id=3), blank_view(16, view_id=4), blank_view(8, view_id=5)]
    frame = evaluate(scene, views, {3: INTERPOLATED, 4: EXTRAPOLATED, 5: EXTRAPOLATED})

    assert list(frame.columns) == ["view_id", "tag", "psnr", "ssim"]
    assert frame.loc[0, "psnr"] == pytest.approx(20.0)
    assert frame.loc[1, "psnr"] == 99.0
    assert np.isnan(frame.loc[2, "ssim"])

    summary = summarize_evaluation(frame)
    assert summary["interpolated_psnr"] == pytest.approx(20.0)
    assert summary["extrapolated_psnr"] == 99.0


def test_train_requires_training_views(plane_dataset):
    path = plane_dataset.manifest_path
    text = path.read_text().replace("test_ids = [5]", "test_ids = [0, 1, 2, 3, 4, 5]")
    path.write_text(text)
    with pytest.raises(ManifestError):
        train(load_manifest(path), TrainConfig(**QUICK))


def test_ablation_table(tmp_path):
    dataset = generate(get_preset("plane-lambert", image_size=16), seed=1, out_dir=tmp_path / "data")
    cfg = TrainConfig(**dict(QUICK, iterations=4, eval_interval=0))
    table = run_ablation(load_manifest(dataset.manifest_path), cfg, tmp_path / "ablation", modes=("frozen", "full"))

    assert list(table.index) == ["frozen", "full"]
    for column in ("gaussians", "psnr", "interpolated_psnr", "cd", "emd", "fscore"):
        assert column in table.columns
    assert (tmp_path / "ablation" / "ablation.csv").exists()
    assert (tmp_path / "ablation" / "full" / FINAL_GAUSSIANS_NAME).exists()
