"""Tests for the photometric loss and the training loop."""

import numpy as np
import pytest
from helpers import make_camera, random_scene

from stochsplat.generator import init_generator, sample
from stochsplat.renderer import render
from stochsplat.scene import flatten
from stochsplat.training import (
    TrainLog,
    TrainingConfig,
    TrainingSample,
    TrainingSet,
    make_trainer,
    photometric_loss,
    step_timing_report,
    train,
    train_step,
)


def rand_image(rng, size):
    return rng.uniform(0, 1, size=(size, size, 3))


class TestPhotometricLoss:
    def test_identical_images(self):
        img = rand_image(np.random.default_rng(0), 16)
        value, grad = photometric_loss(img, img)
        assert value == 0.0
        np.testing.assert_array_equal(grad, 0.0)

    def test_zero_mix_is_mean_absolute_error(self):
        rng = np.random.default_rng(1)
        a, b = rand_image(rng, 12), rand_image(rng, 12)
        value, grad = photometric_loss(a, b, mix=0.0)
        assert value == pytest.approx(np.mean(np.abs(a - b)))
        np.testing.assert_array_equal(grad, np.sign(a - b) / a.size)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(2)
        a, b = rand_image(rng, 8), rand_image(rng, 8)
        _, grad = photometric_loss(a, b)
        h = 1e-6
        for i, j, c in [(rng.integers(8), rng.integers(8), rng.integers(3)) for _ in range(30)]:
            ap, am = a.copy(), a.copy()
            ap[i, j, c] += h
            am[i, j, c] -= h
            fd = (photometric_loss(ap, b)[0] - photometric_loss(am, b)[0]) / (2 * h)
            assert grad[i, j, c] == pytest.approx(fd, rel=1e-4, abs=1e-10)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            photometric_loss(np.zeros((4, 4, 3)), np.zeros((5, 4, 3)))


def small_problem(seed=0, n=12, size=16, **config_kwargs):
    rng = np.random.default_rng(seed)
    gt = random_scene(rng, 20)
    cameras = [
        make_camera(lat=0.2, lon=0.5, radius=3.0, size=size),
        make_camera(lat=-0.4, lon=2.5, radius=3.0, size=size),
    ]
    samples = [
        TrainingSample(i, None, render(gt, cam).color.data) for i, cam in enumerate(cameras)
    ]
    dataset = TrainingSet(cameras=cameras, samples=samples)
    fit = random_scene(np.random.default_rng(seed + 1), n)
    theta, layout = flatten(fit)
    gen = init_generator(layout.total_dimension, rank=2, seed=seed, mu=theta)
    config = TrainingConfig(seed=seed, **config_kwargs)
    return make_trainer(gen, layout, config), dataset


class TestTrainStep:
    def test_loss_decreases(self):
        state, dataset = small_problem(total_iterations=60)
        first = train_step(state, dataset.samples[0], dataset)
        losses = [train_step(state, dataset.samples[k % 2], dataset) for k in range(1, 60)]
        assert np.mean(losses[-10:]) < first

    def test_dead_matrix_matches_deterministic_trajectory(self):
        # With B frozen at zero and no volume term, the stochastic trainer's
        # mu trajectory must equal the mean-only baseline bit for bit.
        runs = []
        for stochastic in (True, False):
            state, dataset = small_problem(
                total_iterations=10, volume_weight=0.0, stochastic=stochastic
            )
            state.gen.b_raw[:] = -1.0
            for k in range(10):
                train_step(state, dataset.samples[k % 2], dataset)
            runs.append(state.gen.mu.copy())
        np.testing.assert_array_equal(runs[0], runs[1])

    def test_volume_term_applies_every_tenth_iteration(self):
        # Put the model behind the camera: the data gradient vanishes, so
        # only the volume term can move B, and only on schedule.
        state, dataset = small_problem(total_iterations=20, volume_weight=1.0)
        camera = dataset.cameras[0]
        scene_behind = random_scene(np.random.default_rng(5), 4)
        scene_behind.positions[:] = camera.position * 2.0  # beyond the camera
        scene_behind.background = np.zeros(3)
        theta, layout = flatten(scene_behind)
        gen = init_generator(layout.total_dimension, rank=2, seed=0, mu=theta)
        state = make_trainer(gen, layout, TrainingConfig(total_iterations=20, volume_weight=1.0))
        target = np.zeros((camera.height, camera.width, 3))
        batch = TrainingSample(0, None, target)
        b0 = np.array(gen.b_raw)
        for _ in range(9):
            train_step(state, batch, dataset)
        np.testing.assert_array_equal(gen.b_raw, b0)  # untouched during 1..9
        train_step(state, batch, dataset)  # iteration 10 applies the volume pull
        assert np.all(np.asarray(gen.b_raw) > b0)

    def test_m_train_default_is_one(self):
        assert TrainingConfig().m_train == 1

    def test_nan_aborts_with_iteration(self):
        state, dataset = small_problem(total_iterations=5)
        bad = TrainingSample(0, None, np.full_like(dataset.samples[0].target, np.nan))
        with pytest.raises(RuntimeError, match="iteration 1"):
            train_step(state, bad, dataset)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            TrainingConfig(m_train=0)
        with pytest.raises(ValueError):
            TrainingConfig(volume_period=0)


class TestTrainLoop:
    def test_plain_training_without_schedule(self):
        state, dataset = small_problem(total_iterations=25)
        gen, log = train(state, dataset)
        assert len(log.losses) == 25
        assert len(log.times_ms) == 25
        assert log.events == []

    def test_schedule_invokes_planner(self):
        state, dataset = small_problem(total_iterations=30)
        calls = []

        def hook(state, dataset, round_index):
            calls.append(round_index)
            cam = dataset.cameras[0]
            target = dataset.samples[0].target
            return TrainingSample(0, None, target.copy())

        gen, log = train(state, dataset, schedule=[10, 20], planner_hook=hook)
        assert calls == [1, 2]
        assert len(dataset.samples) == 4
        kinds = [kind for _, kind, _ in log.events]
        assert kinds.count("acquired") == 2

    def test_planner_failure_falls_back(self):
        state, dataset = small_problem(total_iterations=16)

        def bad_hook(state, dataset, round_index):
            raise RuntimeError("candidate service down")

        def fallback(state, dataset, round_index):
            return TrainingSample(1, None, dataset.samples[1].target.copy())

        gen, log = train(
            state, dataset, schedule=[8], planner_hook=bad_hook, fallback_hook=fallback
        )
        kinds = [kind for _, kind, _ in log.events]
        assert "planner-failed" in kinds
        assert "acquired-fallback" in kinds
        assert len(dataset.samples) == 3

    def test_bit_reproducible(self):
        traces = []
        for _ in range(2):
            state, dataset = small_problem(total_iterations=20)
            gen, log = train(state, dataset)
            traces.append((list(log.losses), gen.mu.copy()))
        assert traces[0][0] == traces[1][0]
        np.testing.assert_array_equal(traces[0][1], traces[1][1])

    def test_empty_dataset_rejected(self):
        state, dataset = small_problem(total_iterations=5)
        dataset.samples.clear()
        with pytest.raises(ValueError):
            train(state, dataset)


class TestTimingReport:
    def test_mean_excludes_warmup(self):
        log = TrainLog(losses=[0.0] * 110, times_ms=[100.0] * 10 + [1.0] * 100)
        assert step_timing_report(log) == pytest.approx(1.0)

    def test_needs_enough_iterations(self):
        log = TrainLog(losses=[0.0] * 50, times_ms=[1.0] * 50)
        with pytest.raises(ValueError):
            step_timing_report(log)


class TestTrainLogCsv:
    def test_streamed_columns(self, tmp_path):
        log = TrainLog(losses=[0.5, 0.25], times_ms=[2.0, 3.0])
        log.log_event(2, "acquired", "camera=3")
        path = tmp_path / "log.csv"
        log.to_csv(path)
        lines = path.read_text().splitlines()
        assert lines[0] == "iteration,loss,ms,event"
        assert lines[1] == "1,0.5,2.0,"
        assert lines[2] == "2,0.25,3.0,acquired:camera=3"
