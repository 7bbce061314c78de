"""Closed-loop experiment orchestration over procedural ground truth.

Every experiment derives all randomness from its config seed, shares the
ground truth, candidate pool, test rig, and sample streams across arms, and
writes byte-reproducible CSV artifacts (wall-clock timing goes to separate
``*_timing.csv`` files excluded from that guarantee).
"""

from __future__ import annotations

import json
import time
import zlib
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .camera import Camera
from .generator import (
    VARIANT_BLOCK_DIAGONAL,
    VARIANT_DIAGONAL,
    VARIANT_LOW_RANK,
    init_generator,
    save_generator,
)
from .image import write_ppm
from .metrics import ause, psnr, ssim
from .planning import (
    CandidatePool,
    default_z_samples,
    farthest_point_select,
    landscape_smoothness,
    optimize_next_view,
    render_uncertainty,
    select_next_view,
    uncertainty_landscape,
    write_landscape_csv,
    write_landscape_ppm,
)
from .relight import (
    dc_light,
    optimize_next_illumination,
    save_light_library,
    select_next_illumination,
)
from .renderer import render
from .scene import APPEARANCE_SH, APPEARANCE_TRANSFER, flatten, load_scene, unflatten
from .synthetic import generate_scene, init_fit_scene, synthesize_dataset
from .training import (
    TrainingConfig,
    TrainingSample,
    TrainingSet,
    TrainLog,
    make_trainer,
    train,
    train_step,
)

MODES = ("fit", "plan-views", "plan-lights", "landscape", "ablate-covariance", "eval")

VIEW_ARMS = ("select", "optimize", "farthest", "random")
LIGHT_ARMS = ("select", "optimize", "random")


@dataclass
class ExperimentConfig:
    mode: str = "fit"
    seed: int = 0
    out_dir: str = "out"
    # Scene source: procedural unless a scene file is given.
    scene_file: str | None = None
    gt_primitives: int = 220
    fit_primitives: int = 130
    extent: float = 0.8
    appearance_mode: str = APPEARANCE_SH
    width: int = 64
    height: int = 64
    # Candidate pool and held-out rig.
    pool_size: int = 20
    pool_radius: float | None = None
    n_test: int = 12
    # Schedules.
    rounds: int = 5
    iterations_per_round: int = 400
    fit_views: int = 8
    fit_iterations: int = 3000
    # Trainer knobs (volume weight desk-calibrated; the trainer itself
    # defaults to 1).
    m_train: int = 1
    volume_weight: float = 0.1
    volume_period: int = 10
    photometric_mix: float = 0.2
    learning_rates: dict = field(default_factory=dict)
    # Generator.
    variant: str = VARIANT_LOW_RANK
    rank: int = 2
    # Planner.
    planner_m: int = 2
    opt_steps: int = 60
    opt_restarts: int = 6
    opt_learning_rate: float = 0.08
    # Lights.
    light_cameras: int = 6
    n_test_lights: int = 6
    # Free 16-D ascent needs more realizations than candidate scoring for a
    # stable variance estimate.
    light_opt_m: int = 8
    # Landscape grid.
    lat_cells: int = 16
    lon_cells: int = 32
    # Ablation.
    ablate_ranks: tuple = (1, 2, 4, 10)
    timing_chunks: int = 6
    timing_chunk_iterations: int = 30
    arms: tuple | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if self.width < 16 or self.height < 16:
            raise ValueError("resolution must be at least 16 x 16")
        if self.mode == "plan-lights":
            self.appearance_mode = APPEARANCE_TRANSFER

    @classmethod
    def from_json(cls, path, **overrides) -> "ExperimentConfig":
        with open(path) as fh:
            payload = json.load(fh)
        payload.update({k: v for k, v in overrides.items() if v is not None})
        if "ablate_ranks" in payload:
            payload["ablate_ranks"] = tuple(payload["ablate_ranks"])
        if "arms" in payload and payload["arms"] is not None:
            payload["arms"] = tuple(payload["arms"])
        return cls(**payload)


@dataclass
class ExperimentReport:
    mode: str
    rows: list = field(default_factory=list)  # dicts: round, arm, metric -> value
    manifest: list = field(default_factory=list)

    def add_row(self, round_index: int, arm: str, **metrics) -> None:
        row = {"round": round_index, "arm": arm}
        row.update(metrics)
        self.rows.append(row)

    def metric_names(self) -> list:
        names = []
        for row in self.rows:
            for key in row:
                if key not in ("round", "arm") and key not in names:
                    names.append(key)
        return names

    def arm_failed(self, arm: str) -> bool:
        return any(row.get("failed") for row in self.rows if row["arm"] == arm)

    @property
    def failed_arms(self) -> list:
        return sorted({row["arm"] for row in self.rows if row.get("failed")})


def _write_rows_csv(path, rows, columns) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            cells = []
            for col in columns:
                value = row.get(col, "")
                cells.append(repr(float(value)) if isinstance(value, float) else str(value))
            fh.write(",".join(cells) + "\n")


def render_report_figures(report: ExperimentReport, out_dir) -> list:
    """One quality-vs-budget CSV per metric, columns (round, arm, value)."""
    if not report.rows:
        raise ValueError("cannot render figures from an empty report")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for metric in report.metric_names():
        if metric == "failed":
            continue
        path = out_dir / f"metric_{metric}.csv"
        with open(path, "w") as fh:
            fh.write("round,arm,value\n")
            for row in report.rows:
                if metric in row:
                    value = row[metric]
                    cell = repr(float(value)) if isinstance(value, float) else str(value)
                    fh.write(f"{row['round']},{row['arm']},{cell}\n")
        report.manifest.append(str(path))
        written.append(str(path))
    return written


# ---------------------------------------------------------------------------
# Shared pieces
# ---------------------------------------------------------------------------


def _setup_scene(config: ExperimentConfig):
    if config.scene_file is not None:
        gt = load_scene(config.scene_file)
        _, pool, test_cams = generate_scene(
            config.seed,
            1,
            extent=config.extent,
            mode=gt.mode,
            pool_size=config.pool_size,
            n_test=config.n_test,
            pool_radius=config.pool_radius,
            width=config.width,
            height=config.height,
        )
        return gt, pool, test_cams
    return generate_scene(
        config.seed,
        config.gt_primitives,
        extent=config.extent,
        mode=config.appearance_mode,
        pool_size=config.pool_size,
        n_test=config.n_test,
        pool_radius=config.pool_radius,
        width=config.width,
        height=config.height,
    )


def _make_generator(config: ExperimentConfig, layout, theta, variant=None, rank=None):
    variant = config.variant if variant is None else variant
    rank = config.rank if rank is None else rank
    if variant == VARIANT_LOW_RANK:
        return init_generator(layout.total_dimension, rank=rank, seed=config.seed, mu=theta.copy())
    if variant == VARIANT_DIAGONAL:
        return init_generator(
            layout.total_dimension, variant=variant, seed=config.seed, mu=theta.copy()
        )
    return init_generator(
        layout.total_dimension, variant=variant, seed=config.seed, mu=theta.copy(), layout=layout
    )


def _training_config(config: ExperimentConfig, total_iterations: int, stochastic=True):
    return TrainingConfig(
        total_iterations=total_iterations,
        m_train=config.m_train,
        volume_weight=config.volume_weight,
        volume_period=config.volume_period,
        photometric_mix=config.photometric_mix,
        learning_rates=dict(config.learning_rates),
        seed=config.seed,
        stochastic=stochastic,
    )


def _test_metrics(gen, layout, cameras, targets, lights=None):
    scene = unflatten(gen.mu, layout)
    psnrs, ssims = [], []
    for sample in targets:
        cam = cameras[sample.camera_index]
        light = None if sample.illumination_index is None else lights[sample.illumination_index]
        out = render(scene, cam, light)
        psnrs.append(psnr(out.color.data, sample.target))
        ssims.append(ssim(out.color.data, sample.target))
    return float(np.mean(psnrs)), float(np.mean(ssims))


# ---------------------------------------------------------------------------
# plan-views
# ---------------------------------------------------------------------------


def _run_plan_views(config: ExperimentConfig, out_dir: Path, report: ExperimentReport):
    gt, pool_template, test_cams = _setup_scene(config)
    test_targets = synthesize_dataset(gt, test_cams)
    arms = config.arms or VIEW_ARMS
    decisions = []

    for arm in arms:
        try:
            pool = CandidatePool(cameras=list(pool_template.cameras))
            pool.choose(0)
            dataset = TrainingSet(
                cameras=list(pool.cameras),
                samples=[
                    TrainingSample(0, None, render(gt, pool.cameras[0]).color.data)
                ],
            )
            theta, layout = flatten(init_fit_scene(config.seed, config.fit_primitives, config.extent))
            gen = _make_generator(config, layout, theta)
            total = (config.rounds + 1) * config.iterations_per_round
            state = make_trainer(gen, layout, _training_config(config, total))
            arm_rng = np.random.default_rng([config.seed, zlib.crc32(arm.encode())])
            z_shared = default_z_samples(gen, config.planner_m, seed=config.seed)

            def acquire(state, dataset, round_index, arm=arm, pool=pool, arm_rng=arm_rng):
                if round_index >= 2:
                    p, s = _test_metrics(state.gen, state.layout, dataset.cameras, test_targets)
                    report.add_row(round_index - 1, arm, views=len(dataset.samples), psnr=p, ssim=s)
                if arm == "select":
                    index = select_next_view(
                        state.gen, state.layout, pool, z_samples=z_shared
                    )
                    camera = pool.cameras[index]
                    total_u = render_uncertainty(
                        state.gen, state.layout, camera, z_samples=z_shared
                    ).total
                    decisions.append((round_index, arm, f"index={index}", total_u, 0))
                elif arm == "optimize":
                    index = select_next_view(
                        state.gen, state.layout, pool, z_samples=z_shared
                    )
                    result = optimize_next_view(
                        state.gen,
                        state.layout,
                        pool.cameras[index],
                        steps=config.opt_steps,
                        learning_rate=config.opt_learning_rate,
                        z_samples=z_shared,
                        restarts=config.opt_restarts,
                        restart_seed=config.seed + round_index,
                    )
                    camera = result.camera
                    decisions.append(
                        (
                            round_index,
                            arm,
                            f"lat={camera.latitude!r};lon={camera.longitude!r}",
                            result.total,
                            len(result.trajectory),
                        )
                    )
                elif arm == "farthest":
                    index = farthest_point_select(pool)
                    camera = pool.cameras[index]
                    decisions.append((round_index, arm, f"index={index}", 0.0, 0))
                else:  # random
                    open_indices = pool.unchosen()
                    index = int(arm_rng.choice(open_indices))
                    pool.choose(index)
                    camera = pool.cameras[index]
                    decisions.append((round_index, arm, f"index={index}", 0.0, 0))
                # Capture the new view on demand from the ground truth.
                target = render(gt, camera).color.data
                dataset.cameras.append(camera)
                return TrainingSample(len(dataset.cameras) - 1, None, target)

            def fallback(state, dataset, round_index, pool=pool):
                index = farthest_point_select(pool)
                camera = pool.cameras[index]
                decisions.append((round_index, "fallback", f"index={index}", 0.0, 0))
                target = render(gt, camera).color.data
                dataset.cameras.append(camera)
                return TrainingSample(len(dataset.cameras) - 1, None, target)

            schedule = [k * config.iterations_per_round for k in range(1, config.rounds + 1)]
            train(state, dataset, schedule=schedule, planner_hook=acquire, fallback_hook=fallback)
            p, s = _test_metrics(state.gen, state.layout, dataset.cameras, test_targets)
            report.add_row(config.rounds, arm, views=len(dataset.samples), psnr=p, ssim=s)
        except Exception as exc:  # an arm failure must not sink the others
            report.add_row(-1, arm, failed=f"{type(exc).__name__}: {exc}")

    path = out_dir / "planner_decisions.csv"
    _write_rows_csv(
        path,
        [
            {"round": r, "mode": m, "choice": c, "U": u, "steps": st}
            for r, m, c, u, st in decisions
        ],
        ["round", "mode", "choice", "U", "steps"],
    )
    report.manifest.append(str(path))


# ---------------------------------------------------------------------------
# plan-lights
# ---------------------------------------------------------------------------


def _relight_test_metrics(gen, layout, gt, test_cams, test_lights):
    scene = unflatten(gen.mu, layout)
    psnrs, ssims = [], []
    for cam in test_cams:
        for light in test_lights:
            target = render(gt, cam, light).color.data
            out = render(scene, cam, light)
            psnrs.append(psnr(out.color.data, target))
            ssims.append(ssim(out.color.data, target))
    return float(np.mean(psnrs)), float(np.mean(ssims))


def _run_plan_lights(config: ExperimentConfig, out_dir: Path, report: ExperimentReport):
    gt, pool, test_cams = _setup_scene(config)
    probe_cams = [pool.cameras[i] for i in range(0, 2 * config.light_cameras, 2)]
    light_rng = np.random.default_rng([config.seed, 11])
    test_lights = light_rng.normal(size=(config.n_test_lights, 16))
    test_lights[:, 0] = np.abs(test_lights[:, 0]) + 1.0
    test_lights /= np.linalg.norm(test_lights, axis=1, keepdims=True)
    test_cams_sub = test_cams[: max(4, len(test_cams) // 2)]
    arms = config.arms or LIGHT_ARMS
    decisions = []

    for arm in arms:
        try:
            lights = [dc_light(1.0)]
            used_onehot = {0}
            dataset = TrainingSet(
                cameras=list(probe_cams),
                samples=synthesize_dataset(gt, probe_cams, [lights[0]]),
                lights=lights,
            )
            theta, layout = flatten(
                init_fit_scene(
                    config.seed, config.fit_primitives, config.extent, mode=APPEARANCE_TRANSFER
                )
            )
            gen = _make_generator(config, layout, theta)
            total = (config.rounds + 1) * config.iterations_per_round
            state = make_trainer(gen, layout, _training_config(config, total))
            arm_rng = np.random.default_rng([config.seed, 13, zlib.crc32(arm.encode())])
            z_shared = default_z_samples(gen, config.planner_m, seed=config.seed)

            def acquire(state, dataset, round_index, arm=arm, arm_rng=arm_rng):
                if round_index >= 2:
                    p, s = _relight_test_metrics(
                        state.gen, state.layout, gt, test_cams_sub, test_lights
                    )
                    report.add_row(
                        round_index - 1, arm, lights=len(dataset.lights), psnr=p, ssim=s
                    )
                if arm == "select":
                    index, pi = select_next_illumination(
                        state.gen, state.layout, probe_cams, used_onehot, z_samples=z_shared
                    )
                    used_onehot.add(index)
                    decisions.append((round_index, arm, f"onehot={index}", 0.0, 0))
                elif arm == "optimize":
                    index, pi0 = select_next_illumination(
                        state.gen, state.layout, probe_cams, used_onehot, z_samples=z_shared
                    )
                    used_onehot.add(index)
                    z_opt = default_z_samples(
                        state.gen, config.light_opt_m, seed=config.seed
                    )
                    result = optimize_next_illumination(
                        state.gen,
                        state.layout,
                        pi0,
                        probe_cams,
                        steps=config.opt_steps,
                        learning_rate=config.opt_learning_rate,
                        z_samples=z_opt,
                    )
                    pi = result.illumination
                    decisions.append(
                        (round_index, arm, f"init_onehot={index}", result.total, len(result.trajectory))
                    )
                else:  # random unit-energy light
                    pi = arm_rng.normal(size=16)
                    pi /= np.linalg.norm(pi)
                    decisions.append((round_index, arm, "random", 0.0, 0))
                dataset.lights.append(pi)
                light_index = len(dataset.lights) - 1
                new_samples = [
                    TrainingSample(ci, light_index, render(gt, cam, pi).color.data)
                    for ci, cam in enumerate(dataset.cameras)
                ]
                for sample in new_samples[1:]:
                    dataset.add(sample)
                return new_samples[0]

            schedule = [k * config.iterations_per_round for k in range(1, config.rounds + 1)]
            train(state, dataset, schedule=schedule, planner_hook=acquire)
            p, s = _relight_test_metrics(state.gen, state.layout, gt, test_cams_sub, test_lights)
            report.add_row(config.rounds, arm, lights=len(dataset.lights), psnr=p, ssim=s)
            save_light_library(
                out_dir / f"lights_{arm}.csv",
                [(f"light{k}", light) for k, light in enumerate(dataset.lights)],
            )
            report.manifest.append(str(out_dir / f"lights_{arm}.csv"))
        except Exception as exc:
            report.add_row(-1, arm, failed=f"{type(exc).__name__}: {exc}")

    path = out_dir / "planner_decisions.csv"
    _write_rows_csv(
        path,
        [
            {"round": r, "mode": m, "choice": c, "U": u, "steps": st}
            for r, m, c, u, st in decisions
        ],
        ["round", "mode", "choice", "U", "steps"],
    )
    report.manifest.append(str(path))


# ---------------------------------------------------------------------------
# fit / landscape / ablation / eval
# ---------------------------------------------------------------------------


def _fit_generator(config: ExperimentConfig, gt, pool, variant=None, rank=None, iterations=None):
    cams = [pool.cameras[i] for i in range(0, 2 * config.fit_views, 2)]
    dataset = TrainingSet(cameras=cams, samples=synthesize_dataset(gt, cams))
    theta, layout = flatten(
        init_fit_scene(config.seed, config.fit_primitives, config.extent, mode=gt.mode)
    )
    gen = _make_generator(config, layout, theta, variant=variant, rank=rank)
    iterations = config.fit_iterations if iterations is None else iterations
    state = make_trainer(gen, layout, _training_config(config, iterations))
    gen, log = train(state, dataset)
    return state, dataset, log


def _run_fit(config: ExperimentConfig, out_dir: Path, report: ExperimentReport):
    gt, pool, test_cams = _setup_scene(config)
    state, dataset, _ = _fit_generator(config, gt, pool)
    test_targets = synthesize_dataset(gt, test_cams)
    p, s = _test_metrics(state.gen, state.layout, test_cams, test_targets)
    report.add_row(0, "fit", views=len(dataset.samples), psnr=p, ssim=s)
    checkpoint = out_dir / "generator.json"
    save_generator(state.gen, state.layout, checkpoint)
    report.manifest.append(str(checkpoint))
    scene = unflatten(state.gen.mu, state.layout)
    for k, cam in enumerate(test_cams[:4]):
        path = out_dir / f"render_test{k}.ppm"
        write_ppm(render(scene, cam).color, path)
        report.manifest.append(str(path))


def _run_landscape(config: ExperimentConfig, out_dir: Path, report: ExperimentReport):
    gt, pool, _ = _setup_scene(config)
    cams = [pool.cameras[0]]
    dataset = TrainingSet(cameras=cams, samples=synthesize_dataset(gt, cams))
    theta, layout = flatten(
        init_fit_scene(config.seed, config.fit_primitives, config.extent, mode=gt.mode)
    )
    gen = _make_generator(config, layout, theta)
    state = make_trainer(gen, layout, _training_config(config, config.fit_iterations))
    gen, _ = train(state, dataset)
    z = default_z_samples(gen, config.planner_m, seed=config.seed)
    lats, lons, grid = uncertainty_landscape(
        gen, layout, pool.cameras[0], config.lat_cells, config.lon_cells, z_samples=z
    )
    csv_path = out_dir / "landscape.csv"
    ppm_path = out_dir / "landscape.ppm"
    write_landscape_csv(csv_path, lats, lons, grid)
    write_landscape_ppm(ppm_path, grid)
    report.manifest.extend([str(csv_path), str(ppm_path)])
    report.add_row(0, config.variant, smoothness=landscape_smoothness(grid), U_mean=float(grid.mean()))


def _ablation_configs(config: ExperimentConfig):
    yield "deterministic", dict(variant=VARIANT_LOW_RANK, rank=2, stochastic=False)
    yield "diagonal", dict(variant=VARIANT_DIAGONAL, rank=None, stochastic=True)
    yield "block-diagonal", dict(variant=VARIANT_BLOCK_DIAGONAL, rank=None, stochastic=True)
    for rank in config.ablate_ranks:
        yield f"rank{rank}", dict(variant=VARIANT_LOW_RANK, rank=rank, stochastic=True)


def _run_ablation(config: ExperimentConfig, out_dir: Path, report: ExperimentReport):
    gt, pool, test_cams = _setup_scene(config)
    test_targets = synthesize_dataset(gt, test_cams)
    cams = [pool.cameras[i] for i in range(0, 2 * config.fit_views, 2)]
    samples = synthesize_dataset(gt, cams)
    theta, layout = flatten(
        init_fit_scene(config.seed, config.fit_primitives, config.extent, mode=gt.mode)
    )

    states = {}
    for label, spec_kwargs in _ablation_configs(config):
        try:
            dataset = TrainingSet(cameras=list(cams), samples=list(samples))
            gen = _make_generator(
                config, layout, theta, variant=spec_kwargs["variant"], rank=spec_kwargs["rank"]
            )
            if not spec_kwargs["stochastic"]:
                gen.b_raw[:] = -1.0  # frozen at zero: deterministic baseline
            cfg = _training_config(
                config, config.fit_iterations, stochastic=spec_kwargs["stochastic"]
            )
            state = make_trainer(gen, layout, cfg)
            train(state, dataset)
            p, s = _test_metrics(state.gen, state.layout, cams, test_targets)
            report.add_row(0, label, psnr=p, ssim=s)
            states[label] = (state, dataset)
        except Exception as exc:
            report.add_row(-1, label, failed=f"{type(exc).__name__}: {exc}")

    # Interleaved timing phase: round-robin chunks cancel slow machine drift.
    timings = {label: [] for label in states}
    for label, (state, dataset) in states.items():
        state.config.total_iterations = 10**9
        for k in range(5):  # rewarm
            train_step(state, dataset.samples[k % len(dataset.samples)], dataset)
    for _ in range(config.timing_chunks):
        for label, (state, dataset) in states.items():
            for k in range(config.timing_chunk_iterations):
                started = time.perf_counter()
                train_step(state, dataset.samples[k % len(dataset.samples)], dataset)
                timings[label].append((time.perf_counter() - started) * 1000.0)
    timing_rows = [
        {"arm": label, "mean_ms": float(np.mean(ts)), "iterations": len(ts)}
        for label, ts in timings.items()
    ]
    timing_path = out_dir / "ablation_timing.csv"
    _write_rows_csv(timing_path, timing_rows, ["arm", "mean_ms", "iterations"])
    report.manifest.append(str(timing_path))
    return {row["arm"]: row["mean_ms"] for row in timing_rows}


def _run_eval(config: ExperimentConfig, out_dir: Path, report: ExperimentReport):
    gt, pool, test_cams = _setup_scene(config)
    state, _, _ = _fit_generator(config, gt, pool)
    scene = unflatten(state.gen.mu, state.layout)
    z = default_z_samples(state.gen, config.planner_m, seed=config.seed)
    rows = []
    for k, cam in enumerate(test_cams):
        gt_out = render(gt, cam)
        fit_out = render(scene, cam)
        estimate = render_uncertainty(state.gen, state.layout, cam, z_samples=z)
        depth_error = np.abs(fit_out.depth - gt_out.depth).ravel()
        score = ause(depth_error, estimate.variance_map.ravel())
        rows.append(
            dict(
                view=k,
                psnr=psnr(fit_out.color.data, gt_out.color.data),
                ssim=ssim(fit_out.color.data, gt_out.color.data),
                ause=score,
                U=estimate.total,
            )
        )
        if k < 4:
            render_path = out_dir / f"eval_render{k}.ppm"
            write_ppm(fit_out.color, render_path)
            report.manifest.append(str(render_path))
    for row in rows:
        report.add_row(row.pop("view"), "eval", **row)


def run(config: ExperimentConfig) -> ExperimentReport:
    """Execute one experiment end to end and write its artifacts.

    Returns the report; failed arms are marked in it (and the CLI turns
    them into a non-zero exit code) while the other arms complete.
    """
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report = ExperimentReport(mode=config.mode)

    config_path = out_dir / "config.json"
    payload = asdict(config)
    payload["ablate_ranks"] = list(config.ablate_ranks)
    if payload.get("arms") is not None:
        payload["arms"] = list(payload["arms"])
    with open(config_path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
    report.manifest.append(str(config_path))

    if config.mode == "plan-views":
        _run_plan_views(config, out_dir, report)
    elif config.mode == "plan-lights":
        _run_plan_lights(config, out_dir, report)
    elif config.mode == "fit":
        _run_fit(config, out_dir, report)
    elif config.mode == "landscape":
        _run_landscape(config, out_dir, report)
    elif config.mode == "ablate-covariance":
        _run_ablation(config, out_dir, report)
    elif config.mode == "eval":
        _run_eval(config, out_dir, report)

    rows_path = out_dir / "report_rows.csv"
    columns = ["round", "arm"] + report.metric_names()
    _write_rows_csv(rows_path, report.rows, columns)
    report.manifest.append(str(rows_path))
    render_report_figures(report, out_dir)
    return report
