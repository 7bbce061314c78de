"""Stochastic training loop over the parameter manifold.

Each iteration draws one (or ``m_train``) low-discrepancy z samples, renders
the corresponding realizations against a full training image, averages the
photometric losses, and backpropagates through rendering and the generator.
Every ``volume_period`` iterations the entrywise L1 norm of the effective
generating matrix is maximized alongside (weight ``volume_weight``), which
keeps the uncertainty volume from collapsing where the data does not pin
the parameters down.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .adam import AdamState, adam_step
from .camera import Camera
from .generator import (
    ManifoldGenerator,
    expand_generator,
    sample,
    sample_backward,
    volume_surrogate,
)
from .image import as_image_array
from .metrics import ssim_value_and_grad
from .renderer import render, render_backward
from .scene import ParamLayout, densify_scene, flatten, unflatten
from .sobol import MAX_DIMENSION, SobolStream, to_symmetric_cube

DEFAULT_LEARNING_RATES = {
    "position": 2e-3,
    "log_scale": 5e-3,
    "rotation": 2e-3,
    "opacity_logit": 5e-2,
    "appearance": 5e-3,
    "b_raw": 2e-3,
}


@dataclass
class TrainingConfig:
    total_iterations: int = 2000
    m_train: int = 1
    volume_weight: float = 1.0
    volume_period: int = 10
    iterations_per_view: int = 2000
    iterations_per_light: int = 7000
    photometric_mix: float = 0.2
    learning_rates: dict = field(default_factory=lambda: dict(DEFAULT_LEARNING_RATES))
    seed: int = 0
    stochastic: bool = True  # False renders the mean only (no sampling)
    densify_interval: int = 0  # iterations between densifications; 0 disables
    densify_grad_threshold: float = np.inf
    densify_scale_threshold: float = 0.2

    def __post_init__(self):
        if self.m_train < 1:
            raise ValueError("m_train must be at least 1")
        if self.volume_period < 1:
            raise ValueError("volume_period must be at least 1")
        rates = dict(DEFAULT_LEARNING_RATES)
        rates.update(self.learning_rates)
        self.learning_rates = rates


@dataclass
class TrainingSample:
    camera_index: int
    illumination_index: int | None
    target: np.ndarray  # (H, W, 3)


@dataclass
class TrainingSet:
    """Cameras, optional lights, and the acquired (view, light, image) triples."""

    cameras: list
    samples: list
    lights: list | None = None

    def add(self, sample: TrainingSample) -> None:
        cam = self.cameras[sample.camera_index]
        if sample.target.shape != (cam.height, cam.width, 3):
            raise ValueError("target image does not match its camera's resolution")
        self.samples.append(sample)

    def illumination(self, sample: TrainingSample):
        if sample.illumination_index is None:
            return None
        return self.lights[sample.illumination_index]


@dataclass
class TrainLog:
    """Append-only per-iteration loss/time trace plus schedule events."""

    losses: list = field(default_factory=list)
    times_ms: list = field(default_factory=list)
    events: list = field(default_factory=list)  # (iteration, kind, detail)

    def log_event(self, iteration: int, kind: str, detail: str = "") -> None:
        self.events.append((iteration, kind, detail))

    def to_csv(self, path) -> None:
        events_by_iter = {}
        for iteration, kind, detail in self.events:
            label = f"{kind}:{detail}" if detail else kind
            events_by_iter.setdefault(iteration, []).append(label)
        with open(path, "w") as fh:
            fh.write("iteration,loss,ms,event\n")
            for i, (loss, ms) in enumerate(zip(self.losses, self.times_ms), start=1):
                event = ";".join(events_by_iter.get(i, []))
                fh.write(f"{i},{float(loss)!r},{float(ms)!r},{event}\n")


def photometric_loss(rendered, target, mix: float = 0.2):
    """Blend of mean absolute error and (1 - SSIM)/2 with its exact gradient.

    Returns ``(value, per_pixel_gradient)``; ``mix`` = 0 reduces to plain
    mean absolute error.
    """
    r = as_image_array(rendered)
    t = as_image_array(target)
    if r.shape != t.shape:
        raise ValueError(f"image shapes differ: {r.shape} vs {t.shape}")
    diff = r - t
    if not diff.any():  # identical images sit at the SSIM maximum
        return 0.0, np.zeros_like(diff)
    l1 = float(np.mean(np.abs(diff)))
    grad = np.sign(diff) / diff.size
    if mix == 0.0:
        return l1, grad
    ssim_score, ssim_grad = ssim_value_and_grad(r, t)
    value = (1.0 - mix) * l1 + mix * (1.0 - ssim_score) / 2.0
    grad = (1.0 - mix) * grad - (mix / 2.0) * ssim_grad
    return value, grad


# ---------------------------------------------------------------------------
# Structured-gradient helpers (b_raw may be an array or a list of blocks)
# ---------------------------------------------------------------------------


def _struct_zeros_like(b_raw):
    if isinstance(b_raw, list):
        return [np.zeros_like(b) for b in b_raw]
    return np.zeros_like(b_raw)


def _struct_axpy(acc, update, scale=1.0):
    if isinstance(acc, list):
        for a, u in zip(acc, update):
            a += scale * u
    else:
        acc += scale * update
    return acc


def _struct_to_vec(b):
    if isinstance(b, list):
        return np.concatenate([x.ravel() for x in b])
    return np.asarray(b).ravel()


def _vec_to_struct(vec, template):
    if isinstance(template, list):
        out, pos = [], 0
        for x in template:
            out.append(vec[pos : pos + x.size].reshape(x.shape))
            pos += x.size
        return out
    return vec.reshape(np.asarray(template).shape)


@dataclass
class TrainerState:
    """Everything the loop mutates: generator, optimizer, samplers, counters."""

    gen: ManifoldGenerator
    layout: ParamLayout
    config: TrainingConfig
    adam: dict
    sobol: SobolStream | None
    z_rng: np.random.Generator
    view_rng: np.random.Generator
    iteration: int = 0
    positional_grad_accum: np.ndarray | None = None


def make_trainer(gen: ManifoldGenerator, layout: ParamLayout, config: TrainingConfig) -> TrainerState:
    rates = config.learning_rates
    adam = {
        name: AdamState(learning_rate=rates[name], name=name)
        for name, _, _ in layout.fields()
    }
    adam["b_raw"] = AdamState(learning_rate=rates["b_raw"], name="b_raw")
    # Sobol covers the low-rank manifold; structured variants have rank D,
    # beyond the 32-dimension cap, and fall back to a seeded uniform stream.
    sobol = SobolStream(gen.rank) if gen.rank <= MAX_DIMENSION else None
    return TrainerState(
        gen=gen,
        layout=layout,
        config=config,
        adam=adam,
        sobol=sobol,
        z_rng=np.random.default_rng([config.seed, 1]),
        view_rng=np.random.default_rng([config.seed, 2]),
        positional_grad_accum=np.zeros(layout.n_primitives),
    )


def draw_z(state: TrainerState) -> np.ndarray:
    if state.sobol is not None:
        return to_symmetric_cube(state.sobol.next())
    return state.z_rng.uniform(-1.0, 1.0, size=state.gen.rank)


def train_step(state: TrainerState, batch: TrainingSample, dataset: TrainingSet) -> float:
    """One optimization step on a full-image batch; returns the loss value."""
    cfg = state.config
    gen = state.gen
    state.iteration += 1
    camera: Camera = dataset.cameras[batch.camera_index]
    illumination = dataset.illumination(batch)

    d_mu = np.zeros(gen.dimension)
    d_b = _struct_zeros_like(gen.b_raw)
    loss = 0.0
    # The objective's data term is a sum over training pixels, so the
    # mean-style photometric loss is scaled by the pixel-element count; this
    # keeps it commensurate with the volume term across image sizes.
    data_scale = float(batch.target.size)
    n_samples = cfg.m_train if cfg.stochastic else 1
    for _ in range(n_samples):
        if cfg.stochastic:
            z = draw_z(state)
            theta = sample(gen, z)
        else:
            z = None
            theta = gen.mu
        scene = unflatten(theta, state.layout)
        out = render(scene, camera, illumination, record=True)
        value, d_pixels = photometric_loss(out.color.data, batch.target, cfg.photometric_mix)
        grads = render_backward(scene, camera, (data_scale / n_samples) * d_pixels, out)
        loss += data_scale * value / n_samples
        if cfg.stochastic:
            d_mu_s, d_b_s = sample_backward(gen, z, grads.theta)
            d_mu += d_mu_s
            _struct_axpy(d_b, d_b_s)
        else:
            d_mu += grads.theta

    if cfg.stochastic and cfg.volume_weight != 0.0 and state.iteration % cfg.volume_period == 0:
        vol, d_vol = volume_surrogate(gen)
        loss -= cfg.volume_weight * vol
        _struct_axpy(d_b, d_vol, -cfg.volume_weight)

    if not np.isfinite(loss):
        raise RuntimeError(
            f"non-finite loss at iteration {state.iteration} "
            f"(camera {batch.camera_index}, illumination {batch.illumination_index})"
        )

    for name, _, _ in state.layout.fields():
        idx = state.layout.field_indices(name)
        gen.mu[idx] = adam_step(state.adam[name], gen.mu[idx], d_mu[idx])
    b_vec = adam_step(state.adam["b_raw"], _struct_to_vec(gen.b_raw), _struct_to_vec(d_b))
    gen.b_raw = _vec_to_struct(b_vec, gen.b_raw)

    per_prim = d_mu.reshape(state.layout.n_primitives, state.layout.block_size)
    state.positional_grad_accum += np.linalg.norm(per_prim[:, 0:3], axis=1)
    return loss


def densify(state: TrainerState) -> bool:
    """Clone/split high-gradient primitives and grow the generator to match.

    Returns True when the primitive count changed. Optimizer moments are
    reset because the parameter shapes change.
    """
    scene = unflatten(state.gen.mu, state.layout)
    grown, parents = densify_scene(
        scene,
        state.positional_grad_accum,
        state.config.densify_grad_threshold,
        state.config.densify_scale_threshold,
    )
    changed = grown.n_primitives != scene.n_primitives or not np.array_equal(
        parents, np.arange(scene.n_primitives)
    )
    if changed:
        new_theta, new_layout = flatten(grown)
        state.gen = expand_generator(state.gen, parents, state.layout, new_layout, new_theta)
        state.layout = new_layout
        for adam in state.adam.values():
            adam.first_moment = None
            adam.second_moment = None
    state.positional_grad_accum = np.zeros(state.layout.n_primitives)
    return changed


def train(
    state: TrainerState,
    dataset: TrainingSet,
    schedule=(),
    planner_hook=None,
    fallback_hook=None,
    log: TrainLog | None = None,
) -> tuple[ManifoldGenerator, TrainLog]:
    """Run the loop, acquiring a new view/illumination at each schedule boundary.

    ``schedule`` lists iteration numbers after which ``planner_hook(state,
    dataset, round_index)`` must return a TrainingSample to append. A failing
    hook falls back to ``fallback_hook`` (logged); without one, training
    continues on the current dataset.
    """
    if not dataset.samples:
        raise ValueError("training needs at least one acquired sample")
    log = log if log is not None else TrainLog()
    boundaries = sorted(set(schedule))
    round_index = 0
    order: list[int] = []
    while state.iteration < state.config.total_iterations:
        if not order:
            order = list(state.view_rng.permutation(len(dataset.samples)))
        batch = dataset.samples[order.pop(0)]
        started = time.perf_counter()
        loss = train_step(state, batch, dataset)
        log.times_ms.append((time.perf_counter() - started) * 1000.0)
        log.losses.append(loss)

        if (
            state.config.densify_interval
            and state.iteration % state.config.densify_interval == 0
        ):
            if densify(state):
                log.log_event(state.iteration, "densify", f"n={state.layout.n_primitives}")
                order = []

        if boundaries and state.iteration >= boundaries[0]:
            boundaries.pop(0)
            round_index += 1
            new_sample = None
            if planner_hook is not None:
                try:
                    new_sample = planner_hook(state, dataset, round_index)
                    kind = "acquired"
                except Exception as exc:  # planner failure: fall back, keep training
                    log.log_event(state.iteration, "planner-failed", str(exc))
                    if fallback_hook is not None:
                        new_sample = fallback_hook(state, dataset, round_index)
                        kind = "acquired-fallback"
            if new_sample is not None:
                dataset.add(new_sample)
                order = []  # reshuffle so the new sample joins immediately
                detail = f"camera={new_sample.camera_index}"
                if new_sample.illumination_index is not None:
                    detail += f",light={new_sample.illumination_index}"
                log.log_event(state.iteration, kind, detail)
    return state.gen, log


def step_timing_report(log: TrainLog, warmup: int = 10) -> float:
    """Mean milliseconds per iteration, excluding the warm-up iterations."""
    if len(log.times_ms) < 100:
        raise ValueError("timing report needs at least 100 timed iterations")
    return float(np.mean(log.times_ms[warmup:]))
