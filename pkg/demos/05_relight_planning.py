"""Plan illumination conditions for a relightable field.

Starts from an ambient-only capture, scores the 16 one-hot lighting
coefficients by mean uncertainty over the probe cameras, and refines the
winner by gradient ascent on the unit sphere of coefficient vectors.
"""

import numpy as np

from stochsplat import (
    TrainingConfig,
    TrainingSet,
    dc_light,
    flatten,
    generate_scene,
    init_fit_scene,
    init_generator,
    make_trainer,
    optimize_next_illumination,
    select_next_illumination,
    synthesize_dataset,
    train,
)
from stochsplat.planning import default_z_samples
from stochsplat.relight import mean_uncertainty_over_cameras

SEED = 3
gt, pool, _ = generate_scene(SEED, n_primitives=150, mode="transfer", width=40, height=40)
probe_cams = [pool.cameras[i] for i in range(0, 8, 2)]
lights = [dc_light(1.0)]
dataset = TrainingSet(
    cameras=probe_cams,
    samples=synthesize_dataset(gt, probe_cams, lights),
    lights=lights,
)

theta0, layout = flatten(init_fit_scene(SEED, n_primitives=90, mode="transfer"))
gen = init_generator(layout.total_dimension, rank=2, seed=SEED, mu=theta0)
state = make_trainer(gen, layout, TrainingConfig(total_iterations=900, seed=SEED, volume_weight=0.1))
gen, _ = train(state, dataset)

z = default_z_samples(gen, 2)
index, pi0 = select_next_illumination(gen, layout, probe_cams, used_indices={0}, z_samples=z)
u0 = mean_uncertainty_over_cameras(gen, layout, probe_cams, pi0, z)
print(f"best one-hot light: coefficient {index} with mean U {u0:.3f}")

result = optimize_next_illumination(
    gen, layout, pi0, probe_cams, steps=30, learning_rate=0.1, z_samples=z
)
print(f"after gradient refinement: mean U {result.total:.3f}")
np.set_printoptions(precision=3, suppress=True)
print("optimized coefficients:", result.illumination)
print("coefficient vector norm:", np.linalg.norm(result.illumination))
