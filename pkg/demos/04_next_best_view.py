"""Pick the next camera three ways: score a pool, ascend the gradient,
or take the farthest point, and compare what each would capture."""

import numpy as np

from stochsplat import (
    CandidatePool,
    TrainingConfig,
    TrainingSet,
    farthest_point_select,
    flatten,
    generate_scene,
    init_fit_scene,
    init_generator,
    make_trainer,
    optimize_next_view,
    render_uncertainty,
    select_next_view,
    synthesize_dataset,
    train,
)
from stochsplat.planning import default_z_samples

SEED = 1
gt, pool, _ = generate_scene(SEED, n_primitives=180, width=48, height=48)
pool = CandidatePool(cameras=pool.cameras)
pool.choose(0)
cam0 = pool.cameras[0]
dataset = TrainingSet(cameras=[cam0], samples=synthesize_dataset(gt, [cam0]))

theta0, layout = flatten(init_fit_scene(SEED, n_primitives=110))
gen = init_generator(layout.total_dimension, rank=2, seed=SEED, mu=theta0)
state = make_trainer(gen, layout, TrainingConfig(total_iterations=1200, seed=SEED, volume_weight=0.1))
gen, _ = train(state, dataset)

z = default_z_samples(gen, 2)

# Candidate scoring (every pool camera under the same realizations).
scores = {
    i: render_uncertainty(gen, layout, pool.cameras[i], z_samples=z).total
    for i in pool.unchosen()
}
selected = select_next_view(gen, layout, pool, z_samples=z)
print("pool scores (index: U):")
for i, u in sorted(scores.items()):
    marker = "  <- selected" if i == selected else ""
    print(f"  {i:2d}: {u:9.2f}{marker}")

# Gradient-based refinement from the selected candidate.
result = optimize_next_view(
    gen, layout, pool.cameras[selected], steps=40, learning_rate=0.08, z_samples=z, restarts=4
)
print(
    f"optimized camera: lat {np.degrees(result.camera.latitude):.1f} deg, "
    f"lon {np.degrees(result.camera.longitude):.1f} deg, U {result.total:.2f} "
    f"(pool best was {scores[selected]:.2f})"
)

# Geometric baseline for reference.
pool_fp = CandidatePool(cameras=pool.cameras)
pool_fp.choose(0)
fp = farthest_point_select(pool_fp)
print(f"farthest-point baseline would pick candidate {fp} (U {scores.get(fp, float('nan')):.2f})")
