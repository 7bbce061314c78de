"""Fit a stochastic field to a few views and inspect its realizations.

Trains mean and generating matrix jointly with one Monte Carlo sample per
iteration, then renders the mean and a few parallelotope-corner
realizations: on training views they should all look alike, away from them
they visibly disagree.
"""

import numpy as np

from stochsplat import (
    TrainingConfig,
    TrainingSet,
    flatten,
    generate_scene,
    init_fit_scene,
    init_generator,
    make_trainer,
    psnr,
    render,
    sample,
    synthesize_dataset,
    train,
    unflatten,
    write_ppm,
)

SEED = 0
gt, pool, test_cams = generate_scene(SEED, n_primitives=180, width=48, height=48)
train_cams = [pool.cameras[i] for i in range(0, 8, 2)]  # four views
dataset = TrainingSet(cameras=train_cams, samples=synthesize_dataset(gt, train_cams))

theta0, layout = flatten(init_fit_scene(SEED, n_primitives=110))
gen = init_generator(layout.total_dimension, rank=2, seed=SEED, mu=theta0)
config = TrainingConfig(total_iterations=1500, seed=SEED, volume_weight=0.1)
state = make_trainer(gen, layout, config)
gen, log = train(state, dataset)
print(f"trained 1500 iterations; final loss {np.mean(log.losses[-25:]):.2f}")

def view_psnr(theta, camera, target):
    return psnr(render(unflatten(theta, layout), camera).color.data, target)

train_target = dataset.samples[0].target
test_target = render(gt, test_cams[0]).color.data
print("view            mean     corner(+1,+1)  corner(-1,-1)")
for name, cam, target in (
    ("training[0]", train_cams[0], train_target),
    ("held-out[0]", test_cams[0], test_target),
):
    values = [
        view_psnr(gen.mu, cam, target),
        view_psnr(sample(gen, np.array([1.0, 1.0])), cam, target),
        view_psnr(sample(gen, np.array([-1.0, -1.0])), cam, target),
    ]
    print(f"{name}   " + "  ".join(f"{v:9.2f} dB" for v in values))

write_ppm(render(unflatten(gen.mu, layout), test_cams[0]).color, "demo_mean.ppm")
write_ppm(
    render(unflatten(sample(gen, np.array([1.0, 1.0])), layout), test_cams[0]).color,
    "demo_corner.ppm",
)
print("wrote demo_mean.ppm and demo_corner.ppm (compare them to see the ambiguity)")
