"""Map uncertainty over the view sphere after single-view training.

The training view should sit in a low-uncertainty basin with the high
ground on the far side of the object; the map is exported as CSV and a
false-color image.
"""

import numpy as np

from stochsplat import (
    TrainingConfig,
    TrainingSet,
    flatten,
    generate_scene,
    init_fit_scene,
    init_generator,
    landscape_smoothness,
    make_trainer,
    render,
    render_uncertainty,
    synthesize_dataset,
    train,
    uncertainty_landscape,
)
from stochsplat.planning import write_landscape_csv, write_landscape_ppm

SEED = 2
gt, pool, _ = generate_scene(SEED, n_primitives=180, width=48, height=48)
cam0 = pool.cameras[0]
dataset = TrainingSet(cameras=[cam0], samples=synthesize_dataset(gt, [cam0]))

theta0, layout = flatten(init_fit_scene(SEED, n_primitives=110))
gen = init_generator(layout.total_dimension, rank=2, seed=SEED, mu=theta0)
state = make_trainer(gen, layout, TrainingConfig(total_iterations=1200, seed=SEED, volume_weight=0.1))
gen, _ = train(state, dataset)

lats, lons, grid = uncertainty_landscape(gen, layout, cam0, lat_count=16, lon_count=32)
write_landscape_csv("demo_landscape.csv", lats, lons, grid)
write_landscape_ppm("demo_landscape.ppm", grid)

u_train = render_uncertainty(gen, layout, cam0).total
print(f"U at the training view:      {u_train:10.2f}")
print(f"U grid max / mean:           {grid.max():10.2f} / {grid.mean():.2f}")
print(f"normalized map roughness:    {landscape_smoothness(grid):10.3f}")
i, j = np.unravel_index(np.argmax(grid), grid.shape)
print(f"highest-uncertainty cell:    lat {np.degrees(lats[i]):.0f} deg, lon {np.degrees(lons[j]):.0f} deg")
print(f"training view:               lat {np.degrees(cam0.latitude):.0f} deg, lon {np.degrees(cam0.longitude):.0f} deg")
print("wrote demo_landscape.csv and demo_landscape.ppm")
