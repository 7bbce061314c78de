"""Run the full closed-loop planning experiment through the harness.

Equivalent to `stochsplat plan-views --seed 0 --out demo_out` with a small
budget; prints the quality-vs-budget table afterwards.
"""

from stochsplat.experiments import ExperimentConfig, run

config = ExperimentConfig(
    mode="plan-views",
    seed=0,
    out_dir="demo_out",
    gt_primitives=120,
    fit_primitives=80,
    width=48,
    height=48,
    pool_size=12,
    n_test=8,
    rounds=3,
    iterations_per_round=250,
    opt_steps=25,
    opt_restarts=3,
)
report = run(config)

print("round  " + "  ".join(f"{arm:>9s}" for arm in ("select", "optimize", "farthest", "random")))
for round_index in range(1, config.rounds + 1):
    row = {r["arm"]: r["psnr"] for r in report.rows if r["round"] == round_index}
    print(
        f"{round_index:5d}  "
        + "  ".join(f"{row.get(arm, float('nan')):9.2f}" for arm in ("select", "optimize", "farthest", "random"))
    )
print("artifacts:")
for path in report.manifest:
    print("  ", path)
