"""
A small coverage study
======================

Repeat the same design many times and count how often each interval
contains the truth. Random scaling and the plug-in stay close to 95% for
both step-size exponents. Batch means with its default anchors falls well
short at this horizon.
"""

from sgdinfer.bench import ExperimentConfig, aggregate, results_csv, run_experiment

for a in (0.505, 0.667):
    cfg = ExperimentConfig(
        model="linear",
        d=5,
        gamma0=0.5,
        a=a,
        n=20_000,
        checkpoints=(5_000, 20_000),
        methods=("random_scaling", "plugin", "batch_means"),
        replications=200,
        seed=11,
    )
    res = run_experiment(cfg)
    print(results_csv(cfg, aggregate(res.records), header=(a == 0.505)), end="")
