"""
Confidence intervals from a single SGD pass
===========================================

Stream a linear-regression sample once, keep the averaged iterate and the
random-scaling matrix up to date, and read off an interval at any time.
Nothing from the stream is stored.
"""

import numpy as np

from sgdinfer import LINEAR, RandomScaling, SeedSpec, StepSchedule, confidence_interval, sgd_init, sgd_step
from sgdinfer.bench import generate_linear, true_beta

d = 5
sched = StepSchedule(gamma0=0.5, a=0.505)
state = sgd_init(np.zeros(d))
scaling = RandomScaling(d, shift="first")

# one observation at a time; the accumulator sees the running average
for t, obs in enumerate(generate_linear(SeedSpec(2024), d, 50_000), start=1):
    sgd_step(state, LINEAR, obs, sched)
    scaling.update(state.beta_bar)
    if t % 10_000 == 0:
        V = scaling.finalize()
        ci = confidence_interval(state.beta_bar[0], V[0, 0], state.avg_count, level=0.95)
        print(f"t={t:6d}  beta_1 in [{ci.lower:+.4f}, {ci.upper:+.4f}]  (length {ci.length:.4f})")

# the truth is known for this synthetic design
print("true beta:", true_beta(d))
print("estimate :", np.round(state.beta_bar, 4))
