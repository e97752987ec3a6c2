"""
Tracking one coefficient cheaply
================================

When only one coordinate matters the full d x d state is wasted work. The
scalar state keeps three numbers and gives the same diagonal element.
"""

import time

import numpy as np

from sgdinfer import LOGISTIC, RandomScaling, ScalarRandomScaling, SeedSpec, StepSchedule, sgd_init, sgd_step
from sgdinfer.bench import DesignStream
from sgdinfer.core import Observation

d, n = 200, 5_000
x, y = DesignStream("logistic", SeedSpec(5), d).draw(n)
sched = StepSchedule(0.5, 0.505)
state = sgd_init(np.zeros(d))
full, single = RandomScaling(d, shift="first"), ScalarRandomScaling(0, shift="first")
spent = {"full": 0.0, "scalar": 0.0}

for xi, yi in zip(x, y):
    sgd_step(state, LOGISTIC, Observation(xi, yi), sched)
    t0 = time.perf_counter()
    full.update(state.beta_bar)
    t1 = time.perf_counter()
    single.update(state.beta_bar[0])
    spent["full"] += t1 - t0
    spent["scalar"] += time.perf_counter() - t1

print(f"V_11 full {full.finalize()[0, 0]:.10f}   scalar {single.finalize():.10f}")
print(f"accumulator seconds: full {spent['full']:.3f}, scalar {spent['scalar']:.3f}")
