"""Online inference for averaged SGD studentized by random scaling."""

from .baselines import (
    PlugIn,
    RecursiveBatchMeans,
    arithmetic_anchors,
    batch_means_fixed,
    normal_ci,
    power_anchors,
)
from .core import Observation, SeedSpec, StepSchedule, SymMatrix, step_size
from .inference import (
    CRITICAL_VALUES,
    ConfidenceInterval,
    LinearRestriction,
    confidence_interval,
    critical_value,
    simulate_critical_values,
    t_statistic,
    wald_statistic,
)
from .models import LOGISTIC, LINEAR, LinearModel, LogisticModel, sigmoid
from .rscale import RandomScaling, ScalarRandomScaling, rs_batch_oracle
from .sgd import DivergenceError, SgdState, sgd_init, sgd_run, sgd_step

__version__ = "0.1.0"
