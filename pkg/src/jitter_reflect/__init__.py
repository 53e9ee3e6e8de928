"""Frame sampling by jittering with reflection.

A schedule samples one timestamp per interval ``[i*t, (i+1)*t)``. Each step
adds ``t`` plus symmetric jitter to the previous sample and mirrors any
overshoot back into the interval. The result stays within ``t_p`` of a fixed
rate while every timestamp keeps a positive sampling density and long-range
correlations die out exponentially.
"""

__version__ = "0.1.0"

from .adversary import (
    AttackSet,
    MissCurve,
    build_attack_set,
    estimate_miss_probability,
    exact_miss_dp,
    fit_exponential,
    phase_search_attack,
    run_trial,
    wilson_interval,
)
from .analysis import (
    alpha_of_config,
    correlation_length,
    empirical_autocorrelation,
    fourier_coefficient,
    gap_variance,
    marginal_uniformity_test,
    offsets,
    spectral_report,
    transition_matrix,
    tv_decay,
)
from .jitter import JitterSpec
from .sampler import (
    InvalidConfigError,
    JitterReflectSampler,
    SamplingConfig,
    Schedule,
    baseline_schedule,
    check_u1,
    check_u2,
    generate_schedule,
    init_sampler,
    next_sample,
    reflect,
    validate_config,
)
