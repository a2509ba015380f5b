"""Spectral-evolution-aware cache scheduling for iterative denoising samplers.

The library builds timestep-dependent Wiener-style filters from a power-law
spectral prior, measures feature change in the filtered space, and gates
cache refresh decisions on the accumulated change.  A synthetic
linear-diffusion testbed makes every scheduling claim checkable at desk
scale, and the SEATRAJ trajectory format replays recorded features from
real pipelines through the same analyses.
"""

__version__ = "0.1.0"

from .filtering import apply_filter, validate_feature
from .gate import (
    CacheGate,
    Decision,
    DeltaForRatio,
    GateTrace,
    delta_for_target_ratio,
    gate_step,
    refresh_heatmap,
    simulate_gate,
    verify_accumulation_brackets,
)
from .metric import (
    DistanceSeries,
    MetricKind,
    MetricTag,
    fit_poly,
    rel_l1,
    sea_distance,
    series_from_features,
    variant_distance,
)
from .schedule import NoiseSchedule, ScheduleKind, make_dpm_schedule, make_rf_schedule, snr
from .spectrum import (
    INFINITE_POWER,
    DegenerateFilterError,
    FilterBank,
    GridRank,
    PowerLawPrior,
    RadialGrid,
    build_filter_bank,
    normalize_gain,
    prior_spectrum,
    radial_grid,
    wiener_response,
)
from .synthetic import (
    FieldSampler,
    FullCompute,
    MetricPolicy,
    OraclePolicy,
    RunResult,
    SamplerConfig,
    analytic_mmse,
    denoise_mmse,
    forward_noise,
    make_run_inputs,
    psnr,
    radial_power_spectrum,
    reverse_step,
    run_sampler,
    sample_field,
)
from .trajectory import (
    CapabilityError,
    FeatureSide,
    Trajectory,
    TrajectoryFormatError,
    TrajectoryStep,
    read_trajectory,
    replay_distances,
    trajectory_from_run,
    write_trajectory,
)
