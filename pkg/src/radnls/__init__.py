"""Radial NLS simulator and phase-space observable engine."""

from .grid import (
    GridError,
    RadialField,
    RadialGrid,
    boundary_mass_fraction,
    free_evolve,
    h1_norm,
    h1dot_norm,
    inner,
    l2_norm,
)
from .weights import (
    Cutoff,
    InverseRangeMultiplier,
    MorawetzMultiplier,
    ShiftedStep,
    SmoothWeight,
    SqrtShiftWeight,
    WeightError,
    mirror,
    smooth_char,
    weight_table,
)
from .operators import OperatorToolbox, expectation, expectation_multiplier
from .opfunc import (
    FlowMap,
    GammaCalculus,
    MellinCalculus,
    MellinWindowError,
    QuadratureError,
    TanhProjection,
    gamma_group,
    highlow_leakage,
    p_plus_p_expectation,
    tanh_projection,
)
from .dynamics import (
    NonlinearityError,
    NonlinearitySpec,
    NumericalAbort,
    Trajectory,
    band_limited_data,
    energy,
    evolve,
    free_trajectory,
    gaussian_data,
    pseudo_conformal_norm,
    self_similar_data,
)
from .observables import (
    PRESETS,
    ObservableError,
    ObservableSpec,
    PropagationEngine,
    boundary_limit_check,
    default_engine,
    gamma_limit_estimate,
    propagation_integral,
)
from .channels import (
    ChannelError,
    ChannelResult,
    DecompositionReport,
    channel_gamma_crosscheck,
    decompose,
    dilation_rescale,
    extract_free_channel,
    microlocal_map,
    self_similar_profile,
    sequential_A_bound,
    wls_diagnostics,
    zero_frequency_mass,
)

__version__ = "0.1.0"

__all__ = [
    "GridError",
    "RadialField",
    "RadialGrid",
    "boundary_mass_fraction",
    "free_evolve",
    "h1_norm",
    "h1dot_norm",
    "inner",
    "l2_norm",
    "Cutoff",
    "InverseRangeMultiplier",
    "MorawetzMultiplier",
    "ShiftedStep",
    "SmoothWeight",
    "SqrtShiftWeight",
    "WeightError",
    "mirror",
    "smooth_char",
    "weight_table",
    "OperatorToolbox",
    "expectation",
    "expectation_multiplier",
    "FlowMap",
    "GammaCalculus",
    "MellinCalculus",
    "MellinWindowError",
    "QuadratureError",
    "TanhProjection",
    "gamma_group",
    "highlow_leakage",
    "p_plus_p_expectation",
    "tanh_projection",
    "NonlinearityError",
    "NonlinearitySpec",
    "NumericalAbort",
    "Trajectory",
    "band_limited_data",
    "energy",
    "evolve",
    "free_trajectory",
    "gaussian_data",
    "pseudo_conformal_norm",
    "self_similar_data",
    "PRESETS",
    "ObservableError",
    "ObservableSpec",
    "PropagationEngine",
    "boundary_limit_check",
    "default_engine",
    "gamma_limit_estimate",
    "propagation_integral",
    "ChannelError",
    "ChannelResult",
    "DecompositionReport",
    "channel_gamma_crosscheck",
    "decompose",
    "dilation_rescale",
    "extract_free_channel",
    "microlocal_map",
    "self_similar_profile",
    "sequential_A_bound",
    "wls_diagnostics",
    "zero_frequency_mass",
    "__version__",
]
