"""Jump-flow population models, exact truncated-cost optimal transport, and
coupling-based contraction experiments."""

from .laws import AtomLaw, BoxLaw, TruncPowerLaw, UniformLaw
from .measures import (
    BirthLaw,
    EmpiricalMeasure,
    FragmentRatio,
    GridSpec,
    GrowthFunction,
    MatingMix,
    RateFunction,
    Space,
    SpatialNoise,
    admissible_a,
    affine_growth,
    affine_power_rate,
    constant_growth,
    constant_rate,
    sample,
    suggest_a,
)
from .models import (
    ModelSpec,
    age_size_model,
    check_I_inequality,
    check_delta_sign,
    check_sexual_convexity,
    coupled_jump,
    event_rates,
    growth_fragmentation_model,
    marginal_jump,
    renewal_model,
    renewal_system_model,
    sexual_model,
    space_age_model,
    suggest_truncation,
    two_time_model,
    validate_truncation,
)
from .otsolver import (
    CostFunction,
    TransportPlan,
    brute_force_cost,
    power_cost,
    sample_plan,
    transport_cost,
    trunc_abs,
    trunc_abs_state,
    trunc_sum,
    trunc_weighted,
)
from .pdmp import (
    CoupledPair,
    CoupledResult,
    EnvelopeViolation,
    PopulationResult,
    SimConfig,
    coupled_experiment,
    simulate_coupled,
    simulate_population,
    thinning_next_event,
)
from .dual import (
    DualProblem,
    DualSolution,
    characteristics,
    duality_crosscheck,
    evaluate_psi,
    solve_dual,
    solve_volterra,
)

__version__ = "0.1.0"
