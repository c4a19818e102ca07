"""Path-space concentration experiments for mean-field particle systems."""
from .concentration import (
    TheoremParameters,
    bound_calculator,
    chaos_experiment,
    coupling_audit,
    estimate_tail,
    fit_rate,
    holder_exp_moment,
    wilson_interval,
)
from .entropy import (
    HolderBallSpec,
    build_cover,
    build_packing,
    covering_lower_bound_log,
    covering_upper_bound_log,
    sample_holder_ball,
)
from .paths import EmpiricalPathMeasure, EmpiricalPointMeasure, Path, TimeGrid
from .potentials import (
    make_perturbed_confinement,
    make_perturbed_interaction,
    make_quadratic_confinement,
    make_quadratic_interaction,
    make_zero_confinement,
)
from .sde import (
    BrownianDriver,
    InitialLaw,
    SimulationConfig,
    simulate_coupled,
    simulate_interacting,
    simulate_reference_ensemble,
)
from .transport import product_wasserstein, talagrand_margin, wasserstein

__version__ = "0.1.0"
