"""Rare-event estimation for overdamped Langevin dynamics.

Tools for estimating small escape probabilities of ``dX = -grad(V) dt +
sigma dW``: exact pathwise reweighting between potentials (Girsanov in
generator form), non-adaptive importance sampling built on it, short-time
transition-density asymptotics with computable error bounds, and two
independent oracles (a Fokker-Planck solver and a large-deviation action
minimizer) for cross-checking the sampled answers.
"""

from .errors import (
    ConfigurationError,
    ConstructionError,
    EvaluationError,
    SimulationError,
    SolverError,
    WellEscapeError,
)
from .potentials import (
    CallablePotential,
    CosineWellPotential,
    Interval,
    LinearPotential,
    NoiseScale,
    PotentialField,
    QuadraticPotential,
    Region,
    ZeroPotential,
    flatten_on_region,
    generator_apply_general,
    generator_apply_to_self,
    invert_on_region,
    region_supremum,
)
from .sde import BLOCK_SAMPLES, RngPolicy, SamplePath, simulate, simulate_with_drift
from .girsanov import (
    LogWeight,
    log_weight_general_reference,
    log_weight_generator_form,
    log_weight_stochastic_integral_form,
)
from .density import (
    DensityEstimate,
    approximate,
    approximate_general,
    bounds,
    corridor_violation_bound,
    gaussian_kernel,
)
from .estimators import (
    Diagnostics,
    EscapeEvent,
    EstimatorSummary,
    csv_row,
    diagnostics,
    run_importance,
    run_importance_meshes,
    run_plain,
    small_noise_sweep,
    theorem3_bound,
    write_csv,
)
from .fokker_planck import (
    FpGrid,
    escape_probability,
    evolve,
    gaussian_bump,
    integrate_density,
    stationary_density,
)
from .action import (
    ActionResult,
    DiscretePath,
    action,
    action_gradient,
    minimize_action_pinned,
    minimize_exit_action,
)
from .config import ExperimentConfig

__version__ = "0.1.0"
