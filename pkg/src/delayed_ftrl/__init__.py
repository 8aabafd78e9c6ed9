"""FTRL learners for online learning with delayed bandit feedback.

Three settings share one solver core: combinatorial semi-bandits over action
hulls, adversarial MDPs with known transitions over occupancy measures, and
linear bandits over smooth convex bodies with self-concordant barriers.
"""

from . import _kernels
from .delays import (
    Constant,
    DelayState,
    ExplicitDelays,
    SeededRandomDelays,
    arrivals_at,
    doubling_run,
    missing_set,
    schedule_from_spec,
    total_missing,
)
from .domains import BallDomain, CappedSimplexHull, OccupancyPolytope, PolytopeDomain, VertexHull
from .environments import (
    BlockRepetition,
    FixedGap,
    LossGenerator,
    MdpFixedGap,
    MdpSeededIID,
    SeededIID,
    ShiftingPhases,
    generator_from_spec,
    make_lower_bound_env,
)
from .errors import ConfigError, ConvergenceError, InvariantViolation, NumericalError, RejectedInput
from .harness import ExperimentConfig, RegretTrace, aggregate, export, run_experiment, theorem_bound_for_config
from .linbandit import (
    LinBanditLearner,
    LinBanditParams,
    best_in_hindsight_lin,
    lin_estimate,
    sample_linban_action,
    sym_inv_sqrt,
    sym_sqrt,
    theorem_bound_lin,
    tune_linban,
)
from .mdp import (
    MdpLearner,
    MdpParams,
    MdpSpec,
    best_in_hindsight_mdp,
    build_mdp_domain,
    mdp_estimate,
    occupancy_from_policy,
    policy_from_occupancy,
    random_mdp,
    rollout,
    theorem_bound_mdp,
    tune_mdp,
    upper_occupancy,
)
from .regularizers import (
    BallBarrier,
    EntropyLogBarrier,
    LocalNormContext,
    PolytopeLogBarrier,
    QuadraticPlusBarrier,
    dikin_contains,
    hessian_sandwich_check,
    local_norm,
    local_norm_dual,
    reg_grad,
    reg_hess,
    reg_value,
)
from .semibandit import (
    ExplicitVertices,
    MSets,
    SemiBanditLearner,
    SemiBanditParams,
    best_in_hindsight_comb,
    decompose_and_sample,
    decomposition_support,
    iw_estimate,
    theorem_bound_comb,
    tune_semibandit,
)
from .solver import Iterate, solve_ftrl

__version__ = "0.1.0"
