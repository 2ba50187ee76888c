"""hjlab: desk-scale numerics for path-dependent Hamilton-Jacobi equations,
co-invariant calculus, and zero-sum time-delay games."""

from .paths import Grid, Path, TimeDensity, integrate_density, l1_norm, stopped_path, sup_norm
from .dynamics import (
    BundleScheme,
    ControlSignal,
    ExtensionBundle,
    gronwall_bound,
    integrate,
    sample_bundle,
)
from .hamiltonians import (
    HamiltonianSpec,
    SmoothedHamiltonian,
    check_nonanticipation,
    game_hamiltonian,
    isaacs_gap,
    l1_distance,
    steklov_smooth,
)
from .lyapunov import KAPPA, LKParams, comparison_check, gamma, nu, q_gradient, s_eps
from .ci import (
    CharacteristicFlow,
    CiGradient,
    PathFunctional,
    characteristic_flow,
    chain_rule_residual,
    ci_derivative,
    hj_residual,
    make_fd_grads,
)
from .minimax import (
    CheckConfig,
    Verdict,
    chain_check,
    check_lower,
    check_upper,
    classify,
    default_s_set,
    default_tolerance,
)
from .games import (
    FeedbackPolicy,
    GameSpec,
    GameValueReport,
    VectorOps,
    evaluate_cost,
    lower_value_tree,
    refinement_study,
    replay_policy,
    solve_tree,
    upper_value_tree,
)
from .regularize import (
    GoodTimeSet,
    PathDictionary,
    good_set_from_discontinuities,
    mcshane_extend,
    time_regularize,
)
from .problem import ProblemFile, build_game, build_hamiltonian, build_phi, initial_path, parse_problem

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
