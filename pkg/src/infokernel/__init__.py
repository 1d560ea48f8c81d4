"""Information-constrained optimization over finite probability spaces.

The package solves expected-utility maximization under a budget on an
abstract information functional, exposes the exponential-family
structure of the optimizers, and compares deterministic against
randomized Markov transition kernels at matched information levels.
"""

from .spaces import (
    DimensionMismatchError,
    FiniteSpace,
    JointSpace,
    Measure,
    ProbMeasure,
    Utility,
    ZeroMassError,
    normalize,
    ones_utility,
    pair,
    support,
)
from .functionals import (
    ExtendedKL,
    InfoFunctional,
    MultiValuedDualError,
    NegEntropy,
    TotalVariation,
    kl_dual_eval,
    kl_dual_subgradient,
    kl_eval,
    negentropy_eval,
    tv_eval,
)
from .solver import (
    BoundednessReport,
    InfeasibleError,
    NonConvexDualError,
    OptimalSolution,
    SpecialValues,
    TvSolution,
    ValueCurve,
    check_f_bounded,
    lower_branch,
    solution_at_beta,
    solve_for_lambda,
    solve_for_upsilon,
    solve_tv,
    special_values,
    value_curve,
)
from .kernels import (
    ChannelSolution,
    ConvergenceError,
    FiniteMap,
    GridSpec,
    JointMeasure,
    Kernel,
    ZeroAtomError,
    bayes_kernel,
    channel_optimize,
    deterministic_kernel,
    deterministic_mi_bound,
    fixed_point_channel,
    free_energy,
    gibbs_kernel,
    injectivity_index,
    is_deterministic,
    joint_from_kernel,
    kernel_invertible,
    maximizing_input,
    mutual_information,
    shannon_entropy,
    utility_matrix,
)
from .separation import (
    SeparationReport,
    SupportProfile,
    enumerate_deterministic,
    separation_experiment,
    support_corollary_check,
    support_profile,
)
from .asymptotics import (
    TruncationSweep,
    beta_from_info_gaussian,
    cauchy_truncated_loss,
    gaussian_conditional_utility,
    series_example,
    zeta_tail_loss,
)

__version__ = "0.1.0"
