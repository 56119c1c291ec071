"""Double coupled canonical polyadic decomposition for joint BSS."""

from .algebraic import (
    build_gamma,
    build_omega,
    coupled_rank1_map,
    detect_to_w,
    recover_factors,
    solve_algebraic,
    solve_coupled_overdet,
)
from .als import AlsTrace, solve_als, solve_als_multistart, update_A, update_C
from .estimators import CovarianceTensorizer, DcCpd
from .exceptions import (
    ConsistencyError,
    ContractViolationError,
    DccpdError,
    DegenerateInputError,
    DegeneratePencilError,
    DimensionError,
    RankDeficiencyError,
    RankMismatchError,
)
from .jbss import (
    FrameSpec,
    MultiSetSignals,
    SourceModel,
    coupled_mean_relative_error,
    covariance_tensorize,
    mean_relative_error,
    synth_mixtures,
    synth_sources,
)
from .linalg import best_rank1, dominant_eigvec, gevd_cpd, lstsq, nullspace
from .model import (
    DcCpdProblem,
    DcCpdSolution,
    SolverOptions,
    cost_eta,
    detect_rank,
    normalize_solution,
    random_problem,
    reconstruct,
    reduce_third_mode,
    relative_cost,
    symmetrize,
)
from .tensor_ops import (
    concat3,
    cpd_reconstruct,
    khatri_rao,
    matricize,
    perm213,
    tensorize,
)
from .uniqueness import (
    CPD_RMAX_TABLE,
    DCCPD_RMAX_TABLE,
    UniquenessReport,
    build_phi,
    generic_rmax,
)

__version__ = "0.1.0"
