"""Sublabel-accurate minimization of continuous-valued grid MRFs."""

from .core import (
    ContinuousLabeling,
    DiscreteLabeling,
    DomainError,
    GridGraph,
    InvalidLabelingError,
    LabelSpace,
    MrfProblem,
    PairwiseKind,
    PairwiseModel,
    UnsupportedPriorError,
    continuous_energy,
    discrete_energy,
    psnr,
)
from .cvxsolve import ConvergenceError, SolveOptions
from .discrete import DiscreteSolverKind, alpha_expansion, exact_convex, initial_labeling
from .refine import (
    RefineKind,
    fit_data,
    fit_kappa,
    refine_lm,
    refine_qm,
    refine_ql,
    round_to_discrete,
    select_ranges,
)

__version__ = "0.1.0"
