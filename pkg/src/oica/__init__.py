"""Overcomplete independent component analysis with one Gaussian source.

Recovery of the mixing matrix from second and fourth cumulants,
identifiability checks, and the quadric systems behind them.
"""

__version__ = "0.1.0"

from .cumulants import (
    CumulantPair,
    Exponential,
    Gaussian,
    Moments,
    SourceSpec,
    StudentT,
    WithGaussianNoise,
    population_cumulants,
    sample_cumulants,
)
from .errors import *  # noqa: F401,F403
from .estimator import OvercompleteICA
from .experiments import (
    SweepConfig,
    SweepRow,
    generate_mixing,
    greedy_match,
    rel_frob_error,
    run_sweep,
    sample_mixture,
)
from .identifiability import (
    ProbeConfig,
    classify_generic,
    collinear_pairs,
    kernel_report,
    khatri_rao_rank,
    projected_veronese_count,
    rank_one_probe,
    witness_distributions,
)
from .mixing import MixingMatrix
from .optimize import MinimizeConfig, best_of_restarts, powell_minimize
from .quadrics import QuadricSystem, build_real_count_system, evaluate, linear_relations, quadric_system
from .recovery import RecoveryConfig, decompose_k4, recover, recover_gaussian_column
from .tensors import SymMat, SymTen4, flatten, outer_power
