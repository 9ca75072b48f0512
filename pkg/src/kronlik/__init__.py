"""Maximum likelihood for matrix-normal models with Kronecker covariance."""

__version__ = "0.1.0"

from .core import (
    EstimateReport,
    KroneckerCovariance,
    MatrixDataset,
    Status,
    SufficientStats,
    canonicalize,
    compute_stats,
    kron_close,
    kron_distance,
    likelihood_equation_residual,
    log_likelihood,
    neg_objective,
)
from .diagonal import diagonal_mle, diagonal_search_box, one_diag_mle, one_diag_mle_p2
from .flipflop import FlipFlopConfig, analytic_family_n2, existence_gate, flip_flop
from .uniqueness import classify, compute_w, diagnose, family, nonuniqueness_probability

__all__ = [
    "EstimateReport",
    "FlipFlopConfig",
    "KroneckerCovariance",
    "MatrixDataset",
    "Status",
    "SufficientStats",
    "analytic_family_n2",
    "canonicalize",
    "classify",
    "compute_stats",
    "compute_w",
    "diagnose",
    "diagonal_mle",
    "diagonal_search_box",
    "existence_gate",
    "family",
    "flip_flop",
    "kron_close",
    "kron_distance",
    "likelihood_equation_residual",
    "log_likelihood",
    "neg_objective",
    "nonuniqueness_probability",
    "one_diag_mle",
    "one_diag_mle_p2",
]
