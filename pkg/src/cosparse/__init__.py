"""Composite iteratively-reweighted L1 recovery of sparse signals.

Reconstructs (approximately) sparse signals from noisy linear measurements
by regularized least squares with composite analysis-L1 penalties whose
per-band weights and scales are tuned automatically across reweighting
iterations.
"""

from .dictionaries import (
    CompositeDictionary,
    concat_dictionaries,
    daubechies_lowpass,
    highpass_from_lowpass,
    make_finite_difference_dictionary,
    make_owt,
    make_uwt,
)
from .inner import InnerConfig, InnerResult, cg_solve, soft_threshold, solve_weighted_analysis_l1
from .linops import (
    LinOp,
    MatrixOp,
    SamplingPattern,
    dft,
    make_finite_difference,
    make_partial_fourier_video,
    make_spread_spectrum,
    split_real,
)
from .reweighting import (
    EpsSearch,
    OuterConfig,
    RecoveryResult,
    estimate_lambda_eps,
    run_co_irw_l1,
    run_co_irw_l1_eps,
    run_co_l1,
    run_irw_l1,
    run_recovery,
)

__version__ = "0.1.0"

__all__ = [
    "CompositeDictionary",
    "concat_dictionaries",
    "daubechies_lowpass",
    "highpass_from_lowpass",
    "make_finite_difference_dictionary",
    "make_owt",
    "make_uwt",
    "InnerConfig",
    "InnerResult",
    "cg_solve",
    "soft_threshold",
    "solve_weighted_analysis_l1",
    "LinOp",
    "MatrixOp",
    "SamplingPattern",
    "dft",
    "make_finite_difference",
    "make_partial_fourier_video",
    "make_spread_spectrum",
    "split_real",
    "EpsSearch",
    "OuterConfig",
    "RecoveryResult",
    "estimate_lambda_eps",
    "run_co_irw_l1",
    "run_co_irw_l1_eps",
    "run_co_l1",
    "run_irw_l1",
    "run_recovery",
    "__version__",
]
