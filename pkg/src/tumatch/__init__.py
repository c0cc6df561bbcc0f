"""Discrete matching models with transferable utility and logit heterogeneity."""

__version__ = "0.1.0"

from .anova import AnovaDecomposition, project, project_many, residual_covariance
from .entropic import EntropicSolution, potentials_to_UV, primal_value, solve_ipfp, welfare, welfare_at
from .estimate import (EstimationResult, all_cross_differences, cross_difference, fisher_information,
                       mm_estimator, nonparametric_surplus, score, sp_estimator)
from .exceptions import ConfigError, ConvergenceError, IdentificationError, TumatchError
from .geometry import (CovariogramTrace, SummaryPath, implicit_mutual_information, legendre_maximize,
                       summary_path, trace_covariogram)
from .homogeneous import HomogeneousSolution, anneal_check, solve_lp
from .model import (BasisSet, CoupleSample, Margins, Matching, Summary, Theta, TypeSpace, build_surplus,
                    covariations, empirical_matching, entropy, mutual_information, sample_couples,
                    summarize, zmoi_normalize)
