"""
Copula-coupled recursive bivariate probit models.

A binary treatment equation and a binary outcome equation (with the
treatment as a regressor) are estimated jointly, their latent errors tied
together by one of 19 bivariate copula specifications. The package covers
fitting, copula selection by out-of-sample PR-AUC, average treatment
effects, copula-sensitivity sweeps, a synthetic data generator and a CLI.
"""

from copulaprobit.copulas import CopulaSpec, Family, all_specs
from copulaprobit.effects import AteResult, ate, copula_sensitivity
from copulaprobit.estimator import FitOptions, FitResult, fit, fit_baseline, instrument_strength_test
from copulaprobit.evaluation import PrCurve, make_split, pr_curve, select_copula
from copulaprobit.joint import ModelSpec
from copulaprobit.splines import SmoothTerm

__version__ = "0.1.0"

__all__ = [
    "AteResult", "CopulaSpec", "Family", "FitOptions", "FitResult", "ModelSpec", "PrCurve", "SmoothTerm",
    "all_specs", "ate", "copula_sensitivity", "fit", "fit_baseline", "instrument_strength_test",
    "make_split", "pr_curve", "select_copula",
]
