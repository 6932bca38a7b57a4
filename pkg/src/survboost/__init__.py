"""Boosting for right-censored regression under Gehan, Cox and IPW losses."""

from .engine import BoostConfig, CvCurve, Ensemble, boost, cross_validate_mstop, fit_cv, predict
from .learners import BaseLearnerSpec, LearnerKind
from .losses import LossKind
from .survdata import Standardization, SurvivalDataset, load_delimited, standardize

__version__ = "0.1.0"

__all__ = [
    "BaseLearnerSpec",
    "BoostConfig",
    "CvCurve",
    "Ensemble",
    "LearnerKind",
    "LossKind",
    "Standardization",
    "SurvivalDataset",
    "boost",
    "cross_validate_mstop",
    "fit_cv",
    "load_delimited",
    "predict",
    "standardize",
]
