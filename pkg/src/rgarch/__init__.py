"""Ranking-GARCH models for time series of rankings."""

__version__ = "0.1.0"

from .perms import DistanceKind, PartialRanking, Permutation, distance
from .mallows import MallowsSpec, log_psi, moments, oracle_enumerate, sample
from .link import LinkClampWarning, theta_from_mu
from .process import (
    Coefficients,
    ModelOrder,
    RankingSeries,
    conditional_mean_path,
    empirical_acf_pacf,
    simulate,
    unconditional_mean,
)
from .inference import FitResult, fit_mle, information_matrix, log_likelihood, order_scan, score
from .mcem import MCEMConfig, mcem_fit
from .predict import RankEvent, exact_event_prob, forecast_mean, is_event_prob
from .estimator import RankingGARCH

__all__ = [
    "__version__",
    "DistanceKind", "PartialRanking", "Permutation", "distance",
    "MallowsSpec", "log_psi", "moments", "oracle_enumerate", "sample",
    "LinkClampWarning", "theta_from_mu",
    "Coefficients", "ModelOrder", "RankingSeries", "conditional_mean_path",
    "empirical_acf_pacf", "simulate", "unconditional_mean",
    "FitResult", "fit_mle", "information_matrix", "log_likelihood", "order_scan", "score",
    "MCEMConfig", "mcem_fit",
    "RankEvent", "exact_event_prob", "forecast_mean", "is_event_prob",
    "RankingGARCH",
]
