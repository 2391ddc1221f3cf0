"""Gaussian quasi-likelihood estimation for ergodic Levy-driven SDEs."""

from __future__ import annotations

__version__ = "0.1.0"

from .avar import SigmaHat, confidence_intervals, estimate_sigma, studentize
from .estimator import EstimateReport, FitOptions, fit, profile_scan, scan_path
from .gql import contrast, quasi_loglik, quasi_score, random_field_Z, residual_chi, score_jacobian
from .levy import LevyDriver, NuMoments, nu_moments, parse_driver, sample_increment
from .model import ModelSpec, ParamBox, ThetaPoint, eval_V, eval_V_inverse_and_logdet, get_model, register_model
from .simulate import Observations, euler_path, simulate_observations, subsample

__all__ = [
    "EstimateReport", "FitOptions", "LevyDriver", "ModelSpec", "NuMoments", "Observations", "ParamBox",
    "SigmaHat", "ThetaPoint", "confidence_intervals", "contrast", "estimate_sigma", "euler_path",
    "eval_V", "eval_V_inverse_and_logdet", "fit", "get_model", "nu_moments", "parse_driver",
    "profile_scan", "quasi_loglik", "quasi_score", "random_field_Z", "register_model",
    "residual_chi", "sample_increment", "scan_path", "score_jacobian", "simulate_observations",
    "studentize", "subsample",
]
