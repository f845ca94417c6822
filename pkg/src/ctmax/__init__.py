"""Exact covering-array construction with SAT and MaxSAT."""
from .model import SutModel, load_model, model_from_profile, parse_model
from .sat import BACKEND
from .tuples import build_catalog, compute_bounds, lower_bound
from .verify import verify_suite

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "SutModel",
    "build_catalog",
    "compute_bounds",
    "load_model",
    "lower_bound",
    "model_from_profile",
    "parse_model",
    "verify_suite",
]
