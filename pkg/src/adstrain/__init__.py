"""Desk-scale models of a recommendation-training system: embedding partitioning,
execution cost, parameter-server RPCs, shared input generation, pipeline
fault tolerance and cost accounting."""

__version__ = "0.1.0"

from .errors import (
    AdsTrainError,
    ConstraintViolation,
    Divergence,
    Infeasible,
    InvalidArgument,
    InvalidGraph,
    MissingInput,
    NotFound,
    ScenarioError,
    SearchSpaceTooLarge,
    Unsupported,
)
from .kernels import BACKEND

__all__ = [
    "AdsTrainError", "BACKEND", "ConstraintViolation", "Divergence", "Infeasible", "InvalidArgument",
    "InvalidGraph", "MissingInput", "NotFound", "ScenarioError", "SearchSpaceTooLarge", "Unsupported",
]
