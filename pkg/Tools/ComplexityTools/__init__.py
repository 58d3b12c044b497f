"""Revealed comparative advantage and industry complexity."""

from .complexity_core import (
    METHODS,
    aggregate_complexity,
    binarize,
    city_complexity_summary,
    compute_complexity,
    compute_rca,
)
from .models import ComplexityScores, PresenceMatrix, RcaMatrix

__all__ = [
    "METHODS",
    "ComplexityScores",
    "PresenceMatrix",
    "RcaMatrix",
    "aggregate_complexity",
    "binarize",
    "city_complexity_summary",
    "compute_complexity",
    "compute_rca",
]
