"""Skill relatedness, density and complexity potential."""

from .models import ComplexityPotential, DensityTable, RelatednessMatrix, SkillProximity
from .relatedness_core import build_relatedness, complexity_potential, density, skill_proximity

__all__ = [
    "ComplexityPotential",
    "DensityTable",
    "RelatednessMatrix",
    "SkillProximity",
    "build_relatedness",
    "complexity_potential",
    "density",
    "skill_proximity",
]
