"""Metropolitan-area delineation from commuting shares."""

from .delineation_core import DEFAULT_POP_FLOOR, DEFAULT_THRESHOLD, delineate_metros, fixed_point_violations
from .models import METRO, STANDALONE, UNASSIGNED, MetroAssignment, read_crosswalk, write_crosswalk

__all__ = [
    "DEFAULT_POP_FLOOR",
    "DEFAULT_THRESHOLD",
    "METRO",
    "STANDALONE",
    "UNASSIGNED",
    "MetroAssignment",
    "delineate_metros",
    "fixed_point_violations",
    "read_crosswalk",
    "write_crosswalk",
]
