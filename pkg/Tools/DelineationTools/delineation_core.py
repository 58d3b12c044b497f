"""Commuting-based aggregation of municipalities into metropolitan areas.

A municipality joins a metro area when the share of its workers commuting to
the metro's current members reaches the threshold. Absorbing a municipality
brings its whole cluster along, shares are recomputed after every absorption
and sweeps repeat until nothing moves. Because a merge that is allowed once
stays allowed as clusters grow, the final partition does not depend on the
processing order; the order below (largest core first, candidates by
descending share, ties by code) only fixes the sequence of log messages and
intermediate states.
"""
from __future__ import annotations

import logging

import numpy as np

from Tools.errors import NonConvergence
from Tools.IngestTools.models import CommutingTable
from .models import METRO, STANDALONE, MetroAssignment

log = logging.getLogger(__name__)

DEFAULT_THRESHOLD = 0.10
DEFAULT_POP_FLOOR = 50_000


def _core(members: np.ndarray, populations: np.ndarray, codes: tuple[str, ...]) -> int:
    return min(members, key=lambda index: (-populations[index], codes[index]))


def _sweep(share: np.ndarray, label: np.ndarray, populations: np.ndarray, codes: tuple[str, ...], threshold: float) -> int:
    cores = {root: _core(np.flatnonzero(label == root), populations, codes) for root in np.unique(label)}
    order = sorted(cores, key=lambda root: (-populations[cores[root]], codes[cores[root]]))
    merges = 0
    for root in order:
        if not np.any(label == root):
            continue
        while True:
            members = label == root
            inflow = share[:, members].sum(axis=1)
            inflow[members] = -np.inf
            candidates = np.flatnonzero(inflow >= threshold)
            if candidates.size == 0:
                break
            best = min(candidates, key=lambda index: (-inflow[index], codes[index]))
            absorbed = label[best]
            log.debug("municipality %s joins cluster of %s (share %.4f)", codes[best], codes[root], inflow[best])
            label[label == absorbed] = root
            merges += 1
    return merges


def delineate_metros(commuting: CommutingTable, threshold: float = DEFAULT_THRESHOLD,
                     pop_floor: int = DEFAULT_POP_FLOOR, *, max_passes: int | None = None,
                     initial: MetroAssignment | None = None) -> MetroAssignment:
    """Group municipalities into metros, then promote large singletons to standalone cities.

    ``initial`` starts the sweeps from an existing assignment's metros; an
    assignment that is already a fixed point comes back unchanged.
    """
    if not 0.0 < threshold < 1.0: raise ValueError(f"threshold must lie in (0, 1), got {threshold}")
    if pop_floor <= 0: raise ValueError(f"pop_floor must be positive, got {pop_floor}")
    codes = commuting.municipalities
    position = {code: index for index, code in enumerate(codes)}
    population_map = commuting.populations()
    populations = np.array([population_map[code] for code in codes], dtype=float)
    share = commuting.share_matrix(codes)
    label = np.arange(len(codes))
    if initial is not None:
        for city in initial.metros:
            indices = [position[code] for code in initial.members[city] if code in position]
            if indices:
                label[indices] = indices[0]

    cap = max_passes if max_passes is not None else len(codes) + 1
    passes = 0
    while True:
        passes += 1
        if passes > cap: raise NonConvergence(f"delineation did not settle within {cap} passes")
        if _sweep(share, label, populations, codes, threshold) == 0:
            break

    mapping: dict[str, str | None] = {code: None for code in codes}
    members: dict[str, tuple[str, ...]] = {}
    kinds: dict[str, str] = {}
    for root in np.unique(label):
        indices = np.flatnonzero(label == root)
        if indices.size >= 2:
            kind = METRO
        elif populations[indices[0]] >= pop_floor:
            kind = STANDALONE
        else:
            continue
        city = codes[_core(indices, populations, codes)]
        members[city] = tuple(sorted(codes[index] for index in indices))
        kinds[city] = kind
        for index in indices:
            mapping[codes[index]] = city

    assignment = MetroAssignment(mapping, members, kinds, threshold, pop_floor,
                                 diagnostics={"passes": passes, "municipalities": len(codes)})
    log.info("delineation: %d metros with %d municipalities, %d standalone cities, %d unassigned",
             len(assignment.metros), len(assignment.merged_municipalities), len(assignment.standalone),
             len(assignment.unassigned))
    return assignment


def fixed_point_violations(commuting: CommutingTable, assignment: MetroAssignment) -> list[tuple[str, str, float]]:
    """(municipality, metro, share) triples that would still trigger a merge."""
    codes = commuting.municipalities
    share = commuting.share_matrix(codes)
    position = {code: index for index, code in enumerate(codes)}
    violations = []
    for city in assignment.metros:
        members = np.zeros(len(codes), dtype=bool)
        members[[position[code] for code in assignment.members[city]]] = True
        inflow = share[:, members].sum(axis=1)
        for index in np.flatnonzero(~members & (inflow >= assignment.threshold)):
            violations.append((codes[index], city, float(inflow[index])))
    return violations
