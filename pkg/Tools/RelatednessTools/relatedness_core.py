"""Skill relatedness from labor flows, density of missing industries and complexity potential."""
from __future__ import annotations

import logging

import numpy as np
import pandas as pd

from Tools.ComplexityTools.models import ComplexityScores, PresenceMatrix
from Tools.errors import EmptyFlows, InvalidValue
from Tools.IngestTools.models import FlowMatrix
from .models import ComplexityPotential, DensityTable, RelatednessMatrix, SkillProximity

log = logging.getLogger(__name__)


def skill_proximity(flows: FlowMatrix, *, include_diagonal: bool = False) -> SkillProximity:
    """SP[i, j] = (phi_ij / sum_j phi_ij) / (sum_i phi_ij / sum phi).

    Within-industry switches are left out of every margin unless
    ``include_diagonal`` is set; the diagonal of SP is then undefined.
    """
    phi = flows.counts.copy()
    if not include_diagonal:
        np.fill_diagonal(phi, 0.0)
    total = phi.sum()
    if total <= 0: raise EmptyFlows("flow matrix has no switches between industries")
    out_flows = phi.sum(axis=1); in_flows = phi.sum(axis=0)
    defined = (out_flows[:, None] > 0) & (in_flows[None, :] > 0)
    if not include_diagonal:
        np.fill_diagonal(defined, False)
    expected = np.outer(out_flows, in_flows) / total
    values = np.full(phi.shape, np.nan)
    np.divide(phi, expected, out=values, where=defined)
    isolated = [code for code, out_, in_ in zip(flows.industries, out_flows, in_flows) if out_ == 0 or in_ == 0]
    if isolated:
        log.warning("%d industries have no outgoing or incoming switches: %s", len(isolated), isolated[:10])
    return SkillProximity(values, flows.industries, out_flows, in_flows,
                          {"isolated_industries": isolated, "total_switches": float(total)})


def build_relatedness(sp: SkillProximity, year: int | None = None) -> RelatednessMatrix:
    """E = (S - 1) / (S + 1) with S = (SP + SP^T) / 2; undefined cells become 0."""
    symmetric = (sp.values + sp.values.T) / 2.0
    values = (symmetric - 1.0) / (symmetric + 1.0)
    undefined = ~np.isfinite(values)
    np.fill_diagonal(undefined, False)
    values[~np.isfinite(values)] = 0.0
    np.fill_diagonal(values, 0.0)
    count = int(undefined.sum())
    if count:
        log.info("relatedness: %d undefined off-diagonal cells set to 0", count)
    return RelatednessMatrix(values, sp.industries, year, {"undefined_cells": count,
                                                           "isolated_industries": list(sp.diagnostics.get("isolated_industries", []))})


def density(e: RelatednessMatrix, m: PresenceMatrix, clip_negative: bool = True) -> DensityTable:
    """dens[c, i] = sum over present j of E[i, j] divided by sum over all j, for missing i.

    An industry with RCA exactly at the cutoff counts as missing. Negative
    relatedness is clipped to 0 unless ``clip_negative`` is off.
    """
    weights = e.aligned(m.industries).values
    if clip_negative:
        weights = np.clip(weights, 0.0, None)
    presence = m.values.astype(float)
    numerator = presence @ weights.T
    denominator = weights.sum(axis=1)
    values = np.zeros_like(numerator)
    np.divide(numerator, denominator[None, :], out=values, where=denominator[None, :] != 0)
    missing = m.values == 0
    values[~missing] = np.nan
    no_mass = [code for code, total in zip(m.industries, denominator) if total == 0]
    if no_mass:
        log.warning("%d industries have no relatedness mass; their density is 0", len(no_mass))
    return DensityTable(values, missing, m.cities, m.industries, m.year, clip_negative,
                        {"zero_denominator_industries": no_mass})


def complexity_potential(d: DensityTable, ci: ComplexityScores, *, contributions: bool = False) -> ComplexityPotential:
    """CP_c = mean over the city's missing industries of density times CI."""
    scores = ci.lookup(d.industries)
    unscored = [code for code, value in zip(d.industries, scores) if not np.isfinite(value)]
    if unscored: raise InvalidValue(f"{len(unscored)} industries have density but no complexity score, e.g. {unscored[:5]}")
    product = np.where(d.missing, d.values, 0.0) * scores[None, :]
    counts = d.missing.sum(axis=1)
    empty = counts == 0
    values = np.zeros(len(d.cities))
    values[~empty] = product[~empty].sum(axis=1) / counts[~empty]
    if empty.any():
        log.warning("%d cities have every industry present; their potential is 0", int(empty.sum()))
    breakdown = None
    if contributions:
        rows, columns = np.nonzero(d.missing)
        breakdown = pd.DataFrame({
            "city": [d.cities[index] for index in rows],
            "year": d.year,
            "industry": [d.industries[index] for index in columns],
            "dens": d.values[rows, columns],
            "ci": scores[columns],
            "contribution": product[rows, columns] / counts[rows],
        })
    return ComplexityPotential(d.cities, values, empty, d.year, breakdown,
                               {"cities_without_missing": [city for city, flag in zip(d.cities, empty) if flag]})
