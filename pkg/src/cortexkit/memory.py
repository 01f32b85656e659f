"""One-shot binary associations between coding units and a target neuron.

Encoding a site once fixes a 0/1 synapse vector: units whose activation at
the site clears the threshold are wired to the target. Recall at any other
location is the fraction of those wired units active there, so it peaks at
the encoded site and decays as the active ensembles stop overlapping.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .lwbp import unit_grid

LTP_THRESHOLD = 0.95


@dataclass
class LtpSynapses:
    """Binary weights from every coding unit to one target neuron."""

    weights: np.ndarray  # float 0/1 per unit
    site: tuple
    threshold: float = LTP_THRESHOLD

    @property
    def size(self) -> int:
        return int(self.weights.sum())


def engram_set(model, site, threshold: float = LTP_THRESHOLD) -> np.ndarray:
    """Indices of units active above threshold at one 2-D site."""
    h = model.transform(np.asarray(site, dtype=np.float64).reshape(1, 2))[0]
    return np.flatnonzero(h > threshold)


def form_ltp(model, site, threshold: float = LTP_THRESHOLD) -> LtpSynapses:
    """Wire the units encoding this site to the target, once."""
    h = model.transform(np.asarray(site, dtype=np.float64).reshape(1, 2))[0]
    weights = (h > threshold).astype(np.float64)
    if weights.sum() == 0:
        warnings.warn(
            f"no unit exceeds {threshold} at {tuple(site)}; "
            "the model is probably untrained", stacklevel=2)
    return LtpSynapses(weights, tuple(float(c) for c in site), threshold)


def recall_degree(model, syn: LtpSynapses, location) -> float:
    """Mean activation of the wired units at a location, in [0, 1]."""
    total = syn.weights.sum()
    if total == 0:
        raise ValueError("synapse vector is empty; nothing was encoded")
    h = model.transform(np.asarray(location, dtype=np.float64).reshape(1, 2))[0]
    return float(h @ syn.weights / total)


def memory_heatmap(model, syn: LtpSynapses, grid_n: int = 101) -> np.ndarray:
    """Recall degree over the unit square (row = y, column = x)."""
    total = syn.weights.sum()
    if total == 0:
        raise ValueError("synapse vector is empty; nothing was encoded")
    h = model.transform(unit_grid(grid_n))
    return (h @ syn.weights / total).reshape(grid_n, grid_n)


def shared_engram(model, site1, site2, threshold: float = LTP_THRESHOLD):
    """Split the two sites' ensembles into (only site1, only site2, both)."""
    set1 = engram_set(model, site1, threshold)
    set2 = engram_set(model, site2, threshold)
    both = np.intersect1d(set1, set2)
    only1 = np.setdiff1d(set1, both)
    only2 = np.setdiff1d(set2, both)
    return only1, only2, both
