"""Effective-weight arithmetic for a pool of equal parallel synapses.

One relay cell splits a total transmission weight evenly over n granule
synapses; enabling or disabling single synapses steps the effective weight in
quanta of total/n, so any target in range is reachable to within half a
quantum by toggling the minimum number of synapses.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class GranulePurkinje:
    """n_granule equal synapses sharing a fixed total weight."""

    n_granule: int
    total: float = 1.0
    enabled: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.n_granule < 1:
            raise ValueError("need at least one granule synapse")
        if self.enabled is None:
            self.enabled = np.ones(self.n_granule, dtype=bool)
        else:
            self.enabled = np.asarray(self.enabled, dtype=bool)
            if self.enabled.shape != (self.n_granule,):
                raise ValueError("enabled mask length must equal n_granule")

    @property
    def per_synapse(self) -> float:
        return self.total / self.n_granule

    @property
    def n_enabled(self) -> int:
        return int(self.enabled.sum())


@dataclass
class AdjustmentPlan:
    """Synapses to flip and the quantization error left afterwards."""

    enable: np.ndarray   # indices switched on  (potentiation)
    disable: np.ndarray  # indices switched off (depression)
    achieved: float
    residual: float

    @property
    def size(self) -> int:
        return len(self.enable) + len(self.disable)


def effective_weight(gp: GranulePurkinje) -> float:
    """Total transmission: enabled count times the per-synapse weight.

    Computed as (count * total) / n so the result is the correctly rounded
    quotient (7 of 10 gives exactly 0.7, not 7 * float(0.1)).
    """
    return gp.n_enabled * gp.total / gp.n_granule


def plan_adjustment(gp: GranulePurkinje, target: float) -> AdjustmentPlan:
    """Minimal set of toggles bringing the effective weight nearest target.

    target must lie in [0, total]. The reachable level is
    round(target * n / total) enabled synapses (ties round half to even), so
    the residual never exceeds total / (2 n). Lowest-index synapses flip
    first for determinism.
    """
    if not 0.0 <= target <= gp.total:
        raise ValueError(f"target {target} outside [0, {gp.total}]")
    level = int(np.rint(target * gp.n_granule / gp.total))
    delta = level - gp.n_enabled
    if delta > 0:
        flip_on = np.flatnonzero(~gp.enabled)[:delta]
        flip_off = np.array([], dtype=np.int64)
    else:
        flip_on = np.array([], dtype=np.int64)
        flip_off = np.flatnonzero(gp.enabled)[: -delta] if delta else np.array([], dtype=np.int64)
    achieved = level * gp.total / gp.n_granule
    return AdjustmentPlan(flip_on, flip_off, achieved, abs(achieved - target))


def apply_plan(gp: GranulePurkinje, plan: AdjustmentPlan) -> GranulePurkinje:
    gp.enabled[plan.enable] = True
    gp.enabled[plan.disable] = False
    return gp
