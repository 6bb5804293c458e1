"""Two-fraction marking and execution of space-time adaptation.

Slabs whose indicator sum lies in the top fraction theta_tau are marked
for time refinement; within each slab the cells in the top fraction
theta_h1 (slab not time-marked) or theta_h2 (time-marked) of largest
absolute indicators are marked for spatial refinement.  Fractions are
count-based (ceil of fraction times population) with stable index
tie-breaking, so identical inputs always produce identical marks.
Spatial refinement runs first, then the time splits, whose children
inherit the refined meshes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class AdaptParams:
    theta_tau: float = 0.5
    theta_h1: float = 0.3
    theta_h2: float = 0.15
    tol_mode: str = "relative"
    tol: float = 1e-2
    max_loops: int = 25
    skip_zero_indicators: bool = True

    def __post_init__(self):
        if not 0.0 <= self.theta_tau <= 1.0:
            raise ValueError("theta_tau must lie in [0, 1]")
        if not 0.0 <= self.theta_h2 <= self.theta_h1 <= 1.0:
            raise ValueError("need 0 <= theta_h2 <= theta_h1 <= 1")
        if self.tol_mode not in ("absolute", "relative"):
            raise ValueError("tol_mode must be 'absolute' or 'relative'")
        if self.tol <= 0.0:
            raise ValueError("tol must be positive")
        if self.max_loops < 1:
            raise ValueError("max_loops must be >= 1")


def _top_fraction(values, fraction, skip_zero):
    order = sorted(range(len(values)), key=lambda k: (-values[k], k))
    count = math.ceil(fraction * len(values))
    marked = set(order[:count])
    if skip_zero:
        marked = {k for k in marked if values[k] > 0.0}
    return marked


def mark_time_slabs(estimate, theta_tau, skip_zero=False):
    """Indices of slabs in the top fraction of per-slab indicator sums."""
    return _top_fraction(list(estimate.eta_slabs), theta_tau, skip_zero)


def mark_space_cells(slab, indicators, time_marked, theta_h1, theta_h2,
                     skip_zero=False):
    """Cell ids of one slab in the top fraction of absolute indicators.

    The smaller fraction applies when the slab is already marked for time
    refinement.
    """
    theta = theta_h2 if time_marked else theta_h1
    cids = sorted(indicators)
    values = [abs(indicators[c]) for c in cids]
    picked = _top_fraction(values, theta, skip_zero)
    return {cids[k] for k in picked}


def execute_adaptation(slabs, time_marks, space_marks):
    """Refine slab meshes, then split the time-marked slabs.

    ``space_marks`` maps slab index to a set of cell ids.  Meshes are
    refined in place (with 1-irregularity closure), spaces rebuilt and
    storage dropped; afterwards each time-marked slab is bisected, both
    children carrying copies of the already-refined mesh.  Advances the
    loop counter.
    """
    for k, slab in slabs.iterate_forward():
        marks = space_marks.get(k, set())
        if marks:
            slab.mesh.refine(marks)
            slab.rebuild_spaces()
        else:
            slab.clear_storage()
    for k in sorted(time_marks, reverse=True):
        slabs.split_slab_in_time(k)
    slabs.loop += 1
    return slabs
