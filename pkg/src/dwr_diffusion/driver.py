"""The outer adaptation loop: solve, estimate, mark, refine, repeat.

Each loop marches the primal problem forward and accumulates the
control-volume error norm; if the goal tolerance is met the loop stops
without a dual solve or adaptation.  Otherwise the dual problem is solved
backward, cell indicators are computed and accumulated, slabs and cells
are marked by the two-fraction strategy and the space-time meshes are
refined.  The relative tolerance baseline is the first loop's error norm,
captured once and frozen.  When the loop budget is exhausted the last
record is flagged as not converged (the dual and the estimate are still
computed on that final loop for reporting).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

from . import estimator as est_mod
from . import marking
from .dual import GoalContext, march_backward
from .mesh import make_lshape
from .primal import goal_norm, march_forward
from .slabs import init_slabs

log = logging.getLogger(__name__)


@dataclass
class LoopRecord:
    """One convergence-table row: loop index, sizes, error, estimate, effectivity."""

    loop: int
    n_slabs: int
    max_cells: int
    goal_error: float
    eta: float = math.nan
    i_eff: float = math.nan
    goal_met: bool = False


@dataclass
class DwrResult:
    records: list
    converged: bool
    tol_absolute: float
    slabs: object


def dwr_loop(config, on_loop=None, mesh_factory=make_lshape):
    """Run the adaptation loop for a full run configuration.

    ``on_loop(loop, slabs, estimate, record, final)`` is invoked once per
    loop, before any adaptation, so callbacks observe the meshes and
    solutions the record describes.  Returns a :class:`DwrResult`.
    """
    disc = config.discretization
    slabs = init_slabs(
        mesh_factory(),
        disc.t0,
        disc.T,
        disc.n_slabs,
        disc.primal_degree,
        disc.dual_degree,
    )
    adapt = config.adapt
    records = []
    tol_abs = adapt.tol if adapt.tol_mode == "absolute" else math.nan
    converged = False

    for loop in range(1, adapt.max_loops + 1):
        data = _data(config)
        reports = march_forward(
            slabs,
            config.coefficients,
            data,
            ctrl=config.solver,
            cv=config.control_volume,
            time_rule=disc.load_quadrature,
        )
        err = goal_norm(reports)
        if loop == 1 and adapt.tol_mode == "relative":
            tol_abs = adapt.tol * err
        record = LoopRecord(
            loop=loop,
            n_slabs=len(slabs),
            max_cells=max(s.mesh.n_active_cells for s in slabs),
            goal_error=err,
            goal_met=err < tol_abs,
        )
        records.append(record)
        log.info(
            "loop %d: %d slabs, %d cells max, goal error %.6e (target %.6e)",
            loop, record.n_slabs, record.max_cells, err, tol_abs,
        )

        if record.goal_met:
            converged = True
            if on_loop:
                on_loop(loop, slabs, None, record, True)
            break

        ctx = GoalContext(norm=err, cv=config.control_volume, solution=config.solution)
        march_backward(slabs, config.coefficients, ctx, ctrl=config.solver)
        per_slab = []
        for _, slab in slabs.iterate_forward():
            per_slab.append(
                est_mod.compute_cell_indicators(
                    slab,
                    slab.fetch_storage("u"),
                    slab.fetch_storage("z_tm"),
                    slab.fetch_storage("z_tn"),
                    slab.fetch_storage("u_prev"),
                    config.coefficients,
                    data,
                    time_restriction=config.estimator.time_restriction,
                )
            )
        estimate = est_mod.accumulate(per_slab)
        estimate.i_eff = est_mod.effectivity(estimate, err)
        record.eta = estimate.eta_total
        record.i_eff = estimate.i_eff

        final = loop == adapt.max_loops
        if on_loop:
            on_loop(loop, slabs, estimate, record, final)
        if final:
            break

        skip = adapt.skip_zero_indicators
        time_marks = marking.mark_time_slabs(estimate, adapt.theta_tau, skip_zero=skip)
        space_marks = {
            k: marking.mark_space_cells(
                slab,
                estimate.cell_indicators[k],
                k in time_marks,
                adapt.theta_h1,
                adapt.theta_h2,
                skip_zero=skip,
            )
            for k, slab in slabs.iterate_forward()
        }
        marking.execute_adaptation(slabs, time_marks, space_marks)

    return DwrResult(records, converged, tol_abs, slabs)


def _data(config):
    from .problem import ProblemData

    return ProblemData(
        solution=config.solution,
        coefficients=config.coefficients,
        t0=config.discretization.t0,
    )
