"""Forward time marching of the piecewise-constant-in-time primal problem.

Each slab solves one implicit step

    (M + tau A) u = tau (f_bar + h_bar) + M u_prev

where M and A carry the density and permeability coefficients, f_bar and
h_bar are the volume and Neumann loads averaged over the slab interval (by
a 2-point Gauss rule in time, or sampled at the right endpoint), u_prev is
the previous slab's solution interpolated onto the current primal space
(the initial value on the first slab), and Dirichlet values at the right
endpoint are eliminated strongly.  The scheme is algebraically a backward
Euler step with averaged loads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import fem, sparse_la
from .fem import FeFunction
from .mesh import DIRICHLET
from .sparse_la import SolverControl

GOAL_SPACE_QUAD_EXTRA = 2  # (degree + 2)^2 points for goal / error integrals
GOAL_TIME_QUAD = 3
LOAD_TIME_QUAD = 2


@dataclass
class PrimalStepReport:
    """Per-slab solve diagnostics and the slab's share of the goal norm."""

    slab_index: int
    cg_iterations: int
    residual: float
    goal_norm_sq_contrib: float = 0.0


def _averaged_load(slab, data, time_rule):
    """Interval average of the volume + Neumann loads on the primal space."""
    space = slab.primal
    if time_rule == "right":
        t = slab.interval.t_n
        b = fem.assemble_load_volume(space, lambda x: data.rhs_f(x, t))
        b += fem.assemble_load_neumann(space, lambda x: data.neumann_h(x, t))
        return b
    if time_rule != "gauss":
        raise ValueError(f"unknown load time rule {time_rule!r}")
    ts, ws = slab.interval.gauss_points(LOAD_TIME_QUAD)
    b = np.zeros(space.n_dofs)
    for t, w in zip(ts, ws):
        b += (w / slab.tau) * fem.assemble_load_volume(space, lambda x: data.rhs_f(x, t))
        b += (w / slab.tau) * fem.assemble_load_neumann(
            space, lambda x: data.neumann_h(x, t)
        )
    return b


def assemble_primal_system(slab, coeff, data, u_prev, time_rule="gauss"):
    """System matrix, right-hand side and Dirichlet values for one slab.

    ``u_prev`` is a coefficient vector on this slab's primal space.
    Hanging constraints are condensed and the slave rows pinned; Dirichlet
    elimination is symmetric.  Returns ``(A, b, bc)`` ready for CG.
    """
    space = slab.primal
    tau = slab.tau
    M = fem.assemble_mass(space, coeff.rho)
    A = fem.assemble_stiffness(space, coeff.epsilon)
    system = space.constraints.pin(M + tau * A)
    rhs = tau * _averaged_load(slab, data, time_rule) + M @ u_prev
    t_bc = slab.interval.t_n
    dofs = space.boundary_dofs(DIRICHLET)
    values = np.atleast_1d(data.dirichlet_g(space.support_points[dofs], t_bc))
    bc = dict(zip(dofs.tolist(), values.tolist()))
    system, rhs = sparse_la.apply_dirichlet(system, rhs, bc)
    return system, rhs, bc


def slab_goal_norm_sq(slab, u_fn, solution, cv):
    """Contribution int_{I_n} int_{O_c(t)} (u - u_h)^2 of one slab.

    Spatial quadrature uses (degree + 2)^2 Gauss points, time a 3-point
    Gauss rule; points outside the moving control volume are masked out.
    """
    space = u_fn.space
    quad = fem.gauss_quadrature(space.degree + GOAL_SPACE_QUAD_EXTRA)
    N = fem.tensor_shape(space.degree, quad.points)
    _, phys, detJ, _ = fem._cell_geometry(space, quad.points)
    uh = np.einsum("qi,ci->cq", N, u_fn.coefficients[space.cell_dofs])
    ts, ws = slab.interval.gauss_points(GOAL_TIME_QUAD)
    total = 0.0
    for t, wt in zip(ts, ws):
        mask = cv.contains(phys, t)
        if not mask.any():
            continue
        diff = solution.u(phys, t) - uh
        total += wt * float(
            np.sum(quad.weights[None, :] * detJ * np.where(mask, diff * diff, 0.0))
        )
    return total


def l2_q_error(slabs, solution):
    """Space-time L2 error of the stored primal solution over all slabs."""
    total = 0.0
    for slab in slabs:
        u = slab.fetch_storage("u")
        if u is None:
            raise ValueError("primal solution missing; run march_forward first")
        space = slab.primal
        quad = fem.gauss_quadrature(space.degree + GOAL_SPACE_QUAD_EXTRA)
        N = fem.tensor_shape(space.degree, quad.points)
        _, phys, detJ, _ = fem._cell_geometry(space, quad.points)
        uh = np.einsum("qi,ci->cq", N, u[space.cell_dofs])
        ts, ws = slab.interval.gauss_points(GOAL_TIME_QUAD)
        for t, wt in zip(ts, ws):
            diff = solution.u(phys, t) - uh
            total += wt * float(np.sum(quad.weights[None, :] * detJ * diff * diff))
    return np.sqrt(total)


def march_forward(slabs, coeff, data, ctrl=SolverControl(max_iterations=5000),
                  cv=None, time_rule="gauss"):
    """Solve the primal problem slab by slab, storing u and the incoming trace.

    The first slab starts from the nodal interpolation of the initial
    value; later slabs interpolate their predecessor's solution.  When a
    control volume is given, each report carries the slab's goal-norm
    contribution.  Solver failures abort with the slab index attached.
    """
    reports = []
    for n, slab in slabs.iterate_forward():
        space = slab.primal
        if n == 0:
            u_prev = fem.interpolate(space, data.initial).coefficients
        else:
            prev = slabs[n - 1]
            prev_u = prev.fetch_storage("u")
            u_prev = fem.transfer(
                FeFunction(prev.primal, prev_u), space
            ).coefficients
        slab.attach_storage("u_prev", u_prev)
        system, rhs, bc = assemble_primal_system(slab, coeff, data, u_prev, time_rule)
        x0 = np.zeros(space.n_dofs)
        for dof, val in bc.items():
            x0[dof] = val
        try:
            x, iters = sparse_la.cg_solve(system, rhs, ctrl, x0=x0)
        except sparse_la.SolverError as err:
            raise sparse_la.SolverError(
                f"primal solve failed on slab {n}: {err}", err.iterations, err.residual
            ) from err
        x = space.constraints.distribute(x)
        residual = float(np.linalg.norm(rhs - system @ x))
        slab.attach_storage("u", x)
        contrib = 0.0
        if cv is not None:
            contrib = slab_goal_norm_sq(slab, FeFunction(space, x), data.solution, cv)
            slab.attach_storage("goal_contrib", np.array([contrib]))
        reports.append(PrimalStepReport(n, iters, residual, contrib))
    return reports


def goal_norm(reports):
    """Accumulated control-volume error norm from the per-slab contributions."""
    return float(np.sqrt(sum(r.goal_norm_sq_contrib for r in reports)))
