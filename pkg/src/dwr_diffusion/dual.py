"""Backward time marching of the piecewise-linear-in-time dual problem.

Each slab solves

    (2 M + tau A) z = tau J + 2 M z_next

from the last slab to the first, where z_next is the successor slab's
value at the shared time (zero on the last slab), J is the normalized goal
density assembled in the dual space, and homogeneous Dirichlet values are
eliminated strongly on the Dirichlet-colored boundary regardless of the
primal boundary data.  Each slab stores the value at its left endpoint and
the transferred right-endpoint trace for later use by the estimator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import fem, sparse_la
from .fem import FeFunction
from .mesh import DIRICHLET
from .primal import GOAL_TIME_QUAD
from .sparse_la import SolverControl


@dataclass
class GoalContext:
    """Everything the dual right-hand side needs.

    ``norm`` is the control-volume error norm of the current primal
    solution; the goal density is (u - u_h) / norm.  A zero norm means the
    goal is met and no dual solve should be attempted.
    """

    norm: float
    cv: object
    solution: object


def assemble_goal_rhs(slab, ctx):
    """Normalized goal load on the dual space for one slab.

    Computes 1/(tau * norm) * int_{I_n} int_{O_c(t)} phi_i (u - u_h),
    with (dual degree + 1)^2 spatial Gauss points and a 3-point rule in
    time, masked by the moving control volume.  Slabs whose interval does
    not meet the control window get an exact zero vector.
    """
    if ctx.norm <= 0.0:
        raise ValueError("goal rhs needs a positive error norm")
    space = slab.dual
    u = slab.fetch_storage("u")
    if u is None:
        raise ValueError("primal solution missing on slab; run march_forward first")
    u_fn = FeFunction(slab.primal, u)
    quad = fem.gauss_quadrature(space.degree + 1)
    N_dual = fem.tensor_shape(space.degree, quad.points)
    N_primal = fem.tensor_shape(slab.primal.degree, quad.points)
    _, phys, detJ, _ = fem._cell_geometry(space, quad.points)
    uh = np.einsum("qi,ci->cq", N_primal, u_fn.coefficients[slab.primal.cell_dofs])
    ts, ws = slab.interval.gauss_points(GOAL_TIME_QUAD)
    b = np.zeros(space.n_dofs)
    for t, wt in zip(ts, ws):
        mask = ctx.cv.contains(phys, t)
        if not mask.any():
            continue
        diff = np.where(mask, ctx.solution.u(phys, t) - uh, 0.0)
        local = np.einsum("cq,qi->ci", wt * quad.weights[None, :] * detJ * diff, N_dual)
        np.add.at(b, space.cell_dofs, local)
    b = space.constraints.condense_vector(b)
    return b / (slab.tau * ctx.norm)


def march_backward(slabs, coeff, ctx, ctrl=SolverControl(max_iterations=5000)):
    """Solve the dual problem from the last slab to the first.

    Stores ``z_tm`` (the unknown at the slab's left endpoint) and ``z_tn``
    (the successor trace used on the right endpoint) on every slab and
    returns the list of left-endpoint vectors in slab order.
    """
    z_tm_vectors = [None] * len(slabs)
    for n, slab in slabs.iterate_backward():
        space = slab.dual
        if n == len(slabs) - 1:
            z_tn = np.zeros(space.n_dofs)
        else:
            succ = slabs[n + 1]
            z_tn = fem.transfer(
                FeFunction(succ.dual, succ.fetch_storage("z_tm")), space
            ).coefficients
        slab.attach_storage("z_tn", z_tn)
        tau = slab.tau
        M = fem.assemble_mass(space, coeff.rho)
        A = fem.assemble_stiffness(space, coeff.epsilon)
        system = space.constraints.pin(2.0 * M + tau * A)
        rhs = tau * assemble_goal_rhs(slab, ctx) + 2.0 * (M @ z_tn)
        bc = {int(dof): 0.0 for dof in space.boundary_dofs(DIRICHLET)}
        system, rhs = sparse_la.apply_dirichlet(system, rhs, bc)
        try:
            x, _ = sparse_la.cg_solve(system, rhs, ctrl)
        except sparse_la.SolverError as err:
            raise sparse_la.SolverError(
                f"dual solve failed on slab {n}: {err}", err.iterations, err.residual
            ) from err
        x = space.constraints.distribute(x)
        slab.attach_storage("z_tm", x)
        z_tm_vectors[n] = x
    return z_tm_vectors
