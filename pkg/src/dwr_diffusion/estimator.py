"""Localized dual-weighted residual indicators and their accumulation.

The per-cell indicator weights the classical strong residual of the
one-step primal scheme with the dual-solution defect w = z - i_h z, where
i_h restricts the dual solution to the primal space nodally in space and
to a slabwise constant in time (mean of the endpoint values by default):

    eta_K = int_In int_K (f + eps lap u_h) w
          - 1/2 int_In int_{dK \\ boundary} [eps dn u_h] w
          + int_In int_{dK on Neumann} (h - eps dn u_h) w
          - int_K rho (u_h - u_prev) w(t_m+)

Interior face jumps are split evenly between the two adjacent cells; on
1-irregular faces the integration runs over the fine-side face pieces.
Temporal integrals use a 2-point Gauss rule, cell integrals
(dual degree + 1)^2 points, face integrals dual degree + 1 points.

Signed indicators are stored; absolute values enter only the per-slab and
global sums.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import fem
from .fem import FeFunction
from .mesh import DIRICHLET, NEUMANN, FACE_VERTS, OPPOSITE_FACE

_TIME_QUAD = 2

# outward normal = rotate the canonical face tangent; sign pattern per face
_NORMAL_SIGN = (1.0, -1.0, -1.0, 1.0)  # ccw for left/top, cw for right/bottom


def _face_ref_points(face, s):
    """Reference coordinates of face parameter values, shape (len(s), 2)."""
    zeros = np.zeros_like(s)
    ones = np.ones_like(s)
    if face == 0:
        return np.column_stack([zeros, s])
    if face == 1:
        return np.column_stack([ones, s])
    if face == 2:
        return np.column_stack([s, zeros])
    return np.column_stack([s, ones])


class _CellField:
    """Fast per-cell value/gradient/laplacian evaluation of a coefficient vector."""

    def __init__(self, space, coeffs):
        self.space = space
        self.coeffs = np.asarray(coeffs, dtype=float)

    def cell_coeffs(self, cid):
        return self.coeffs[self.space.dofs_on_cell(cid)]

    def value(self, cid, ref_pts):
        N = fem.tensor_shape(self.space.degree, ref_pts)
        return N @ self.cell_coeffs(cid)

    def grad(self, cid, ref_pts):
        g_ref = fem.tensor_grad(self.space.degree, ref_pts)
        _, _, _, invJ = fem._cell_geometry(self.space, ref_pts, cids=[cid])
        grad = np.einsum("qed,qie->qid", invJ[0], g_ref)
        return np.einsum("qid,i->qd", grad, self.cell_coeffs(cid))


def _neighbor_ref_points(mesh, cid, face, phys_pts):
    """Reference coordinates of physical points lying on a straight face of ``cid``."""
    A, B = (mesh.points[mesh.cells[cid].vertices[s]] for s in FACE_VERTS[face])
    span = B - A
    s = ((phys_pts - A) @ span) / float(span @ span)
    return _face_ref_points(face, s)


def dual_weights(slab, z_tm, z_tn, time_restriction="mean"):
    """Weight coefficient vectors w(t_m), w(t_n) on the dual space.

    The restriction i_h maps the dual solution to the primal space by
    nodal interpolation in space; in time it collapses the linear run to
    its endpoint mean ("mean") or its right endpoint value ("right").
    """
    if time_restriction == "mean":
        zbar = 0.5 * (np.asarray(z_tm) + np.asarray(z_tn))
    elif time_restriction == "right":
        zbar = np.asarray(z_tn, dtype=float)
    else:
        raise ValueError(f"unknown time restriction {time_restriction!r}")
    restricted = fem.interpolate_same_mesh(FeFunction(slab.dual, zbar), slab.primal)
    back = fem.interpolate_same_mesh(restricted, slab.dual)
    return np.asarray(z_tm) - back.coefficients, np.asarray(z_tn) - back.coefficients


def indicator_terms(slab, u, u_prev, w_tm, w_tn, coeff, data):
    """Signed indicator per active cell for explicitly given weight vectors."""
    mesh = slab.mesh
    primal, dual = slab.primal, slab.dual
    tau = slab.tau
    eps = coeff.epsilon
    u_field = _CellField(primal, u)
    prev_field = _CellField(primal, u_prev)
    w_tm = np.asarray(w_tm, dtype=float)
    w_tn = np.asarray(w_tn, dtype=float)

    ts, wts = slab.interval.gauss_points(_TIME_QUAD)
    theta = np.array([slab.interval.unit_coord(t) for t in ts])
    w_at = [(1 - th) * w_tm + th * w_tn for th in theta]
    w_fields = [_CellField(dual, w) for w in w_at]
    w_tm_field = _CellField(dual, w_tm)

    eta = {}

    # volume terms, batched over all cells
    quad = fem.gauss_quadrature(dual.degree + 1)
    N_dual = fem.tensor_shape(dual.degree, quad.points)
    N_primal = fem.tensor_shape(primal.degree, quad.points)
    H_ref = fem.tensor_hessian(primal.degree, quad.points)
    _, phys, detJ, invJ = fem._cell_geometry(dual, quad.points)
    # physical Laplacian with a per-point constant-metric transform
    # (exact on parallelogram cells, which is all the constructors build)
    H_phys = np.einsum("cqea,qief,cqfb->cqiab", invJ, H_ref, invJ)
    lap_basis = H_phys[..., 0, 0] + H_phys[..., 1, 1]
    u_cells = u_field.coeffs[primal.cell_dofs]
    lap_u = np.einsum("cqi,ci->cq", lap_basis, u_cells)
    du_jump = np.einsum("qi,ci->cq", N_primal, u_cells - prev_field.coeffs[primal.cell_dofs])
    w_tm_cells = np.einsum("qi,ci->cq", N_dual, w_tm_field.coeffs[dual.cell_dofs])

    cell_term = np.zeros(len(dual.active_ids))
    for (t, wt, w_f) in zip(ts, wts, w_fields):
        w_vals = np.einsum("qi,ci->cq", N_dual, w_f.coeffs[dual.cell_dofs])
        resid = data.rhs_f(phys, t) + eps * lap_u
        cell_term += wt * np.einsum("cq,cq->c", quad.weights[None, :] * detJ, resid * w_vals)
    cell_term -= coeff.rho * np.einsum(
        "cq,cq->c", quad.weights[None, :] * detJ, du_jump * w_tm_cells
    )

    for k, cid in enumerate(dual.active_ids):
        eta[cid] = float(cell_term[k])

    # face terms
    s1, ws1 = fem.gauss_1d(dual.degree + 1)
    for cid in dual.active_ids:
        cell = mesh.cells[cid]
        for f in range(4):
            a, b = (mesh.points[cell.vertices[s]] for s in FACE_VERTS[f])
            tangent = b - a
            length = float(np.hypot(tangent[0], tangent[1]))
            n_out = _NORMAL_SIGN[f] * np.array([-tangent[1], tangent[0]]) / length

            if mesh.is_boundary_face(cid, f):
                if mesh.boundary_color.get((cid, f)) != NEUMANN:
                    continue
                ref = _face_ref_points(f, s1)
                pts = a[None, :] + s1[:, None] * tangent[None, :]
                flux = eps * (u_field.grad(cid, ref) @ n_out)
                acc = 0.0
                for (t, wt, w_f) in zip(ts, wts, w_fields):
                    w_vals = w_f.value(cid, ref)
                    acc += wt * float(
                        np.sum(ws1 * length * (data.neumann_h(pts, t) - flux) * w_vals)
                    )
                eta[cid] += acc
                continue

            for nb in mesh.active_across(cid, f):
                nb_level = mesh.cells[nb].level
                if nb_level > cell.level:
                    # integrate over the finer neighbor's face piece
                    g = OPPOSITE_FACE[f]
                    na, nbb = (
                        mesh.points[mesh.cells[nb].vertices[s]] for s in FACE_VERTS[g]
                    )
                    seg_a, seg_t = na, nbb - na
                else:
                    seg_a, seg_t = a, tangent
                seg_len = float(np.hypot(seg_t[0], seg_t[1]))
                pts = seg_a[None, :] + s1[:, None] * seg_t[None, :]
                ref_own = _neighbor_ref_points(mesh, cid, f, pts)
                ref_nb = _neighbor_ref_points(mesh, nb, OPPOSITE_FACE[f], pts)
                jump = eps * (
                    (u_field.grad(cid, ref_own) - u_field.grad(nb, ref_nb)) @ n_out
                )
                acc = 0.0
                for (t, wt, w_f) in zip(ts, wts, w_fields):
                    w_vals = w_f.value(cid, ref_own)
                    acc += wt * float(np.sum(ws1 * seg_len * jump * w_vals))
                eta[cid] -= 0.5 * acc
    return eta


def compute_cell_indicators(slab, u, z_tm, z_tn, u_prev, coeff, data,
                            time_restriction="mean"):
    """Signed per-cell indicators from the primal and dual solutions of one slab."""
    w_tm, w_tn = dual_weights(slab, z_tm, z_tn, time_restriction)
    return indicator_terms(slab, u, u_prev, w_tm, w_tn, coeff, data)


@dataclass
class ErrorEstimate:
    """Per-slab indicator maps plus their absolute-value sums.

    Summation order is fixed (ascending slab, ascending cell id) so the
    totals are reproducible exactly.
    """

    cell_indicators: list
    eta_slabs: list
    eta_total: float
    i_eff: float | None = None


def accumulate(per_slab_indicators):
    """Fold per-slab indicator maps into slab sums and the global estimate."""
    eta_slabs = []
    for indicators in per_slab_indicators:
        total = 0.0
        for cid in sorted(indicators):
            total += abs(indicators[cid])
        eta_slabs.append(total)
    eta_total = 0.0
    for v in eta_slabs:
        eta_total += v
    return ErrorEstimate(list(per_slab_indicators), eta_slabs, eta_total)


def effectivity(estimate, goal_error):
    """|eta_total / goal_error|; a vanishing error means the goal is met."""
    if goal_error == 0.0:
        raise ValueError("goal met: goal error is zero, effectivity undefined")
    return abs(estimate.eta_total / goal_error)
