"""Continuous Lagrange spaces of degree 1 and 2 on quadrilateral meshes.

Degrees of freedom are enumerated by walking the active cells in creation
order and identifying shared entities topologically (vertex, edge and cell
keys), which gives C0 continuity between equal-level neighbors and a
deterministic global numbering.  Hanging entities on 1-irregular faces are
constrained to the coarse-side trace.

Assembled matrices have the hanging constraints condensed into them
(master rows carry the slave contributions, slave rows are empty); pin the
slave diagonals with :meth:`ConstraintSet.pin` before solving and call
:meth:`ConstraintSet.distribute` on the solution.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import sparse_la
from .mesh import FACE_VERTS, OPPOSITE_FACE, OutsideDomainError

_NODES_1D = {1: np.array([0.0, 1.0]), 2: np.array([0.0, 0.5, 1.0])}


def shape_1d(degree, x, deriv=0):
    """Values (or derivatives) of the 1D Lagrange basis at ``x``, shape (len(x), degree+1)."""
    x = np.asarray(x, dtype=float)
    if degree == 1:
        if deriv == 0:
            return np.stack([1.0 - x, x], axis=-1)
        if deriv == 1:
            return np.stack([np.full_like(x, -1.0), np.ones_like(x)], axis=-1)
        return np.zeros(x.shape + (2,))
    if degree == 2:
        if deriv == 0:
            return np.stack(
                [2 * x * x - 3 * x + 1, 4 * x * (1 - x), 2 * x * x - x], axis=-1
            )
        if deriv == 1:
            return np.stack([4 * x - 3, 4 - 8 * x, 4 * x - 1], axis=-1)
        if deriv == 2:
            return np.stack(
                [np.full_like(x, 4.0), np.full_like(x, -8.0), np.full_like(x, 4.0)],
                axis=-1,
            )
        return np.zeros(x.shape + (3,))
    raise ValueError(f"unsupported degree {degree}")


def tensor_shape(degree, pts):
    """Tensor-product basis values at reference points, shape (npts, nloc)."""
    fx = shape_1d(degree, pts[:, 0])
    fy = shape_1d(degree, pts[:, 1])
    return np.einsum("pi,pj->pji", fx, fy).reshape(pts.shape[0], -1)


def tensor_grad(degree, pts):
    """Reference gradients, shape (npts, nloc, 2)."""
    fx = shape_1d(degree, pts[:, 0])
    fy = shape_1d(degree, pts[:, 1])
    dfx = shape_1d(degree, pts[:, 0], deriv=1)
    dfy = shape_1d(degree, pts[:, 1], deriv=1)
    gx = np.einsum("pi,pj->pji", dfx, fy).reshape(pts.shape[0], -1)
    gy = np.einsum("pi,pj->pji", fx, dfy).reshape(pts.shape[0], -1)
    return np.stack([gx, gy], axis=-1)


def tensor_hessian(degree, pts):
    """Reference second derivatives, shape (npts, nloc, 2, 2)."""
    fx = shape_1d(degree, pts[:, 0])
    fy = shape_1d(degree, pts[:, 1])
    dfx = shape_1d(degree, pts[:, 0], deriv=1)
    dfy = shape_1d(degree, pts[:, 1], deriv=1)
    ddfx = shape_1d(degree, pts[:, 0], deriv=2)
    ddfy = shape_1d(degree, pts[:, 1], deriv=2)
    n = pts.shape[0]
    hxx = np.einsum("pi,pj->pji", ddfx, fy).reshape(n, -1)
    hxy = np.einsum("pi,pj->pji", dfx, dfy).reshape(n, -1)
    hyy = np.einsum("pi,pj->pji", fx, ddfy).reshape(n, -1)
    H = np.empty((n, hxx.shape[1], 2, 2))
    H[:, :, 0, 0] = hxx
    H[:, :, 0, 1] = hxy
    H[:, :, 1, 0] = hxy
    H[:, :, 1, 1] = hyy
    return H


@dataclass(frozen=True)
class Quadrature:
    points: np.ndarray  # (k, 2) on the unit square
    weights: np.ndarray  # (k,), summing to 1


def gauss_1d(n):
    """n-point Gauss-Legendre rule on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(n)
    return (x + 1.0) / 2.0, w / 2.0


def gauss_quadrature(n):
    """Tensor Gauss rule with n points per direction, exact to degree 2n-1."""
    if not 1 <= n <= 6:
        raise ValueError("points per direction must be in 1..6")
    x, w = gauss_1d(n)
    X, Y = np.meshgrid(x, x, indexing="ij")
    W = np.outer(w, w)
    return Quadrature(
        points=np.column_stack([X.ravel(), Y.ravel()]), weights=W.ravel()
    )


# local lattice node -> owning mesh entity, per degree:
#   ("v", corner slot) / ("e", face index) / ("c",)
def _classify_lattice(degree):
    nodes = _NODES_1D[degree]
    out = []
    for j, y in enumerate(nodes):
        for i, x in enumerate(nodes):
            on_x = i in (0, len(nodes) - 1)
            on_y = j in (0, len(nodes) - 1)
            if on_x and on_y:
                corner = (0 if i == 0 else 1) + (0 if j == 0 else 2)
                out.append(("v", corner))
            elif on_y:
                out.append(("e", 2 if j == 0 else 3))
            elif on_x:
                out.append(("e", 0 if i == 0 else 1))
            else:
                out.append(("c",))
    return tuple(out)


def _lattice_points(degree):
    nodes = _NODES_1D[degree]
    X, Y = np.meshgrid(nodes, nodes, indexing="xy")
    return np.column_stack([X.ravel(), Y.ravel()])


# local lattice indices lying on each face, ascending along the face
def _face_lattice(degree):
    k = degree + 1
    idx = np.arange(k * k).reshape(k, k)  # [j, i]
    return (
        tuple(idx[:, 0]),   # left
        tuple(idx[:, -1]),  # right
        tuple(idx[0, :]),   # bottom
        tuple(idx[-1, :]),  # top
    )


class ConstraintSet:
    """Closed multi-point constraints: slave dof = weighted master combination."""

    def __init__(self, n_dofs, rows, inhom=None):
        self.n_dofs = n_dofs
        self.rows, self.inhom = sparse_la._close_constraints(rows, inhom)
        self._P = None

    def __len__(self):
        return len(self.rows)

    def __contains__(self, dof):
        return dof in self.rows

    @property
    def slaves(self):
        return sorted(self.rows.keys())

    def weights(self, slave):
        return self.rows[slave]

    def _prolongation(self):
        if self._P is None:
            self._P = sparse_la.constraint_prolongation(self.n_dofs, self.rows, self.inhom)
        return self._P

    def condense_matrix(self, A):
        """P^T A P; slave rows/columns end up empty (pin before solving)."""
        if not self.rows:
            return A
        P, _, _ = self._prolongation()
        return (P.T @ A @ P).tocsr()

    def condense_vector(self, b):
        if not self.rows:
            return b
        P, _, _ = self._prolongation()
        return P.T @ b

    def pin(self, A):
        """Add unit diagonals on slave rows so condensed systems are definite."""
        if not self.rows:
            return A
        _, _, slaves = self._prolongation()
        pin = np.zeros(self.n_dofs)
        pin[slaves] = 1.0
        return (A + sp.diags(pin)).tocsr()

    def distribute(self, x):
        """Overwrite slave entries with their constraint values."""
        if not self.rows:
            return np.asarray(x, dtype=float).copy()
        P, c, _ = self._prolongation()
        return P @ np.asarray(x, dtype=float) + c


class FeSpace:
    """Continuous Lagrange space of degree 1 or 2 over the active cells of a mesh."""

    def __init__(self, mesh, degree):
        if degree not in (1, 2):
            raise ValueError(f"unsupported polynomial degree {degree}")
        self.mesh = mesh
        self.degree = degree
        self._build()
        self._constraints = None
        self._boundary_faces = {}
        self._boundary_dofs = {}

    def _build(self):
        degree = self.degree
        classes = _classify_lattice(degree)
        lattice = _lattice_points(degree)
        self.active_ids = self.mesh.active_cells()
        self.cell_index = {cid: k for k, cid in enumerate(self.active_ids)}
        n_loc = (degree + 1) ** 2
        dof_of_key = {}
        support = []
        cell_dofs = np.empty((len(self.active_ids), n_loc), dtype=int)
        for k, cid in enumerate(self.active_ids):
            cell = self.mesh.cells[cid]
            phys = self.mesh.map_to_physical(cid, lattice)
            for loc, cls in enumerate(classes):
                if cls[0] == "v":
                    key = ("v", cell.vertices[cls[1]])
                elif cls[0] == "e":
                    a, b = (cell.vertices[s] for s in FACE_VERTS[cls[1]])
                    key = ("e", (a, b) if a < b else (b, a))
                else:
                    key = ("c", cid)
                dof = dof_of_key.get(key)
                if dof is None:
                    dof = len(support)
                    dof_of_key[key] = dof
                    support.append(phys[loc])
                cell_dofs[k, loc] = dof
        self.n_dofs = len(support)
        self.support_points = np.array(support)
        self.cell_dofs = cell_dofs
        self._dof_of_key = dof_of_key
        self._mesh_version = self.mesh._version

    def _check_current(self):
        if self.mesh._version != self._mesh_version:
            raise RuntimeError("mesh was refined after this space was built")

    def dofs_on_cell(self, cid):
        self._check_current()
        return self.cell_dofs[self.cell_index[cid]]

    def dof_by_key(self, key):
        return self._dof_of_key.get(key)

    # -- hanging-node constraints ---------------------------------------------

    @property
    def constraints(self):
        if self._constraints is None:
            self._constraints = self.hanging_constraints()
        return self._constraints

    def hanging_constraints(self):
        """Constraints tying fine-side dofs on 1-irregular faces to the coarse trace."""
        self._check_current()
        mesh = self.mesh
        degree = self.degree
        nodes = _NODES_1D[degree]
        rows = {}
        topo = mesh.face_topology()
        for cid in self.active_ids:
            cell = mesh.cells[cid]
            for f in range(4):
                kind, payload = topo[(cid, f)]
                if kind != "coarser":
                    continue
                coarse = payload
                g = OPPOSITE_FACE[f]
                masters = self._face_dofs(coarse, g)
                A, B = (
                    mesh.points[mesh.cells[coarse].vertices[s]] for s in FACE_VERTS[g]
                )
                span = B - A
                denom = float(span @ span)
                fine_dofs = self._face_dofs(cid, f)
                a, b = (mesh.points[cell.vertices[s]] for s in FACE_VERTS[f])
                s_a = float((a - A) @ span) / denom
                s_b = float((b - A) @ span) / denom
                for local, dof in enumerate(fine_dofs):
                    if dof in masters:
                        continue
                    s = s_a + nodes[local] * (s_b - s_a)
                    w = shape_1d(degree, np.array([s]))[0]
                    entry = tuple(
                        (m, float(wi)) for m, wi in zip(masters, w) if wi != 0.0
                    )
                    prev = rows.get(dof)
                    if prev is None:
                        rows[dof] = entry
        return ConstraintSet(self.n_dofs, rows)

    def _face_dofs(self, cid, face):
        idx = _face_lattice(self.degree)[face]
        return [int(d) for d in self.dofs_on_cell(cid)[list(idx)]]

    # -- boundary dofs ---------------------------------------------------------

    def boundary_faces(self, color):
        """Active (cell, face) pairs on the boundary with the given color."""
        self._check_current()
        cached = self._boundary_faces.get(color)
        if cached is None:
            cached = [
                (cid, f)
                for (cid, f), (kind, payload) in sorted(self.mesh.face_topology().items())
                if kind == "boundary" and payload == color
            ]
            self._boundary_faces[color] = cached
        return cached

    def boundary_dofs(self, color):
        """Sorted dof indices on boundary faces of the given color."""
        cached = self._boundary_dofs.get(color)
        if cached is None:
            dofs = set()
            for cid, f in self.boundary_faces(color):
                dofs.update(self._face_dofs(cid, f))
            cached = np.fromiter(sorted(dofs), dtype=int)
            self._boundary_dofs[color] = cached
        return cached


# -- geometry batching ---------------------------------------------------------


def _cell_geometry(space, ref_pts, cids=None):
    """Jacobians of the bilinear cell maps at the reference points.

    Returns (coords, phys, detJ, invJ) with shapes (nc,4,2), (nc,q,2),
    (nc,q), (nc,q,2,2).
    """
    mesh = space.mesh
    coords = mesh.cell_corner_coords(cids if cids is not None else space.active_ids)
    n1 = tensor_shape(1, ref_pts)
    g1 = tensor_grad(1, ref_pts)
    phys = np.einsum("qv,cvd->cqd", n1, coords)
    J = np.einsum("cvd,qve->cqde", coords, g1)
    detJ = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
    invJ = np.empty_like(J)
    invJ[..., 0, 0] = J[..., 1, 1]
    invJ[..., 0, 1] = -J[..., 0, 1]
    invJ[..., 1, 0] = -J[..., 1, 0]
    invJ[..., 1, 1] = J[..., 0, 0]
    invJ /= detJ[..., None, None]
    return coords, phys, detJ, invJ


def _as_coefficient(c):
    if callable(c):
        return c
    value = float(c)
    return lambda x: np.full(x.shape[:-1], value)


def _scatter_local(space, local):
    """Sum local (nc, nloc, nloc) matrices into a raw CSR matrix."""
    nc, nloc, _ = local.shape
    rows = np.repeat(space.cell_dofs[:, :, None], nloc, axis=2)
    cols = np.repeat(space.cell_dofs[:, None, :], nloc, axis=1)
    A = sp.coo_matrix(
        (local.ravel(), (rows.ravel(), cols.ravel())),
        shape=(space.n_dofs, space.n_dofs),
    ).tocsr()
    A.sum_duplicates()
    A.sort_indices()
    return A


def assemble_mass(space, density=1.0, condense=True):
    """Mass matrix with coefficient ``density``; (degree+1)^2 Gauss points per cell."""
    quad = gauss_quadrature(space.degree + 1)
    N = tensor_shape(space.degree, quad.points)
    _, phys, detJ, _ = _cell_geometry(space, quad.points)
    rho = _as_coefficient(density)(phys)
    scale = quad.weights[None, :] * detJ * rho
    local = np.einsum("cq,qi,qj->cij", scale, N, N)
    A = _scatter_local(space, local)
    return space.constraints.condense_matrix(A) if condense else A


def assemble_stiffness(space, diffusivity=1.0, condense=True):
    """Stiffness matrix with coefficient ``diffusivity``; same quadrature as the mass matrix."""
    quad = gauss_quadrature(space.degree + 1)
    g_ref = tensor_grad(space.degree, quad.points)
    _, phys, detJ, invJ = _cell_geometry(space, quad.points)
    grad = np.einsum("cqed,qie->cqid", invJ, g_ref)
    eps = _as_coefficient(diffusivity)(phys)
    scale = quad.weights[None, :] * detJ * eps
    local = np.einsum("cq,cqid,cqjd->cij", scale, grad, grad)
    A = _scatter_local(space, local)
    return space.constraints.condense_matrix(A) if condense else A


def assemble_load_volume(space, f, condense=True):
    """Load vector of a spatial density: b_i = sum_K int_K f phi_i."""
    quad = gauss_quadrature(space.degree + 1)
    N = tensor_shape(space.degree, quad.points)
    _, phys, detJ, _ = _cell_geometry(space, quad.points)
    vals = f(phys)
    local = np.einsum("cq,qi->ci", quad.weights[None, :] * detJ * vals, N)
    b = np.zeros(space.n_dofs)
    np.add.at(b, space.cell_dofs, local)
    return space.constraints.condense_vector(b) if condense else b


def assemble_load_neumann(space, h, condense=True):
    """Boundary load over Neumann-colored faces: b_i = int_{Gamma_N} h phi_i."""
    from .mesh import NEUMANN

    b = np.zeros(space.n_dofs)
    faces = space.boundary_faces(NEUMANN)
    if not faces:
        return b
    s, w = gauss_1d(space.degree + 1)
    trace = shape_1d(space.degree, s)
    mesh = space.mesh
    pts_mesh = mesh.points
    ends = np.array(
        [
            [pts_mesh[mesh.cells[cid].vertices[FACE_VERTS[f][0]]],
             pts_mesh[mesh.cells[cid].vertices[FACE_VERTS[f][1]]]]
            for cid, f in faces
        ]
    )  # (nf, 2, 2)
    seg = ends[:, 1] - ends[:, 0]
    length = np.hypot(seg[:, 0], seg[:, 1])
    pts = ends[:, None, 0, :] + s[None, :, None] * seg[:, None, :]  # (nf, q, 2)
    hv = h(pts)
    contrib = np.einsum("fq,qi->fi", w[None, :] * length[:, None] * hv, trace)
    dofs = np.array([space._face_dofs(cid, f) for cid, f in faces])
    np.add.at(b, dofs, contrib)
    return space.constraints.condense_vector(b) if condense else b


# -- finite element functions ----------------------------------------------------


class FeFunction:
    """Coefficient vector over a space, evaluable anywhere on the mesh."""

    def __init__(self, space, coefficients):
        coefficients = np.asarray(coefficients, dtype=float)
        if coefficients.shape != (space.n_dofs,):
            raise ValueError(
                f"coefficient length {coefficients.shape} does not match "
                f"space with {space.n_dofs} dofs"
            )
        self.space = space
        self.coefficients = coefficients

    def evaluate_in_cell(self, cid, ref_pts):
        """Values at reference points of one cell, no point location."""
        ref_pts = np.atleast_2d(ref_pts)
        N = tensor_shape(self.space.degree, ref_pts)
        return N @ self.coefficients[self.space.dofs_on_cell(cid)]

    def __call__(self, p):
        return self.evaluate(p)

    def evaluate(self, p):
        """Point value; shared faces resolve through the mesh tie-break rule."""
        cid, ref = self.space.mesh.locate_point(p)
        return float(self.evaluate_in_cell(cid, ref[None, :])[0])

    def evaluate_many(self, pts):
        pts = np.atleast_2d(pts)
        out = np.empty(pts.shape[0])
        for k in range(pts.shape[0]):
            out[k] = self.evaluate(pts[k])
        return out

    def gradient_in_cell(self, cid, ref_pts):
        """Physical gradients at reference points of one cell, shape (q, 2)."""
        ref_pts = np.atleast_2d(ref_pts)
        g_ref = tensor_grad(self.space.degree, ref_pts)
        _, _, _, invJ = _cell_geometry(self.space, ref_pts, cids=[cid])
        grad = np.einsum("qed,qie->qid", invJ[0], g_ref)
        return np.einsum("qid,i->qd", grad, self.coefficients[self.space.dofs_on_cell(cid)])


def interpolate(space, g):
    """Nodal interpolation; hanging slaves are overwritten to satisfy the constraints."""
    vals = np.asarray(g(space.support_points), dtype=float)
    return FeFunction(space, space.constraints.distribute(vals))


def interpolate_same_mesh(fn, space_to):
    """Nodal interpolation between spaces over the same mesh, without point location."""
    if space_to.mesh is not fn.space.mesh:
        raise ValueError("spaces live on different meshes")
    lattice = _lattice_points(space_to.degree)
    vals = np.empty(space_to.n_dofs)
    for cid in space_to.active_ids:
        vals[space_to.dofs_on_cell(cid)] = fn.evaluate_in_cell(cid, lattice)
    return FeFunction(space_to, space_to.constraints.distribute(vals))


def transfer(fn, space_to):
    """Interpolate a function onto another space by point evaluation.

    Identical meshes and degrees short-circuit to a coefficient copy.
    Raises :class:`OutsideDomainError` if a target support point falls
    outside the source mesh.
    """
    src = fn.space
    if space_to is src:
        return FeFunction(space_to, fn.coefficients.copy())
    if space_to.mesh is src.mesh or space_to.mesh.fingerprint() == src.mesh.fingerprint():
        if space_to.degree == src.degree:
            return FeFunction(space_to, fn.coefficients.copy())
        if space_to.mesh is src.mesh:
            return interpolate_same_mesh(fn, space_to)
    vals = fn.evaluate_many(space_to.support_points)
    return FeFunction(space_to, space_to.constraints.distribute(vals))
