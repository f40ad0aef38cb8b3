"""Global assembly of the stabilized weak Galerkin saddle-point system.

    a_h(u, v) + b_h(v, p) = (f, v0)
    b_h(u, q)             = -(g, q)

with ``a_h = a_{h,S} + a_{h,D} + a_I`` (stabilization included) and
``b_h(v, q) = -(div_w v, q)``.  Matrices are assembled over the full
velocity numbering; boundary-edge DOFs are eliminated afterwards.
"""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from .mesh import EdgeClass
from .weakops import LocalElement, local_element
from .wgspace import (WgDofMap, WgFunction, WgParams, eval_scalar, eval_vector,
                      pressure_mean_vector, project_Qb)


@dataclass
class SaddleSystem:
    """``[A B^T; B 0]`` plus the pressure-mean row ``m`` and right-hand sides.

    When ``reduced`` is true, velocity rows/columns are restricted to
    ``dofmap.free`` and ``lift`` holds the fixed boundary values.
    """

    dofmap: WgDofMap
    A: sp.csr_matrix
    B: sp.csr_matrix
    m: np.ndarray
    F: np.ndarray
    G: np.ndarray
    boundary_values: np.ndarray = field(default=None)
    reduced: bool = False

    def __post_init__(self):
        if self.boundary_values is None:
            self.boundary_values = np.zeros(int(self.dofmap.fixed.sum()))

    @property
    def n_u(self) -> int:
        return self.A.shape[0]

    @property
    def n_p(self) -> int:
        return self.B.shape[0]

    def matrix(self, with_mean: bool = True) -> sp.csr_matrix:
        """The symmetric indefinite block matrix, optionally bordered by ``m``."""
        blocks = [[self.A, self.B.T], [self.B, None]]
        K = sp.bmat(blocks, format="csr")
        if not with_mean:
            return K
        col = sp.csr_matrix(np.concatenate([np.zeros(self.n_u), self.m])[:, None])
        return sp.bmat([[K, col], [col.T, None]], format="csr")

    def rhs(self, with_mean: bool = True) -> np.ndarray:
        parts = [self.F, self.G] + ([np.zeros(1)] if with_mean else [])
        return np.concatenate(parts)

    def full_velocity(self, u_free: np.ndarray) -> np.ndarray:
        """Scatter a free-DOF velocity back to the full numbering with boundary values."""
        if not self.reduced:
            return u_free
        u = np.zeros(self.dofmap.n_velocity)
        u[self.dofmap.free] = u_free
        u[self.dofmap.fixed] = self.boundary_values
        return u


def _local_dofs(dofmap: WgDofMap) -> list[np.ndarray]:
    cache = dofmap.__dict__.get("_ldofs")
    if cache is None:
        cache = [dofmap.local_velocity_dofs(k) for k in range(dofmap.mesh.n_cells)]
        dofmap.__dict__["_ldofs"] = cache
    return cache


def stab_length(h_cell: float, edge_lengths, j: int, params: WgParams) -> float:
    """Length scale dividing the stabiliser on the ``j``-th edge of a cell."""
    if params.stab_length == "diameter":
        return h_cell
    if params.stab_length == "max_edge":
        return max(edge_lengths)
    return edge_lengths[j]


def _hstab(el, le, params) -> float:
    lengths = [x.length for x in el.edges]
    return stab_length(el.h, lengths, el.edges.index(le), params)


def local_a_matrix(el: LocalElement, params: WgParams, parts=("main", "stab")) -> np.ndarray:
    """Cell contribution of ``a_{h,S}`` or ``a_{h,D}`` (``a_I`` is edge-based)."""
    A = np.zeros((el.nloc, el.nloc))
    if el.stokes:
        if "main" in parts:
            S = el.S
            for i in range(2):
                for j in range(2):
                    A += 2 * params.nu * S[i, j].T @ el.M_beta @ S[i, j]
        if "stab" in parts:
            for le in el.edges:
                d = le.QbV0 - le.Vb
                A += params.rho_s / _hstab(el, le, params) * np.einsum("q,qcl,qcm->lm", le.weights, d, d)
    else:
        if "main" in parts:
            Kinv = params.K_inv
            A += np.einsum("q,qcl,cd,qdm->lm", el.weights, el.V0, Kinv, el.V0)
        if "stab" in parts:
            for le in el.edges:
                d = np.einsum("c,qcl->ql", le.normal_out, le.V0 - le.Vb)
                A += params.rho_d / _hstab(el, le, params) * np.einsum("q,ql,qm->lm", le.weights, d, d)
    return A


def interface_matrix(dofmap: WgDofMap, e: int, params: WgParams | None = None) -> np.ndarray:
    """``<mu K^{-1/2} ub.t, vb.t>_e`` on the edge block of interface edge ``e``."""
    params = params or dofmap.params
    ed = dofmap.mesh.edges[e]
    r = dofmap.edge_rule(e)
    Be = dofmap.edge_basis(e).eval(r.points)
    Me = (Be * r.weights[:, None]).T @ Be
    t = ed.tangent
    return params.bjs_weight(t) * np.kron(np.outer(t, t), Me)


def _scatter(rows, cols, vals, shape):
    r = np.concatenate(rows).astype(np.int64)
    c = np.concatenate(cols).astype(np.int64)
    v = np.concatenate(vals)
    M = sp.coo_matrix((v, (r, c)), shape=shape).tocsr()
    M.sum_duplicates()
    return M


def assemble_a_h(dofmap: WgDofMap, params: WgParams | None = None,
                 parts=("main", "stab", "interface")) -> sp.csr_matrix:
    params = params or dofmap.params
    ldofs = _local_dofs(dofmap)
    rows, cols, vals = [], [], []
    cache = {}
    for k in range(dofmap.mesh.n_cells):
        el = local_element(dofmap, k)
        Al = cache.get(id(el))
        if Al is None:
            Al = local_a_matrix(el, params, parts).ravel()
            cache[id(el)] = Al
        d = ldofs[k]
        rows.append(np.repeat(d, len(d)))
        cols.append(np.tile(d, len(d)))
        vals.append(Al)
    if "interface" in parts:
        for e in dofmap.mesh.edges_of_kind(EdgeClass.INTERFACE):
            d = dofmap.edge_dofs(e)
            Ae = interface_matrix(dofmap, e, params)
            rows.append(np.repeat(d, len(d)))
            cols.append(np.tile(d, len(d)))
            vals.append(Ae.ravel())
    n = dofmap.n_velocity
    return _scatter(rows, cols, vals, (n, n))


def assemble_b_h(dofmap: WgDofMap) -> sp.csr_matrix:
    """``B[q, v] = b_h(v, q) = -(div_w v, q)``."""
    ldofs = _local_dofs(dofmap)
    rows, cols, vals = [], [], []
    cache = {}
    for k in range(dofmap.mesh.n_cells):
        el = local_element(dofmap, k)
        Bl = cache.get(id(el))
        if Bl is None:
            Bl = -el.M_gamma_beta @ el.D
            cache[id(el)] = Bl
        d = ldofs[k]
        pd = dofmap.pressure_dofs(k)
        rows.append(np.repeat(pd, len(d)))
        cols.append(np.tile(d, len(pd)))
        vals.append(Bl.ravel())
    return _scatter(rows, cols, vals, (dofmap.n_pressure, dofmap.n_velocity))


def divergence_mass(dofmap: WgDofMap) -> sp.csr_matrix:
    """Matrix of ``(div_w u, div_w v)_Omega`` over the full velocity numbering."""
    ldofs = _local_dofs(dofmap)
    rows, cols, vals = [], [], []
    cache = {}
    for k in range(dofmap.mesh.n_cells):
        el = local_element(dofmap, k)
        Dl = cache.get(id(el))
        if Dl is None:
            Dl = (el.D.T @ el.M_beta @ el.D).ravel()
            cache[id(el)] = Dl
        d = ldofs[k]
        rows.append(np.repeat(d, len(d)))
        cols.append(np.tile(d, len(d)))
        vals.append(Dl)
    n = dofmap.n_velocity
    return _scatter(rows, cols, vals, (n, n))


def _cell_groups(dofmap: WgDofMap):
    groups = defaultdict(list)
    for k in range(dofmap.mesh.n_cells):
        groups[id(local_element(dofmap, k))].append(k)
    return [(local_element(dofmap, ks[0]), np.array(ks)) for ks in groups.values()]


def assemble_rhs(dofmap: WgDofMap, f=None, g=None) -> tuple[np.ndarray, np.ndarray]:
    """``F = (f, v0)`` over interior blocks and ``Gvec = -(g, q)``."""
    F = np.zeros(dofmap.n_velocity)
    Gv = np.zeros(dofmap.n_pressure)
    cent = dofmap.mesh.centroids
    for el, ks in _cell_groups(dofmap):
        pts = (el.points[None, :, :] + cent[ks][:, None, :]).reshape(-1, 2)
        nq = len(el.points)
        if f is not None:
            fv = eval_vector(f, pts).reshape(len(ks), nq, 2)
            loc = np.einsum("q,kqc,qi->kci", el.weights, fv, el.phi_alpha).reshape(len(ks), -1)
            idx = dofmap.cell_offsets[ks][:, None] + np.arange(loc.shape[1])[None, :]
            F[idx] = loc
        if g is not None:
            gv = eval_scalar(g, pts).reshape(len(ks), nq)
            loc = -np.einsum("q,kq,qi->ki", el.weights, gv, el.phi_gamma)
            idx = dofmap.p_offsets[ks][:, None] + np.arange(loc.shape[1])[None, :]
            Gv[idx] = loc
    return F, Gv


def boundary_values(u, dofmap: WgDofMap, mode: str = "projection") -> np.ndarray:
    """Values of the fixed boundary-edge DOFs for a prescribed velocity ``u``.

    ``projection`` uses ``Q_b u``; ``interpolant`` uses nodal interpolation at
    ``beta + 1`` equispaced points including the endpoints (midpoint for
    ``beta = 0``).  Darcy edges receive the normal component ``u . n_e``.
    """
    out = np.zeros(dofmap.n_velocity)
    beta = dofmap.params.beta
    V = dofmap.mesh.vertices
    for e, ed in enumerate(dofmap.mesh.edges):
        if not ed.kind.is_boundary or u is None:
            continue
        if mode == "projection":
            c = project_Qb(u, dofmap, e)
        elif mode == "interpolant":
            a, b = V[ed.a], V[ed.b]
            s = np.array([0.5]) if beta == 0 else np.linspace(0.0, 1.0, beta + 1)
            pts = a[None, :] + s[:, None] * (b - a)[None, :]
            Bn = dofmap.edge_basis(e).eval(pts)
            vals = eval_vector(u, pts)
            if dofmap.edge_scalar[e]:
                vals = vals @ ed.normal
            c = np.linalg.solve(Bn, vals)
            c = c if dofmap.edge_scalar[e] else c.T
        else:
            raise ValueError(f"unknown boundary mode {mode!r}")
        out[dofmap.edge_dofs(e)] = np.ravel(c)
    return out[dofmap.fixed]


def assemble_system(dofmap: WgDofMap, f=None, g=None, boundary=None) -> SaddleSystem:
    """Assemble the full (unreduced) saddle system; ``boundary`` holds fixed DOF values."""
    A = assemble_a_h(dofmap)
    B = assemble_b_h(dofmap)
    F, Gv = assemble_rhs(dofmap, f, g)
    m = pressure_mean_vector(dofmap)
    return SaddleSystem(dofmap, A, B, m, F, Gv, boundary)


def apply_boundary_conditions(system: SaddleSystem, dofmap: WgDofMap | None = None) -> SaddleSystem:
    """Eliminate boundary-edge DOFs, moving their known values to the right-hand side."""
    if system.reduced:
        return system
    dm = dofmap or system.dofmap
    free, fixed = dm.free, np.flatnonzero(dm.fixed)
    ub = system.boundary_values
    A = system.A
    Aff = A[free][:, free].tocsr()
    Afb = A[free][:, fixed]
    Bf = system.B[:, free].tocsr()
    Bb = system.B[:, fixed]
    F = system.F[free] - Afb @ ub
    G = system.G - Bb @ ub
    return replace(system, A=Aff, B=Bf, F=F, G=G, reduced=True)


def discrete_norm_sq(v: WgFunction, params: WgParams | None = None,
                     include_divergence: bool = True) -> float:
    """``||v||_{V_h}^2`` evaluated term by term from the function itself."""
    from .weakops import weak_divergence, weak_strain

    dm = v.dofmap
    params = params or dm.params
    mesh = dm.mesh
    total = 0.0
    for k in range(mesh.n_cells):
        el = local_element(dm, k)
        r = dm.cell_rule(k)
        lengths = [mesh.edges[e].length for e in mesh.cell_edges[k]]
        hs = [stab_length(mesh.h_cells[k], lengths, j, params) for j in range(len(lengths))]
        if mesh.is_stokes(k):
            Dw = weak_strain(dm, k, v)
            total += 2 * params.nu * sum(Dw[i, j] @ el.M_beta @ Dw[i, j]
                                         for i in range(2) for j in range(2))
            for j, (eid, n_out, _) in enumerate(mesh.local_edges(k)):
                er = dm.edge_rule(eid)
                v0 = v.eval_interior(k, er.points)
                eb = dm.edge_basis(eid)
                Be = eb.eval(er.points)
                Me = (Be * er.weights[:, None]).T @ Be
                Qv0 = Be @ np.linalg.solve(Me, (Be * er.weights[:, None]).T @ v0)
                d = Qv0 - v.eval_trace(eid, er.points)
                total += params.rho_s / hs[j] * float(er.weights @ (d ** 2).sum(1))
        else:
            v0 = v.eval_interior(k, r.points)
            Kinv_sqrt = params.K_inv_sqrt
            total += float(r.weights @ ((v0 @ Kinv_sqrt) ** 2).sum(1))
            for j, (eid, n_out, _) in enumerate(mesh.local_edges(k)):
                er = dm.edge_rule(eid)
                d = (v.eval_interior(k, er.points) - v.eval_trace(eid, er.points)) @ n_out
                total += params.rho_d / hs[j] * float(er.weights @ d ** 2)
        if include_divergence:
            dw = weak_divergence(dm, k, v)
            total += float(dw @ el.M_beta @ dw)
    for eid in mesh.edges_of_kind(EdgeClass.INTERFACE):
        ed = mesh.edges[eid]
        er = dm.edge_rule(eid)
        vt = v.eval_trace(eid, er.points) @ ed.tangent
        total += params.bjs_weight(ed.tangent) * float(er.weights @ vt ** 2)
    return total


def norm_matrix(dofmap: WgDofMap) -> sp.csr_matrix:
    """Gram matrix of ``||.||_{V_h}``: ``A + (div_w ., div_w .)``."""
    return (assemble_a_h(dofmap) + divergence_mass(dofmap)).tocsr()


def export_coo(M, path) -> None:
    """Write a sparse matrix as ``row col value`` lines (0-based)."""
    C = sp.coo_matrix(M)
    order = np.lexsort((C.col, C.row))
    with open(path, "w") as fh:
        fh.write(f"% {C.shape[0]} {C.shape[1]} {C.nnz}\n")
        for i in order:
            fh.write(f"{C.row[i]} {C.col[i]} {C.data[i]:.17g}\n")
