"""Local weak gradient, weak divergence and weak strain.

For a cell ``K`` with local velocity DOFs ``v`` (cell block followed by the
blocks of its edges in boundary order) the weak gradient coefficients in
``[P_beta(K)]^{2x2}`` solve

    (grad_w v, tau)_K = -(v0, div tau)_K + <vb, tau n>_{dK}

and the weak divergence coefficients in ``P_beta(K)`` solve

    (div_w v, q)_K = -(v0, grad q)_K + <vb . n, q>_{dK}.

Both are stored as dense matrices acting on the local DOF vector.  Cells
that agree up to translation share one :class:`LocalElement`.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .polyquad import CellBasis, EdgeBasis, cell_quadrature, edge_quadrature
from .wgspace import WgDofMap, WgFunction


class WeakOpError(RuntimeError):
    pass


@dataclass
class LocalEdge:
    edge_id: int          # id of the edge on the cell this element was built from
    slc: slice            # position of the edge block among local DOFs
    scalar: bool          # Darcy edge: block is the scalar normal trace
    normal_out: np.ndarray
    normal_e: np.ndarray
    tangent: np.ndarray
    length: float
    points: np.ndarray    # relative to the cell centroid
    weights: np.ndarray
    basis: np.ndarray     # edge Legendre basis at points, (nq, beta+1)
    mass: np.ndarray
    V0: np.ndarray        # v0 at points, (nq, 2, nloc)
    Vb: np.ndarray        # vb at points, (nq, 2, nloc)
    QbV0: np.ndarray      # Q_b v0 at points, (nq, 2, nloc)


@dataclass
class LocalElement:
    stokes: bool
    h: float
    area: float
    alpha: int
    beta: int
    gamma: int
    nloc: int
    points: np.ndarray      # cell quadrature points relative to the centroid
    weights: np.ndarray
    phi_alpha: np.ndarray   # (nq, dim P_alpha)
    phi_beta: np.ndarray
    phi_gamma: np.ndarray
    V0: np.ndarray          # (nq, 2, nloc)
    M_alpha: np.ndarray
    M_beta: np.ndarray
    M_gamma_beta: np.ndarray
    edges: list
    D: np.ndarray           # (dim P_beta, nloc)
    G: np.ndarray | None    # (2, 2, dim P_beta, nloc), Stokes cells only

    @property
    def S(self) -> np.ndarray:
        """Weak strain map ``0.5 (G + G^T)`` on the tensor indices."""
        if self.G is None:
            raise WeakOpError("weak gradient is only formed on Stokes cells")
        return 0.5 * (self.G + self.G.transpose(1, 0, 2, 3))


def _signature(dofmap: WgDofMap, k: int):
    mesh = dofmap.mesh
    c = mesh.centroids[k]
    h = mesh.h_cells[k]
    rel = np.round((mesh.cell_vertices(k) - c) / h, 11)
    parts = [mesh.regions[k], float(np.format_float_positional(h, 12, unique=False, fractional=False)),
             rel.tobytes()]
    for eid in mesh.cell_edges[k]:
        e = mesh.edges[eid]
        parts.append((bool(dofmap.edge_scalar[eid]), e.left == k,
                      np.round(e.tangent, 11).tobytes()))
    return tuple(parts)


def local_element(dofmap: WgDofMap, k: int) -> LocalElement:
    cache = dofmap.__dict__.setdefault("_local_cache", {})
    sig = _signature(dofmap, k)
    el = cache.get(sig)
    if el is None:
        el = _build_element(dofmap, k)
        cache[sig] = el
    return el


def _build_element(dofmap: WgDofMap, k: int) -> LocalElement:
    mesh, params = dofmap.mesh, dofmap.params
    stokes = mesh.is_stokes(k)
    c = mesh.centroids[k]
    h = float(mesh.h_cells[k])
    alpha, beta, gamma = dofmap.alpha_of(k), params.beta, dofmap.gamma_of(k)
    zero = np.zeros(2)
    ba = CellBasis(zero, h, alpha)
    bb = CellBasis(zero, h, beta)
    bg = CellBasis(zero, h, gamma)
    na, nb = ba.dim, bb.dim

    rule = cell_quadrature(mesh.cell_vertices(k) - c, params.cell_quad_exactness)
    pts, w = rule.points, rule.weights

    sizes = [2 * na] + [int(dofmap.edge_ndof[e]) for e in mesh.cell_edges[k]]
    offs = np.concatenate([[0], np.cumsum(sizes)])
    nloc = int(offs[-1])

    def v0_at(p):
        B = ba.eval(p)
        out = np.zeros((len(p), 2, nloc))
        out[:, 0, :na] = B
        out[:, 1, na:2 * na] = B
        return out

    phi_a = ba.eval(pts)
    phi_b = bb.eval(pts)
    gphi_b = bb.grad(pts)
    phi_g = bg.eval(pts)
    V0 = v0_at(pts)
    M_a = (phi_a * w[:, None]).T @ phi_a
    M_b = (phi_b * w[:, None]).T @ phi_b
    M_gb = (phi_g * w[:, None]).T @ phi_b

    edges = []
    V = mesh.vertices
    for j, (eid, n_out, _) in enumerate(mesh.local_edges(k)):
        e = mesh.edges[eid]
        a, b = V[e.a] - c, V[e.b] - c
        er = edge_quadrature(a, b, params.edge_quad_exactness)
        eb = EdgeBasis(a, b, beta)
        Be = eb.eval(er.points)
        Me = (Be * er.weights[:, None]).T @ Be
        slc = slice(int(offs[j + 1]), int(offs[j + 2]))
        Vb = np.zeros((len(er.points), 2, nloc))
        scalar = bool(dofmap.edge_scalar[eid])
        if scalar:
            Vb[:, :, slc] = Be[:, None, :] * e.normal[None, :, None]
        else:
            nb1 = beta + 1
            Vb[:, 0, slc.start:slc.start + nb1] = Be
            Vb[:, 1, slc.start + nb1:slc.stop] = Be
        V0e = v0_at(er.points)
        # Q_b of v0 componentwise onto P_beta(e)
        P = Be @ np.linalg.solve(Me, (Be * er.weights[:, None]).T)
        QbV0 = np.einsum("pq,qcl->pcl", P, V0e)
        edges.append(LocalEdge(eid, slc, scalar, n_out, e.normal, e.tangent, e.length,
                               er.points, er.weights, Be, Me, V0e, Vb, QbV0))

    chol = cho_factor(M_b)

    # weak divergence
    rhs = -np.einsum("q,qmd,qdl->ml", w, gphi_b, V0)
    for le in edges:
        Bb = bb.eval(le.points)
        vbn = np.einsum("d,qdl->ql", le.normal_out, le.Vb)
        rhs += np.einsum("q,qm,ql->ml", le.weights, Bb, vbn)
    D = cho_solve(chol, rhs)

    G = None
    if stokes:
        G = np.zeros((2, 2, nb, nloc))
        for i in range(2):
            for jj in range(2):
                r = -np.einsum("q,qm,ql->ml", w, gphi_b[:, :, jj], V0[:, i, :])
                for le in edges:
                    Bb = bb.eval(le.points)
                    r += le.normal_out[jj] * np.einsum("q,qm,ql->ml", le.weights, Bb, le.Vb[:, i, :])
                G[i, jj] = cho_solve(chol, r)

    return LocalElement(stokes, h, float(mesh.areas[k]), alpha, beta, gamma, nloc, pts, w,
                        phi_a, phi_b, phi_g, V0, M_a, M_b, M_gb, edges, D, G)


def _local_coeffs(v, dofmap: WgDofMap, k: int) -> np.ndarray:
    if isinstance(v, WgFunction):
        return v.coeffs[dofmap.local_velocity_dofs(k)]
    return np.asarray(v, dtype=float)


def weak_gradient(dofmap: WgDofMap, k: int, v) -> np.ndarray:
    """Coefficients of ``grad_w v`` on Stokes cell ``k``, shape ``(2, 2, dim P_beta)``."""
    el = local_element(dofmap, k)
    if el.G is None:
        raise WeakOpError(f"cell {k} is a Darcy cell; the weak gradient is only used on Stokes cells")
    return el.G @ _local_coeffs(v, dofmap, k)


def weak_divergence(dofmap: WgDofMap, k: int, v) -> np.ndarray:
    """Coefficients of ``div_w v`` on cell ``k`` in ``P_beta``."""
    return local_element(dofmap, k).D @ _local_coeffs(v, dofmap, k)


def weak_strain(dofmap: WgDofMap, k: int, v) -> np.ndarray:
    """Coefficients of ``D_w(v) = (grad_w v + grad_w v^T)/2``."""
    g = weak_gradient(dofmap, k, v)
    return 0.5 * (g + g.transpose(1, 0, 2))
