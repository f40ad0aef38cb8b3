"""Weak Galerkin velocity/pressure spaces, their DOF layout, and L2 projections.

Velocity DOFs are numbered cell blocks first, then edge blocks.  A cell
block holds ``[v0_x coeffs, v0_y coeffs]`` in the scaled monomial basis of
``P_alpha``; a Stokes or interface edge block holds ``[vb_x, vb_y]`` in the
Legendre basis of ``P_beta(e)``; a Darcy edge block holds the single scalar
``v_b`` with ``vb = v_b * n_e``.  Boundary-edge blocks are kept in the global
numbering but flagged as fixed so the solver can eliminate them.
"""
from __future__ import annotations

from dataclasses import dataclass, asdict, field
from functools import cached_property

import numpy as np

from .mesh import EdgeClass, PolyMesh
from .polyquad import (CellBasis, EdgeBasis, cell_quadrature, dim_P,
                       edge_quadrature, project)


class ParameterError(ValueError):
    pass


STAB_LENGTHS = ("diameter", "max_edge", "edge")


@dataclass(frozen=True)
class WgParams:
    alpha_s: int = 1
    alpha_d: int = 1
    beta: int = 1
    gamma_s: int = 0
    gamma_d: int = 0
    rho_s: float = 1.0
    rho_d: float = 1.0
    nu: float = 1.0
    kappa: float | tuple = 1.0   # scalar or 2x2 nested tuple (Darcy permeability)
    mu: float = 1.0
    cell_exactness: int | None = None
    edge_exactness: int | None = None
    stab_length: str = "diameter"   # h_K in the stabiliser: "diameter", "max_edge" or "edge"

    def __post_init__(self):
        if isinstance(self.kappa, (list, np.ndarray)):
            object.__setattr__(self, "kappa", tuple(tuple(float(v) for v in row)
                                                    for row in np.asarray(self.kappa)))
        problems = self.violations()
        if problems:
            raise ParameterError("inadmissible parameters: " + "; ".join(problems))

    def violations(self) -> list[str]:
        a_s, a_d, b, g_s, g_d = self.alpha_s, self.alpha_d, self.beta, self.gamma_s, self.gamma_d
        out = []
        for name in ("alpha_s", "alpha_d", "beta", "gamma_s", "gamma_d"):
            v = getattr(self, name)
            if int(v) != v or v < 0:
                out.append(f"{name} must be a nonnegative integer")
        checks = [
            (b - 1 <= g_s, "beta-1 <= gamma_s"),
            (g_s <= b, "gamma_s <= beta"),
            (b <= a_s, "beta <= alpha_s"),
            (a_s <= b + 1, "alpha_s <= beta+1"),
            (b - 1 <= g_d, "beta-1 <= gamma_d"),
            (g_d <= b, "gamma_d <= beta"),
            (a_d == b, "alpha_d == beta"),
            (a_s <= g_s + 1, "alpha_s <= gamma_s+1"),
        ]
        out += [f"violates {txt}" for ok, txt in checks if not ok]
        if self.stab_length not in STAB_LENGTHS:
            out.append(f"stab_length must be one of {', '.join(STAB_LENGTHS)}")
        for name in ("rho_s", "rho_d", "nu", "mu"):
            if not getattr(self, name) > 0:
                out.append(f"{name} must be positive")
        K = np.asarray(self.kappa, dtype=float)
        if K.ndim == 0:
            if not K > 0:
                out.append("kappa must be positive")
        elif K.shape != (2, 2) or not np.allclose(K, K.T) or np.linalg.eigvalsh(K).min() <= 0:
            out.append("kappa must be a symmetric positive definite 2x2 tensor")
        return out

    @property
    def K(self) -> np.ndarray:
        K = np.asarray(self.kappa, dtype=float)
        return K * np.eye(2) if K.ndim == 0 else K

    @property
    def K_inv(self) -> np.ndarray:
        return np.linalg.inv(self.K)

    @property
    def K_inv_sqrt(self) -> np.ndarray:
        w, V = np.linalg.eigh(self.K)
        return (V / np.sqrt(w)) @ V.T

    def bjs_weight(self, tangent) -> float:
        """Scalar ``mu * t.K^{-1/2}.t`` multiplying the tangential traces on the interface."""
        t = np.asarray(tangent, dtype=float)
        return float(self.mu * t @ self.K_inv_sqrt @ t)

    def alpha(self, stokes: bool) -> int:
        return self.alpha_s if stokes else self.alpha_d

    def gamma(self, stokes: bool) -> int:
        return self.gamma_s if stokes else self.gamma_d

    @property
    def cell_quad_exactness(self) -> int:
        if self.cell_exactness is not None:
            return self.cell_exactness
        return max(2 * max(self.alpha_s, self.beta) + 2, 8)

    @property
    def edge_quad_exactness(self) -> int:
        if self.edge_exactness is not None:
            return self.edge_exactness
        return max(2 * self.beta + 4, 8)

    def scaled(self, c: float) -> "WgParams":
        """Multiply nu, rho, K^{-1} by ``c`` and mu by ``sqrt(c)``; ``a_h`` scales by ``c``."""
        return WgParams(**{**asdict(self),
                           "nu": self.nu * c, "rho_s": self.rho_s * c, "rho_d": self.rho_d * c,
                           "kappa": tuple(map(tuple, self.K / c)), "mu": self.mu * np.sqrt(c)})

    def to_dict(self) -> dict:
        d = asdict(self)
        if isinstance(d["kappa"], tuple):
            d["kappa"] = [list(r) for r in d["kappa"]]
        return d


def _as_vector(values, npts) -> np.ndarray:
    """Coerce a vector field evaluation to shape ``(npts, 2)``."""
    v = np.asarray(values, dtype=float)
    if v.shape == (2, npts):
        return v.T
    if v.shape == (npts, 2):
        return v
    if v.shape == (2,):
        return np.broadcast_to(v, (npts, 2)).copy()
    raise ValueError(f"vector field returned shape {v.shape}, expected (2, {npts})")


def _as_scalar(values, npts) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    return np.broadcast_to(v, (npts,)).copy() if v.shape in ((), (1,)) else v.reshape(npts)


def _as_tensor(values, npts) -> np.ndarray:
    """Coerce a tensor field evaluation to shape ``(npts, 2, 2)``."""
    v = np.asarray(values, dtype=float)
    if v.shape == (2, 2):
        return np.broadcast_to(v, (npts, 2, 2)).copy()
    if v.shape == (2, 2, npts):
        return np.moveaxis(v, -1, 0)
    if v.shape == (npts, 2, 2):
        return v
    raise ValueError(f"tensor field returned shape {v.shape}")


def eval_vector(field, pts) -> np.ndarray:
    return _as_vector(field(pts[:, 0], pts[:, 1]), len(pts))


def eval_scalar(field, pts) -> np.ndarray:
    return _as_scalar(field(pts[:, 0], pts[:, 1]), len(pts))


def eval_tensor(field, pts) -> np.ndarray:
    return _as_tensor(field(pts[:, 0], pts[:, 1]), len(pts))


class WgDofMap:
    """DOF layout of the velocity space ``V_h`` and the pressure space ``Psi_h``."""

    def __init__(self, mesh: PolyMesh, params: WgParams):
        self.mesh = mesh
        self.params = params
        stokes = mesh.regions == "S"
        self.n_alpha = np.where(stokes, dim_P(params.alpha_s), dim_P(params.alpha_d))
        self.n_gamma = np.where(stokes, dim_P(params.gamma_s), dim_P(params.gamma_d))
        self.n_beta = dim_P(params.beta)
        nb1 = params.beta + 1
        self.edge_scalar = np.array([e.kind.is_darcy for e in mesh.edges], dtype=bool)
        self.edge_ndof = np.where(self.edge_scalar, nb1, 2 * nb1)

        cell_sizes = 2 * self.n_alpha
        self.cell_offsets = np.concatenate([[0], np.cumsum(cell_sizes)])
        base = int(self.cell_offsets[-1])
        self.edge_offsets = base + np.concatenate([[0], np.cumsum(self.edge_ndof)])
        self.n_velocity = int(self.edge_offsets[-1])
        self.p_offsets = np.concatenate([[0], np.cumsum(self.n_gamma)])
        self.n_pressure = int(self.p_offsets[-1])

        fixed = np.zeros(self.n_velocity, dtype=bool)
        for i, e in enumerate(mesh.edges):
            if e.kind.is_boundary:
                fixed[self.edge_offsets[i]:self.edge_offsets[i + 1]] = True
        self.fixed = fixed
        self.free = np.flatnonzero(~fixed)
        self._cell_rules = {}
        self._edge_rules = {}

    # --- index helpers -------------------------------------------------
    def cell_dofs(self, k: int) -> np.ndarray:
        return np.arange(self.cell_offsets[k], self.cell_offsets[k + 1])

    def edge_dofs(self, e: int) -> np.ndarray:
        return np.arange(self.edge_offsets[e], self.edge_offsets[e + 1])

    def local_velocity_dofs(self, k: int) -> np.ndarray:
        return np.concatenate([self.cell_dofs(k)] + [self.edge_dofs(e) for e in self.mesh.cell_edges[k]])

    def pressure_dofs(self, k: int) -> np.ndarray:
        return np.arange(self.p_offsets[k], self.p_offsets[k + 1])

    @property
    def n_free(self) -> int:
        return len(self.free)

    # --- geometry/quadrature helpers -----------------------------------
    def cell_rule(self, k: int):
        r = self._cell_rules.get(k)
        if r is None:
            r = cell_quadrature(self.mesh.cell_vertices(k), self.params.cell_quad_exactness)
            self._cell_rules[k] = r
        return r

    def edge_rule(self, e: int):
        r = self._edge_rules.get(e)
        if r is None:
            ed = self.mesh.edges[e]
            V = self.mesh.vertices
            r = edge_quadrature(V[ed.a], V[ed.b], self.params.edge_quad_exactness)
            self._edge_rules[e] = r
        return r

    def cell_basis(self, k: int, degree: int) -> CellBasis:
        return CellBasis(self.mesh.centroids[k], float(self.mesh.h_cells[k]), degree)

    def edge_basis(self, e: int) -> EdgeBasis:
        ed = self.mesh.edges[e]
        V = self.mesh.vertices
        return EdgeBasis(V[ed.a], V[ed.b], self.params.beta)

    def alpha_of(self, k: int) -> int:
        return self.params.alpha(self.mesh.is_stokes(k))

    def gamma_of(self, k: int) -> int:
        return self.params.gamma(self.mesh.is_stokes(k))


@dataclass
class WgFunction:
    """A discrete velocity ``{v0, vb}`` stored as one coefficient vector."""

    dofmap: WgDofMap
    coeffs: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.coeffs is None:
            self.coeffs = np.zeros(self.dofmap.n_velocity)
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.shape != (self.dofmap.n_velocity,):
            raise ValueError("coefficient vector does not match the DOF map")

    def cell_coeffs(self, k: int) -> np.ndarray:
        """Interior coefficients, shape ``(2, dim P_alpha)``."""
        return self.coeffs[self.dofmap.cell_dofs(k)].reshape(2, -1)

    def edge_coeffs(self, e: int) -> np.ndarray:
        c = self.coeffs[self.dofmap.edge_dofs(e)]
        return c if self.dofmap.edge_scalar[e] else c.reshape(2, -1)

    def eval_interior(self, k: int, pts) -> np.ndarray:
        dm = self.dofmap
        B = dm.cell_basis(k, dm.alpha_of(k)).eval(pts)
        return B @ self.cell_coeffs(k).T

    def eval_trace(self, e: int, pts) -> np.ndarray:
        """Vector trace ``vb`` at points of edge ``e``, shape ``(npts, 2)``."""
        dm = self.dofmap
        B = dm.edge_basis(e).eval(pts)
        c = self.edge_coeffs(e)
        if dm.edge_scalar[e]:
            return (B @ c)[:, None] * dm.mesh.edges[e].normal[None, :]
        return B @ c.T

    def boundary_zeroed(self) -> "WgFunction":
        c = self.coeffs.copy()
        c[self.dofmap.fixed] = 0.0
        return WgFunction(self.dofmap, c)

    def __sub__(self, other: "WgFunction") -> "WgFunction":
        return WgFunction(self.dofmap, self.coeffs - other.coeffs)


@dataclass
class PressureFunction:
    dofmap: WgDofMap
    coeffs: np.ndarray = field(default=None)
    normalized: bool = False

    def __post_init__(self):
        if self.coeffs is None:
            self.coeffs = np.zeros(self.dofmap.n_pressure)
        self.coeffs = np.asarray(self.coeffs, dtype=float)

    def cell_coeffs(self, k: int) -> np.ndarray:
        return self.coeffs[self.dofmap.pressure_dofs(k)]

    def eval(self, k: int, pts) -> np.ndarray:
        dm = self.dofmap
        return dm.cell_basis(k, dm.gamma_of(k)).eval(pts) @ self.cell_coeffs(k)

    @cached_property
    def _mean_vector(self) -> np.ndarray:
        return pressure_mean_vector(self.dofmap)

    def integral(self) -> float:
        return float(self._mean_vector @ self.coeffs)

    def l2_norm(self) -> float:
        M = pressure_mass_blocks(self.dofmap)
        return float(np.sqrt(sum(c @ Mk @ c for c, Mk in
                                 ((self.cell_coeffs(k), M[k]) for k in range(self.dofmap.mesh.n_cells)))))

    def mean_free(self) -> "PressureFunction":
        """Subtract the global mean; constants lie in every cell block at index 0."""
        c = self.coeffs.copy()
        mean = self.integral() / self.dofmap.mesh.total_area
        c[self.dofmap.p_offsets[:-1]] -= mean
        return PressureFunction(self.dofmap, c, normalized=True)

    def __sub__(self, other: "PressureFunction") -> "PressureFunction":
        return PressureFunction(self.dofmap, self.coeffs - other.coeffs,
                                self.normalized and other.normalized)


def pressure_mean_vector(dofmap: WgDofMap) -> np.ndarray:
    """``m_q = int_Omega q`` for every pressure basis function."""
    m = np.zeros(dofmap.n_pressure)
    for k in range(dofmap.mesh.n_cells):
        r = dofmap.cell_rule(k)
        B = dofmap.cell_basis(k, dofmap.gamma_of(k)).eval(r.points)
        m[dofmap.pressure_dofs(k)] = r.weights @ B
    return m


def pressure_mass_blocks(dofmap: WgDofMap) -> list[np.ndarray]:
    out = []
    for k in range(dofmap.mesh.n_cells):
        r = dofmap.cell_rule(k)
        B = dofmap.cell_basis(k, dofmap.gamma_of(k)).eval(r.points)
        out.append((B * r.weights[:, None]).T @ B)
    return out


# --- projections -------------------------------------------------------------

def project_Q0(v, dofmap: WgDofMap, k: int) -> np.ndarray:
    """L2 projection of a vector field onto ``[P_alpha(K)]^2``; shape ``(2, dim)``."""
    r = dofmap.cell_rule(k)
    vals = eval_vector(v, r.points)
    return project(dofmap.cell_basis(k, dofmap.alpha_of(k)), r, vals).T


def project_Qb(v, dofmap: WgDofMap, e: int) -> np.ndarray:
    """Edge projection: componentwise on vector edges, of ``v.n_e`` on Darcy edges."""
    r = dofmap.edge_rule(e)
    vals = eval_vector(v, r.points)
    basis = dofmap.edge_basis(e)
    if dofmap.edge_scalar[e]:
        return project(basis, r, vals @ dofmap.mesh.edges[e].normal)
    return project(basis, r, vals).T


def project_Qh(v, dofmap: WgDofMap, keep_boundary: bool = False) -> WgFunction:
    """``Q_h = {Q_0, Q_b}``; boundary traces are zeroed unless ``keep_boundary``."""
    c = np.zeros(dofmap.n_velocity)
    for k in range(dofmap.mesh.n_cells):
        c[dofmap.cell_dofs(k)] = project_Q0(v, dofmap, k).ravel()
    for e, ed in enumerate(dofmap.mesh.edges):
        if ed.kind.is_boundary and not keep_boundary:
            continue
        c[dofmap.edge_dofs(e)] = np.ravel(project_Qb(v, dofmap, e))
    return WgFunction(dofmap, c)


def project_pressure(q, dofmap: WgDofMap, mean_free: bool = True) -> PressureFunction:
    """L2 projection onto ``Psi_h`` (cellwise, then the global mean removed)."""
    c = np.zeros(dofmap.n_pressure)
    for k in range(dofmap.mesh.n_cells):
        r = dofmap.cell_rule(k)
        c[dofmap.pressure_dofs(k)] = project(dofmap.cell_basis(k, dofmap.gamma_of(k)), r,
                                             eval_scalar(q, r.points))
    p = PressureFunction(dofmap, c)
    return p.mean_free() if mean_free else p


def project_tensor(G, dofmap: WgDofMap, k: int) -> np.ndarray:
    """``Pi_h``: projection of a tensor field onto ``[P_beta(K)]^{2x2}``; shape ``(2, 2, dim)``."""
    r = dofmap.cell_rule(k)
    vals = eval_tensor(G, r.points).reshape(len(r.points), 4)
    return project(dofmap.cell_basis(k, dofmap.params.beta), r, vals).T.reshape(2, 2, -1)


def project_scalar(s, dofmap: WgDofMap, k: int) -> np.ndarray:
    """``pi_h``: projection of a scalar field onto ``P_beta(K)``."""
    r = dofmap.cell_rule(k)
    return project(dofmap.cell_basis(k, dofmap.params.beta), r, eval_scalar(s, r.points))
