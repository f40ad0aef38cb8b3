"""Dense estimate of the discrete inf-sup constant.

    beta_h = inf_q sup_v b_h(v, q) / (||v||_V ||q||)

equals the square root of the smallest nonzero generalized eigenvalue of
``(B N^{-1} B^T, M_p)`` where ``N`` is the Gram matrix of the discrete velocity
norm on free DOFs.  Only meant for small meshes.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .assembly import assemble_b_h, norm_matrix
from .mesh import DarcyStokesBox, build_rect_mesh
from .wgspace import WgDofMap, WgParams, pressure_mass_blocks


@dataclass
class InfSupResult:
    n: int
    beta: float
    eigenvalues: np.ndarray   # lowest few generalized eigenvalues
    n_pressure: int
    n_velocity_free: int


def infsup_constant(dofmap: WgDofMap, n_keep: int = 4) -> tuple[float, np.ndarray]:
    """``(beta_h, lowest eigenvalues)``; the constant-pressure mode is discarded."""
    free = dofmap.free
    N = norm_matrix(dofmap)[free][:, free].toarray()
    B = assemble_b_h(dofmap)[:, free].toarray()
    Mp = sla.block_diag(*pressure_mass_blocks(dofmap))
    cf = sla.cho_factor(N)
    S = B @ sla.cho_solve(cf, B.T)
    S = 0.5 * (S + S.T)
    w = sla.eigh(S, Mp, eigvals_only=True)
    # exactly one zero mode (constants); b_h(v, 1) = 0 for v vanishing on the boundary
    scale = max(abs(w[-1]), 1e-300)
    nonzero = w[w > 1e-10 * scale]
    if len(nonzero) != len(w) - 1:
        raise np.linalg.LinAlgError(
            f"expected one null pressure mode, found {len(w) - len(nonzero)}")
    return float(np.sqrt(nonzero[0])), w[:n_keep]


def infsup_probe(n_list=(2, 4, 8), params: WgParams | None = None,
                 domain: DarcyStokesBox | None = None) -> list[InfSupResult]:
    params = params or WgParams()
    out = []
    for n in n_list:
        dm = WgDofMap(build_rect_mesh(n, domain), params)
        beta, w = infsup_constant(dm)
        out.append(InfSupResult(n, beta, w, dm.n_pressure, dm.n_free))
    return out
