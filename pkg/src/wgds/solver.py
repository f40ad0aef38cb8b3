"""Solve the boundary-reduced saddle system with a zero-mean pressure multiplier."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import SaddleSystem, apply_boundary_conditions
from .wgspace import PressureFunction, WgFunction, pressure_mass_blocks


class SolverError(RuntimeError):
    pass


@dataclass
class SolveOptions:
    mode: str = "auto"         # "auto", "direct", "augmented" or "iterative"
    tol: float = 1e-10
    max_iter: int = 500
    preconditioner: object = "block"   # iterative mode: "block", None, or a factory
    augmentation: float | None = None  # r in A + r B^T M_p^{-1} B; None picks a scale
    direct_limit: int = 20000          # "auto" uses the full LU below this size


@dataclass
class SolveReport:
    velocity: WgFunction
    pressure: PressureFunction
    residuals: dict
    stats: dict = field(default_factory=dict)
    wall_time: float = 0.0

    @property
    def multiplier(self) -> float:
        return self.stats.get("multiplier", 0.0)


def residuals(system: SaddleSystem, u: np.ndarray, p: np.ndarray, lam: float) -> dict:
    """Relative residual norms of the momentum, mass and mean equations."""
    r_mom = system.A @ u + system.B.T @ p - system.F
    r_mass = system.B @ u - system.G + system.m * lam
    r_mean = float(system.m @ p)
    scale_mom = max(np.linalg.norm(system.F), np.linalg.norm(system.A @ u), 1e-300)
    scale_mass = max(np.linalg.norm(system.G), np.linalg.norm(system.B @ u), 1e-300)
    return {
        "momentum": float(np.linalg.norm(r_mom) / scale_mom),
        "mass": float(np.linalg.norm(r_mass) / scale_mass),
        "mean": abs(r_mean),
        "momentum_abs": float(np.linalg.norm(r_mom)),
        "mass_abs": float(np.linalg.norm(r_mass)),
    }


def constant_pressure(dofmap) -> np.ndarray:
    """Coefficients of ``q = 1`` (the leading basis function of each cell is 1)."""
    one = np.zeros(dofmap.n_pressure)
    one[dofmap.p_offsets[:-1]] = 1.0
    return one


def _spd_factor(M: sp.spmatrix):
    """Sparse LU without pivoting for an SPD matrix, minimum-degree ordering on ``M + M^T``."""
    return spla.splu(M.tocsc(), permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                     options=dict(SymmetricMode=True))


class _Augmented:
    """Augmented-Lagrangian form of the reduced system.

    ``B^T 1 = 0`` on free velocity DOFs, so the mean multiplier is known in
    closed form and the mass right-hand side can be made compatible first.
    Adding ``r B^T W (B u - G)`` with ``W = M_p^{-1}`` leaves the solution
    unchanged and makes ``W`` a spectrally equivalent preconditioner for the
    pressure Schur complement.  Large ``r`` loses digits to cancellation, so
    ``r`` follows the viscous/permeability scale and a few refinement steps
    against the unaugmented system clean up the rest.
    """

    def __init__(self, red: SaddleSystem, r: float | None):
        dm = red.dofmap
        self.red = red
        self.one = constant_pressure(dm)
        self.lam = float(self.one @ red.G / (self.one @ red.m))
        self.G = red.G - red.m * self.lam
        self.W = sp.block_diag([np.linalg.inv(M) for M in pressure_mass_blocks(dm)]).tocsr()
        if r is None:
            prm = dm.params
            r = 10.0 * max(prm.nu, float(np.linalg.eigvalsh(prm.K_inv).max()))
        self.r = r
        self.Ar = (red.A + r * (red.B.T @ self.W @ red.B)).tocsc()
        self.Fr = red.F + r * (red.B.T @ (self.W @ self.G))
        self.lu = _spd_factor(self.Ar)

    def mean_free(self, p):
        return p - (self.red.m @ p) / (self.one @ self.red.m) * self.one

    def range_part(self, g):
        """Drop the component along constants; ``S 1 = 0`` so it is pure roundoff."""
        return g - (self.one @ g) / (self.one @ self.one) * self.one

    def _inner(self, F, G, tol, max_iter, atol=0.0):
        B, lu = self.red.B, self.lu
        n = B.shape[0]
        Fr = F + self.r * (B.T @ (self.W @ G))
        S = spla.LinearOperator((n, n), matvec=lambda q: self.range_part(B @ lu.solve(B.T @ q)),
                                dtype=float)
        # keep every search direction mean-free so iterates cannot drift along constants
        P = spla.LinearOperator((n, n), matvec=lambda r: self.mean_free(self.W @ r), dtype=float)
        rhs = self.range_part(B @ lu.solve(Fr) - G)
        count = [0]

        def cb(_):
            count[0] += 1
        p, info = spla.cg(S, rhs, M=P, rtol=tol * 1e-2, atol=atol, maxiter=max_iter, callback=cb)
        p = self.mean_free(p)
        return lu.solve(Fr - B.T @ p), p, info, count[0]

    def solve(self, tol: float, max_iter: int, refine: int = 3):
        red, B = self.red, self.red.B
        u, p, info, its = self._inner(red.F, self.G, tol, max_iter)
        # corrections only need to reach roundoff of the first solve
        atol = tol * 1e-3 * np.linalg.norm(B @ self.lu.solve(red.F) - self.G)
        for _ in range(refine):
            rF = red.F - red.A @ u - red.B.T @ p
            rG = self.G - red.B @ u
            if (np.linalg.norm(rF) <= tol * 1e-3 * max(np.linalg.norm(red.F), 1e-300)
                    and np.linalg.norm(rG) <= tol * 1e-3 * max(np.linalg.norm(self.G), np.linalg.norm(red.B @ u), 1e-300)):
                break
            du, dp, info2, its2 = self._inner(rF, rG, tol, max_iter, atol)
            u, p = u + du, self.mean_free(p + dp)
            info, its = max(info, info2), its + its2
        return u, p, info, its


def _block_preconditioner(aug: _Augmented):
    """``diag(A_r^{-1}, W / r)`` for the augmented saddle matrix."""
    nu = aug.Ar.shape[0]
    npr = aug.W.shape[0]
    scale = 1.0 / aug.r

    def apply(x):
        y = np.empty_like(x)
        y[:nu] = aug.lu.solve(x[:nu])
        y[nu:] = aug.mean_free(scale * (aug.W @ x[nu:]))
        return y

    return spla.LinearOperator((nu + npr, nu + npr), matvec=apply, dtype=float)


def solve(system: SaddleSystem, opts: SolveOptions | None = None) -> SolveReport:
    """Solve ``[A B^T 0; B 0 m; 0 m^T 0] [u; p; lam] = [F; G; 0]``.

    ``direct`` factorises the bordered matrix with pivoting; ``augmented``
    factorises the SPD augmented velocity block and runs preconditioned CG on
    the pressure; ``iterative`` runs MINRES on the augmented saddle matrix.
    """
    opts = opts or SolveOptions()
    t0 = time.perf_counter()
    red = apply_boundary_conditions(system)
    nu, npr = red.n_u, red.n_p
    n_total = nu + npr + 1
    mode = opts.mode
    if mode == "auto":
        mode = "direct" if n_total <= opts.direct_limit else "augmented"
    stats = {"mode": mode, "n_unknowns": n_total}
    rhs_norm = np.linalg.norm(red.F) + np.linalg.norm(red.G)

    if rhs_norm == 0:
        u_free, p, lam = np.zeros(nu), np.zeros(npr), 0.0
        stats["trivial"] = True
    elif mode == "direct":
        K = red.matrix(with_mean=True).tocsc()
        stats["nnz"] = int(K.nnz)
        try:
            lu = spla.splu(K, permc_spec="COLAMD")
        except RuntimeError as exc:
            raise SolverError(f"factorization failed: {exc} "
                              f"(system size {K.shape[0]}, nnz {K.nnz})") from exc
        x = lu.solve(red.rhs(with_mean=True))
        diagU = np.abs(lu.U.diagonal())
        stats["min_pivot"] = float(diagU.min())
        stats["max_pivot"] = float(diagU.max())
        if not np.all(np.isfinite(x)):
            raise SolverError(f"direct solve produced non-finite values; min |pivot| = {diagU.min():.3e}")
        u_free, p, lam = x[:nu], x[nu:nu + npr], float(x[-1])
    elif mode in ("augmented", "iterative"):
        try:
            aug = _Augmented(red, opts.augmentation)
        except RuntimeError as exc:
            raise SolverError(f"factorization of the augmented block failed: {exc}") from exc
        stats["augmentation"] = aug.r
        lam = aug.lam
        if mode == "augmented":
            u_free, p, info, its = aug.solve(opts.tol, opts.max_iter)
        else:
            K = sp.bmat([[aug.Ar, red.B.T], [red.B, None]], format="csr")
            b = np.concatenate([aug.Fr, aug.G])
            M = None
            if opts.preconditioner == "block":
                M = _block_preconditioner(aug)
            elif callable(opts.preconditioner):
                M = opts.preconditioner(aug)
            history = []
            x, info = spla.minres(K, b, M=M, rtol=opts.tol * 1e-4, maxiter=opts.max_iter,
                                  callback=lambda xk: history.append(float(np.linalg.norm(K @ xk - b))))
            its = len(history)
            stats["residual_history"] = history
            u_free, p = x[:nu], aug.mean_free(x[nu:])
        stats["iterations"] = its
        if info != 0:
            raise SolverError(f"{mode} solve did not converge in {opts.max_iter} iterations (info={info})")
    else:
        raise SolverError(f"unknown solver mode {opts.mode!r}")

    res = residuals(red, u_free, p, lam)
    stats["multiplier"] = lam
    rel = max(res["momentum"], res["mass"]) if rhs_norm > 0 else 0.0
    if rel > opts.tol:
        raise SolverError(f"relative algebraic residual {rel:.3e} exceeds tolerance {opts.tol:.1e}")
    u = WgFunction(system.dofmap, red.full_velocity(u_free))
    ph = PressureFunction(system.dofmap, p, normalized=True)
    return SolveReport(u, ph, res, stats, time.perf_counter() - t0)


def unreduced_residuals(system: SaddleSystem, report: SolveReport) -> dict:
    """Residuals recomputed on the full system, restricted to free velocity rows."""
    dm = system.dofmap
    u = report.velocity.coeffs
    p = report.pressure.coeffs
    lam = report.multiplier
    r_mom = (system.A @ u + system.B.T @ p - system.F)[dm.free]
    r_mass = system.B @ u - system.G + system.m * lam
    return {"momentum_abs": float(np.linalg.norm(r_mom)),
            "mass_abs": float(np.linalg.norm(r_mass)),
            "mean": abs(float(system.m @ p))}
