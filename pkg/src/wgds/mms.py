"""Manufactured Darcy-Stokes solutions, interpolants, error norms and rate studies.

The reference problem lives on ``(0, pi) x (-1, 1)`` with the Stokes region
above ``y = 0``:

    u_S = (v'(y) cos x, v(y) sin x),   v(y) = sin^2(pi y)/pi^2 - 2
    p_S = sin x sin y
    p_D = (e^y - e^-y) sin x,          u_D = -grad p_D

It satisfies normal continuity and the Beavers-Joseph-Saffman conditions on
``y = 0`` for any viscosity and ``K = I``; ``f_D`` vanishes only for ``K = I``.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .assembly import (SaddleSystem, assemble_a_h, assemble_system, boundary_values,
                       local_a_matrix, _local_dofs)
from .mesh import DarcyStokesBox, EdgeClass, build_rect_mesh
from .solver import SolveOptions, SolveReport, solve
from .weakops import local_element, weak_gradient
from .wgspace import (PressureFunction, WgDofMap, WgFunction, WgParams, eval_scalar,
                      eval_tensor, eval_vector, project_pressure, project_Qb, project_Qh,
                      project_tensor)

log = logging.getLogger(__name__)

ERROR_LABELS = ("H1 u_S", "L2 u_S", "L2 p_S", "L2 u_D", "L2 p_D")

# reference error values per grid: rho -> {n: five error columns}
REFERENCE_TABLES = {
    0.01: {8: (0.76224, 2.26639, 0.84301, 2.54274, 0.91539),
           16: (0.30306, 0.26226, 0.25407, 1.56049, 0.56486),
           32: (0.14960, 0.03332, 0.08316, 0.65226, 0.24125),
           64: (0.07461, 0.00486, 0.02365, 0.20346, 0.07536),
           128: (0.03719, 0.00089, 0.00615, 0.05691, 0.02016)},
    1.0: {8: (0.56159, 0.03842, 0.07539, 0.18953, 0.07511),
          16: (0.28729, 0.00850, 0.02055, 0.06858, 0.01953),
          32: (0.14443, 0.00204, 0.00538, 0.02925, 0.00492),
          64: (0.07231, 0.00050, 0.00137, 0.01381, 0.00123),
          128: (0.03616, 0.00012, 0.00035, 0.00678, 0.00031)},
    100.0: {8: (0.47789, 0.03379, 0.31537, 0.06226, 0.16416),
            16: (0.24268, 0.01117, 0.09409, 0.02190, 0.04211),
            32: (0.12079, 0.00325, 0.02371, 0.00950, 0.01061),
            64: (0.06017, 0.00086, 0.00583, 0.00457, 0.00264),
            128: (0.03004, 0.00022, 0.00144, 0.00227, 0.00066)},
}
REFERENCE_RATES = {
    0.01: (1.0083, 2.7383, 1.7917, 1.6012, 1.6103),
    1.0: (0.9904, 2.0622, 1.9402, 1.1924, 1.9846),
    100.0: (0.9995, 1.8266, 1.9552, 1.1817, 1.9921),
}
REFERENCE_FIT_FROM = {0.01: 16, 1.0: 8, 100.0: 8}


@dataclass
class ExactSolution:
    """Closed-form velocity/pressure on both regions and their derivatives.

    Every callable takes ``(x, y)`` arrays.  Vector fields return ``(2, n)``,
    tensor fields ``(2, 2, n)`` with ``grad[i, j] = d u_i / d x_j``.
    """

    u_s: object
    u_d: object
    p_s: object
    p_d: object
    grad_u_s: object
    grad_u_d: object
    grad_p_s: object
    grad_p_d: object
    lap_u_s: object
    nu: float = 1.0
    K: np.ndarray = field(default_factory=lambda: np.eye(2))
    mu: float = 1.0
    interface_y: float = 0.0

    def _pick(self, fs, fd):
        yI = self.interface_y

        def f(x, y):
            x = np.asarray(x, dtype=float)
            y = np.asarray(y, dtype=float)
            s = np.asarray(fs(x, y), dtype=float)
            d = np.asarray(fd(x, y), dtype=float)
            return np.where(y >= yI, s, d)
        return f

    def for_region(self, region: str):
        """``(velocity, pressure)`` callables of one region."""
        return (self.u_s, self.p_s) if region == "S" else (self.u_d, self.p_d)

    @property
    def velocity(self):
        return self._pick(self.u_s, self.u_d)

    @property
    def pressure(self):
        return self._pick(self.p_s, self.p_d)

    def strain_s(self, x, y):
        G = np.asarray(self.grad_u_s(x, y), dtype=float)
        return 0.5 * (G + G.transpose(1, 0, *range(2, G.ndim)))

    def stress_s(self, x, y):
        T = 2 * self.nu * self.strain_s(x, y)
        p = np.asarray(self.p_s(x, y), dtype=float)
        T[0, 0] -= p
        T[1, 1] -= p
        return T

    def f_s(self, x, y):
        # -div(2 nu D(u)) + grad p = -nu lap u + grad p for divergence-free u
        lap = np.asarray(self.lap_u_s(x, y), dtype=float)
        return -self.nu * lap + np.asarray(self.grad_p_s(x, y), dtype=float)

    def f_d(self, x, y):
        u = np.asarray(self.u_d(x, y), dtype=float)
        Kinv = np.linalg.inv(self.K)
        return np.einsum("ij,j...->i...", Kinv, u) + np.asarray(self.grad_p_d(x, y), dtype=float)

    @property
    def f(self):
        return self._pick(self.f_s, self.f_d)

    def div_s(self, x, y):
        G = np.asarray(self.grad_u_s(x, y), dtype=float)
        return G[0, 0] + G[1, 1]

    def div_d(self, x, y):
        G = np.asarray(self.grad_u_d(x, y), dtype=float)
        return G[0, 0] + G[1, 1]

    @property
    def g(self):
        return self._pick(self.div_s, self.div_d)

    def mean_pressure(self, dofmap: WgDofMap) -> float:
        """``(1/|Omega|) int p`` by cell quadrature with each region's own pressure."""
        total = 0.0
        mesh = dofmap.mesh
        for k in range(mesh.n_cells):
            r = dofmap.cell_rule(k)
            p = self.for_region(mesh.regions[k])[1]
            total += float(r.weights @ eval_scalar(p, r.points))
        return total / mesh.total_area


def exact_fields(nu: float = 1.0, K=None, mu: float = 1.0) -> ExactSolution:
    """The reference smooth solution (valid interface data for any ``nu``, ``mu``)."""
    pi = np.pi

    def v(y):
        return np.sin(pi * y) ** 2 / pi ** 2 - 2.0

    def dv(y):
        return np.sin(2 * pi * y) / pi

    def d2v(y):
        return 2.0 * np.cos(2 * pi * y)

    def d3v(y):
        return -4.0 * pi * np.sin(2 * pi * y)

    def u_s(x, y):
        return np.array([dv(y) * np.cos(x), v(y) * np.sin(x)])

    def grad_u_s(x, y):
        return np.array([[-dv(y) * np.sin(x), d2v(y) * np.cos(x)],
                         [v(y) * np.cos(x), dv(y) * np.sin(x)]])

    def lap_u_s(x, y):
        return np.array([(d3v(y) - dv(y)) * np.cos(x), (d2v(y) - v(y)) * np.sin(x)])

    def p_s(x, y):
        return np.sin(x) * np.sin(y)

    def grad_p_s(x, y):
        return np.array([np.cos(x) * np.sin(y), np.sin(x) * np.cos(y)])

    def p_d(x, y):
        return (np.exp(y) - np.exp(-y)) * np.sin(x)

    def grad_p_d(x, y):
        return np.array([(np.exp(y) - np.exp(-y)) * np.cos(x), (np.exp(y) + np.exp(-y)) * np.sin(x)])

    def u_d(x, y):
        return -grad_p_d(x, y)

    def grad_u_d(x, y):
        s, c = np.exp(y) - np.exp(-y), np.exp(y) + np.exp(-y)
        return -np.array([[-s * np.sin(x), c * np.cos(x)],
                          [c * np.cos(x), s * np.sin(x)]])

    return ExactSolution(u_s, u_d, p_s, p_d, grad_u_s, grad_u_d, grad_p_s, grad_p_d, lap_u_s,
                         nu=nu, K=np.eye(2) if K is None else np.asarray(K, dtype=float), mu=mu)


def polynomial_fields(c: float = 1.0, a: float = 0.5, b: float = -0.25, d: float = 0.1,
                      nu: float = 1.0, K=None, mu: float = 1.0) -> ExactSolution:
    """A coupled solution reproduced exactly when ``gamma >= 1``.

    Velocity ``(0, c)`` on both sides and one linear pressure ``a x + b y + d``:
    zero strain, no tangential slip on ``y = 0``, and matching pressures.
    """
    def u(x, y):
        x = np.asarray(x, dtype=float)
        return np.array([np.zeros_like(x), c + np.zeros_like(x)])

    def zero_t(x, y):
        x = np.asarray(x, dtype=float)
        z = np.zeros_like(x)
        return np.array([[z, z], [z, z]])

    def p(x, y):
        return a * np.asarray(x, dtype=float) + b * np.asarray(y, dtype=float) + d

    def gp(x, y):
        x = np.asarray(x, dtype=float)
        return np.array([a + 0 * x, b + 0 * x])

    def lap(x, y):
        x = np.asarray(x, dtype=float)
        return np.array([0 * x, 0 * x])

    return ExactSolution(u, u, p, p, zero_t, zero_t, gp, gp, lap,
                         nu=nu, K=np.eye(2) if K is None else np.asarray(K, dtype=float), mu=mu)


def forcing(exact: ExactSolution):
    """``(f, g)`` as piecewise callables on the whole domain."""
    return exact.f, exact.g


def forcing_fd_check(exact: ExactSolution, pts, step: float = 1e-4) -> float:
    """Max deviation of the closed-form Stokes forcing from central differences."""
    pts = np.atleast_2d(pts)
    x, y = pts[:, 0], pts[:, 1]
    hs = step

    def stress_div(x, y):
        out = np.zeros((2, len(x)))
        for j, (dx, dy) in enumerate(((hs, 0.0), (0.0, hs))):
            Tp = exact.stress_s(x + dx, y + dy)
            Tm = exact.stress_s(x - dx, y - dy)
            out += (Tp[:, j] - Tm[:, j]) / (2 * hs)
        return out

    fd = -stress_div(x, y)
    return float(np.abs(fd - exact.f_s(x, y)).max())


# --- interpolants ----------------------------------------------------------------

def _check_reference_config(dofmap: WgDofMap):
    p = dofmap.params
    if (p.alpha_s, p.alpha_d, p.beta, p.gamma_s, p.gamma_d) != (1, 1, 1, 0, 0):
        raise ValueError("nodal interpolants are defined for alpha_S = alpha_D = beta = 1, gamma = 0")
    from .polyquad import _is_axis_rectangle
    for k in range(dofmap.mesh.n_cells):
        if not _is_axis_rectangle(dofmap.mesh.cell_vertices(k)):
            raise ValueError(f"cell {k} is not an axis-aligned rectangle")


def _region_velocity(u, region):
    return u.for_region(region)[0] if isinstance(u, ExactSolution) else u


def _region_pressure(p, region):
    return p.for_region(region)[1] if isinstance(p, ExactSolution) else p


def interpolate_Ih(u, dofmap: WgDofMap) -> WgFunction:
    """P1 nodal interpolant: cells through their lower-left, lower-right and
    upper-left corners; edges through their endpoints (normal part on Darcy edges)."""
    _check_reference_config(dofmap)
    mesh = dofmap.mesh
    c = np.zeros(dofmap.n_velocity)
    for k in range(mesh.n_cells):
        P = mesh.cell_vertices(k)
        x0, y0 = P.min(axis=0)
        x1, y1 = P.max(axis=0)
        uk = _region_velocity(u, mesh.regions[k])
        corners = np.array([[x0, y0], [x1, y0], [x0, y1]])
        vals = eval_vector(uk, corners)      # (3, 2)
        slope_x = (vals[1] - vals[0]) / (x1 - x0)
        slope_y = (vals[2] - vals[0]) / (y1 - y0)
        xc, yc = mesh.centroids[k]
        hK = mesh.h_cells[k]
        c0 = vals[0] + slope_x * (xc - x0) + slope_y * (yc - y0)
        # basis order (1, X, Y) with X = (x - xc)/h
        coeffs = np.stack([c0, slope_x * hK, slope_y * hK], axis=1)  # (2, 3)
        c[dofmap.cell_dofs(k)] = coeffs.ravel()
    V = mesh.vertices
    for e, ed in enumerate(mesh.edges):
        region = mesh.regions[ed.left]
        ue = _region_velocity(u, region)
        vals = eval_vector(ue, np.array([V[ed.a], V[ed.b]]))
        # Legendre P0 = 1, P1 = t with t = -1 at a and +1 at b
        if dofmap.edge_scalar[e]:
            s = vals @ ed.normal
            c[dofmap.edge_dofs(e)] = [(s[0] + s[1]) / 2, (s[1] - s[0]) / 2]
        else:
            c[dofmap.edge_dofs(e)] = np.concatenate([[(vals[0, i] + vals[1, i]) / 2,
                                                      (vals[1, i] - vals[0, i]) / 2] for i in range(2)])
    return WgFunction(dofmap, c)


def interpolate_Jh(p, dofmap: WgDofMap, mean: float = 0.0) -> PressureFunction:
    """Cellwise constant equal to ``p`` at the cell centre, minus ``mean``."""
    _check_reference_config(dofmap)
    mesh = dofmap.mesh
    c = np.zeros(dofmap.n_pressure)
    for k in range(mesh.n_cells):
        pk = _region_pressure(p, mesh.regions[k])
        c[dofmap.p_offsets[k]] = eval_scalar(pk, mesh.centroids[k][None, :])[0] - mean
    return PressureFunction(dofmap, c, normalized=mean != 0.0)


# --- error norms -----------------------------------------------------------------

@dataclass
class ErrorReport:
    n: int
    h: float
    errors: tuple
    mode: str
    projection_errors: tuple | None = None
    info: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"n": self.n, "h": self.h, "mode": self.mode,
                **{lab: val for lab, val in zip(ERROR_LABELS, self.errors)}}


def _norms(eu: WgFunction, ep: PressureFunction, gradient_norm: str = "strain") -> tuple:
    dm = eu.dofmap
    mesh = dm.mesh
    sq = np.zeros(5)
    for k in range(mesh.n_cells):
        el = local_element(dm, k)
        c0 = eu.cell_coeffs(k)
        l2u = sum(c0[i] @ el.M_alpha @ c0[i] for i in range(2))
        cp = ep.cell_coeffs(k)
        Mg = el.M_gamma_beta[:, :len(cp)]
        l2p = cp @ Mg @ cp
        if mesh.is_stokes(k):
            g = weak_gradient(dm, k, eu)
            if gradient_norm == "strain":
                g = 0.5 * (g + g.transpose(1, 0, 2))
            sq[0] += sum(g[i, j] @ el.M_beta @ g[i, j] for i in range(2) for j in range(2))
            sq[1] += l2u
            sq[2] += l2p
        else:
            sq[3] += l2u
            sq[4] += l2p
    return tuple(float(v) for v in np.sqrt(np.maximum(sq, 0.0)))


def error_norms(u_h: WgFunction, p_h: PressureFunction, exact: ExactSolution,
                mode: str = "interpolant", pressure_mean: str = "exact",
                gradient_norm: str = "strain") -> ErrorReport:
    """The five tabulated quantities for ``u_hat - u_h`` and ``p_hat - p_h``.

    ``mode='interpolant'`` compares with ``(I_h u, J_h p)``; ``'projection'``
    with ``(Q_h u, QQ_h p)``.  ``pressure_mean`` selects how the exact
    pressure is made mean-free before interpolation: ``exact`` subtracts
    its continuous mean, ``discrete`` subtracts the mean of ``J_h p``.
    The first column uses the symmetric part of the weak gradient
    (``gradient_norm='strain'``, the quantity the reference tables report)
    or the full weak gradient (``'full'``).
    """
    if gradient_norm not in ("strain", "full"):
        raise ValueError(f"unknown gradient_norm {gradient_norm!r}")
    dm = u_h.dofmap
    mesh = dm.mesh
    if mode == "interpolant":
        uhat = interpolate_Ih(exact, dm)
        if pressure_mean == "exact":
            phat = interpolate_Jh(exact, dm, mean=exact.mean_pressure(dm))
        elif pressure_mean == "discrete":
            phat = interpolate_Jh(exact, dm).mean_free()
        else:
            raise ValueError(f"unknown pressure_mean {pressure_mean!r}")
    elif mode == "projection":
        uhat = project_Qh(exact.velocity, dm, keep_boundary=True)
        phat = project_pressure(exact.pressure, dm)
    else:
        raise ValueError(f"unknown error mode {mode!r}")
    errs = _norms(uhat - u_h, phat - p_h.mean_free(), gradient_norm)
    return ErrorReport(0, mesh.h, errs, mode)


# --- driver ------------------------------------------------------------------------

@dataclass
class MMSRun:
    dofmap: WgDofMap
    system: SaddleSystem
    report: SolveReport
    errors: ErrorReport
    timings: dict


def run_mms(n: int, params: WgParams, exact: ExactSolution | None = None,
            boundary: str = "interpolant", error_mode: str = "interpolant",
            pressure_mean: str = "exact", gradient_norm: str = "strain",
            solver: SolveOptions | None = None,
            domain: DarcyStokesBox | None = None, mesh=None) -> MMSRun:
    """Mesh, assemble, solve and measure errors for one grid size.

    A prebuilt ``mesh`` replaces the ``n x 2n`` rectangle grid.
    """
    exact = exact or exact_fields(params.nu, params.K, params.mu)
    t0 = time.perf_counter()
    mesh = mesh if mesh is not None else build_rect_mesh(n, domain)
    dm = WgDofMap(mesh, params)
    t1 = time.perf_counter()
    f, g = forcing(exact)
    if boundary == "interpolant":
        ub = interpolate_Ih(exact, dm).coeffs[dm.fixed]
    else:
        ub = boundary_values(exact.velocity, dm, mode=boundary)
    system = assemble_system(dm, f, g, ub)
    t2 = time.perf_counter()
    rep = solve(system, solver)
    t3 = time.perf_counter()
    err = error_norms(rep.velocity, rep.pressure, exact, error_mode, pressure_mean, gradient_norm)
    err.n = n
    t4 = time.perf_counter()
    timings = {"mesh": t1 - t0, "assemble": t2 - t1, "solve": t3 - t2, "errors": t4 - t3}
    err.info = {"residuals": rep.residuals, "timings": timings,
                "n_velocity_free": dm.n_free, "n_pressure": dm.n_pressure}
    return MMSRun(dm, system, rep, err, timings)


def pairwise_rates(errors: np.ndarray) -> np.ndarray:
    """``log2(err(n)/err(2n))`` for consecutive rows."""
    e = np.asarray(errors, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.log2(e[:-1] / e[1:])


def fitted_rates(hs, errors) -> np.ndarray:
    """Least-squares slope of ``log err`` against ``log h`` per column."""
    hs = np.log(np.asarray(hs, dtype=float))
    e = np.log(np.asarray(errors, dtype=float))
    A = np.column_stack([hs, np.ones_like(hs)])
    coef, *_ = np.linalg.lstsq(A, e, rcond=None)
    return coef[0]


def endpoint_rates(hs, errors) -> np.ndarray:
    hs = np.asarray(hs, dtype=float)
    e = np.asarray(errors, dtype=float)
    return np.log(e[0] / e[-1]) / np.log(hs[0] / hs[-1])


@dataclass
class ConvergenceTable:
    rho: float
    params: WgParams
    rows: list
    failures: dict
    fit_from: int | None = None

    @property
    def ns(self) -> list[int]:
        return [r.n for r in self.rows]

    def _fit_rows(self):
        rows = [r for r in self.rows if self.fit_from is None or r.n >= self.fit_from]
        return rows

    @property
    def rates_lsq(self) -> np.ndarray | None:
        rows = self._fit_rows()
        if len(rows) < 2:
            return None
        return fitted_rates([r.h for r in rows], np.array([r.errors for r in rows]))

    @property
    def rates_endpoint(self) -> np.ndarray | None:
        rows = self._fit_rows()
        if len(rows) < 2:
            return None
        return endpoint_rates([r.h for r in rows], np.array([r.errors for r in rows]))

    @property
    def rates_pairwise(self) -> np.ndarray | None:
        if len(self.rows) < 2:
            return None
        return pairwise_rates(np.array([r.errors for r in self.rows]))


def convergence_study(n_list, params: WgParams, rho: float | None = None,
                      fit_from: int | None = None, workers: int = 1, **kw) -> ConvergenceTable:
    """Run :func:`run_mms` for each ``n``; failed rows are recorded, not raised."""
    n_list = list(n_list)
    if sorted(n_list) != n_list:
        raise ValueError("n_list must be ascending")
    for a in n_list[1:]:
        ratio = a / n_list[0]
        if ratio != int(ratio) or int(ratio) & (int(ratio) - 1):
            raise ValueError("each n must be a power-of-two multiple of the first")
    if rho is not None:
        params = WgParams(**{**params.__dict__, "rho_s": rho, "rho_d": rho})

    def one(n):
        log.info("n=%d rho=%g", n, params.rho_s)
        return run_mms(n, params, **kw).errors

    results, failures = {}, {}
    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(workers) as ex:
            futs = {n: ex.submit(one, n) for n in n_list}
            for n, fu in futs.items():
                try:
                    results[n] = fu.result()
                except Exception as exc:  # noqa: BLE001 - recorded per row
                    failures[n] = repr(exc)
    else:
        for n in n_list:
            try:
                results[n] = one(n)
            except Exception as exc:  # noqa: BLE001
                failures[n] = repr(exc)
    rows = [results[n] for n in n_list if n in results]
    return ConvergenceTable(params.rho_s, params, rows, failures, fit_from)


# --- consistency functionals -----------------------------------------------------

@dataclass
class Functionals:
    """Linear functionals of the error equation as vectors over velocity DOFs."""

    s_Qu: np.ndarray
    l_S: np.ndarray
    l_D: np.ndarray
    l_div: np.ndarray
    l_I: np.ndarray

    def rhs(self) -> np.ndarray:
        return self.s_Qu + self.l_S - self.l_D - self.l_div - self.l_I

    def evaluate(self, v) -> dict:
        c = v.coeffs if isinstance(v, WgFunction) else np.asarray(v)
        return {k: float(getattr(self, k) @ c) for k in ("s_Qu", "l_S", "l_D", "l_div", "l_I")}


def diagnostics_functionals(exact: ExactSolution, dofmap: WgDofMap) -> Functionals:
    """``s(Q_h u, .)``, ``l_S``, ``l_D``, ``l_div`` and ``l_I`` by quadrature."""
    params = dofmap.params
    mesh = dofmap.mesh
    ldofs = _local_dofs(dofmap)
    n = dofmap.n_velocity
    l_S, l_D, l_div, l_I = (np.zeros(n) for _ in range(4))

    Qu = project_Qh(exact.velocity, dofmap, keep_boundary=True)
    A_stab = assemble_a_h(dofmap, parts=("stab",))
    s_Qu = A_stab @ Qu.coeffs

    p_mean = exact.mean_pressure(dofmap)
    Kinv = np.linalg.inv(exact.K)
    for k in range(mesh.n_cells):
        el = local_element(dofmap, k)
        c = mesh.centroids[k]
        d = ldofs[k]
        region = mesh.regions[k]
        u_k, p_k = exact.for_region(region)

        def p_free(x, y, p_k=p_k):
            return np.asarray(p_k(x, y), dtype=float) - p_mean

        # cellwise projection of p onto P_gamma(K)
        r = dofmap.cell_rule(k)
        Bg = dofmap.cell_basis(k, el.gamma)
        Mg = (Bg.eval(r.points) * r.weights[:, None]).T @ Bg.eval(r.points)
        pc = np.linalg.solve(Mg, (Bg.eval(r.points) * r.weights[:, None]).T @ eval_scalar(p_free, r.points))

        if region == "S":
            PiD = project_tensor(exact.strain_s, dofmap, k)
            Bb = dofmap.cell_basis(k, params.beta)
        for le in el.edges:
            pts = le.points + c
            jump = le.V0 - le.Vb
            if region == "S":
                Du = eval_tensor(exact.strain_s, pts)
                PiDu = np.einsum("ijm,qm->qij", PiD, Bb.eval(pts))
                Rn = np.einsum("qij,j->qi", Du - PiDu, le.normal_out)
                l_S[d] += 2 * exact.nu * np.einsum("q,qcl,qc->l", le.weights, jump, Rn)
            dp = eval_scalar(p_free, pts) - Bg.eval(pts) @ pc
            jn = np.einsum("c,qcl->ql", le.normal_out, jump)
            l_div[d] += np.einsum("q,ql,q->l", le.weights, jn, dp)
        if region == "D":
            pts = el.points + c
            u_vals = eval_vector(u_k, pts)
            Bq = dofmap.cell_basis(k, el.alpha).eval(pts)
            Q0 = Bq @ Qu.cell_coeffs(k).T
            diff = (u_vals - Q0) @ Kinv.T
            l_D[d] += np.einsum("q,qc,qcl->l", el.weights, diff, el.V0)

    for e in mesh.edges_of_kind(EdgeClass.INTERFACE):
        ed = mesh.edges[e]
        r = dofmap.edge_rule(e)
        Be = dofmap.edge_basis(e).eval(r.points)
        us = eval_vector(exact.u_s, r.points)
        Qb = Be @ project_Qb(exact.u_s, dofmap, e).T
        t = ed.tangent
        wgt = params.bjs_weight(t)
        diff_t = (us - Qb) @ t
        vec = np.concatenate([t[0] * Be, t[1] * Be], axis=1)  # vb.t per edge DOF
        l_I[dofmap.edge_dofs(e)] += wgt * np.einsum("q,q,ql->l", r.weights, diff_t, vec)
    return Functionals(s_Qu, l_S, l_D, l_div, l_I)


def reference_params(rho: float, **overrides) -> WgParams:
    """Lowest-order setting of the tabulated experiment: ``(1, 1, 1, 0, 0)`` and
    ``rho_S = rho_D = rho``, stabiliser scaled by the longest cell edge."""
    kw = dict(rho_s=rho, rho_d=rho, stab_length="max_edge")
    kw.update(overrides)
    return WgParams(**kw)
