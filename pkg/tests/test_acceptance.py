"""The ten acceptance criteria, each recorded as one PASS/FAIL summary line."""
import numpy as np
import pytest

from conftest import ACCEPTANCE
from polyfields import PolyField, commuting_defect
from wgds.assembly import (apply_boundary_conditions, assemble_a_h, assemble_b_h, assemble_rhs,
                           assemble_system)
from wgds.infsup import infsup_probe
from wgds.mesh import build_rect_mesh, check_colorable
from wgds.mms import (REFERENCE_RATES, REFERENCE_TABLES, convergence_study,
                      diagnostics_functionals, exact_fields, forcing, reference_params)
from wgds.solver import solve
from wgds.wgspace import WgDofMap, WgParams, project_pressure, project_Qh

pytestmark = pytest.mark.slow

TABLE_RTOL = 0.02


def record(key, ok, msg):
    ACCEPTANCE[key] = (bool(ok), msg)
    assert ok, msg


_studies = {}


def study(rho, ns):
    key = (rho, tuple(ns))
    if key not in _studies:
        _studies[key] = convergence_study(ns, reference_params(rho))
    t = _studies[key]
    assert not t.failures, t.failures
    return t


def table_deviation(t, rho, ns):
    worst = (0.0, None)
    for row in t.rows:
        if row.n not in ns:
            continue
        for j, (e, r) in enumerate(zip(row.errors, REFERENCE_TABLES[rho][row.n])):
            d = abs(e - r) / r
            if d > worst[0]:
                worst = (d, (row.n, j + 1, e, r))
    return worst


def printed_agreement(e, r):
    # reference entries are printed to 5 decimals
    return abs(e - r) <= TABLE_RTOL * r or round(e, 5) == r


@pytest.mark.parametrize("key,rho", [(1, 1.0), (2, 100.0)])
def test_table_reproduction(key, rho):
    ns = [8, 16, 32, 64, 128]
    t = study(rho, ns)
    worst, where = table_deviation(t, rho, ns[:-1])
    opt = [(j + 1, e, r) for row in t.rows if row.n == 128
           for j, (e, r) in enumerate(zip(row.errors, REFERENCE_TABLES[rho][128]))]
    opt_ok = all(printed_agreement(e, r) for _, e, r in opt)
    opt_worst = max(abs(e - r) / r for _, e, r in opt)
    msg = (f"rho={rho:g}: max rel. deviation n=8..64 {worst:.4f} (at n,col={where[:2]}); "
           f"n=128 max {opt_worst:.4f}, {'agrees' if opt_ok else 'DISAGREES'} to printed digits")
    record(key, worst <= TABLE_RTOL and opt_ok, msg)


def test_table1_rates():
    t = study(0.01, [16, 32, 64])
    r = t.rates_lsq
    ref = np.array(REFERENCE_RATES[0.01])
    dev = np.abs(r - ref)
    record(3, np.all(dev <= 0.2),
           f"rho=0.01 fitted 16->64 rates {np.round(r, 4).tolist()}; max |dev| {dev.max():.4f}")


def test_rate_floors():
    msgs, ok = [], True
    for rho in (1.0, 100.0):
        r = study(rho, [8, 16, 32, 64, 128]).rates_lsq
        good = r[0] >= 0.9 and r[2] >= 0.9 and r[4] >= 0.9 and r[1] >= 1.8
        ok &= good
        msgs.append(f"rho={rho:g}: {np.round(r, 4).tolist()}")
    record(4, ok, "fitted 8->128 rates " + "; ".join(msgs))


def test_commuting_diagram():
    worst = 0.0
    rng = np.random.default_rng(2024)
    for alpha_s, beta in ((1, 1), (2, 1)):
        p = WgParams(alpha_s=alpha_s, alpha_d=beta, beta=beta, gamma_s=alpha_s - 1, gamma_d=beta - 1)
        dm = WgDofMap(build_rect_mesh(4), p)
        for _ in range(100):
            worst = max(worst, commuting_defect(dm, PolyField(rng, int(rng.integers(0, 5)))))
    record(5, worst <= 1e-10, f"max coefficient defect over 200 fields: {worst:.2e}")


def test_well_posedness():
    lines, ok = [], True
    for n in (1, 2, 4):
        dm = WgDofMap(build_rect_mesh(n), WgParams())
        A = assemble_a_h(dm)[dm.free][:, dm.free].toarray()
        w = np.linalg.eigvalsh(A)
        K = apply_boundary_conditions(assemble_system(dm)).matrix().toarray()
        s = np.linalg.svd(K, compute_uv=False)
        rep = solve(assemble_system(dm))
        zero = max(np.abs(rep.velocity.coeffs).max(), np.abs(rep.pressure.coeffs).max())
        good = w.min() > 1e-12 * np.linalg.norm(A, 2) and s.min() > 1e-12 * s.max() and zero <= 1e-12
        ok &= good
        lines.append(f"n={n}: lambda_min(A)/||A||={w.min() / w.max():.2e}, "
                     f"sigma_min/sigma_max={s.min() / s.max():.2e}, zero-data |x|={zero:.0e}")
    record(6, ok, "; ".join(lines))


def test_infsup():
    msgs, ok = [], True
    for rho in (1.0, 100.0):
        res = infsup_probe((2, 4, 8), reference_params(rho))
        b = [r.beta for r in res]
        ok &= min(b) > 0 and b[0] / b[-1] < 2.0
        msgs.append(f"rho={rho:g}: beta_h={np.round(b, 4).tolist()} ratio {b[0] / b[-1]:.3f}")
    record(7, ok, "; ".join(msgs))


def test_error_equation_identity():
    p = WgParams(cell_exactness=14, edge_exactness=14)
    dm = WgDofMap(build_rect_mesh(4), p)
    ex = exact_fields()
    fn = diagnostics_functionals(ex, dm)
    A, B = assemble_a_h(dm), assemble_b_h(dm)
    F, _ = assemble_rhs(dm, *forcing(ex))
    Qu = project_Qh(ex.velocity, dm, keep_boundary=True).coeffs
    Qp = project_pressure(ex.pressure, dm).coeffs
    rng = np.random.default_rng(8)
    worst = 0.0
    for _ in range(10):
        v = np.zeros(dm.n_velocity)
        v[dm.free] = rng.standard_normal(dm.n_free)
        lhs = v @ (A @ Qu) + (B @ v) @ Qp - F @ v
        worst = max(worst, abs(lhs - fn.rhs() @ v))
    record(8, worst <= 1e-8, f"max |a_h(Q u, v) + b_h(v, Q p) - (f, v0) - functionals(v)| = {worst:.2e}")


def test_colorability():
    bad = []
    for n in range(1, 25):
        m = build_rect_mesh(n)
        ok, black, sweeps = check_colorable(m)
        if not ok or sweeps > len(m.stokes_cells()):
            bad.append(n)
    record(9, not bad, "rectangular grids n=1..24 colorable within |T_S| sweeps"
           + (f"; failed {bad}" if bad else ""))


def test_interface_consistency():
    ex = exact_fields()
    rng = np.random.default_rng(10)
    x = rng.uniform(0, np.pi, 100)
    y = np.zeros_like(x)
    n, t = np.array([0.0, -1.0]), np.array([1.0, 0.0])
    Tn = np.einsum("ijq,j->iq", ex.stress_s(x, y), n)
    w = WgParams(mu=ex.mu).bjs_weight(t)
    d_mass = np.abs(n @ ex.u_s(x, y) - n @ ex.u_d(x, y)).max()
    d_normal = np.abs(-n @ Tn - ex.p_d(x, y)).max()
    d_bjs = np.abs(-t @ Tn - w * (t @ ex.u_s(x, y))).max()
    px, py = rng.uniform(0, np.pi, 1000), rng.uniform(-1, 1, 1000)
    g = np.abs(ex.g(px, py)).max()
    fd = np.abs(ex.f_d(px, -np.abs(py))).max()
    ok = max(d_mass, d_normal, d_bjs) <= 1e-10 and max(g, fd) <= 1e-12
    record(10, ok, f"interface defects {d_mass:.0e}/{d_normal:.0e}/{d_bjs:.0e}; "
                   f"max|g|={g:.0e}, max|f_D|={fd:.0e}")
