import numpy as np
import pytest
from hypothesis import given, strategies as st

from wgds.assembly import assemble_a_h, assemble_b_h, assemble_rhs
from wgds.mesh import build_rect_mesh
from wgds.mms import (ConvergenceTable, ErrorReport, convergence_study, diagnostics_functionals,
                      endpoint_rates, error_norms, exact_fields, fitted_rates, forcing,
                      forcing_fd_check, interpolate_Ih, interpolate_Jh, pairwise_rates,
                      polynomial_fields, reference_params)
from wgds.wgspace import (PressureFunction, WgDofMap, WgParams, eval_vector, project_pressure,
                          project_Qh)


def interface_defects(ex, x):
    y = np.zeros_like(x)
    n, t = np.array([0.0, -1.0]), np.array([1.0, 0.0])
    Tn = np.einsum("ijq,j->iq", ex.stress_s(x, y), n)
    us, ud = ex.u_s(x, y), ex.u_d(x, y)
    w = WgParams(kappa=tuple(map(tuple, ex.K)), mu=ex.mu).bjs_weight(t)
    return (np.abs(n @ us - n @ ud).max(), np.abs(-n @ Tn - ex.p_d(x, y)).max(),
            np.abs(-t @ Tn - w * (t @ us)).max())


@pytest.mark.parametrize("nu,mu", [(1.0, 1.0), (0.3, 2.5)])
def test_interface_conditions(nu, mu):
    ex = exact_fields(nu=nu, mu=mu)
    x = np.random.default_rng(0).uniform(0, np.pi, 100)
    assert max(interface_defects(ex, x)) <= 1e-10


def test_forcing_matches_finite_differences():
    ex = exact_fields(nu=0.7)
    pts = np.random.default_rng(1).uniform([0, 0.05], [np.pi, 0.95], (50, 2))
    assert forcing_fd_check(ex, pts, step=1e-4) < 1e-6


def test_darcy_forcing_and_divergence_vanish():
    ex = exact_fields()
    rng = np.random.default_rng(2)
    x, y = rng.uniform(0, np.pi, 200), rng.uniform(-1, 1, 200)
    assert np.abs(ex.g(x, y)).max() <= 1e-12
    yd = -np.abs(y) - 1e-3
    assert np.abs(ex.f_d(x, yd)).max() <= 1e-12


def test_piecewise_selection():
    ex = exact_fields()
    assert ex.velocity(1.0, 0.5) == pytest.approx(ex.u_s(1.0, 0.5))
    assert ex.velocity(1.0, -0.5) == pytest.approx(ex.u_d(1.0, -0.5))


def test_interpolant_reproduces_linear_fields():
    dm = WgDofMap(build_rect_mesh(2), WgParams())
    u = lambda x, y: np.array([1 + 2 * x - y, 3 * y - x])  # noqa: E731
    Iu = interpolate_Ih(u, dm)
    Qu = project_Qh(u, dm, keep_boundary=True)
    assert Iu.coeffs == pytest.approx(Qu.coeffs, abs=1e-13)


def test_interpolant_hand_checked_edge():
    dm = WgDofMap(build_rect_mesh(1), WgParams())
    u = lambda x, y: np.array([x * x, np.sin(x) + y])  # noqa: E731
    Iu = interpolate_Ih(u, dm)
    e = next(i for i, ed in enumerate(dm.mesh.edges) if not dm.edge_scalar[i]
             and abs(dm.mesh.vertices[ed.a][1] - 1.0) < 1e-14 and abs(dm.mesh.vertices[ed.b][1] - 1.0) < 1e-14)
    ed = dm.mesh.edges[e]
    for v in (ed.a, ed.b):
        P = dm.mesh.vertices[v]
        assert Iu.eval_trace(e, P[None, :])[0] == pytest.approx(eval_vector(u, P[None, :])[0], abs=1e-13)


def test_interpolant_requires_reference_setting():
    with pytest.raises(ValueError):
        interpolate_Ih(lambda x, y: (0.0, 0.0), WgDofMap(build_rect_mesh(1), WgParams(alpha_s=2, gamma_s=1)))


def test_interpolants_as_solution_give_zero_error():
    ex = exact_fields()
    dm = WgDofMap(build_rect_mesh(4), WgParams())
    uh = interpolate_Ih(ex, dm)
    ph = interpolate_Jh(ex, dm)
    assert max(error_norms(uh, ph, ex, pressure_mean="discrete").errors) < 1e-13
    # exact-mean alignment leaves only the constant gap between the two means
    err = error_norms(uh, ph, ex, pressure_mean="exact").errors
    gap = abs(ph.integral() / (2 * np.pi) - ex.mean_pressure(dm))
    assert err[:2] == (0.0, 0.0) and err[3] == 0.0
    assert err[2] == pytest.approx(gap * np.sqrt(np.pi)) and err[4] == pytest.approx(gap * np.sqrt(np.pi))
    uq, pq = project_Qh(ex.velocity, dm, keep_boundary=True), project_pressure(ex.pressure, dm)
    assert max(error_norms(uq, pq, ex, mode="projection").errors) < 1e-13


def test_error_norm_of_known_pressure_offset():
    ex = exact_fields()
    dm = WgDofMap(build_rect_mesh(2), WgParams())
    uq = project_Qh(ex.velocity, dm, keep_boundary=True)
    pq = project_pressure(ex.pressure, dm)
    bump = PressureFunction(dm, np.where(np.isin(np.arange(dm.n_pressure), dm.p_offsets[:-1]), 1.0, 0.0)
                            * np.array([1.0 if r == "S" else -1.0 for r in dm.mesh.regions]))
    err = error_norms(uq, pq - bump, ex, mode="projection").errors
    assert err[2] == pytest.approx(np.sqrt(np.pi)) and err[4] == pytest.approx(np.sqrt(np.pi))
    assert err[0] == err[1] == err[3] == 0.0


@pytest.mark.parametrize("params", [WgParams(), reference_params(100.0), WgParams(alpha_s=2, gamma_s=1)])
def test_error_equation_identity(params):
    p = WgParams(**{**params.to_dict(), "cell_exactness": 14, "edge_exactness": 14})
    dm = WgDofMap(build_rect_mesh(2), p)
    ex = exact_fields(p.nu, p.K, p.mu)
    fn = diagnostics_functionals(ex, dm)
    A, B = assemble_a_h(dm), assemble_b_h(dm)
    F, _ = assemble_rhs(dm, *forcing(ex))
    Qu = project_Qh(ex.velocity, dm, keep_boundary=True).coeffs
    Qp = project_pressure(ex.pressure, dm).coeffs
    rng = np.random.default_rng(5)
    for _ in range(3):
        v = np.zeros(dm.n_velocity)
        v[dm.free] = rng.standard_normal(dm.n_free)
        lhs = v @ (A @ Qu) + (B @ v) @ Qp - F @ v
        assert lhs == pytest.approx(fn.rhs() @ v, abs=1e-8)


def test_functionals_vanish_on_polynomial_data():
    p = WgParams(alpha_s=2, alpha_d=1, beta=1, gamma_s=1, gamma_d=1)
    dm = WgDofMap(build_rect_mesh(2), p)
    fn = diagnostics_functionals(polynomial_fields(), dm)
    for name in ("s_Qu", "l_S", "l_D", "l_div", "l_I"):
        assert np.abs(getattr(fn, name)[dm.free]).max() < 1e-12, name


@given(st.lists(st.floats(0.5, 3.0), min_size=5, max_size=5), st.floats(0.01, 10.0))
def test_rates_of_power_laws(true_rates, c):
    hs = np.pi / np.array([4, 8, 16, 32])
    errs = c * hs[:, None] ** np.array(true_rates)[None, :]
    assert fitted_rates(hs, errs) == pytest.approx(true_rates, abs=1e-9)
    assert endpoint_rates(hs, errs) == pytest.approx(true_rates, abs=1e-9)
    assert pairwise_rates(errs) == pytest.approx(np.tile(true_rates, (3, 1)), abs=1e-9)


def test_table_rates_respect_fit_from():
    rows = [ErrorReport(n, np.pi / n, tuple(np.full(5, (np.pi / n) ** (1 if n < 8 else 2))), "x")
            for n in (4, 8, 16, 32)]
    t = ConvergenceTable(1.0, WgParams(), rows, {}, fit_from=8)
    assert t.rates_lsq == pytest.approx(np.full(5, 2.0))
    assert ConvergenceTable(1.0, WgParams(), rows[:1], {}).rates_lsq is None


def test_study_validation_and_failures():
    with pytest.raises(ValueError):
        convergence_study([8, 4], WgParams())
    with pytest.raises(ValueError):
        convergence_study([4, 12], WgParams())
    from wgds.solver import SolveOptions
    t = convergence_study([1, 2], WgParams(), solver=SolveOptions(mode="magic"))
    assert t.rows == [] and set(t.failures) == {1, 2}


def test_small_study_runs(tmp_path):
    t = convergence_study([2, 4], reference_params(1.0), workers=2)
    assert t.ns == [2, 4] and not t.failures
    assert all(np.all(np.array(r.errors) > 0) for r in t.rows)
    assert t.rows[0].errors[1] > t.rows[1].errors[1]
