import numpy as np
import pytest
import scipy.sparse as sp

from wgds.assembly import (apply_boundary_conditions, assemble_a_h, assemble_b_h, assemble_rhs,
                           assemble_system, boundary_values, discrete_norm_sq, divergence_mass,
                           export_coo, interface_matrix, norm_matrix)
from wgds.mesh import EdgeClass, build_rect_mesh
from wgds.solver import constant_pressure
from wgds.wgspace import WgDofMap, WgFunction, WgParams, project_Qh


def test_a_h_symmetric_psd(dm2):
    A = assemble_a_h(dm2).toarray()
    assert np.abs(A - A.T).max() < 1e-13 * np.abs(A).max()
    assert np.linalg.eigvalsh(A).min() > -1e-12 * np.abs(A).max()


@pytest.mark.parametrize("n", [1, 2])
@pytest.mark.parametrize("stab", ["diameter", "max_edge", "edge"])
def test_reduced_a_h_positive_definite(n, stab):
    dm = WgDofMap(build_rect_mesh(n), WgParams(stab_length=stab))
    A = assemble_a_h(dm)[dm.free][:, dm.free].toarray()
    w = np.linalg.eigvalsh(A)
    assert w.min() > 1e-8 * w.max()


def test_norm_matrix_matches_termwise_norm(rng):
    dm = WgDofMap(build_rect_mesh(2), WgParams(stab_length="edge", kappa=((2.0, 0.3), (0.3, 0.5))))
    N = norm_matrix(dm)
    for _ in range(3):
        v = WgFunction(dm, rng.standard_normal(dm.n_velocity))
        assert discrete_norm_sq(v) == pytest.approx(v.coeffs @ N @ v.coeffs, rel=1e-12)
        A = assemble_a_h(dm)
        assert discrete_norm_sq(v, include_divergence=False) == pytest.approx(v.coeffs @ A @ v.coeffs, rel=1e-12)


def test_scaling_by_c(dm2):
    c = 3.7
    A1 = assemble_a_h(dm2)
    Ac = assemble_a_h(dm2, dm2.params.scaled(c))
    assert abs(Ac - c * A1).max() < 1e-12 * abs(Ac).max()


def test_b_h_kills_constants_on_free_dofs(dm4):
    B = assemble_b_h(dm4)[:, dm4.free]
    assert np.abs(B.T @ constant_pressure(dm4)).max() < 1e-13


def test_b_h_rigid_translation(dm2):
    # a constant velocity has zero weak divergence everywhere
    v = project_Qh(lambda x, y: np.array([1.0 + 0 * x, -2.0 + 0 * x]), dm2, keep_boundary=True)
    assert np.abs(assemble_b_h(dm2) @ v.coeffs).max() < 1e-13


def test_interface_matrix_value():
    dm = WgDofMap(build_rect_mesh(1), WgParams(mu=2.0, kappa=0.25))
    e = int(dm.mesh.edges_of_kind(EdgeClass.INTERFACE)[0])
    Ae = interface_matrix(dm, e)
    # u = (1, 0) on the edge: mu K^{-1/2} |e| = 2 * 2 * pi
    c = np.zeros(Ae.shape[0])
    c[0] = 1.0
    assert c @ Ae @ c == pytest.approx(4 * np.pi)


def test_divergence_mass_psd(dm2):
    D = divergence_mass(dm2).toarray()
    assert np.linalg.eigvalsh(D).min() > -1e-12


def test_rhs_integrals(dm2):
    F, G = assemble_rhs(dm2, lambda x, y: (1.0, 0.0), lambda x, y: 1.0 + 0 * x)
    # constant-coefficient entries integrate the data over each cell
    for k in range(dm2.mesh.n_cells):
        assert F[dm2.cell_dofs(k)[0]] == pytest.approx(dm2.mesh.areas[k])
    assert G.sum() == pytest.approx(-2 * np.pi)


def test_boundary_values_modes_agree_on_linear():
    dm = WgDofMap(build_rect_mesh(2), WgParams())
    u = lambda x, y: np.array([x - 2 * y, 0.5 + 3 * x])  # noqa: E731
    assert boundary_values(u, dm, "projection") == pytest.approx(boundary_values(u, dm, "interpolant"))
    with pytest.raises(ValueError):
        boundary_values(u, dm, "bogus")


def test_boundary_elimination(dm2, rng):
    sysm = assemble_system(dm2, boundary=rng.standard_normal(int(dm2.fixed.sum())))
    red = apply_boundary_conditions(sysm)
    assert red.reduced and red.n_u == dm2.n_free
    u = red.full_velocity(rng.standard_normal(dm2.n_free))
    full = sysm.A @ u
    assert (red.A @ u[dm2.free] + (sysm.F[dm2.free] - red.F)) == pytest.approx(full[dm2.free])
    K = red.matrix()
    assert K.shape == (red.n_u + red.n_p + 1,) * 2
    assert abs(K - K.T).max() < 1e-12 * abs(K).max()


def test_export_coo(tmp_path):
    M = sp.csr_matrix(np.array([[0.0, 1.5], [2.0, 0.0]]))
    p = tmp_path / "m.txt"
    export_coo(M, p)
    lines = p.read_text().splitlines()
    assert lines[0] == "% 2 2 2"
    assert lines[1:] == ["0 1 1.5", "1 0 2"]
