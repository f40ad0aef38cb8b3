"""
Weak gradients, weak divergence and the inf-sup constant
========================================================

"""

import numpy as np

from wgds import WgDofMap, WgParams, build_rect_mesh
from wgds.infsup import infsup_probe
from wgds.weakops import weak_divergence, weak_gradient
from wgds.wgspace import project_Qh, project_scalar, project_tensor

mesh = build_rect_mesh(2)
dm = WgDofMap(mesh, WgParams())
print(mesh.n_cells, "cells,", dm.n_velocity, "velocity dofs,", dm.n_pressure, "pressure dofs")


# a smooth field and its derivatives
def w(x, y):
    return np.array([np.sin(x) * y, x * x - y])


def grad_w(x, y):
    return np.array([[np.cos(x) * y, np.sin(x)], [2 * x, -np.ones_like(x)]])


def div_w(x, y):
    return np.cos(x) * y - 1.0


# project, then differentiate weakly: it matches projecting the true derivative
# (exactly for polynomials, up to quadrature error here)
Qw = project_Qh(w, dm, keep_boundary=True)
k = int(mesh.stokes_cells()[0])
print("weak gradient defect:", np.abs(weak_gradient(dm, k, Qw) - project_tensor(grad_w, dm, k)).max())
print("weak divergence defect:", np.abs(weak_divergence(dm, k, Qw) - project_scalar(div_w, dm, k)).max())

# %%
# The discrete inf-sup constant stays bounded as the mesh is refined.
for r in infsup_probe((2, 4, 8)):
    print(f"n={r.n}: beta_h = {r.beta:.4f}")
