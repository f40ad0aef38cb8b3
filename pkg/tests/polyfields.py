"""Random polynomial vector fields with exact gradients, for oracle tests."""
import numpy as np

from wgds.polyquad import monomial_exponents
from wgds.weakops import weak_divergence, weak_gradient
from wgds.wgspace import project_Qh, project_scalar, project_tensor


class PolyField:
    def __init__(self, rng, degree):
        self.exps = monomial_exponents(degree)
        self.c = rng.standard_normal((2, len(self.exps)))

    def __call__(self, x, y):
        x, y = np.asarray(x, float), np.asarray(y, float)
        return np.array([sum(c * x ** a * y ** b for c, (a, b) in zip(self.c[i], self.exps))
                         for i in range(2)])

    def grad(self, x, y):
        x, y = np.asarray(x, float), np.asarray(y, float)
        out = np.zeros((2, 2) + x.shape)
        for i in range(2):
            for c, (a, b) in zip(self.c[i], self.exps):
                if a:
                    out[i, 0] += c * a * x ** (a - 1) * y ** b
                if b:
                    out[i, 1] += c * b * x ** a * y ** (b - 1)
        return out

    def div(self, x, y):
        g = self.grad(x, y)
        return g[0, 0] + g[1, 1]


def commuting_defect(dm, w):
    Qw = project_Qh(w, dm, keep_boundary=True)
    worst = 0.0
    for k in range(dm.mesh.n_cells):
        d = weak_divergence(dm, k, Qw) - project_scalar(w.div, dm, k)
        worst = max(worst, np.abs(d).max())
        if dm.mesh.is_stokes(k):
            g = weak_gradient(dm, k, Qw) - project_tensor(w.grad, dm, k)
            worst = max(worst, np.abs(g).max())
    return worst
