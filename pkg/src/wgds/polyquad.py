"""Polynomial bases and quadrature on polygonal cells and straight edges.

Cell bases are scaled monomials centred at the cell centroid,
``((x - x_K)/h_K)**a * ((y - y_K)/h_K)**b`` with ``a + b <= j``, ordered by
total degree so that the basis of ``P_j`` is a prefix of the basis of
``P_{j+1}``.  Edge bases are Legendre polynomials in the normalised
arclength coordinate ``t in [-1, 1]``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial import legendre


class QuadratureError(ValueError):
    pass


def dim_P(j: int) -> int:
    """Dimension of the bivariate polynomial space of degree ``j``."""
    return (j + 1) * (j + 2) // 2 if j >= 0 else 0


@lru_cache(maxsize=None)
def monomial_exponents(j: int) -> tuple[tuple[int, int], ...]:
    out = []
    for d in range(j + 1):
        for b in range(d + 1):
            out.append((d - b, b))
    return tuple(out)


@lru_cache(maxsize=None)
def gauss_legendre(npts: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = legendre.leggauss(npts)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def _npts_for(exactness: int) -> int:
    return max(1, (exactness + 2) // 2)


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray   # (nq, 2) for cells and edges (edge points are 2D)
    weights: np.ndarray  # (nq,)
    exactness: int

    @property
    def measure(self) -> float:
        return float(self.weights.sum())

    def shifted(self, offset) -> "QuadratureRule":
        return QuadratureRule(self.points + np.asarray(offset), self.weights, self.exactness)


def polygon_area(verts: np.ndarray) -> float:
    x, y = verts[:, 0], verts[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def polygon_centroid(verts: np.ndarray) -> np.ndarray:
    x, y = verts[:, 0], verts[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    area = 0.5 * cross.sum()
    cx = ((x + xn) * cross).sum() / (6.0 * area)
    cy = ((y + yn) * cross).sum() / (6.0 * area)
    return np.array([cx, cy])


def polygon_diameter(verts: np.ndarray) -> float:
    d = verts[:, None, :] - verts[None, :, :]
    return float(np.sqrt((d ** 2).sum(-1)).max())


def _is_axis_rectangle(verts: np.ndarray, tol: float = 1e-12) -> bool:
    if len(verts) != 4:
        return False
    lo, hi = verts.min(axis=0), verts.max(axis=0)
    eps = tol * float((hi - lo).max())
    corners = set()
    for x, y in verts:
        cx = 0 if abs(x - lo[0]) <= eps else 1 if abs(x - hi[0]) <= eps else None
        cy = 0 if abs(y - lo[1]) <= eps else 1 if abs(y - hi[1]) <= eps else None
        if cx is None or cy is None:
            return False
        corners.add((cx, cy))
    return len(corners) == 4


def _triangle_rule(a, b, c, exactness: int) -> tuple[np.ndarray, np.ndarray]:
    # collapsed (Duffy) tensor Gauss rule; the Jacobian adds one degree in s
    n = _npts_for(exactness + 1)
    x, w = gauss_legendre(n)
    s = 0.5 * (x + 1.0)
    ws = 0.5 * w
    S, T = np.meshgrid(s, s, indexing="ij")
    W = np.outer(ws, ws) * S
    # point = a + S*(b - a) + S*T*(c - b)
    P = (a[None, None, :] + S[..., None] * (b - a)[None, None, :]
         + (S * T)[..., None] * (c - b)[None, None, :])
    det = abs((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
    return P.reshape(-1, 2), (W * det).ravel()


def cell_quadrature(verts, exactness: int) -> QuadratureRule:
    """Quadrature on a polygon, exact for polynomials up to ``exactness``.

    Axis-aligned rectangles get a tensor Gauss-Legendre rule; any other
    polygon is fanned from its centroid into triangles.
    """
    if exactness < 0:
        raise QuadratureError("exactness must be nonnegative")
    verts = np.asarray(verts, dtype=float)
    if _is_axis_rectangle(verts):
        x0, x1 = verts[:, 0].min(), verts[:, 0].max()
        y0, y1 = verts[:, 1].min(), verts[:, 1].max()
        x, w = gauss_legendre(_npts_for(exactness))
        px = 0.5 * (x0 + x1) + 0.5 * (x1 - x0) * x
        py = 0.5 * (y0 + y1) + 0.5 * (y1 - y0) * x
        X, Y = np.meshgrid(px, py, indexing="ij")
        W = np.outer(w, w) * 0.25 * (x1 - x0) * (y1 - y0)
        return QuadratureRule(np.column_stack([X.ravel(), Y.ravel()]), W.ravel(), exactness)

    if polygon_area(verts) <= 0:
        raise QuadratureError("polygon must be counterclockwise with positive area")
    c = polygon_centroid(verts)
    pts, wts = [], []
    for i in range(len(verts)):
        a, b = verts[i], verts[(i + 1) % len(verts)]
        orient = (a[0] - c[0]) * (b[1] - c[1]) - (b[0] - c[0]) * (a[1] - c[1])
        if orient <= 0:
            raise QuadratureError("polygon is not star-shaped about its centroid; fan triangulation fails")
        p, w = _triangle_rule(c, a, b, exactness)
        pts.append(p)
        wts.append(w)
    return QuadratureRule(np.vstack(pts), np.concatenate(wts), exactness)


def edge_quadrature(a, b, exactness: int) -> QuadratureRule:
    """Gauss-Legendre rule on the segment ``[a, b]`` (weights carry the length)."""
    if exactness < 0:
        raise QuadratureError("exactness must be nonnegative")
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    x, w = gauss_legendre(_npts_for(exactness))
    length = float(np.hypot(*(b - a)))
    pts = 0.5 * (a + b)[None, :] + 0.5 * x[:, None] * (b - a)[None, :]
    return QuadratureRule(pts, 0.5 * length * w, exactness)


@dataclass(frozen=True)
class CellBasis:
    """Scaled monomial basis of ``P_degree`` on one cell."""

    center: np.ndarray
    h: float
    degree: int

    @property
    def dim(self) -> int:
        return dim_P(self.degree)

    def _scaled(self, pts):
        pts = np.atleast_2d(pts)
        return (pts[:, 0] - self.center[0]) / self.h, (pts[:, 1] - self.center[1]) / self.h

    def eval(self, pts) -> np.ndarray:
        """Basis values, shape ``(npts, dim)``."""
        X, Y = self._scaled(pts)
        return np.column_stack([X ** a * Y ** b for a, b in monomial_exponents(self.degree)])

    def grad(self, pts) -> np.ndarray:
        """Basis gradients, shape ``(npts, dim, 2)``."""
        X, Y = self._scaled(pts)
        gx, gy = [], []
        for a, b in monomial_exponents(self.degree):
            gx.append(a * X ** max(a - 1, 0) * Y ** b / self.h if a else np.zeros_like(X))
            gy.append(b * X ** a * Y ** max(b - 1, 0) / self.h if b else np.zeros_like(X))
        return np.stack([np.column_stack(gx), np.column_stack(gy)], axis=-1)


@dataclass(frozen=True)
class EdgeBasis:
    """Legendre basis of ``P_degree`` on a segment, parametrised from ``a`` to ``b``."""

    a: np.ndarray
    b: np.ndarray
    degree: int

    @property
    def dim(self) -> int:
        return self.degree + 1

    @property
    def length(self) -> float:
        return float(np.hypot(*(self.b - self.a)))

    def param(self, pts) -> np.ndarray:
        pts = np.atleast_2d(pts)
        d = self.b - self.a
        mid = 0.5 * (self.a + self.b)
        return 2.0 * ((pts - mid) @ d) / float(d @ d)

    def eval(self, pts) -> np.ndarray:
        t = self.param(pts)
        return legendre.legvander(t, self.degree)


def mass_matrix(basis, rule: QuadratureRule) -> np.ndarray:
    """``M_ij = int phi_i phi_j`` under ``rule``; rejects under-exact rules."""
    if rule.exactness < 2 * basis.degree:
        raise QuadratureError(
            f"rule exactness {rule.exactness} < 2*degree = {2 * basis.degree}")
    V = basis.eval(rule.points)
    return (V * rule.weights[:, None]).T @ V


def project(basis, rule: QuadratureRule, values: np.ndarray) -> np.ndarray:
    """L2-project sampled values (``(nq,)`` or ``(nq, k)``) onto ``basis``."""
    V = basis.eval(rule.points)
    M = (V * rule.weights[:, None]).T @ V
    rhs = (V * rule.weights[:, None]).T @ values
    return np.linalg.solve(M, rhs)
