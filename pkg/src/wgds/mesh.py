"""Polygonal meshes split into a Stokes and a Darcy region.

Edges are oriented so that their ``left`` cell traverses them from ``a`` to
``b`` counterclockwise; the stored normal ``n_e`` is the outward normal of
the left cell and the stored tangent is ``(b - a)/h_e``, which makes
``(normal, tangent)`` right-handed.  The left cell is

* the unique cell, on boundary edges (normal points out of the domain);
* the Stokes cell, on interface edges (normal points from Stokes to Darcy);
* the smaller-index cell, on interior edges.
"""
from __future__ import annotations

import io
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .polyquad import polygon_area, polygon_centroid, polygon_diameter

STOKES = "S"
DARCY = "D"


class MeshError(ValueError):
    pass


class EdgeClass(str, Enum):
    INTERIOR_STOKES = "interiorStokes"
    INTERIOR_DARCY = "interiorDarcy"
    INTERFACE = "interface"
    BOUNDARY_STOKES = "boundaryStokes"
    BOUNDARY_DARCY = "boundaryDarcy"

    @property
    def is_boundary(self) -> bool:
        return self in (EdgeClass.BOUNDARY_STOKES, EdgeClass.BOUNDARY_DARCY)

    @property
    def is_darcy(self) -> bool:
        """Darcy edges carry a scalar normal trace."""
        return self in (EdgeClass.INTERIOR_DARCY, EdgeClass.BOUNDARY_DARCY)


@dataclass(frozen=True)
class Edge:
    a: int
    b: int
    left: int
    right: int  # -1 on the boundary
    kind: EdgeClass
    normal: np.ndarray
    tangent: np.ndarray
    length: float

    @property
    def cells(self) -> tuple[int, ...]:
        return (self.left,) if self.right < 0 else (self.left, self.right)


@dataclass(frozen=True)
class DarcyStokesBox:
    """Two axis-aligned boxes sharing the horizontal line ``y = y_interface``."""

    x0: float = 0.0
    x1: float = float(np.pi)
    y_interface: float = 0.0
    y_top: float = 1.0
    y_bottom: float = -1.0

    def validate(self):
        if not (self.x1 > self.x0):
            raise MeshError("box pair has an empty shared edge")
        if not (self.y_top > self.y_interface > self.y_bottom):
            raise MeshError("Stokes box must lie above and Darcy box below the interface")


@dataclass(eq=False)
class PolyMesh:
    vertices: np.ndarray
    cells: list
    regions: np.ndarray
    interface_line: tuple | None = None
    edges: list = field(default_factory=list)
    cell_edges: list = field(default_factory=list)

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float)
        self.cells = [np.asarray(c, dtype=int) for c in self.cells]
        self.regions = np.asarray(self.regions)
        if len(self.cells) != len(self.regions):
            raise MeshError("one region tag per cell required")
        if not set(np.unique(self.regions)) <= {STOKES, DARCY}:
            raise MeshError("regions must be 'S' or 'D'")
        self.areas = np.array([polygon_area(self.vertices[c]) for c in self.cells])
        if np.any(self.areas <= 0):
            bad = int(np.argmin(self.areas))
            raise MeshError(f"cell {bad} is not counterclockwise with positive area")
        self.centroids = np.array([polygon_centroid(self.vertices[c]) for c in self.cells])
        self.h_cells = np.array([polygon_diameter(self.vertices[c]) for c in self.cells])
        if not self.edges:
            self.edges, self.cell_edges = _classify(self)
        for e in self.edges:
            e.normal.setflags(write=False)
            e.tangent.setflags(write=False)
        self.vertices.setflags(write=False)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def h(self) -> float:
        return float(self.h_cells.max())

    @property
    def h_edges(self) -> np.ndarray:
        return np.array([e.length for e in self.edges])

    def is_stokes(self, k: int) -> bool:
        return self.regions[k] == STOKES

    def stokes_cells(self) -> np.ndarray:
        return np.flatnonzero(self.regions == STOKES)

    def darcy_cells(self) -> np.ndarray:
        return np.flatnonzero(self.regions == DARCY)

    def edges_of_kind(self, *kinds) -> list[int]:
        return [i for i, e in enumerate(self.edges) if e.kind in kinds]

    def cell_vertices(self, k: int) -> np.ndarray:
        return self.vertices[self.cells[k]]

    def local_edges(self, k: int):
        """Yield ``(edge_id, outward_normal, sign)`` for each side of cell ``k``.

        ``sign`` is +1 when the stored edge normal is outward for ``k``.
        """
        for eid in self.cell_edges[k]:
            e = self.edges[eid]
            s = 1.0 if e.left == k else -1.0
            yield eid, s * e.normal, s

    @property
    def total_area(self) -> float:
        return float(self.areas.sum())

    def quality(self) -> dict:
        """Shape diagnostics: minimum interior angle (degrees) and max aspect ratio."""
        min_angle = 180.0
        aspect = 0.0
        for k, c in enumerate(self.cells):
            P = self.vertices[c]
            m = len(P)
            for i in range(m):
                u = P[i - 1] - P[i]
                v = P[(i + 1) % m] - P[i]
                cosang = u @ v / (np.linalg.norm(u) * np.linalg.norm(v))
                min_angle = min(min_angle, float(np.degrees(np.arccos(np.clip(cosang, -1, 1)))))
            # diameter over inscribed-circle surrogate 2|K|/perimeter
            perim = sum(np.linalg.norm(P[(i + 1) % m] - P[i]) for i in range(m))
            aspect = max(aspect, self.h_cells[k] / (2 * self.areas[k] / perim))
        return {"min_angle_deg": min_angle, "max_aspect_ratio": aspect}


def _on_line(p, line, scale) -> bool:
    point, direction = (np.asarray(v, dtype=float) for v in line)
    d = direction / np.linalg.norm(direction)
    r = p - point
    return abs(r[0] * d[1] - r[1] * d[0]) <= 1e-10 * scale


def _classify(mesh: PolyMesh):
    verts = mesh.vertices
    owners: dict[tuple[int, int], list[tuple[int, int, int]]] = {}
    for k, c in enumerate(mesh.cells):
        m = len(c)
        for i in range(m):
            a, b = int(c[i]), int(c[(i + 1) % m])
            if a == b:
                raise MeshError(f"cell {k} has a repeated vertex")
            owners.setdefault((min(a, b), max(a, b)), []).append((k, a, b))

    scale = float(np.ptp(verts, axis=0).max())
    edges = []
    index = {}
    for key in sorted(owners):
        occ = sorted(owners[key])
        if len(occ) > 2:
            raise MeshError(f"edge {key} is shared by more than two cells")
        if len(occ) == 2 and occ[0][1:] == occ[1][1:]:
            raise MeshError(f"cells {occ[0][0]} and {occ[1][0]} overlap along edge {key}")
        if len(occ) == 1:
            left, right = occ[0][0], -1
            kind = EdgeClass.BOUNDARY_STOKES if mesh.regions[left] == STOKES else EdgeClass.BOUNDARY_DARCY
        else:
            (k0, _, _), (k1, _, _) = occ
            r0, r1 = mesh.regions[k0], mesh.regions[k1]
            if r0 == r1:
                left, right = k0, k1
                kind = EdgeClass.INTERIOR_STOKES if r0 == STOKES else EdgeClass.INTERIOR_DARCY
            else:
                left, right = (k0, k1) if r0 == STOKES else (k1, k0)
                kind = EdgeClass.INTERFACE
                if mesh.interface_line is not None:
                    if not all(_on_line(verts[v], mesh.interface_line, scale) for v in key):
                        raise MeshError(
                            f"edge {key} separates Stokes and Darcy cells but is off the "
                            "declared interface; the mesh must be aligned with it")
        a, b = next((a, b) for k, a, b in occ if k == left)
        d = verts[b] - verts[a]
        length = float(np.hypot(*d))
        t = d / length
        n = np.array([t[1], -t[0]])
        index[key] = len(edges)
        edges.append(Edge(a, b, left, right, kind, n, t, length))

    cell_edges = []
    for c in mesh.cells:
        m = len(c)
        cell_edges.append([index[(min(c[i], c[(i + 1) % m]), max(c[i], c[(i + 1) % m]))]
                           for i in range(m)])
    return edges, cell_edges


def classify_edges(mesh: PolyMesh) -> PolyMesh:
    """Rebuild edge classification, orientation and normals from the cells."""
    return PolyMesh(mesh.vertices.copy(), mesh.cells, mesh.regions, mesh.interface_line)


def build_rect_mesh(n: int, domain: DarcyStokesBox | None = None) -> PolyMesh:
    """Uniform grid with ``n x n`` rectangles on each side of the interface."""
    if int(n) != n or n < 1:
        raise MeshError("n must be a positive integer")
    n = int(n)
    domain = domain or DarcyStokesBox()
    domain.validate()
    xs = np.linspace(domain.x0, domain.x1, n + 1)
    ys = np.concatenate([np.linspace(domain.y_bottom, domain.y_interface, n + 1),
                         np.linspace(domain.y_interface, domain.y_top, n + 1)[1:]])
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    vertices = np.column_stack([X.ravel(), Y.ravel()])
    vid = lambda i, j: j * (n + 1) + i  # noqa: E731
    cells, regions = [], []
    for j in range(2 * n):
        for i in range(n):
            cells.append([vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)])
            regions.append(DARCY if j < n else STOKES)
    line = ((domain.x0, domain.y_interface), (1.0, 0.0))
    return PolyMesh(vertices, cells, regions, interface_line=line)


def check_colorable(mesh: PolyMesh) -> tuple[bool, set[int], int]:
    """Run the black/white sweeping test on the Stokes cells.

    Edges on the Stokes boundary include the interface.  Each sweep applies
    both whitening rules against the white set from the previous sweep.
    Returns ``(colorable, black_cells, sweeps)``.
    """
    stokes = [int(k) for k in mesh.stokes_cells()]
    on_bdry = {}
    nbrs = {}
    for k in stokes:
        nb = 0
        adj = []
        for eid in mesh.cell_edges[k]:
            e = mesh.edges[eid]
            if e.kind in (EdgeClass.BOUNDARY_STOKES, EdgeClass.INTERFACE):
                nb += 1
            else:
                adj.append(e.right if e.left == k else e.left)
        on_bdry[k] = nb
        nbrs[k] = adj

    white = {k for k in stokes if on_bdry[k] >= 2}
    sweeps = 0
    while True:
        black = [k for k in stokes if k not in white]
        new = set()
        for k in black:
            shared_white = sum(1 for j in nbrs[k] if j in white)
            if (on_bdry[k] >= 1 and shared_white >= 1) or shared_white >= 2:
                new.add(k)
        if not new:
            break
        sweeps += 1
        white |= new
    black = set(stokes) - white
    return not black, black, sweeps


def write_wgmesh(mesh: PolyMesh, path) -> None:
    buf = io.StringIO()
    buf.write("wgmesh 1\n")
    buf.write(f"{len(mesh.vertices)}\n")
    for x, y in mesh.vertices:
        buf.write(f"{x:.17g} {y:.17g}\n")
    buf.write(f"{mesh.n_cells}\n")
    for r, c in zip(mesh.regions, mesh.cells):
        buf.write(f"{r} {len(c)} " + " ".join(str(int(v)) for v in c) + "\n")
    Path(path).write_text(buf.getvalue())


def read_wgmesh(path, interface_line=None) -> PolyMesh:
    tokens = Path(path).read_text().split("\n")
    lines = [ln.strip() for ln in tokens if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines or lines[0].split() != ["wgmesh", "1"]:
        raise MeshError(f"{path}: missing 'wgmesh 1' header")
    try:
        nv = int(lines[1])
        vertices = np.array([[float(t) for t in lines[2 + i].split()] for i in range(nv)])
        nc = int(lines[2 + nv])
        cells, regions = [], []
        for i in range(nc):
            parts = lines[3 + nv + i].split()
            k = int(parts[1])
            if len(parts) != k + 2:
                raise MeshError(f"{path}: cell {i} declares {k} vertices, lists {len(parts) - 2}")
            regions.append(parts[0])
            cells.append([int(t) for t in parts[2:]])
    except (IndexError, ValueError) as exc:
        if isinstance(exc, MeshError):
            raise
        raise MeshError(f"{path}: malformed mesh file ({exc})") from exc
    return PolyMesh(vertices, cells, regions, interface_line=interface_line)
