"""Conforming 2D simplicial meshes with newest-vertex bisection.

Triangles are stored counterclockwise with the refinement edge between local
vertices 0 and 1 (the "peak" is local vertex 2).  Bisecting a triangle
(a, b, c) inserts the midpoint m of (a, b) and produces the children
(c, a, m) and (b, c, m), whose refinement edges are the former flanks (c, a)
and (b, c).  This keeps the number of similarity classes finite, hence shape
regularity is uniform over all refinements.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DIRICHLET = 1


class MeshError(Exception):
    """Structural mesh defect (non-conformity, bad orientation, ...)."""


def _edge_key(a: int, b: int) -> tuple[int, int]:
    return (a, b) if a < b else (b, a)


@dataclass
class Mesh:
    """Conforming triangulation of a polygonal domain.

    vertices : (nv, 2) float array of coordinates
    triangles : (nt, 3) int array, CCW, refinement edge = (v0, v1)
    boundary_edges : dict mapping sorted vertex pairs to a boundary marker
    generation : (nt,) bisection depth of each triangle
    parent : (nt,) index of the parent triangle in `source` (-1 for a macro
        triangle); `source` is the mesh this one was refined from
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_edges: dict[tuple[int, int], int]
    generation: np.ndarray = None
    parent: np.ndarray = None
    source: "Mesh | None" = None
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float)
        self.triangles = np.asarray(self.triangles, dtype=np.int64)
        if self.generation is None:
            self.generation = np.zeros(len(self.triangles), dtype=np.int64)
        if self.parent is None:
            self.parent = np.full(len(self.triangles), -1, dtype=np.int64)

    # -- basic queries -----------------------------------------------------

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_triangles(self) -> int:
        return len(self.triangles)

    def coords(self, element: int) -> np.ndarray:
        """(3, 2) vertex coordinates of one triangle."""
        return self.vertices[self.triangles[element]]

    def areas(self) -> np.ndarray:
        if "areas" not in self._cache:
            p = self.vertices[self.triangles]
            d1 = p[:, 1] - p[:, 0]
            d2 = p[:, 2] - p[:, 0]
            self._cache["areas"] = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
        return self._cache["areas"]

    def mesh_size(self, element: int) -> float:
        """h_E = |E|^(1/2)."""
        return float(np.sqrt(self.areas()[element]))

    def mesh_sizes(self) -> np.ndarray:
        return np.sqrt(self.areas())

    def side_size(self, side: tuple[int, int]) -> float:
        """Euclidean length of the edge with the given vertex pair."""
        a, b = side
        return float(np.linalg.norm(self.vertices[a] - self.vertices[b]))

    def edges(self) -> dict[tuple[int, int], list[tuple[int, int]]]:
        """Map sorted vertex pair -> list of (triangle, local edge index).

        Local edge k of a triangle is the edge opposite local vertex k.
        """
        if "edges" not in self._cache:
            table: dict[tuple[int, int], list[tuple[int, int]]] = {}
            for t, (v0, v1, v2) in enumerate(self.triangles):
                for k, (a, b) in enumerate(((v1, v2), (v2, v0), (v0, v1))):
                    table.setdefault(_edge_key(a, b), []).append((t, k))
            self._cache["edges"] = table
        return self._cache["edges"]

    def interior_sides(self) -> list[tuple[tuple[int, int], int, int]]:
        """List of (edge, t_lower, t_upper) for edges shared by two triangles,
        with t_lower < t_upper."""
        out = []
        for e, inc in self.edges().items():
            if len(inc) == 2:
                ta, tb = inc[0][0], inc[1][0]
                out.append((e, min(ta, tb), max(ta, tb)))
        return out

    def neighbors(self, element: int) -> list[int]:
        """Vertex neighbors N(E): triangles sharing at least one vertex."""
        v2t = self._vertex_to_triangles()
        seen = set()
        for v in self.triangles[element]:
            seen.update(v2t[v])
        return sorted(seen)

    def element_patch(self, element: int) -> "ElementPatch":
        nbs = self.neighbors(element)
        area = float(self.areas()[nbs].sum())
        return ElementPatch(element, nbs, area)

    def _vertex_to_triangles(self):
        if "v2t" not in self._cache:
            v2t = [[] for _ in range(self.num_vertices)]
            for t, tri in enumerate(self.triangles):
                for v in tri:
                    v2t[v].append(t)
            self._cache["v2t"] = v2t
        return self._cache["v2t"]

    def min_angle(self) -> float:
        """Smallest interior angle over all triangles, in degrees."""
        p = self.vertices[self.triangles]
        angles = []
        for k in range(3):
            u = p[:, (k + 1) % 3] - p[:, k]
            v = p[:, (k + 2) % 3] - p[:, k]
            c = (u * v).sum(axis=1) / (
                np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1))
            angles.append(np.degrees(np.arccos(np.clip(c, -1.0, 1.0))))
        return float(np.min(angles))

    def boundary_vertices(self) -> set[int]:
        out = set()
        for a, b in self.boundary_edges:
            out.add(a)
            out.add(b)
        return out

    def ancestor(self, element: int, root: "Mesh") -> int:
        """Index in `root` of the triangle containing `element`."""
        mesh, e = self, element
        while mesh is not root:
            if mesh.source is None:
                raise MeshError("root mesh is not an ancestor of this mesh")
            e = int(mesh.parent[e])
            mesh = mesh.source
        return e


@dataclass(frozen=True)
class ElementPatch:
    """An element, its vertex neighbors and the patch area |U(E)|."""

    element: int
    neighbors: list[int]
    patch_area: float


# -- validation --------------------------------------------------------------


def validate(mesh: Mesh, min_angle_deg: float = 1.0) -> list[str]:
    """Check the mesh invariants; returns a list of violation messages
    (empty iff the mesh is valid)."""
    report = []
    p = mesh.vertices[mesh.triangles]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    areas2 = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    for t in np.nonzero(areas2 <= 0)[0]:
        report.append(f"triangle {t}: non-positive orientation/area")

    for e, inc in mesh.edges().items():
        if len(inc) > 2:
            report.append(f"edge {e}: shared by {len(inc)} triangles")
        elif len(inc) == 1 and e not in mesh.boundary_edges:
            report.append(f"edge {e}: dangling (single incidence, not boundary)")
        elif len(inc) == 2 and e in mesh.boundary_edges:
            report.append(f"edge {e}: interior edge flagged as boundary")

    # boundary edges must form closed polygonal loops
    degree: dict[int, int] = {}
    for a, b in mesh.boundary_edges:
        degree[a] = degree.get(a, 0) + 1
        degree[b] = degree.get(b, 0) + 1
    for v, deg in sorted(degree.items()):
        if deg != 2:
            report.append(f"boundary vertex {v}: {deg} incident boundary edges")

    ang = mesh.min_angle() if len(mesh.triangles) else 90.0
    if ang < min_angle_deg:
        report.append(f"minimum angle {ang:.3f} deg below {min_angle_deg}")
    return report


# -- refinement --------------------------------------------------------------


def refine(mesh: Mesh, marked) -> Mesh:
    """Bisect the marked triangles once and restore conformity.

    Returns a new conforming mesh; the input is left untouched.  The result
    carries `parent` indices into `mesh` and `source = mesh`.
    """
    problems = validate(mesh)
    if problems:
        raise MeshError("refusing to refine an invalid mesh: " + "; ".join(problems))
    marked = set(int(m) for m in marked)
    for m in marked:
        if not 0 <= m < mesh.num_triangles:
            raise MeshError(f"marked element {m} out of range")

    verts = [tuple(v) for v in mesh.vertices]
    tris: list[tuple[int, int, int] | None] = [tuple(t) for t in mesh.triangles]
    gen = list(mesh.generation)
    par = list(range(mesh.num_triangles))  # ancestor in the input mesh
    boundary = dict(mesh.boundary_edges)

    edge2tris: dict[tuple[int, int], set[int]] = {}
    for t, tri in enumerate(tris):
        for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
            edge2tris.setdefault(_edge_key(a, b), set()).add(t)
    midpoints: dict[tuple[int, int], int] = {}

    def midpoint(a: int, b: int) -> int:
        key = _edge_key(a, b)
        if key not in midpoints:
            pa, pb = verts[a], verts[b]
            verts.append(((pa[0] + pb[0]) / 2.0, (pa[1] + pb[1]) / 2.0))
            midpoints[key] = len(verts) - 1
            if key in boundary:
                marker = boundary.pop(key)
                m = midpoints[key]
                boundary[_edge_key(a, m)] = marker
                boundary[_edge_key(m, b)] = marker
        return midpoints[key]

    def neighbor_across(t: int, edge: tuple[int, int]) -> int | None:
        for other in edge2tris.get(edge, ()):
            if other != t and tris[other] is not None:
                return other
        return None

    def split(t: int) -> tuple[int, int]:
        """Bisect triangle t across its refinement edge; returns children."""
        a, b, c = tris[t]
        m = midpoint(a, b)
        child1 = (c, a, m)
        child2 = (b, c, m)
        tris[t] = None
        for tri in (child1, child2):
            tris.append(tri)
            gen.append(gen[t] + 1)
            par.append(par[t])
            idx = len(tris) - 1
            for x, y in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
                edge2tris.setdefault(_edge_key(x, y), set()).add(idx)
        for key in (_edge_key(a, b), _edge_key(b, c), _edge_key(c, a)):
            edge2tris[key].discard(t)
        return len(tris) - 2, len(tris) - 1

    def bisect_conforming(t: int) -> None:
        """Bisect t; recursively pre-refine incompatible neighbors."""
        stack = [t]
        guard = 4 * len(tris) + 16
        while stack:
            if len(stack) > guard:
                raise MeshError("refinement-edge assignment admits no conforming closure")
            cur = stack[-1]
            if tris[cur] is None:
                stack.pop()
                continue
            a, b, _ = tris[cur]
            ref_edge = _edge_key(a, b)
            nb = neighbor_across(cur, ref_edge)
            if nb is not None:
                na, nbv, _ = tris[nb]
                if _edge_key(na, nbv) != ref_edge:
                    # neighbor must be bisected first; afterwards the child
                    # adjacent to ref_edge has ref_edge as its refinement edge
                    stack.append(nb)
                    continue
            stack.pop()
            split(cur)
            if nb is not None and tris[nb] is not None:
                split(nb)

    for t in sorted(marked):
        if tris[t] is not None:
            bisect_conforming(t)

    alive = [i for i, tri in enumerate(tris) if tri is not None]
    new_tris = np.asarray([tris[i] for i in alive], dtype=np.int64)
    new = Mesh(
        vertices=np.asarray(verts, dtype=float),
        triangles=new_tris,
        boundary_edges=boundary,
        generation=np.asarray([gen[i] for i in alive], dtype=np.int64),
        parent=np.asarray([par[i] for i in alive], dtype=np.int64),
        source=mesh,
    )
    return new


def uniform_refine(mesh: Mesh, rounds: int = 1) -> Mesh:
    for _ in range(rounds):
        mesh = refine(mesh, range(mesh.num_triangles))
    return mesh


# -- macro geometries --------------------------------------------------------


def _normalize(vertices, triangles, ref_edges) -> np.ndarray:
    """Rotate vertex order so the refinement edge is (v0, v1), keep CCW."""
    out = []
    for (v0, v1, v2), e in zip(triangles, ref_edges):
        tri = [v0, v1, v2]
        # local edge e is opposite vertex e: rotate so that peak = vertex e
        rot = {0: (1, 2, 0), 1: (2, 0, 1), 2: (0, 1, 2)}[e]
        tri = [tri[rot[0]], tri[rot[1]], tri[rot[2]]]
        p = [np.asarray(vertices[v], dtype=float) for v in tri]
        u, v = p[1] - p[0], p[2] - p[0]
        if u[0] * v[1] - u[1] * v[0] <= 0:
            tri = [tri[1], tri[0], tri[2]]
        out.append(tri)
    return np.asarray(out, dtype=np.int64)


def _longest_edge_assignment(vertices, triangles) -> list[int]:
    """Refinement edge = longest edge, ties broken by lowest opposite vertex."""
    ref = []
    for tri in triangles:
        p = [np.asarray(vertices[v], dtype=float) for v in tri]
        lengths = [np.linalg.norm(p[(k + 2) % 3] - p[(k + 1) % 3]) for k in range(3)]
        best = max(range(3), key=lambda k: (lengths[k], -tri[k]))
        ref.append(best)
    return ref


def from_arrays(vertices, triangles, boundary_edges=None, ref_edges=None) -> Mesh:
    """Build a macro mesh; refinement edges default to the longest edge."""
    vertices = np.asarray(vertices, dtype=float)
    triangles = np.asarray(triangles, dtype=np.int64)
    if ref_edges is None:
        ref_edges = _longest_edge_assignment(vertices, triangles)
    tri = _normalize(vertices, triangles, ref_edges)
    if boundary_edges is None:
        counts: dict[tuple[int, int], int] = {}
        for t in tri:
            for a, b in ((t[0], t[1]), (t[1], t[2]), (t[2], t[0])):
                counts[_edge_key(a, b)] = counts.get(_edge_key(a, b), 0) + 1
        boundary_edges = {e: DIRICHLET for e, c in counts.items() if c == 1}
    else:
        boundary_edges = {_edge_key(a, b): m for (a, b), m in dict(boundary_edges).items()}
    return Mesh(vertices=vertices, triangles=tri, boundary_edges=boundary_edges)


def unit_square() -> Mesh:
    """Unit square split into two right triangles along the main diagonal."""
    vertices = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]
    triangles = [(0, 1, 2), (0, 2, 3)]
    return from_arrays(vertices, triangles)


def l_shape() -> Mesh:
    """L-shaped domain (-1,1)^2 minus the closed fourth quadrant."""
    vertices = [
        (-1.0, -1.0), (0.0, -1.0), (0.0, 0.0), (1.0, 0.0),
        (1.0, 1.0), (0.0, 1.0), (-1.0, 1.0), (-1.0, 0.0),
    ]
    triangles = [(0, 1, 2), (0, 2, 7), (7, 2, 5), (7, 5, 6), (2, 3, 4), (2, 4, 5)]
    return from_arrays(vertices, triangles)


def geometry(name: str) -> Mesh:
    try:
        return {"unit_square": unit_square, "l_shape": l_shape}[name]()
    except KeyError:
        raise ValueError(f"unknown geometry {name!r}") from None


# -- ASCII mesh file I/O ------------------------------------------------------


def read_mesh(path) -> Mesh:
    """Read the ASCII mesh format.

    Layout: a header "nv nt", nv lines "x y", nt lines "v0 v1 v2 refEdge",
    then one line "va vb marker" per boundary edge.  '#' starts a comment.
    """
    tokens: list[str] = []
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if line:
                tokens.extend(line.split())
    it = iter(tokens)
    try:
        nv, nt = int(next(it)), int(next(it))
        vertices = [(float(next(it)), float(next(it))) for _ in range(nv)]
        tris, refs = [], []
        for _ in range(nt):
            tris.append((int(next(it)), int(next(it)), int(next(it))))
            refs.append(int(next(it)))
        rest = list(it)
    except StopIteration:
        raise MeshError(f"{path}: truncated mesh file") from None
    if len(rest) % 3:
        raise MeshError(f"{path}: malformed boundary edge list")
    boundary = {}
    for i in range(0, len(rest), 3):
        boundary[_edge_key(int(rest[i]), int(rest[i + 1]))] = int(rest[i + 2])
    return from_arrays(vertices, tris, boundary_edges=boundary, ref_edges=refs)


def write_mesh(mesh: Mesh, path) -> None:
    with open(path, "w") as fh:
        fh.write(f"{mesh.num_vertices} {mesh.num_triangles}\n")
        for x, y in mesh.vertices:
            fh.write(f"{float(x)!r} {float(y)!r}\n")
        for v0, v1, v2 in mesh.triangles:
            fh.write(f"{v0} {v1} {v2} 2\n")  # refinement edge is (v0, v1)
        for (a, b), marker in sorted(mesh.boundary_edges.items()):
            fh.write(f"{a} {b} {marker}\n")
