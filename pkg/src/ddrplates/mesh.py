"""Polygonal meshes with global edge orientation.

Edges are derived from the CCW cell-vertex lists. Every edge is directed from
its lower to its higher vertex id, carries the unit tangent t_E and the normal
n_E = (-t_2, t_1), and every cell records for each of its edges the sign
omega_TE that makes omega_TE * n_E point out of the cell.

Sources understood by load_or_generate_mesh:
    tri n               uniform triangles on the unit square, n x n squares split
    cart n              uniform n x n squares
    kershaw n delta     checkerboard-distorted quadrilaterals, 0 <= delta < 1
    cell name           one builtin cell (see BUILTIN_CELLS)
    <path>              a polymesh v1 file
"""
import io
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.distance import pdist

from .errors import MeshError

logger = logging.getLogger(__name__)

POLYMESH_HEADER = 'polymesh 1'
DUPLICATE_TOL = 1e-12
STAR_GRID = 16

SQRT3 = math.sqrt(3.0)


def _regular_polygon(nsides, radius=0.5, center=(0.5, 0.5)):
    angles = 2.0 * np.pi * np.arange(nsides) / nsides
    return [(center[0] + radius * math.cos(a), center[1] + radius * math.sin(a)) for a in angles]


BUILTIN_CELLS = {
    'triangle': [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)],
    'square': [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)],
    'pentagon': _regular_polygon(5),
    'hexagon': _regular_polygon(6),
    'dart': [(0.0, 0.0), (2.0, 1.0), (0.0, 2.0), (0.8, 1.0)],
    'slab': [(0.0, 0.0), (1.0, 0.0), (1.0, 0.2), (0.0, 0.2)],
    'equilateral': [(0.0, 0.0), (1.0, 0.0), (0.5, 0.5 * SQRT3)],
}

# cells certified by the verification suite
SUITE_CELLS = ('triangle', 'square', 'pentagon', 'hexagon', 'dart', 'slab')


@dataclass(frozen=True)
class Vertex:
    id: int
    x: tuple


@dataclass(frozen=True, eq=False)
class Edge:
    id: int
    tail: int
    head: int
    tangent: np.ndarray
    normal: np.ndarray
    length: float
    midpoint: np.ndarray
    cells: tuple
    endpoints: np.ndarray

    @property
    def is_boundary(self):
        return len(self.cells) == 1

    def vertex_orientation(self, vertex_id):
        """omega_EV: +1 at the head, -1 at the tail."""
        if vertex_id == self.head:
            return 1
        if vertex_id == self.tail:
            return -1
        raise MeshError(f'Vertex {vertex_id} is not an endpoint of edge {self.id}')


@dataclass(frozen=True, eq=False)
class Cell:
    id: int
    vertices: tuple
    edges: tuple
    coordinates: np.ndarray
    center: np.ndarray
    diameter: float
    area: float
    star_shaped: bool
    center_fallback: bool

    @property
    def edge_ids(self):
        return tuple(e for e, _ in self.edges)

    @property
    def orientations(self):
        return tuple(w for _, w in self.edges)


@dataclass(frozen=True)
class MeshReport:
    label: str
    h: float
    n_vertices: int
    n_edges: int
    n_cells: int
    euler: int
    area: float
    min_edge_ratio: float
    max_edge_ratio: float
    min_inradius_ratio: float
    inradius_ratios: tuple
    non_star_cells: tuple
    fallback_cells: tuple

    def lines(self):
        out = [
            f'mesh            {self.label}',
            f'h               {self.h:.6e}',
            f'vertices/edges/cells  {self.n_vertices} {self.n_edges} {self.n_cells}',
            f'euler           {self.euler}',
            f'area            {self.area:.12g}',
            f'edge/h_T        [{self.min_edge_ratio:.4f}, {self.max_edge_ratio:.4f}]',
            f'inradius/h_T    {self.min_inradius_ratio:.4f}',
        ]
        if self.non_star_cells:
            out.append(f'not star-shaped w.r.t. x_T: {list(self.non_star_cells)}')
        if self.fallback_cells:
            out.append(f'x_T from grid search: {list(self.fallback_cells)}')
        return out


# ----------------------------------------------
# Polygon geometry
# ----------------------------------------------
def signed_area(coords):
    x, y = coords[:, 0], coords[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def polygon_centroid(coords):
    x, y = coords[:, 0], coords[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    area = 0.5 * cross.sum()
    cx = ((x + xn) * cross).sum() / (6.0 * area)
    cy = ((y + yn) * cross).sum() / (6.0 * area)
    return np.array([cx, cy])


def _segments_cross(p1, p2, q1, q2):
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1, d2 = orient(q1, q2, p1), orient(q1, q2, p2)
    d3, d4 = orient(p1, p2, q1), orient(p1, p2, q2)
    if ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)) and 0 not in (d1, d2, d3, d4):
        return True
    scale = max(np.ptp([p1[0], p2[0], q1[0], q2[0]]), np.ptp([p1[1], p2[1], q1[1], q2[1]]))
    eps = 1e-14 * scale * scale

    def on_segment(a, b, c):
        return (min(a[0], b[0]) - eps <= c[0] <= max(a[0], b[0]) + eps
                and min(a[1], b[1]) - eps <= c[1] <= max(a[1], b[1]) + eps)

    return ((abs(d1) <= eps and on_segment(q1, q2, p1)) or (abs(d2) <= eps and on_segment(q1, q2, p2))
            or (abs(d3) <= eps and on_segment(p1, p2, q1)) or (abs(d4) <= eps and on_segment(p1, p2, q2)))


def is_simple(coords):
    m = len(coords)
    for i in range(m):
        for j in range(i + 1, m):
            if j == i + 1 or (i == 0 and j == m - 1):
                continue
            if _segments_cross(coords[i], coords[(i + 1) % m], coords[j], coords[(j + 1) % m]):
                return False
    return True


def _edge_line_distances(coords, points):
    """Signed distances of points to the lines of the CCW edges, positive inside."""
    start = coords
    direction = np.roll(coords, -1, axis=0) - coords
    lengths = np.linalg.norm(direction, axis=1)
    rel = points[:, None, :] - start[None, :, :]
    cross = direction[None, :, 0] * rel[:, :, 1] - direction[None, :, 1] * rel[:, :, 0]
    return cross / lengths[None, :]


def _boundary_distance(coords, points):
    start = coords
    direction = np.roll(coords, -1, axis=0) - coords
    rel = points[:, None, :] - start[None, :, :]
    length2 = (direction ** 2).sum(axis=1)
    s = np.clip((rel * direction[None]).sum(axis=2) / length2[None], 0.0, 1.0)
    foot = start[None] + s[..., None] * direction[None]
    return np.linalg.norm(points[:, None, :] - foot, axis=2).min(axis=1)


def _inside(coords, points):
    """Crossing-number point-in-polygon test."""
    x, y = points[:, 0:1], points[:, 1:2]
    x0, y0 = coords[:, 0][None], coords[:, 1][None]
    x1, y1 = np.roll(coords[:, 0], -1)[None], np.roll(coords[:, 1], -1)[None]
    straddle = (y0 > y) != (y1 > y)
    with np.errstate(divide='ignore', invalid='ignore'):
        xcross = x0 + (y - y0) * (x1 - x0) / (y1 - y0)
    return (np.count_nonzero(straddle & (x < xcross), axis=1) % 2) == 1


def is_star_point(coords, point, diameter):
    dist = _edge_line_distances(coords, np.asarray(point, float)[None])[0]
    return bool(np.all(dist > 1e-12 * diameter))


def star_center(coords, diameter):
    """Star point of a cell: the centroid, or a grid-searched interior point.

    Returns (x_T, star_shaped, fell_back).
    """
    centroid = polygon_centroid(coords)
    if is_star_point(coords, centroid, diameter):
        return centroid, True, False

    lo, hi = coords.min(axis=0), coords.max(axis=0)
    xs = np.linspace(lo[0], hi[0], STAR_GRID + 2)[1:-1]
    ys = np.linspace(lo[1], hi[1], STAR_GRID + 2)[1:-1]
    grid = np.array([(x, y) for y in ys for x in xs])
    line_dist = _edge_line_distances(coords, grid).min(axis=1)
    in_kernel = line_dist > 1e-12 * diameter
    if in_kernel.any():
        best = np.flatnonzero(in_kernel)[np.argmax(line_dist[in_kernel])]
        return grid[best], True, True

    inside = _inside(coords, grid)
    if not inside.any():
        return centroid, False, False
    candidates = grid[inside]
    best = np.argmax(_boundary_distance(coords, candidates))
    return candidates[best], False, True


# ----------------------------------------------
# Mesh
# ----------------------------------------------
class Mesh:
    """Immutable polygonal mesh.

    points are the vertex coordinates, cell_vertices the vertex id lists of the
    cells; clockwise lists are reversed with a warning.
    """

    def __init__(self, points, cell_vertices, label='mesh'):
        self.label = label
        self.points = np.array(points, dtype=float)
        if self.points.ndim != 2 or self.points.shape[1] != 2 or len(self.points) == 0:
            raise MeshError('Vertex coordinates must be a non-empty list of 2D points')
        if not np.all(np.isfinite(self.points)):
            raise MeshError('Vertex coordinates must be finite')
        self.vertices = tuple(Vertex(i, (float(p[0]), float(p[1]))) for i, p in enumerate(self.points))
        self._check_duplicates()
        self.cell_vertices = tuple(self._orient(c, vs) for c, vs in enumerate(cell_vertices))
        if not self.cell_vertices:
            raise MeshError('Mesh has no cells')
        self.edges = ()
        self.cells = ()
        self.boundary_edges = ()
        build_orientation_data(self)

    def _check_duplicates(self):
        scale = float(np.max(np.ptp(self.points, axis=0))) if len(self.points) > 1 else 1.0
        pairs = cKDTree(self.points).query_pairs(DUPLICATE_TOL * max(scale, 1e-300))
        if pairs:
            a, b = sorted(min(pairs))
            raise MeshError(f'Duplicate vertices {a} and {b} at {tuple(self.points[a])}')

    def _orient(self, cell_id, vertex_ids):
        vertex_ids = [int(v) for v in vertex_ids]
        if len(vertex_ids) < 3:
            raise MeshError(f'Cell {cell_id} has fewer than 3 vertices')
        if len(set(vertex_ids)) != len(vertex_ids):
            raise MeshError(f'Cell {cell_id} repeats a vertex')
        if min(vertex_ids) < 0 or max(vertex_ids) >= len(self.points):
            raise MeshError(f'Cell {cell_id} references an unknown vertex')
        coords = self.points[vertex_ids]
        if not is_simple(coords):
            raise MeshError(f'Cell {cell_id} is not a simple polygon')
        if signed_area(coords) < 0:
            logger.warning('Cell %d is clockwise, reversing its vertex list', cell_id)
            vertex_ids = vertex_ids[::-1]
        return tuple(vertex_ids)

    @property
    def h(self):
        return max(c.diameter for c in self.cells)

    @property
    def area(self):
        return sum(c.area for c in self.cells)

    @property
    def euler(self):
        return len(self.vertices) - len(self.edges) + len(self.cells)

    def __repr__(self):
        return f'<Mesh({self.label!r}, nv={len(self.vertices)}, ne={len(self.edges)}, nc={len(self.cells)})>'


def build_orientation_data(mesh):
    """Derive edges and populate t_E, n_E, omega_TE and the cell geometry."""
    incidence = {}
    traversals = {}
    for cell_id, vertex_ids in enumerate(mesh.cell_vertices):
        m = len(vertex_ids)
        for i in range(m):
            a, b = vertex_ids[i], vertex_ids[(i + 1) % m]
            key = (min(a, b), max(a, b))
            incidence.setdefault(key, []).append(cell_id)
            traversals.setdefault(key, []).append(a)

    keys = sorted(incidence)
    index = {key: i for i, key in enumerate(keys)}
    edges = []
    for i, key in enumerate(keys):
        cells = incidence[key]
        if len(cells) > 2:
            raise MeshError(f'Edge {key} is shared by more than two cells: {cells}')
        if len(cells) == 2 and traversals[key][0] == traversals[key][1]:
            raise MeshError(f'Cells {cells} traverse edge {key} in the same direction')
        tail, head = key
        endpoints = mesh.points[[tail, head]]
        vec = endpoints[1] - endpoints[0]
        length = float(np.linalg.norm(vec))
        tangent = vec / length
        normal = np.array([-tangent[1], tangent[0]])
        edges.append(Edge(
            id=i, tail=tail, head=head, tangent=tangent, normal=normal, length=length,
            midpoint=0.5 * (endpoints[0] + endpoints[1]), cells=tuple(cells), endpoints=endpoints,
        ))

    cells = []
    for cell_id, vertex_ids in enumerate(mesh.cell_vertices):
        coords = mesh.points[list(vertex_ids)]
        area = signed_area(coords)
        if area <= 0:
            raise MeshError(f'Cell {cell_id} is not orientable (signed area {area:.3e})')
        diameter = float(pdist(coords).max())
        center, star, fallback = star_center(coords, diameter)
        if fallback:
            logger.info('Cell %d: star point taken from grid search at %s', cell_id, center)
        m = len(vertex_ids)
        cell_edges = []
        for i in range(m):
            a, b = vertex_ids[i], vertex_ids[(i + 1) % m]
            edge = edges[index[(min(a, b), max(a, b))]]
            # traversal along t_E means t_E turns the cell to its left
            omega = -1 if a == edge.tail else 1
            cell_edges.append((edge.id, omega))
        cells.append(Cell(
            id=cell_id, vertices=tuple(vertex_ids), edges=tuple(cell_edges), coordinates=coords,
            center=center, diameter=diameter, area=area, star_shaped=star, center_fallback=fallback,
        ))

    mesh.edges = tuple(edges)
    mesh.cells = tuple(cells)
    mesh.boundary_edges = tuple(e.id for e in edges if e.is_boundary)
    unused = set(range(len(mesh.points))) - {v for c in mesh.cell_vertices for v in c}
    if unused:
        logger.warning('Mesh %s has %d vertices not used by any cell', mesh.label, len(unused))
    return mesh


def mesh_diagnostics(mesh):
    ratios_min, ratios_max, inradius = [], [], []
    for cell in mesh.cells:
        lengths = [mesh.edges[e].length for e in cell.edge_ids]
        ratios_min.append(min(lengths) / cell.diameter)
        ratios_max.append(max(lengths) / cell.diameter)
        rho = _boundary_distance(cell.coordinates, cell.center[None])[0]
        inradius.append(float(rho) / cell.diameter)
    return MeshReport(
        label=mesh.label,
        h=mesh.h,
        n_vertices=len(mesh.vertices),
        n_edges=len(mesh.edges),
        n_cells=len(mesh.cells),
        euler=mesh.euler,
        area=mesh.area,
        min_edge_ratio=min(ratios_min),
        max_edge_ratio=max(ratios_max),
        min_inradius_ratio=min(inradius),
        inradius_ratios=tuple(inradius),
        non_star_cells=tuple(c.id for c in mesh.cells if not c.star_shaped),
        fallback_cells=tuple(c.id for c in mesh.cells if c.center_fallback),
    )


# ----------------------------------------------
# Generators
# ----------------------------------------------
def _grid_points(n):
    return [(i / n, j / n) for j in range(n + 1) for i in range(n + 1)]


def _quads(n):
    for j in range(n):
        for i in range(n):
            a = j * (n + 1) + i
            yield a, a + 1, a + n + 2, a + n + 1


def generate_triangles(n):
    cells = []
    for a, b, c, d in _quads(n):
        cells.append((a, b, c))
        cells.append((a, c, d))
    return Mesh(_grid_points(n), cells, label=f'tri {n}')


def generate_cartesian(n):
    return Mesh(_grid_points(n), list(_quads(n)), label=f'cart {n}')


def generate_kershaw(n, delta):
    if not 0.0 <= delta < 1.0:
        raise MeshError(f'Kershaw distortion must lie in [0, 1), got {delta}')
    h = 1.0 / n
    points = []
    for j in range(n + 1):
        for i in range(n + 1):
            x, y = i * h, j * h
            if 0 < i < n and 0 < j < n:
                x += delta * 0.5 * h * (-1) ** j
                y += delta * 0.5 * h * (-1) ** i
            points.append((x, y))
    return Mesh(points, list(_quads(n)), label=f'kershaw {n} {delta:g}')


def builtin_cell(name):
    try:
        coords = BUILTIN_CELLS[name]
    except KeyError:
        raise MeshError(f'Unknown builtin cell {name!r}; known: {sorted(BUILTIN_CELLS)}') from None
    return Mesh(coords, [tuple(range(len(coords)))], label=f'cell {name}')


def _positive_int(token, source):
    try:
        n = int(token)
    except ValueError:
        raise MeshError(f'Bad mesh size in {source!r}') from None
    if n < 1:
        raise MeshError(f'Mesh size must be positive in {source!r}')
    return n


def load_or_generate_mesh(source):
    """Build a Mesh from a generator spec or a polymesh v1 file."""
    if isinstance(source, Path):
        return read_polymesh(source)
    tokens = str(source).split()
    if not tokens:
        raise MeshError('Empty mesh source')
    kind = tokens[0]
    if kind in ('tri', 'cart') and len(tokens) == 2:
        n = _positive_int(tokens[1], source)
        return generate_triangles(n) if kind == 'tri' else generate_cartesian(n)
    if kind == 'kershaw' and len(tokens) in (2, 3):
        n = _positive_int(tokens[1], source)
        try:
            delta = float(tokens[2]) if len(tokens) == 3 else 0.5
        except ValueError:
            raise MeshError(f'Bad distortion in {source!r}') from None
        return generate_kershaw(n, delta)
    if kind == 'cell' and len(tokens) == 2:
        return builtin_cell(tokens[1])
    path = Path(str(source))
    if path.is_file():
        return read_polymesh(path)
    raise MeshError(f'Mesh source {source!r} is neither a generator spec nor a file')


def expand_sources(sources):
    """Expand the 'suite' shorthand into the verification cells."""
    out = []
    for source in sources:
        if str(source).strip() == 'suite':
            out.extend(f'cell {name}' for name in SUITE_CELLS)
        else:
            out.append(source)
    return out


# ----------------------------------------------
# polymesh v1
# ----------------------------------------------
def _content_lines(text):
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split('#', 1)[0].strip()
        if line:
            yield number, line


def read_polymesh(source):
    if isinstance(source, io.TextIOBase):
        text, label = source.read(), 'stream'
    else:
        path = Path(source)
        try:
            text = path.read_text()
        except OSError as e:
            raise MeshError(f'Cannot read mesh file {path}: {e}') from e
        label = path.stem

    lines = list(_content_lines(text))
    if not lines or lines[0][1].split() != POLYMESH_HEADER.split():
        raise MeshError(f'{label}: line 1 must be {POLYMESH_HEADER!r}')
    try:
        number, line = lines[1]
        nv, nc = (int(t) for t in line.split())
    except (IndexError, ValueError):
        raise MeshError(f'{label}: line 2 must hold the vertex and cell counts') from None
    if len(lines) != 2 + nv + nc:
        raise MeshError(f'{label}: expected {nv} vertex and {nc} cell lines, found {len(lines) - 2}')

    points = []
    for number, line in lines[2:2 + nv]:
        tokens = line.split()
        try:
            if len(tokens) != 2:
                raise ValueError
            points.append((float(tokens[0]), float(tokens[1])))
        except ValueError:
            raise MeshError(f'{label}: line {number}: expected "x y"') from None
    cells = []
    for number, line in lines[2 + nv:]:
        try:
            tokens = [int(t) for t in line.split()]
            if len(tokens) < 1 or tokens[0] != len(tokens) - 1:
                raise ValueError
        except ValueError:
            raise MeshError(f'{label}: line {number}: expected "m v1 ... vm"') from None
        cells.append(tokens[1:])
    return Mesh(points, cells, label=label)


def write_polymesh(mesh, target):
    lines = [POLYMESH_HEADER, f'{len(mesh.points)} {len(mesh.cell_vertices)}']
    lines.extend(f'{float(x)!r} {float(y)!r}' for x, y in mesh.points)
    lines.extend(' '.join(str(v) for v in (len(c), *c)) for c in mesh.cell_vertices)
    text = '\n'.join(lines) + '\n'
    if isinstance(target, io.TextIOBase):
        target.write(text)
    else:
        Path(target).write_text(text)
    return text
