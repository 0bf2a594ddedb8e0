"""Simplicial meshes: benchmark generators, topology, distortion, JSON IO.

A mesh is triangles (2D) or tetrahedra (3D) with consistently positive
orientation and a set of labeled boundary facet groups.  The label
vocabulary is fixed:

``clamped``
    All displacement components are fixed to zero.
``roller-x`` / ``roller-y``
    The named component is fixed to zero (symmetry planes).
``traction``
    A prescribed surface load is applied here.
``free``
    Natural boundary, listed for completeness.

Generators produce the structured benchmark geometries (Cook's membrane,
a quarter pipe annulus, a quarter 3D block) with these labels attached, so
downstream code never re-derives boundary semantics from coordinates.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .basis import affine_maps

BOUNDARY_LABELS = ("clamped", "roller-x", "roller-y", "traction", "free")

_TRI_FACETS = np.array([(1, 2), (2, 0), (0, 1)])
_TET_FACETS = np.array([(1, 2, 3), (0, 3, 2), (0, 1, 3), (0, 2, 1)])


def element_facets(dim):
    """Local facet connectivity, facet i opposite vertex i, outward oriented."""
    return _TRI_FACETS if dim == 2 else _TET_FACETS

_TRI_EDGES = np.array([(1, 2), (2, 0), (0, 1)])
_TET_EDGES = np.array([(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)])


@dataclass
class PrimalMesh:
    """Simplicial mesh with labeled boundary facets.

    Attributes
    ----------
    nodes : (N, d) float array of vertex coordinates.
    elements : (E, d+1) int array, positively oriented.
    boundary : dict mapping label -> (F, d) int array of facet node tuples.
    """

    nodes: np.ndarray
    elements: np.ndarray
    boundary: dict = field(default_factory=dict)

    def __post_init__(self):
        self.nodes = np.ascontiguousarray(np.asarray(self.nodes, float))
        self.elements = np.ascontiguousarray(np.asarray(self.elements, np.int64))
        self.boundary = {
            k: np.ascontiguousarray(np.asarray(v, np.int64).reshape(-1, self.dim))
            for k, v in self.boundary.items()
        }
        for label in self.boundary:
            if label not in BOUNDARY_LABELS:
                raise ValueError(f"unknown boundary label {label!r}")
        _, measures = affine_maps(self.nodes, self.elements)
        bad = np.flatnonzero(measures <= 0.0)
        if bad.size:
            raise ValueError(
                f"element {bad[0]} has non-positive measure {measures[bad[0]]:.3e}"
            )
        self._measures = measures

    @property
    def dim(self):
        return self.nodes.shape[1]

    @property
    def n_nodes(self):
        return len(self.nodes)

    @property
    def n_elements(self):
        return len(self.elements)

    def element_measures(self):
        """Areas (2D) or volumes (3D), all positive."""
        return self._measures.copy()

    def copy_with_nodes(self, nodes):
        return PrimalMesh(nodes, self.elements.copy(),
                          {k: v.copy() for k, v in self.boundary.items()})

    def to_json(self):
        payload = {
            "dim": self.dim,
            "nodes": self.nodes.tolist(),
            "elements": self.elements.tolist(),
            "boundary": {k: self.boundary[k].tolist() for k in sorted(self.boundary)},
        }
        return json.dumps(payload, indent=1)

    @classmethod
    def from_json(cls, text):
        payload = json.loads(text)
        return cls(
            np.asarray(payload["nodes"], float),
            np.asarray(payload["elements"], np.int64),
            {k: np.asarray(v, np.int64) for k, v in payload["boundary"].items()},
        )


@dataclass
class Topology:
    """Unique edges/faces of a mesh with element incidences.

    ``facet_*`` refers to codimension-1 entities (edges in 2D, faces in 3D);
    in 2D the edge and facet tables coincide.  Incidence lists are CSR-style:
    elements touching entity k are ``facet_elems[facet_ptr[k]:facet_ptr[k+1]]``.
    """

    edges: np.ndarray          # (NE, 2) sorted node pairs
    elem_edges: np.ndarray     # (E, n_local_edges) edge ids
    facets: np.ndarray         # (NF, d) sorted node tuples
    elem_facets: np.ndarray    # (E, d+1) facet ids, local facet i opposite vertex i
    facet_ptr: np.ndarray
    facet_elems: np.ndarray
    boundary_facet_mask: np.ndarray  # (NF,) true where exactly one element

    @property
    def n_edges(self):
        return len(self.edges)

    @property
    def n_facets(self):
        return len(self.facets)

    def boundary_nodes(self):
        return np.unique(self.facets[self.boundary_facet_mask])

    def facet_index(self, facet_nodes):
        """Map (F, d) facet node tuples to facet ids (raises on a miss)."""
        key = np.sort(np.asarray(facet_nodes, np.int64), axis=1)
        order = np.lexsort(self.facets.T[::-1])
        ordered = self.facets[order]
        pos = _rows_searchsorted(ordered, key)
        if pos is None:
            raise KeyError("facet not present in mesh")
        return order[pos]


def _rows_searchsorted(sorted_rows, query):
    """Indices of query rows inside lexically sorted unique rows, else None."""
    d = sorted_rows.shape[1]
    # encode rows as void dtype for searchsorted
    a = np.ascontiguousarray(sorted_rows).view([("", sorted_rows.dtype)] * d).ravel()
    q = np.ascontiguousarray(query).view([("", query.dtype)] * d).ravel()
    pos = np.searchsorted(a, q)
    if np.any(pos >= len(a)) or np.any(a[np.minimum(pos, len(a) - 1)] != q):
        return None
    return pos


def _unique_rows(rows):
    """(unique sorted rows, inverse) with rows pre-sorted along axis 1."""
    return np.unique(rows, axis=0, return_inverse=True)


def build_topology(mesh):
    """Enumerate unique edges and facets and their element incidences."""
    elems = mesh.elements
    dim = mesh.dim
    local_edges = _TRI_EDGES if dim == 2 else _TET_EDGES
    edge_rows = np.sort(elems[:, local_edges].reshape(-1, 2), axis=1)
    edges, edge_inv = _unique_rows(edge_rows)
    elem_edges = edge_inv.reshape(len(elems), len(local_edges))

    if dim == 2:
        # local edge i is already the facet opposite vertex i
        facets, elem_facets = edges, elem_edges
    else:
        facet_rows = np.sort(elems[:, _TET_FACETS].reshape(-1, 3), axis=1)
        facets, facet_inv = _unique_rows(facet_rows)
        elem_facets = facet_inv.reshape(len(elems), 4)

    flat = elem_facets.ravel()
    owners = np.repeat(np.arange(len(elems)), dim + 1)
    order = np.argsort(flat, kind="stable")
    counts = np.bincount(flat, minlength=len(facets))
    facet_ptr = np.concatenate([[0], np.cumsum(counts)])
    facet_elems = owners[order]
    boundary_mask = counts == 1
    return Topology(edges, elem_edges, facets, elem_facets,
                    facet_ptr, facet_elems, boundary_mask)


# ----------------------------------------------------------------------
# benchmark geometries
# ----------------------------------------------------------------------

def _grid_triangles(nx, ny, node_id):
    """Split each grid quad into two triangles (CCW for increasing x, y)."""
    tris = []
    for j in range(ny):
        for i in range(nx):
            n00 = node_id(i, j)
            n10 = node_id(i + 1, j)
            n01 = node_id(i, j + 1)
            n11 = node_id(i + 1, j + 1)
            tris.append((n00, n10, n11))
            tris.append((n00, n11, n01))
    return np.asarray(tris, np.int64)


def _line_facets(indices):
    return np.column_stack([indices[:-1], indices[1:]])


def generate_cook(resolution):
    """Cook's membrane: clamped left edge, vertical traction on the right.

    Corners (0,0), (48,44), (48,60), (0,44); ``resolution`` is n or (nx, ny)
    quads per side, each split into two triangles.
    """
    nx, ny = _pair(resolution)
    node_id = lambda i, j: j * (nx + 1) + i
    nodes = np.empty(((nx + 1) * (ny + 1), 2))
    for j in range(ny + 1):
        eta = j / ny
        for i in range(nx + 1):
            xi = i / nx
            nodes[node_id(i, j)] = (48.0 * xi, 44.0 * xi + eta * (44.0 - 28.0 * xi))
    elements = _grid_triangles(nx, ny, node_id)
    left = np.array([node_id(0, j) for j in range(ny + 1)])
    right = np.array([node_id(nx, j) for j in range(ny + 1)])
    bottom = np.array([node_id(i, 0) for i in range(nx + 1)])
    top = np.array([node_id(i, ny) for i in range(nx + 1)])
    boundary = {
        "clamped": _line_facets(left),
        "traction": _line_facets(right),
        "free": np.vstack([_line_facets(bottom), _line_facets(top)]),
    }
    return PrimalMesh(nodes, elements, boundary)


def generate_annulus(resolution, inner=1.0, outer=2.0):
    """Quarter annulus (pipe cross-section) with symmetry rollers.

    ``resolution`` is n or (n_radial, n_circumferential); the inner arc is
    the pressurized ``traction`` boundary, the outer arc is free, y = 0 gets
    ``roller-y`` and x = 0 gets ``roller-x``.
    """
    nr, nt = _pair(resolution, second=lambda n: 2 * n)
    if inner <= 0 or outer <= inner:
        raise ValueError("need 0 < inner < outer")
    node_id = lambda i, j: j * (nr + 1) + i
    nodes = np.empty(((nr + 1) * (nt + 1), 2))
    for j in range(nt + 1):
        th = 0.5 * np.pi * j / nt
        for i in range(nr + 1):
            r = inner + (outer - inner) * i / nr
            nodes[node_id(i, j)] = (r * np.cos(th), r * np.sin(th))
    elements = _grid_triangles(nr, nt, node_id)
    inner_arc = np.array([node_id(0, j) for j in range(nt + 1)])
    outer_arc = np.array([node_id(nr, j) for j in range(nt + 1)])
    bottom = np.array([node_id(i, 0) for i in range(nr + 1)])
    left = np.array([node_id(i, nt) for i in range(nr + 1)])
    boundary = {
        "traction": _line_facets(inner_arc),
        "free": _line_facets(outer_arc),
        "roller-y": _line_facets(bottom),
        "roller-x": _line_facets(left),
    }
    return PrimalMesh(nodes, elements, boundary)


_KUHN_PERMS = ((0, 1, 2), (1, 2, 0), (2, 0, 1), (0, 2, 1), (2, 1, 0), (1, 0, 2))


def generate_block(resolution, size=(50.0, 50.0, 50.0), patch=None,
                   pattern="uniform"):
    """Quarter block, clamped base, pressure patch on top near the corner.

    The box [0,sx]x[0,sy]x[0,sz] starts from a grid of resolution
    (nx,ny,nz) cells.  With ``pattern="uniform"`` each cell is split into
    six Kuhn tetrahedra sharing the cell diagonal.  That pattern is exactly
    reproducible and cheap, but its parallel diagonal chains carry a large
    family of piecewise-linear fields with zero divergence in every
    element, so displacement methods barely lock on it near the
    incompressible limit.  ``pattern="unstructured"`` breaks those chains:
    the grid nodes are jittered (boundary nodes only within their plane),
    relaxed by a few Laplacian sweeps, and connected by a Delaunay
    tetrahedralization.  The construction is deterministic - the jitter
    seed is a fixed module constant - and keeps the loaded patch covered by
    facets whose vertices lie exactly on the patch boundary.

    Labels: z=0 clamped, x=0 roller-x, y=0 roller-y, top facets inside
    [0,px]x[0,py] traction, rest free.  ``patch=None`` marks exactly the
    corner grid cell (so the default 50-cube at resolution 5 gets the
    10x10 patch); an explicit patch must sit on grid lines.
    """
    nx, ny, nz = _triple(resolution)
    sx, sy, sz = size
    px, py = (sx / nx, sy / ny) if patch is None else patch
    for name, extent, cells, edge in (("x", sx, nx, px), ("y", sy, ny, py)):
        ratio = edge / (extent / cells)
        if abs(ratio - round(ratio)) > 1e-9 or not 0 < edge <= extent:
            raise ValueError(
                f"patch edge {edge} along {name} must sit on grid lines "
                f"(cell size {extent / cells})"
            )
    node_id = lambda i, j, k: (k * (ny + 1) + j) * (nx + 1) + i
    nodes = np.empty(((nx + 1) * (ny + 1) * (nz + 1), 3))
    for k in range(nz + 1):
        for j in range(ny + 1):
            for i in range(nx + 1):
                nodes[node_id(i, j, k)] = (sx * i / nx, sy * j / ny, sz * k / nz)
    if pattern == "uniform":
        tets = []
        basis_vecs = np.eye(3, dtype=int)
        for k in range(nz):
            for j in range(ny):
                for i in range(nx):
                    base = np.array([i, j, k])
                    for perm in _KUHN_PERMS:
                        path = [base.copy()]
                        for axis in perm:
                            path.append(path[-1] + basis_vecs[axis])
                        ids = [node_id(*p) for p in path]
                        if _perm_sign(perm) < 0:
                            ids[2], ids[3] = ids[3], ids[2]
                        tets.append(ids)
        elements = np.asarray(tets, np.int64)
    elif pattern == "unstructured":
        h = min(sx / nx, sy / ny, sz / nz)
        # symmetric grids can relax back onto co-spherical point sets that
        # triangulate degenerately; step the seed until the guard passes
        for attempt in range(8):
            pts = _relaxed_block_points(nodes, (sx, sy, sz), (px, py), h,
                                        seed=_BLOCK_SEED + attempt)
            try:
                elements = _delaunay_tets(pts, h)
            except ValueError:
                continue
            nodes = pts
            break
        else:
            raise ValueError(
                "unstructured block pattern stayed degenerate at this "
                "resolution; use a finer grid or the uniform pattern")
    else:
        raise ValueError(f"unknown block pattern {pattern!r}")
    boundary = _classify_block_facets(nodes, elements, (sx, sy, sz), (px, py))
    return PrimalMesh(nodes, elements, boundary)


# jitter amplitude (in cell sizes), relaxation sweeps/factor, and the fixed
# seed of the unstructured block pattern; frozen so meshes are reproducible
_BLOCK_JITTER = 0.25
_BLOCK_SWEEPS = 4
_BLOCK_RELAX = 0.6
_BLOCK_SEED = 1


def _relaxed_block_points(nodes, size, patch, h, seed=_BLOCK_SEED):
    """Jitter grid nodes and relax them by Laplacian sweeps.

    Boundary nodes keep their plane (tangential motion only), nodes on two
    or more planes stay put, and so do the four vertices of the loaded
    patch, which keeps every boundary label and the patch area exact.
    """
    from scipy.spatial import Delaunay

    sx, sy, sz = size
    px, py = patch
    pts = nodes.copy()
    x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
    tol = 1e-9 * max(sx, sy, sz)
    on = lambda v, c: np.abs(v - c) < tol
    freedom = np.ones(pts.shape)
    freedom[on(x, 0.0) | on(x, sx), 0] = 0.0
    freedom[on(y, 0.0) | on(y, sy), 1] = 0.0
    freedom[on(z, 0.0) | on(z, sz), 2] = 0.0
    n_planes = ((on(x, 0.0) | on(x, sx)).astype(int)
                + (on(y, 0.0) | on(y, sy)).astype(int)
                + (on(z, 0.0) | on(z, sz)).astype(int))
    freedom[n_planes >= 2] = 0.0
    for cx, cy in ((0.0, 0.0), (px, 0.0), (0.0, py), (px, py)):
        freedom[on(x, cx) & on(y, cy) & on(z, sz)] = 0.0
    rng = np.random.default_rng(seed)
    pts = pts + freedom * rng.uniform(-_BLOCK_JITTER * h, _BLOCK_JITTER * h,
                                      pts.shape)
    for _ in range(_BLOCK_SWEEPS):
        el = Delaunay(pts).simplices
        acc = np.zeros_like(pts)
        cnt = np.zeros(len(pts))
        for a in range(4):
            for b in range(4):
                if a != b:
                    np.add.at(acc, el[:, a], pts[el[:, b]])
                    np.add.at(cnt, el[:, a], 1.0)
        target = acc / np.maximum(cnt, 1.0)[:, None]
        pts = pts + freedom * (target - pts) * _BLOCK_RELAX
    return pts


def _delaunay_tets(pts, h):
    """Positively oriented Delaunay tetrahedra of a point cloud.

    Raises if the triangulation contains a degenerate cell, which cannot
    happen for the frozen jitter parameters but guards the invariant.
    """
    from scipy.spatial import Delaunay

    el = Delaunay(pts).simplices.astype(np.int64)
    v6 = np.einsum("ij,ij->i",
                   np.cross(pts[el[:, 1]] - pts[el[:, 0]],
                            pts[el[:, 2]] - pts[el[:, 0]]),
                   pts[el[:, 3]] - pts[el[:, 0]])
    flip = v6 < 0
    el[flip] = el[flip][:, [0, 1, 3, 2]]
    if np.any(np.abs(v6) <= 6e-9 * h ** 3):
        raise ValueError("degenerate tetrahedra in the unstructured block")
    return el


def _classify_block_facets(nodes, elements, size, patch):
    """Label the boundary facets of a block mesh by their plane."""
    sx, sy, sz = size
    px, py = patch
    mesh = PrimalMesh(nodes, elements, {})
    topo = build_topology(mesh)
    bfacets = topo.facets[topo.boundary_facet_mask]
    coords = nodes[bfacets]       # (F, 3, 3)
    tol = 1e-9 * max(sx, sy, sz)
    groups = {label: [] for label in ("clamped", "roller-x", "roller-y",
                                      "traction", "free")}
    for facet, xyz in zip(bfacets, coords):
        if np.all(np.abs(xyz[:, 2]) < tol):
            groups["clamped"].append(facet)
        elif np.all(np.abs(xyz[:, 0]) < tol):
            groups["roller-x"].append(facet)
        elif np.all(np.abs(xyz[:, 1]) < tol):
            groups["roller-y"].append(facet)
        elif (np.all(np.abs(xyz[:, 2] - sz) < tol)
              and np.all(xyz[:, 0] <= px + tol) and np.all(xyz[:, 1] <= py + tol)):
            groups["traction"].append(facet)
        else:
            groups["free"].append(facet)
    return {k: np.asarray(v, np.int64) for k, v in groups.items() if v}


def _perm_sign(perm):
    sign = 1
    perm = list(perm)
    for i in range(len(perm)):
        for j in range(i + 1, len(perm)):
            if perm[i] > perm[j]:
                sign = -sign
    return sign


def _pair(resolution, second=None):
    if np.isscalar(resolution):
        n = int(resolution)
        pair = (n, second(n) if second else n)
    else:
        pair = tuple(int(v) for v in resolution)
    if len(pair) != 2 or min(pair) < 2:
        raise ValueError("resolution must be >= 2 per side")
    return pair


def _triple(resolution):
    if np.isscalar(resolution):
        n = int(resolution)
        triple = (n, n, n)
    else:
        triple = tuple(int(v) for v in resolution)
    if len(triple) != 3 or min(triple) < 2:
        raise ValueError("resolution must be >= 2 per side")
    return triple


def generate_benchmark_mesh(geometry, resolution, **kwargs):
    """Dispatch on geometry name: 'cook', 'annulus' (pipe), or 'block'."""
    if geometry == "cook":
        return generate_cook(resolution)
    if geometry in ("annulus", "pipe"):
        return generate_annulus(resolution, **kwargs)
    if geometry == "block":
        return generate_block(resolution, **kwargs)
    raise ValueError(f"unknown geometry {geometry!r}")


# ----------------------------------------------------------------------
# mesh distortion
# ----------------------------------------------------------------------

def _splitmix64(state):
    """One SplitMix64 step: returns (new_state, 64-bit output)."""
    state = (state + 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
    return state, z ^ (z >> 31)


def _unit_interval(bits):
    """Map a 64-bit integer to [-1, 1)."""
    return bits / 2.0 ** 63 - 1.0


def distort_mesh(mesh, density, seed=0):
    """Randomly perturb interior nodes while keeping all elements valid.

    Each interior node moves by ``density * r * spacing`` per coordinate,
    where r is a deterministic SplitMix64 draw in [-1, 1) keyed on
    (seed, node, coordinate) and spacing is the smallest nonzero coordinate
    difference over the node's incident edges.  If any element measure
    becomes non-positive, the perturbation of the interior nodes of the
    offending elements is halved and the mesh rebuilt, up to 10 rounds.
    """
    if not 0.0 <= density < 1.0:
        raise ValueError("density must be in [0, 1)")
    if density == 0.0:
        return mesh.copy_with_nodes(mesh.nodes.copy())
    dim = mesh.dim
    topo = build_topology(mesh)
    interior = np.setdiff1d(np.arange(mesh.n_nodes), topo.boundary_nodes())

    # incident-edge coordinate spacings
    edge_vec = np.abs(mesh.nodes[topo.edges[:, 0]] - mesh.nodes[topo.edges[:, 1]])
    edge_len = np.linalg.norm(mesh.nodes[topo.edges[:, 0]]
                              - mesh.nodes[topo.edges[:, 1]], axis=1)
    scale = edge_len.max()
    spacing = np.full((mesh.n_nodes, dim), np.inf)
    for a in range(2):
        ends = topo.edges[:, a]
        for c in range(dim):
            vals = np.where(edge_vec[:, c] > 1e-12 * scale, edge_vec[:, c], np.inf)
            np.minimum.at(spacing[:, c], ends, vals)
    fallback = np.full(mesh.n_nodes, np.inf)
    for a in range(2):
        np.minimum.at(fallback, topo.edges[:, a], edge_len)
    spacing = np.where(np.isfinite(spacing), spacing, fallback[:, None])

    _, seed_hash = _splitmix64(int(seed) & 0xFFFFFFFFFFFFFFFF)
    r = np.empty((mesh.n_nodes, dim))
    for n in range(mesh.n_nodes):
        for c in range(dim):
            _, bits = _splitmix64((seed_hash + n * dim + c) & 0xFFFFFFFFFFFFFFFF)
            r[n, c] = _unit_interval(bits)

    shift = np.zeros((mesh.n_nodes, dim))
    shift[interior] = density * r[interior] * spacing[interior]
    factor = np.ones(mesh.n_nodes)
    interior_set = set(interior.tolist())
    for _ in range(10):
        nodes = mesh.nodes + factor[:, None] * shift
        _, measures = affine_maps(nodes, mesh.elements)
        bad = np.flatnonzero(measures <= 0.0)
        if bad.size == 0:
            return mesh.copy_with_nodes(nodes)
        for e in bad:
            for n in mesh.elements[e]:
                if n in interior_set:
                    factor[n] *= 0.5
    raise RuntimeError(
        f"mesh distortion failed near node {int(mesh.elements[bad[0]][0])}: "
        "element inversion persisted after 10 reduction rounds"
    )
