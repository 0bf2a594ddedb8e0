"""Operator assembly: smoothed stiffness, pressure coupling, baselines.

The mixed methods solve, with u the (bubble-enriched) displacement and p a
piecewise-constant pressure on the node-centered cells,

    [ A   B^T ] [u]   [f]
    [ B  -C/l ] [p] = [0],        l = Lame lambda,

where A is the smoothed shear stiffness 2 mu int eps:eps, B couples the
smoothed divergence to the pressure cells through exact intersection
measures, and C is the diagonal pressure-cell mass.  Eliminating p gives
the condensed operator A + l B^T C^{-1} B.

Displacement-only baselines (plain FEM and edge/face/node smoothing) use
the full constitutive matrix on their domains instead.  The classical MINI
element is assembled element-wise with continuous nodal pressure.
"""

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .basis import affine_maps, bubble_volume_mean
from .dualmesh import (
    build_micro_decomposition,
    build_pressure_cells,
    build_smoothing_domains,
)
from .mesh import build_topology
from .quadrature import simplex_quadrature
from .smoothing import ElementFrames, batched_bubble_gradients, build_smoothed_gradient

METHODS = ("bes-fem", "bfs-fem", "es-fem", "fs-fem", "ns-fem", "fem-t3", "mini")

_ALIASES = {
    "bes": "bes-fem", "bfs": "bfs-fem", "es": "es-fem", "fs": "fs-fem",
    "ns": "ns-fem", "fem": "fem-t3", "t3": "fem-t3", "fem-t4": "fem-t3",
    "mini": "mini",
}


def canonical_method(name):
    """Normalize a method name or alias; raises on unknown names."""
    key = name.strip().lower()
    key = _ALIASES.get(key, key)
    if key not in METHODS:
        raise ValueError(f"unknown method {name!r}; expected one of {METHODS}")
    return key


@dataclass(frozen=True)
class MaterialParams:
    """Isotropic linear-elastic constants (plane strain in 2D)."""

    E: float
    nu: float

    def __post_init__(self):
        if self.E <= 0.0:
            raise ValueError("Young's modulus must be positive")
        if not 0.0 <= self.nu < 0.5:
            raise ValueError("Poisson ratio must lie in [0, 0.5)")

    @property
    def mu(self):
        return self.E / (2.0 * (1.0 + self.nu))

    @property
    def lam(self):
        return self.E * self.nu / ((1.0 + self.nu) * (1.0 - 2.0 * self.nu))


def full_elastic_matrix(lam, mu, dim):
    """Constitutive matrix in engineering Voigt order (plane strain in 2D)."""
    nv = 3 if dim == 2 else 6
    C = np.zeros((nv, nv))
    C[:dim, :dim] = lam
    C[np.arange(dim), np.arange(dim)] += 2.0 * mu
    C[np.arange(dim, nv), np.arange(dim, nv)] = mu
    return C


def shear_weight_vector(dim):
    """Voigt weights of 2 mu eps:eps: 1 on normal rows, 1/2 on shear rows."""
    nv = 3 if dim == 2 else 6
    w = np.ones(nv)
    w[dim:] = 0.5
    return w


@dataclass(frozen=True)
class DofMap:
    """Displacement dof layout: interleaved components, bubbles after nodes.

    Scalar function j is mesh vertex j for j < n_nodes and the interior
    bubble of element j - n_nodes otherwise; displacement dof (j, c) sits at
    index j * dim + c.  Bubble dofs are never constrained.
    """

    n_nodes: int
    n_elements: int
    dim: int
    with_bubble: bool

    @property
    def n_scalar(self):
        return self.n_nodes + (self.n_elements if self.with_bubble else 0)

    @property
    def n_disp(self):
        return self.n_scalar * self.dim

    def vertex_dof(self, node, comp):
        return node * self.dim + comp

    def bubble_dof(self, element, comp):
        if not self.with_bubble:
            raise ValueError("dof map has no bubbles")
        return (self.n_nodes + element) * self.dim + comp

    def reshape(self, u):
        """View a flat displacement vector as (n_scalar, dim) dof values."""
        return np.asarray(u).reshape(self.n_scalar, self.dim)


class Discretization:
    """Cached geometric products of one mesh: topology, micro-cells, domains.

    Everything downstream (operators, error norms, benchmarks) pulls from
    here so the expensive pieces are built once per mesh.
    """

    def __init__(self, mesh):
        self.mesh = mesh
        self.topo = build_topology(mesh)
        self.micro = build_micro_decomposition(mesh, self.topo)
        self.frames = ElementFrames(mesh)
        self.pressure_cells = build_pressure_cells(self.micro)
        self._domains = {}
        self._gradients = {}
        self._overlaps = {}

    @property
    def dim(self):
        return self.mesh.dim

    def smoothing_kind(self):
        """The bubble methods' domain kind in this dimension."""
        return "edge" if self.dim == 2 else "face"

    def domains(self, kind):
        if kind not in self._domains:
            self._domains[kind] = build_smoothing_domains(self.micro, kind)
        return self._domains[kind]

    def gradient_ops(self, kind, bubble=None):
        key = (kind, bubble)
        if key not in self._gradients:
            self._gradients[key] = build_smoothed_gradient(
                self.mesh, self.micro, self.domains(kind), bubble=bubble,
                frames=self.frames,
            )
        return self._gradients[key]

    def overlap(self, kind):
        if kind not in self._overlaps:
            self._overlaps[kind] = self.pressure_cells.overlap_with_domains(
                self.micro, self.domains(kind)
            )
        return self._overlaps[kind]

    def dofmap(self, with_bubble):
        return DofMap(self.mesh.n_nodes, self.mesh.n_elements, self.dim,
                      with_bubble)


def _comp_row(dim, c):
    row = sparse.csr_matrix(
        (np.ones(1), (np.zeros(1, int), np.asarray([c]))), shape=(1, dim)
    )
    return row


def expand_to_component(G, dim, c):
    """Map scalar columns j of G to interleaved displacement columns (j, c)."""
    return sparse.kron(G, _comp_row(dim, c), format="csr")


def strain_rows(G_list, dim):
    """Voigt strain operators, one (K x n_disp) matrix per engineering row."""
    gx = G_list
    if dim == 2:
        return [
            expand_to_component(gx[0], 2, 0),
            expand_to_component(gx[1], 2, 1),
            expand_to_component(gx[1], 2, 0) + expand_to_component(gx[0], 2, 1),
        ]
    return [
        expand_to_component(gx[0], 3, 0),
        expand_to_component(gx[1], 3, 1),
        expand_to_component(gx[2], 3, 2),
        expand_to_component(gx[1], 3, 0) + expand_to_component(gx[0], 3, 1),
        expand_to_component(gx[2], 3, 1) + expand_to_component(gx[1], 3, 2),
        expand_to_component(gx[2], 3, 0) + expand_to_component(gx[0], 3, 2),
    ]


def divergence_operator(G_list, dim):
    """Sparse (K x n_disp) smoothed divergence."""
    out = expand_to_component(G_list[0], dim, 0)
    for c in range(1, dim):
        out = out + expand_to_component(G_list[c], dim, c)
    return out.tocsr()


def assemble_A_bar(G_list, domains, mu, dim):
    """Smoothed shear stiffness 2 mu sum_k m_k eps_k : eps_k."""
    rows = strain_rows(G_list, dim)
    weights = shear_weight_vector(dim)
    m = domains.measures
    A = None
    for Bv, w in zip(rows, weights):
        scaled = sparse.diags(2.0 * mu * w * m) @ Bv
        term = Bv.T @ scaled
        A = term if A is None else A + term
    return A.tocsr()


def assemble_lambda_stiffness(G_list, domains, lam, dim):
    """Volumetric part lam sum_k m_k div_k div_k (displacement baselines)."""
    Div = divergence_operator(G_list, dim)
    return (Div.T @ (sparse.diags(lam * domains.measures) @ Div)).tocsr()


def assemble_B_bar(G_list, domains, overlap, dim):
    """Pressure coupling: rows are pressure cells, columns displacement dofs.

    B[i, :] = sum_k m(V_i ^ Omega_k) * (smoothed divergence row of k).
    """
    Div = divergence_operator(G_list, dim)
    return (overlap @ Div).tocsr()


def assemble_C_bar(pressure_cells):
    """Diagonal pressure mass: the cell measures."""
    return pressure_cells.measures.copy()


def assemble_condensed(A, B, C_diag, lam):
    """Eliminate the piecewise-constant pressure: A + lam B^T C^{-1} B."""
    W = sparse.diags(lam / C_diag)
    return (A + B.T @ (W @ B)).tocsr()


def assemble_plain_B(disc, dofmap, bubble=None):
    """Element-wise divergence coupling, the volume-integral counterpart of
    the smoothed B: B[i, (j,c)] = int_{V_i} d phi_j / d x_c.

    Vertex gradients are constant per element, so those entries are exact
    intersection measures times gradients; bubble entries use volume
    quadrature of degree d+1 over the micro-cells.
    """
    mesh, micro = disc.mesh, disc.micro
    dim, N = mesh.dim, mesh.n_nodes
    grads = disc.frames.grads
    rows, cols, vals = [], [], []

    # vertex columns: m(V_i ^ T) * grad, accumulated per micro-cell
    t = micro.cell_elem
    i = micro.cell_node
    for l in range(dim + 1):
        for c in range(dim):
            rows.append(i)
            cols.append(mesh.elements[t, l] * dim + c)
            vals.append(micro.measures * grads[t, l, c])

    if bubble:
        rule = simplex_quadrature(dim, dim + 1)
        cpts = micro.points[micro.cells]
        X = np.einsum("qi,kid->kqd", rule.points, cpts)
        lam_pts = disc.frames.barycentric(t, X)
        gb = batched_bubble_gradients(bubble, lam_pts, grads[t])  # (M, Q, d)
        mean = np.einsum("q,kqc->kc", rule.weights, gb)
        for c in range(dim):
            rows.append(i)
            cols.append((N + t) * dim + c)
            vals.append(micro.measures * mean[:, c])

    B = sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(N, dofmap.n_disp),
    )
    return B.tocsr()


def assemble_h1_gram(disc, dofmap, bubble=None):
    """H1-seminorm Gram matrix of the displacement space.

    Vertex-vertex entries are the P1 stiffness; bubble-bubble entries are
    int |grad b|^2 per element; vertex-bubble couplings vanish identically
    because the bubble's gradient integrates to zero over its element.
    """
    mesh = disc.mesh
    dim, N, E = mesh.dim, mesh.n_nodes, mesh.n_elements
    grads, meas = disc.frames.grads, disc.frames.measures
    local = np.einsum("t,tid,tjd->tij", meas, grads, grads)
    ii = np.repeat(mesh.elements, dim + 1, axis=1).ravel()
    jj = np.tile(mesh.elements, (1, dim + 1)).ravel()
    K = sparse.coo_matrix((local.ravel(), (ii, jj)), shape=(N, N)).tocsr()
    if not dofmap.with_bubble:
        return sparse.kron(K, sparse.eye(dim), format="csr")
    if bubble is None:
        raise ValueError("bubble kind required for an enriched gram matrix")
    if bubble == "hat":
        diag = (dim + 1) * meas * np.einsum("tid,tid->t", grads, grads)
    else:
        rule = simplex_quadrature(dim, 2 * dim)
        lam = np.broadcast_to(rule.points, (E,) + rule.points.shape)
        gb = batched_bubble_gradients("power", lam, grads)
        diag = meas * np.einsum("q,tqd,tqd->t", rule.weights, gb, gb)
    G = sparse.block_diag([K, sparse.diags(diag)], format="csr")
    return sparse.kron(G, sparse.eye(dim), format="csr")


# ----------------------------------------------------------------------
# loads and constraints
# ----------------------------------------------------------------------

def _facet_geometry(mesh, topo, facets):
    """Outward normals, measures, and incident elements of boundary facets."""
    ids = topo.facet_index(facets)
    elems = topo.facet_elems[topo.facet_ptr[ids]]
    counts = np.diff(topo.facet_ptr)[ids]
    if np.any(counts != 1):
        raise ValueError("traction facets must lie on the mesh boundary")
    pts = mesh.nodes[facets]
    if mesh.dim == 2:
        tvec = pts[:, 1] - pts[:, 0]
        meas = np.linalg.norm(tvec, axis=1)
        normal = np.column_stack([tvec[:, 1], -tvec[:, 0]]) / meas[:, None]
    else:
        nvec = 0.5 * np.cross(pts[:, 1] - pts[:, 0], pts[:, 2] - pts[:, 0])
        meas = np.linalg.norm(nvec, axis=1)
        normal = nvec / meas[:, None]
    centers = pts.mean(axis=1)
    elem_centers = mesh.nodes[mesh.elements[elems]].mean(axis=1)
    flip = np.einsum("fd,fd->f", normal, centers - elem_centers) < 0.0
    normal[flip] *= -1.0
    return normal, meas, elems


def assemble_loads(mesh, topo, dofmap, tractions, body_force=None,
                   bubble="power"):
    """External load vector from facet tractions and a constant body force.

    ``tractions`` maps boundary labels to either a constant traction vector
    or ``("pressure", p)`` for a load of magnitude p along the inward facet
    normal (a positive p pushes into the domain).  Facet integrals are exact
    for the linear vertex functions; bubbles carry no boundary load.
    """
    f = np.zeros(dofmap.n_disp)
    dim = mesh.dim
    for label, value in tractions.items():
        facets = mesh.boundary.get(label)
        if facets is None or len(facets) == 0:
            raise ValueError(f"mesh has no boundary facets labeled {label!r}")
        normal, meas, _ = _facet_geometry(mesh, topo, facets)
        if isinstance(value, tuple) and value and value[0] == "pressure":
            t = -float(value[1]) * normal
        else:
            t = np.broadcast_to(np.asarray(value, float), (len(facets), dim))
        w = meas / dim                     # int of each hat over its facet
        for l in range(dim):
            for c in range(dim):
                np.add.at(f, facets[:, l] * dim + c, w * t[:, c])
    if body_force is not None:
        b = np.asarray(body_force, float)
        _, meas = affine_maps(mesh.nodes, mesh.elements)
        w = meas / (dim + 1)
        for l in range(dim + 1):
            for c in range(dim):
                np.add.at(f, mesh.elements[:, l] * dim + c, w * b[c])
        if dofmap.with_bubble:
            wb = meas * bubble_volume_mean(bubble, dim)
            for c in range(dim):
                start = mesh.n_nodes * dim + c
                f[start::dim][: mesh.n_elements] += wb * b[c]
    return f


def dirichlet_dofs(mesh, dofmap):
    """Constrained displacement dofs from the boundary labels (all zero)."""
    fixed = set()
    comp_map = {"clamped": tuple(range(mesh.dim)), "roller-x": (0,),
                "roller-y": (1,)}
    for label, comps in comp_map.items():
        facets = mesh.boundary.get(label)
        if facets is None:
            continue
        for node in np.unique(facets):
            for c in comps:
                fixed.add(int(node) * mesh.dim + c)
    return np.asarray(sorted(fixed), dtype=np.int64)


def apply_dirichlet(K, f, fixed, values=None):
    """Reduce a system by eliminating constrained dofs.

    ``values`` are the prescribed dof values (zero when omitted); their
    coupling moves to the right-hand side.  Returns (K_free, f_free, free);
    expand solutions back with ``expand_solution``.
    """
    n = K.shape[0]
    mask = np.ones(n, bool)
    mask[fixed] = False
    free = np.flatnonzero(mask)
    K = K.tocsr()
    f_free = np.asarray(f, float)[free]
    if values is not None and len(fixed):
        f_free = f_free - K[free][:, fixed] @ np.asarray(values, float)
    return K[free][:, free], f_free, free


def expand_solution(u_free, free, n_total, fixed=None, values=None):
    u = np.zeros(n_total)
    u[free] = u_free
    if fixed is not None and values is not None:
        u[fixed] = values
    return u


# ----------------------------------------------------------------------
# method bundles
# ----------------------------------------------------------------------

@dataclass
class OperatorBundle:
    """Assembled operators of one method on one mesh.

    For mixed methods (bes-fem, bfs-fem, mini) the saddle blocks are A, B
    and the pressure mass C (diagonal vector for the smoothed pair, sparse
    for MINI).  Displacement baselines store the full stiffness in A and
    keep node-domain recovery operators in B, C so a pressure field can be
    reported the same way for every method.
    """

    method: str
    mixed: bool
    dofmap: DofMap
    mat: MaterialParams
    A: sparse.csr_matrix
    B: sparse.csr_matrix
    C: object
    kind: str
    bubble: str = None

    def condensed(self):
        """Displacement-only operator; for mixed pairs with diagonal C this
        eliminates the pressure exactly."""
        if not self.mixed:
            return self.A
        if not isinstance(self.C, np.ndarray):
            raise ValueError("condensation needs a diagonal pressure mass")
        return assemble_condensed(self.A, self.B, self.C, self.mat.lam)


def assemble_method(disc, method, mat, bubble="power"):
    """Build the OperatorBundle of any supported method on a Discretization."""
    method = canonical_method(method)
    dim = disc.dim
    if method == "bes-fem" and dim != 2:
        raise ValueError("bes-fem is the 2D method; use bfs-fem in 3D")
    if method == "bfs-fem" and dim != 3:
        raise ValueError("bfs-fem is the 3D method; use bes-fem in 2D")
    if method == "es-fem" and dim != 2:
        raise ValueError("es-fem smooths over edges, defined in 2D")
    if method == "fs-fem" and dim != 3:
        raise ValueError("fs-fem smooths over faces, defined in 3D")

    if method in ("bes-fem", "bfs-fem"):
        kind = disc.smoothing_kind()
        dofmap = disc.dofmap(with_bubble=True)
        G = disc.gradient_ops(kind, bubble)
        domains = disc.domains(kind)
        A = assemble_A_bar(G, domains, mat.mu, dim)
        B = assemble_B_bar(G, domains, disc.overlap(kind), dim)
        C = assemble_C_bar(disc.pressure_cells)
        return OperatorBundle(method, True, dofmap, mat, A, B, C, kind, bubble)

    if method == "mini":
        return _assemble_mini(disc, mat)

    kind = {"es-fem": "edge", "fs-fem": "face", "ns-fem": "node",
            "fem-t3": "element"}[method]
    dofmap = disc.dofmap(with_bubble=False)
    G = disc.gradient_ops(kind, None)
    domains = disc.domains(kind)
    A = assemble_A_bar(G, domains, mat.mu, dim) \
        + assemble_lambda_stiffness(G, domains, mat.lam, dim)
    # node-domain recovery operators give every baseline a reportable pressure
    Gn = disc.gradient_ops("node", None)
    Bn = assemble_B_bar(Gn, disc.domains("node"), disc.overlap("node"), dim)
    C = assemble_C_bar(disc.pressure_cells)
    return OperatorBundle(method, False, dofmap, mat, A.tocsr(), Bn, C, kind)


def _assemble_mini(disc, mat):
    """Classical MINI: P1 + power bubble velocity, continuous P1 pressure."""
    mesh = disc.mesh
    dim, N, E = mesh.dim, mesh.n_nodes, mesh.n_elements
    dofmap = disc.dofmap(with_bubble=True)
    grads, meas = disc.frames.grads, disc.frames.measures
    nloc = dim + 2                    # hats + bubble
    rule = simplex_quadrature(dim, 2 * dim)
    Q = len(rule.weights)
    lam = np.broadcast_to(rule.points, (E, Q, dim + 1))
    gb = batched_bubble_gradients("power", lam, grads)      # (E, Q, d)

    # gradient table per element/point/local function
    gradtab = np.empty((E, Q, nloc, dim))
    gradtab[:, :, :dim + 1, :] = grads[:, None, :, :]
    gradtab[:, :, dim + 1, :] = gb

    nv = 3 if dim == 2 else 6
    Bq = np.zeros((E, Q, nv, nloc * dim))
    for j in range(nloc):
        for c in range(dim):
            col = j * dim + c
            Bq[:, :, c, col] = gradtab[:, :, j, c]
    pairs_2d = [(2, 0, 1), (2, 1, 0)]
    pairs_3d = [(3, 0, 1), (3, 1, 0), (4, 1, 2), (4, 2, 1), (5, 0, 2), (5, 2, 0)]
    for row, c_dof, c_grad in (pairs_2d if dim == 2 else pairs_3d):
        for j in range(nloc):
            Bq[:, :, row, j * dim + c_dof] = gradtab[:, :, j, c_grad]

    Dw = 2.0 * mat.mu * shear_weight_vector(dim)
    A_loc = np.einsum("tqvp,v,tqvr,q,t->tpr", Bq, Dw, Bq, rule.weights, meas)

    # scatter local dofs to global interleaved numbering
    loc_dofs = np.empty((E, nloc * dim), dtype=np.int64)
    for j in range(dim + 1):
        for c in range(dim):
            loc_dofs[:, j * dim + c] = mesh.elements[:, j] * dim + c
    for c in range(dim):
        loc_dofs[:, (dim + 1) * dim + c] = (N + np.arange(E)) * dim + c
    ii = np.repeat(loc_dofs, nloc * dim, axis=1).ravel()
    jj = np.tile(loc_dofs, (1, nloc * dim)).ravel()
    A = sparse.coo_matrix((A_loc.ravel(), (ii, jj)),
                          shape=(dofmap.n_disp, dofmap.n_disp)).tocsr()

    # pressure coupling int q div u, pressure mass int p q
    B_loc = np.einsum("tqi,tqjc,q,t->tijc", lam, gradtab, rule.weights, meas)
    rows = np.repeat(mesh.elements, nloc * dim, axis=1).ravel()
    cols = np.tile(loc_dofs, (1, dim + 1)).ravel()
    B = sparse.coo_matrix(
        (B_loc.reshape(E, -1).ravel(), (rows, cols)), shape=(N, dofmap.n_disp)
    ).tocsr()

    M_loc = np.einsum("tqi,tqj,q,t->tij", lam, lam, rule.weights, meas)
    mi = np.repeat(mesh.elements, dim + 1, axis=1).ravel()
    mj = np.tile(mesh.elements, (1, dim + 1)).ravel()
    C = sparse.coo_matrix((M_loc.ravel(), (mi, mj)), shape=(N, N)).tocsr()
    return OperatorBundle("mini", True, dofmap, mat, A, B, C, "element",
                          "power")
