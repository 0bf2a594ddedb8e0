"""Smoothed gradient operators over micro-cell domains.

The smoothed gradient of a displacement field on a domain is its average
gradient, computed as a boundary integral over the domain's facets:

    Hbar_rc = (1/m) * integral_{boundary} u_r n_c dGamma.

This module builds, for each coordinate c, a sparse matrix ``G_c`` with one
row per domain and one column per scalar shape function (mesh vertices,
then one interior bubble per element when enrichment is on), such that

    Hbar[k][r, c] = (G_c @ U)[k, r],    U : (n_scalar, d) dof values.

All strain, divergence, and deformation-gradient smoothing in the package
is derived from these matrices.  ``volume_average_gradient`` computes the
same averages by volume quadrature over the member micro-cells, sharing no
code with the boundary form, and exists to cross-check it.
"""

import numpy as np
from scipy.sparse import coo_matrix

from .basis import bubble_value
from .quadrature import boundary_quadrature, simplex_quadrature


def _facet_normals(pts):
    """Outward unit normals and measures of oriented facets.

    pts is (F, d, dim): segment endpoints (2D) or triangle vertices (3D),
    ordered outward by the owning micro-cell's facet pattern.
    """
    if pts.shape[2] == 2:
        t = pts[:, 1, :] - pts[:, 0, :]
        area = np.linalg.norm(t, axis=1)
        normal = np.column_stack([t[:, 1], -t[:, 0]]) / area[:, None]
        return normal, area
    n = 0.5 * np.cross(pts[:, 1, :] - pts[:, 0, :], pts[:, 2, :] - pts[:, 0, :])
    area = np.linalg.norm(n, axis=1)
    return n / area[:, None], area


class ElementFrames:
    """Cached per-element affine data shared by the smoothing builders."""

    def __init__(self, mesh):
        from .basis import affine_maps

        self.grads, self.measures = affine_maps(mesh.nodes, mesh.elements)
        verts = mesh.nodes[mesh.elements]
        self.origin = verts[:, 0, :]
        self.inv = np.linalg.inv(verts[:, 1:, :] - verts[:, :1, :])

    def barycentric(self, elem_ids, X):
        """Barycentric coordinates of X (..., Q, d) in the given elements."""
        rel = X - self.origin[elem_ids][..., None, :]
        lam_rest = np.einsum("fqc,fcd->fqd", rel, self.inv[elem_ids])
        lam0 = 1.0 - lam_rest.sum(axis=-1, keepdims=True)
        return np.concatenate([lam0, lam_rest], axis=-1)


def build_smoothed_gradient(mesh, micro, domains, bubble=None, frames=None):
    """Sparse averaged-gradient operators [G_x, G_y(, G_z)] for a domain set.

    Parameters
    ----------
    mesh : PrimalMesh
    micro : MicroCellDecomposition
    domains : SmoothingDomainSet
    bubble : None, 'power', or 'hat'
        With a bubble kind, scalar columns are the N mesh vertices followed
        by one bubble per element; otherwise vertices only.
    frames : ElementFrames, optional precomputed affine cache.

    Returns
    -------
    list of d csr_matrix, each (n_domains, N [+ E]).
    """
    dim = mesh.dim
    N, E = mesh.n_nodes, mesh.n_elements
    n_scalar = N + (E if bubble else 0)
    frames = frames or ElementFrames(mesh)

    fpts = micro.points[domains.facet_pts]          # (F, d, dim)
    normals, areas = _facet_normals(fpts)
    felem = micro.cell_elem[domains.facet_cell]     # (F,)
    fdom = np.repeat(np.arange(domains.n_domains), np.diff(domains.facet_ptr))

    rule = boundary_quadrature("segment" if dim == 2 else "triangle",
                               3 if dim == 2 else 4)
    X = np.einsum("qi,fid->fqd", rule.points, fpts)     # (F, Q, dim)
    lam = frames.barycentric(felem, X)                  # (F, Q, d+1)

    # facet-mean shape values (normals are constant on flat facets)
    hat_mean = np.einsum("q,fqi->fi", rule.weights, lam)
    scale = areas / domains.measures[fdom]

    F = len(fpts)
    ent_facet = [np.repeat(np.arange(F), dim + 1)]
    rows = [fdom[ent_facet[0]]]
    cols = [mesh.elements[felem].ravel()]
    base = [(hat_mean * scale[:, None]).ravel()]
    if bubble:
        bub_mean = np.einsum("q,fq->f", rule.weights, bubble_value(bubble, lam))
        ent_facet.append(np.arange(F))
        rows.append(fdom)
        cols.append(N + felem)
        base.append(bub_mean * scale)
    ent_facet = np.concatenate(ent_facet)
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    base = np.concatenate(base)

    return [
        coo_matrix((base * normals[ent_facet, c], (rows, cols)),
                   shape=(domains.n_domains, n_scalar)).tocsr()
        for c in range(dim)
    ]


def volume_average_gradient(mesh, micro, domains, k, coeffs, bubble=None,
                            frames=None):
    """Average gradient over domain k by volume quadrature (oracle path).

    ``coeffs`` is (n_scalar, d) vertex (and bubble) dof values.  Integrates
    the actual field gradient over the member micro-cells with a degree-4
    rule, which is exact for both bubble kinds because micro-cells never
    straddle the piecewise-linear bubble's interior interfaces, then divides
    by the domain measure.  Returns (d, d) with entry (r, c) = avg du_r/dx_c.
    """
    dim = mesh.dim
    N = mesh.n_nodes
    frames = frames or ElementFrames(mesh)
    coeffs = np.asarray(coeffs, float)

    cells = domains.cells_of(k)
    cpts = micro.points[micro.cells[cells]]         # (C, d+1, dim)
    celem = micro.cell_elem[cells]
    cmeas = micro.measures[cells]

    # vertex part: hat gradients are constant per element
    U_loc = coeffs[mesh.elements[celem]]            # (C, d+1, d)
    gl = frames.grads[celem]                        # (C, d+1, d)
    H = np.einsum("k,kir,kic->rc", cmeas, U_loc, gl)

    if bubble:
        rule = simplex_quadrature(dim, 4)
        X = np.einsum("qi,kid->kqd", rule.points, cpts)
        lam = frames.barycentric(celem, X)          # (C, Q, d+1)
        gb = batched_bubble_gradients(bubble, lam, gl)    # (C, Q, d)
        Ub = coeffs[N + celem]                      # (C, d)
        H += np.einsum("k,q,kqc,kr->rc", cmeas, rule.weights, gb, Ub)
    return H / domains.measures[k]


def batched_bubble_gradients(kind, lam, lam_grads):
    """Bubble gradients for batched points.

    lam is (C, Q, d+1) barycentric points; lam_grads is (C, d+1, d) hat
    gradients of the owning element of each batch row.
    """
    dim = lam.shape[-1] - 1
    if kind == "power":
        scale = (dim + 1) ** (dim + 1)
        out = np.zeros(lam.shape[:-1] + (dim,))
        for i in range(dim + 1):
            others = np.delete(lam, i, axis=-1).prod(axis=-1)   # (C, Q)
            out += others[..., None] * lam_grads[:, None, i, :]
        return scale * out
    imin = np.argmin(lam, axis=-1)                              # (C, Q)
    C = lam.shape[0]
    return (dim + 1) * lam_grads[np.arange(C)[:, None], imin, :]


def smoothed_strain_block(G_list, k, dim):
    """Dense per-domain strain matrix in engineering Voigt order.

    Returns (B_k, scalar_cols): B_k is (n_voigt, len(cols) * d), mapping the
    interleaved displacement dofs of the listed scalar columns to the
    smoothed strain {e_xx, e_yy(, e_zz), g_xy(, g_yz, g_zx)} of domain k.
    """
    rows = [np.asarray(G.getrow(k).todense()).ravel() for G in G_list]
    cols = np.unique(np.concatenate([np.flatnonzero(r) for r in rows]))
    loc = [r[cols] for r in rows]
    n = len(cols)
    if dim == 2:
        B = np.zeros((3, 2 * n))
        B[0, 0::2] = loc[0]
        B[1, 1::2] = loc[1]
        B[2, 0::2] = loc[1]
        B[2, 1::2] = loc[0]
    else:
        B = np.zeros((6, 3 * n))
        B[0, 0::3] = loc[0]
        B[1, 1::3] = loc[1]
        B[2, 2::3] = loc[2]
        B[3, 0::3] = loc[1]
        B[3, 1::3] = loc[0]
        B[4, 1::3] = loc[2]
        B[4, 2::3] = loc[1]
        B[5, 0::3] = loc[2]
        B[5, 2::3] = loc[0]
    return B, cols
