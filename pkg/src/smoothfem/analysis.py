"""Exact solutions, error norms, pressure profiles, and convergence rates.

The error norms mirror how each method represents its solution: smoothed
methods are measured through their domain-averaged strains, mixed methods
additionally through their cell-constant pressure, and MINI through its
pointwise element fields.  All integrals run over the micro-cell partition
(or the elements themselves for MINI) with a degree-4 simplex rule.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .assembly import (MaterialParams, canonical_method, divergence_operator,
                       full_elastic_matrix, shear_weight_vector, strain_rows)
from .basis import bubble_value
from .dualmesh import mesh_size
from .quadrature import simplex_quadrature
from .smoothing import batched_bubble_gradients


@dataclass(frozen=True)
class ExactPipeSolution:
    """Closed-form plane-strain fields of a pressurized thick-walled pipe.

    Annulus a <= r <= b under internal pressure p with Young's modulus E and
    Poisson ratio nu.  Radial methods take radii; field methods take
    Cartesian points of shape (..., 2) and vectorize over leading axes.

    The radial displacement is u_r = C[(1 - 2 nu) r + b^2 / r] with
    C = (1 + nu) a^2 p / (E (b^2 - a^2)), so that the stresses
    sigma_r = S (1 - b^2 / r^2) and sigma_phi = S (1 + b^2 / r^2) with
    S = a^2 p / (b^2 - a^2) satisfy sigma_r(a) = -p and sigma_r(b) = 0.
    """

    a: float = 1.0
    b: float = 2.0
    p: float = 8.0
    E: float = 21000.0
    nu: float = 0.4999999

    @property
    def material(self):
        return MaterialParams(self.E, self.nu)

    @property
    def coeff(self):
        """Displacement scale C of the Lame solution."""
        return (1.0 + self.nu) * self.a ** 2 * self.p / (
            self.E * (self.b ** 2 - self.a ** 2))

    @property
    def stress_scale(self):
        """Stress scale S = a^2 p / (b^2 - a^2)."""
        return self.a ** 2 * self.p / (self.b ** 2 - self.a ** 2)

    def radial_displacement(self, r):
        r = np.asarray(r, float)
        return self.coeff * ((1.0 - 2.0 * self.nu) * r + self.b ** 2 / r)

    def radial_stress(self, r):
        r = np.asarray(r, float)
        return self.stress_scale * (1.0 - self.b ** 2 / r ** 2)

    def hoop_stress(self, r):
        r = np.asarray(r, float)
        return self.stress_scale * (1.0 + self.b ** 2 / r ** 2)

    def displacement(self, X):
        """Cartesian displacement at points X of shape (..., 2)."""
        X = np.asarray(X, float)
        r = np.linalg.norm(X, axis=-1, keepdims=True)
        return self.radial_displacement(r) * X / r

    def strain(self, X):
        """Engineering Voigt strain (e_xx, e_yy, g_xy) at points X."""
        X = np.asarray(X, float)
        r = np.linalg.norm(X, axis=-1)
        n = X / r[..., None]
        hoop = self.radial_displacement(r) / r
        radial = self.coeff * ((1.0 - 2.0 * self.nu) - self.b ** 2 / r ** 2)
        delta = radial - hoop
        out = np.empty(X.shape[:-1] + (3,))
        out[..., 0] = hoop + delta * n[..., 0] ** 2
        out[..., 1] = hoop + delta * n[..., 1] ** 2
        out[..., 2] = 2.0 * delta * n[..., 0] * n[..., 1]
        return out

    def divergence(self, X=None):
        """div u, a constant; broadcast over X when given."""
        value = 2.0 * self.coeff * (1.0 - 2.0 * self.nu)
        if X is None:
            return value
        X = np.asarray(X, float)
        return np.full(X.shape[:-1], value)

    def pressure(self, X=None):
        """p = lambda div u = 2 nu a^2 p / (b^2 - a^2), a constant."""
        value = 2.0 * self.nu * self.stress_scale
        if X is None:
            return value
        X = np.asarray(X, float)
        return np.full(X.shape[:-1], value)

    def stress(self, X):
        """Cartesian Voigt stress (s_xx, s_yy, s_xy), plane strain.

        Uses the split 2 mu eps + p I with the closed-form pressure, which
        avoids the lambda-scale cancellation of the full material product.
        """
        mat = self.material
        eps = self.strain(X)
        p = self.pressure(X)
        out = np.empty_like(eps)
        out[..., 0] = 2.0 * mat.mu * eps[..., 0] + p
        out[..., 1] = 2.0 * mat.mu * eps[..., 1] + p
        out[..., 2] = mat.mu * eps[..., 2]
        return out

    def strong_form_residual(self, n_samples=100):
        """Largest scaled defect of the closed forms at sampled radii.

        Checks, by central finite differences, that the displacement
        reproduces the stresses through the plane-strain law, that the
        stresses satisfy radial equilibrium, and that both pressure
        boundary conditions hold.  Each defect is scaled by the magnitude
        of the terms entering its identity, so the result stays meaningful
        near the incompressible limit where lambda amplifies the finite
        difference noise; a wrong closed form still shows up at order one.
        """
        r = np.linspace(self.a, self.b, n_samples)
        h = 1e-5 * self.a
        mat = self.material
        lam, mu = mat.lam, mat.mu

        e_rr = (self.radial_displacement(r + h)
                - self.radial_displacement(r - h)) / (2.0 * h)
        e_tt = self.radial_displacement(r) / r
        s_rr = (lam + 2.0 * mu) * e_rr + lam * e_tt
        s_tt = lam * e_rr + (lam + 2.0 * mu) * e_tt
        law_scale = (lam + 2.0 * mu) * (np.abs(e_rr) + np.abs(e_tt)) + self.p
        law = max(np.abs((s_rr - self.radial_stress(r)) / law_scale).max(),
                  np.abs((s_tt - self.hoop_stress(r)) / law_scale).max())

        ds_rr = (self.radial_stress(r + h)
                 - self.radial_stress(r - h)) / (2.0 * h)
        balance = np.abs(
            ds_rr + (self.radial_stress(r) - self.hoop_stress(r)) / r
        ).max() / self.p

        bc = max(abs(self.radial_stress(self.a) + self.p),
                 abs(self.radial_stress(self.b))) / self.p
        return max(law, balance, bc)


def characteristic_h(disc):
    """Mesh size: largest cell radius over smoothing and node-cell meshes."""
    kind = disc.smoothing_kind()
    return mesh_size(disc.micro, [disc.domains(kind), disc.domains("node")])


def microcell_quadrature(disc, degree=4):
    """Volume quadrature over every micro-cell of a discretization.

    Returns (X, w, elem, lam): physical points (M, Q, d), weights (M, Q)
    that already include the micro-cell measures, owning elements (M,), and
    barycentric coordinates (M, Q, d+1) in the owning element.
    """
    micro = disc.micro
    rule = simplex_quadrature(disc.dim, degree)
    corners = micro.points[micro.cells]
    X = np.einsum("qi,kid->kqd", rule.points, corners)
    w = micro.measures[:, None] * rule.weights[None, :]
    lam = disc.frames.barycentric(micro.cell_elem, X)
    return X, w, micro.cell_elem, lam


def displacement_values(disc, dofmap, u, lam, elem, bubble="power"):
    """Evaluate a discrete displacement at batched barycentric points.

    ``lam`` is (..., Q, d+1) in the elements listed by ``elem`` (...,);
    returns (..., Q, d).  The bubble kind matters only when the dof map
    carries bubbles.
    """
    vals = dofmap.reshape(u)
    out = np.einsum("kqi,kid->kqd", lam, vals[disc.mesh.elements[elem]])
    if dofmap.with_bubble:
        bv = bubble_value(bubble, lam)
        out = out + bv[..., None] * vals[disc.mesh.n_nodes + elem][:, None, :]
    return out


def error_displacement(disc, dofmap, u, exact, bubble="power"):
    """L2 norm of u_h - u for a callable exact field.

    Integrates with a degree-4 rule on every micro-cell; the micro-cells
    partition each element, so piecewise-linear bubbles are integrated
    exactly.
    """
    X, w, elem, lam = microcell_quadrature(disc)
    diff = displacement_values(disc, dofmap, u, lam, elem, bubble) - exact(X)
    return float(np.sqrt(np.einsum("kq,kqd,kqd->", w, diff, diff)))


def error_pressure(disc, p, exact, continuous=False):
    """L2 norm of p_h - p over the node-centered pressure cells.

    ``p`` holds one value per mesh vertex: cell constants by default, or a
    continuous P1 field (MINI) with ``continuous=True``.
    """
    X, w, elem, lam = microcell_quadrature(disc)
    p = np.asarray(p, float)
    if continuous:
        ph = np.einsum("kqi,ki->kq", lam, p[disc.mesh.elements[elem]])
    else:
        ph = np.broadcast_to(p[disc.micro.cell_node][:, None], w.shape)
    diff = ph - exact(X)
    return float(np.sqrt(np.einsum("kq,kq->", w, diff * diff)))


_STRESS_KINDS = {"fem-t3": "element", "es-fem": "edge", "ns-fem": "node",
                 "fs-fem": "face"}


def error_energy(disc, method, u, p, exact, mat, bubble="power"):
    """Energy error norm of one solution; the variant follows the method.

    Displacement-only methods measure their domain-averaged stress against
    the exact stress in the full material metric.  The enriched mixed
    methods measure the shear part of the averaged strain plus the signed
    product of pressure and divergence defects on smoothing domains; MINI
    does the same with its pointwise element fields and never touches
    smoothing domains.  ``exact`` provides strain(X), pressure(X) and
    divergence(X).

    Returns (norm, total): sqrt(max(0, total)) and the raw signed total,
    reported so the cross-term sign can be audited.
    """
    method = canonical_method(method)
    if method == "mini":
        return _energy_mini(disc, u, p, exact, mat)
    if method in ("bes-fem", "bfs-fem"):
        return _energy_mixed(disc, u, p, exact, mat, bubble)
    return _energy_stress(disc, method, u, exact, mat)


def _energy_stress(disc, method, u, exact, mat):
    """Full-metric smoothed-stress defect for displacement-only methods."""
    dim = disc.dim
    kind = _STRESS_KINDS[method]
    G = disc.gradient_ops(kind, None)
    eps_bar = np.stack([R @ u for R in strain_rows(G, dim)], axis=-1)
    dom = disc.domains(kind).dom_of_cell
    X, w, _, _ = microcell_quadrature(disc)
    diff = exact.strain(X) - eps_bar[dom][:, None, :]
    C = full_elastic_matrix(mat.lam, mat.mu, dim)
    total = np.einsum("kq,kqv,vw,kqw->", w, diff, C, diff)
    return float(np.sqrt(max(0.0, total))), float(total)


def _energy_mixed(disc, u, p, exact, mat, bubble):
    """Shear defect plus pressure-divergence defect on smoothing domains."""
    dim = disc.dim
    kind = disc.smoothing_kind()
    G = disc.gradient_ops(kind, bubble)
    eps_bar = np.stack([R @ u for R in strain_rows(G, dim)], axis=-1)
    div_bar = divergence_operator(G, dim) @ u
    dom = disc.domains(kind).dom_of_cell
    X, w, _, _ = microcell_quadrature(disc)
    diff = exact.strain(X) - eps_bar[dom][:, None, :]
    shear = shear_weight_vector(dim)
    quad = 2.0 * mat.mu * np.einsum("kq,kqv,v->", w, diff * diff, shear)
    p = np.asarray(p, float)
    pdiff = exact.pressure(X) - p[disc.micro.cell_node][:, None]
    ddiff = exact.divergence(X) - div_bar[dom][:, None]
    total = quad + np.einsum("kq,kq,kq->", w, pdiff, ddiff)
    return float(np.sqrt(max(0.0, total))), float(total)


def _energy_mini(disc, u, p, exact, mat):
    """Pointwise element-field defect for MINI (P1 + bubble, P1 pressure)."""
    mesh, dim = disc.mesh, disc.dim
    dofmap = disc.dofmap(with_bubble=True)
    rule = simplex_quadrature(dim, 4)
    corners = mesh.nodes[mesh.elements]
    X = np.einsum("qi,eid->eqd", rule.points, corners)
    w = mesh.element_measures()[:, None] * rule.weights[None, :]
    E, Q = w.shape

    vals = dofmap.reshape(u)
    grads = disc.frames.grads
    H = np.broadcast_to(
        np.einsum("eir,eic->erc", vals[mesh.elements], grads)[:, None],
        (E, Q, dim, dim)).copy()
    lam = np.broadcast_to(rule.points, (E, Q, dim + 1))
    gb = batched_bubble_gradients("power", lam, grads)
    H += vals[mesh.n_nodes:][:, None, :, None] * gb[:, :, None, :]

    eps = np.empty((E, Q, 3 if dim == 2 else 6))
    for c in range(dim):
        eps[..., c] = H[..., c, c]
    pairs = [(0, 1)] if dim == 2 else [(0, 1), (1, 2), (2, 0)]
    for v, (r, c) in enumerate(pairs, start=dim):
        eps[..., v] = H[..., r, c] + H[..., c, r]

    diff = exact.strain(X) - eps
    shear = shear_weight_vector(dim)
    quad = 2.0 * mat.mu * np.einsum("eq,eqv,v->", w, diff * diff, shear)
    p = np.asarray(p, float)
    ph = np.einsum("qi,ei->eq", rule.points, p[mesh.elements])
    pdiff = exact.pressure(X) - ph
    ddiff = exact.divergence(X) - np.trace(H, axis1=-2, axis2=-1)
    total = quad + np.einsum("eq,eq,eq->", w, pdiff, ddiff)
    return float(np.sqrt(max(0.0, total))), float(total)


def locate_points(disc, X, candidates=None):
    """Containing element and barycentric coordinates of points X (S, d).

    Picks, among ``candidates`` (default all elements), the element whose
    smallest barycentric coordinate is largest; a negative best coordinate
    below -1e-9 means the point lies outside and raises ValueError.
    """
    mesh = disc.mesh
    X = np.asarray(X, float)
    cand = np.arange(mesh.n_elements) if candidates is None \
        else np.asarray(candidates, np.int64)
    S = len(X)
    best_elem = np.zeros(S, np.int64)
    best_min = np.full(S, -np.inf)
    best_lam = np.zeros((S, mesh.dim + 1))
    for lo in range(0, len(cand), 512):
        chunk = cand[lo:lo + 512]
        lam = disc.frames.barycentric(
            chunk, np.broadcast_to(X, (len(chunk),) + X.shape))
        lmin = lam.min(axis=-1)
        pick = lmin.argmax(axis=0)
        rows = np.arange(S)
        better = lmin[pick, rows] > best_min
        best_min[better] = lmin[pick, rows][better]
        best_elem[better] = chunk[pick[better]]
        best_lam[better] = lam[pick[better], rows[better]]
    if best_min.min() < -1e-9:
        worst = X[best_min.argmin()]
        raise ValueError(f"point {worst} lies outside the mesh")
    return best_elem, best_lam


def pressure_profile(disc, p, value=24.0, axis=0, n_samples=1024,
                     continuous=False):
    """Sample a pressure field along the line {x_axis = value} (2D).

    Returns (positions, values) sorted by the complementary coordinate.
    Cell-constant fields take the value of the node cell owning each sample
    (the largest barycentric coordinate of the containing element);
    continuous fields interpolate linearly.  Samples sit at midpoints of
    uniform bins over the intersected range, so reruns are deterministic.
    """
    mesh = disc.mesh
    if mesh.dim != 2:
        raise ValueError("pressure profiles are defined for 2D meshes")
    other = 1 - axis
    corners = mesh.nodes[mesh.elements]
    along = corners[..., axis]
    hit = (along.min(axis=1) <= value) & (value <= along.max(axis=1))
    if not hit.any():
        raise ValueError(f"no elements intersect axis {axis} = {value}")
    cand = np.flatnonzero(hit)

    # clip the line against the candidate triangles: collect the crossing
    # ordinates of every edge so the sample range stays inside the domain
    tri = corners[cand]
    crossings = [tri[..., other][tri[..., axis] == value]]
    for i, j in ((0, 1), (1, 2), (2, 0)):
        x1, x2 = tri[:, i, axis], tri[:, j, axis]
        keep = ((x1 - value) * (x2 - value) < 0.0) & (x1 != x2)
        t = (value - x1[keep]) / (x2[keep] - x1[keep])
        crossings.append(tri[keep, i, other] * (1.0 - t)
                         + tri[keep, j, other] * t)
    cross = np.concatenate(crossings)
    lo, hi = float(cross.min()), float(cross.max())
    ts = lo + (hi - lo) * (np.arange(n_samples) + 0.5) / n_samples
    X = np.empty((n_samples, 2))
    X[:, axis] = value
    X[:, other] = ts

    elem, lam = locate_points(disc, X, cand)
    p = np.asarray(p, float)
    if continuous:
        vals = np.einsum("si,si->s", lam, p[mesh.elements[elem]])
    else:
        owner = mesh.elements[elem, lam.argmax(axis=1)]
        vals = p[owner]
    return ts, vals


def total_variation(values):
    """Sum of absolute increments of a sampled profile."""
    return float(np.abs(np.diff(np.asarray(values, float))).sum())


def monotone_envelope_tv(values):
    """Total variation of a monotone profile spanning the same extremes.

    A smooth monotone field keeps its sampled variation within a small
    multiple of this; oscillatory fields exceed it many times over.
    """
    values = np.asarray(values, float)
    return float(values.max() - values.min())


def fit_rate(h, err):
    """Least-squares slope of log(err) against log(h).

    Requires at least three points, all positive.
    """
    h = np.asarray(h, float)
    err = np.asarray(err, float)
    if h.size < 3:
        raise ValueError("rate fit needs at least 3 points")
    if np.any(h <= 0.0) or np.any(err <= 0.0):
        raise ValueError("rate fit needs positive sizes and errors")
    return float(np.polyfit(np.log(h), np.log(err), 1)[0])


def richardson_limit(values, ratio=2.0):
    """Extrapolated limit of a refinement series from its last three values.

    Assumes one dominant error term decaying geometrically with the mesh
    ratio.  Falls back to the finest value when the differences do not
    contract.
    """
    v = np.asarray(values, float)
    if v.size < 3:
        raise ValueError("extrapolation needs at least 3 values")
    d1, d2 = v[-2] - v[-3], v[-1] - v[-2]
    if d2 == 0.0 or d1 * d2 <= 0.0:
        return float(v[-1])
    rho = d1 / d2
    if rho <= 1.0:
        return float(v[-1])
    return float(v[-1] + d2 / (rho - 1.0))


def tip_displacement(mesh, dofmap, u, point, comp=1):
    """Displacement component at the mesh node nearest to ``point``."""
    d2 = ((mesh.nodes - np.asarray(point, float)) ** 2).sum(axis=1)
    node = int(np.argmin(d2))
    return float(np.asarray(u)[dofmap.vertex_dof(node, comp)])


CSV_COLUMNS = ("method", "mesh_id", "h", "N_e", "err_u", "err_p", "err_E",
               "tip_uy")


@dataclass
class ErrorReport:
    """Per-mesh results of one method, ready for CSV/JSON serialization."""

    method: str
    mesh_id: str
    h: float
    n_elements: int
    err_u: float = float("nan")
    err_p: float = float("nan")
    err_E: float = float("nan")
    tip_uy: float = float("nan")
    extra: dict = field(default_factory=dict)

    def row(self):
        """CSV cells in CSV_COLUMNS order."""
        return (self.method, self.mesh_id, _fmt(self.h),
                str(self.n_elements), _fmt(self.err_u), _fmt(self.err_p),
                _fmt(self.err_E), _fmt(self.tip_uy))

    def to_dict(self):
        return {
            "method": self.method, "mesh_id": self.mesh_id, "h": self.h,
            "N_e": self.n_elements, "err_u": self.err_u, "err_p": self.err_p,
            "err_E": self.err_E, "tip_uy": self.tip_uy,
            "extra": dict(self.extra),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["method"], d["mesh_id"], d["h"], d["N_e"], d["err_u"],
                   d["err_p"], d["err_E"], d["tip_uy"],
                   dict(d.get("extra", {})))


def _fmt(x):
    """Shortest lossless decimal form of a float."""
    return repr(float(x))


def reports_to_csv(reports, timestamp=None):
    """Render reports as CSV text; the optional timestamp comment line is
    the only part allowed to differ between reruns."""
    lines = []
    if timestamp is not None:
        lines.append(f"# generated {timestamp}")
    lines.append(",".join(CSV_COLUMNS))
    lines.extend(",".join(r.row()) for r in reports)
    return "\n".join(lines) + "\n"


def reports_to_json(reports, summary=None):
    """Serialize reports (with an optional summary block) to JSON text."""
    payload = {"reports": [r.to_dict() for r in reports]}
    if summary is not None:
        payload["summary"] = summary
    return json.dumps(payload, indent=1, sort_keys=True)


def reports_from_json(text):
    """Rebuild (reports, summary) from reports_to_json output."""
    payload = json.loads(text)
    reports = [ErrorReport.from_dict(d) for d in payload["reports"]]
    return reports, payload.get("summary")
