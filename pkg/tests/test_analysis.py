"""Tests for exact solutions, error norms, profiles, and rate fitting."""

import numpy as np
import pytest

from smoothfem.analysis import (CSV_COLUMNS, ErrorReport, ExactPipeSolution,
                                characteristic_h, error_displacement,
                                error_energy, error_pressure, fit_rate,
                                locate_points, monotone_envelope_tv,
                                pressure_profile, reports_from_json,
                                reports_to_csv, reports_to_json,
                                richardson_limit, tip_displacement,
                                total_variation)
from smoothfem.assembly import Discretization, MaterialParams, full_elastic_matrix
from smoothfem.mesh import generate_annulus, generate_block, generate_cook


@pytest.fixture(scope="module")
def pipe():
    return ExactPipeSolution()


@pytest.fixture(scope="module")
def disc_cook():
    return Discretization(generate_cook(4))


@pytest.fixture(scope="module")
def disc_annulus():
    return Discretization(generate_annulus(4))


class LinearField:
    """Manufactured affine displacement with the matching exact fields."""

    def __init__(self, A, c, mat, dim):
        self.A = np.asarray(A, float)
        self.c = np.asarray(c, float)
        self.mat = mat
        self.dim = dim

    def displacement(self, X):
        return X @ self.A.T + self.c

    def strain(self, X):
        d = self.dim
        sym = 0.5 * (self.A + self.A.T)
        nv = 3 if d == 2 else 6
        out = np.empty(X.shape[:-1] + (nv,))
        for c in range(d):
            out[..., c] = sym[c, c]
        pairs = [(0, 1)] if d == 2 else [(0, 1), (1, 2), (2, 0)]
        for v, (r, c) in enumerate(pairs, start=d):
            out[..., v] = 2.0 * sym[r, c]
        return out

    def divergence(self, X):
        return np.full(X.shape[:-1], np.trace(self.A))

    def pressure(self, X):
        return np.full(X.shape[:-1], self.mat.lam * np.trace(self.A))


def interpolate_linear(disc, field, with_bubble):
    """Nodal interpolant of an affine field; bubble dofs stay zero."""
    dofmap = disc.dofmap(with_bubble)
    vals = np.zeros((dofmap.n_scalar, disc.dim))
    vals[:disc.mesh.n_nodes] = field.displacement(disc.mesh.nodes)
    return dofmap, vals.ravel()


def test_pipe_frozen_values(pipe):
    assert pipe.radial_stress(pipe.a) == pytest.approx(-8.0, rel=1e-12)
    assert pipe.radial_stress(pipe.b) == pytest.approx(0.0, abs=1e-12)
    assert pipe.hoop_stress(pipe.a) == pytest.approx(40.0 / 3.0, rel=1e-12)
    assert pipe.radial_displacement(1.0) == pytest.approx(7.619048e-4, rel=1e-6)
    assert pipe.pressure() == pytest.approx(2.6666661, rel=1e-7)
    assert pipe.pressure() == pytest.approx(
        2.0 * pipe.nu * pipe.a ** 2 * pipe.p / (pipe.b ** 2 - pipe.a ** 2),
        rel=1e-14)


def test_pipe_strong_form(pipe):
    assert pipe.strong_form_residual(100) < 1e-6


def test_pipe_cartesian_consistency(pipe):
    rng = np.random.default_rng(7)
    r = rng.uniform(pipe.a, pipe.b, 40)
    th = rng.uniform(0.0, 0.5 * np.pi, 40)
    X = np.column_stack([r * np.cos(th), r * np.sin(th)])

    u = pipe.displacement(X)
    np.testing.assert_allclose(np.linalg.norm(u, axis=1),
                               pipe.radial_displacement(r), rtol=1e-12)

    # rotate the Cartesian stress back to polar components
    s = pipe.stress(X)
    c, sn = np.cos(th), np.sin(th)
    s_rr = s[:, 0] * c ** 2 + s[:, 1] * sn ** 2 + 2.0 * s[:, 2] * sn * c
    s_tt = s[:, 0] * sn ** 2 + s[:, 1] * c ** 2 - 2.0 * s[:, 2] * sn * c
    np.testing.assert_allclose(s_rr, pipe.radial_stress(r), rtol=1e-9)
    np.testing.assert_allclose(s_tt, pipe.hoop_stress(r), rtol=1e-9)

    # pressure is lambda times the divergence
    np.testing.assert_allclose(pipe.pressure(X),
                               pipe.material.lam * pipe.divergence(X),
                               rtol=1e-12)


def test_displacement_error_vanishes_on_interpolant(disc_cook):
    mat = MaterialParams(250.0, 0.3)
    fld = LinearField([[0.2, -0.4], [0.7, 0.1]], [0.3, -0.2], mat, 2)
    dofmap, u = interpolate_linear(disc_cook, fld, with_bubble=True)
    err = error_displacement(disc_cook, dofmap, u, fld.displacement)
    assert err < 1e-13 * np.abs(u).max()


def test_displacement_error_homogeneous(disc_cook):
    rng = np.random.default_rng(3)
    dofmap = disc_cook.dofmap(True)
    u = rng.standard_normal(dofmap.n_disp)
    zero = lambda X: np.zeros_like(X)
    base = error_displacement(disc_cook, dofmap, u, zero)
    scaled = error_displacement(disc_cook, dofmap, 2.5 * u, zero)
    assert scaled == pytest.approx(2.5 * base, rel=1e-12)
    assert base > 0.0


def test_pressure_error_constant_and_linear(disc_cook):
    n = disc_cook.mesh.n_nodes
    const = lambda X: np.full(X.shape[:-1], 3.25)
    assert error_pressure(disc_cook, np.full(n, 3.25), const) == 0.0

    lin = lambda X: 2.0 * X[..., 0] - 0.5 * X[..., 1]
    p_nodes = lin(disc_cook.mesh.nodes[None])[0]
    err = error_pressure(disc_cook, p_nodes, lin, continuous=True)
    assert err < 1e-12 * np.abs(p_nodes).max()
    # the cell-constant reading of the same nodal values cannot be exact
    assert error_pressure(disc_cook, p_nodes, lin) > 1e-3


@pytest.mark.parametrize("method", ["fem-t3", "es-fem", "ns-fem", "bes-fem",
                                    "mini"])
def test_energy_error_vanishes_on_exact_linear(disc_cook, method):
    mat = MaterialParams(250.0, 0.4999)
    fld = LinearField([[0.3, 0.2], [-0.1, 0.5]], [0.0, 0.0], mat, 2)
    dofmap, u = interpolate_linear(disc_cook, fld,
                                   method in ("bes-fem", "mini"))
    p = np.full(disc_cook.mesh.n_nodes, mat.lam * np.trace(fld.A))
    norm, total = error_energy(disc_cook, method, u, p, fld, mat)
    scale = mat.lam * np.abs(u).max() ** 2
    assert abs(total) < 1e-10 * scale
    assert norm == pytest.approx(np.sqrt(max(0.0, total)))


def test_energy_error_3d_variants():
    disc = Discretization(generate_block(2, size=(1.0, 1.0, 1.0)))
    mat = MaterialParams(250.0, 0.4999)
    A = np.array([[0.3, 0.2, 0.0], [-0.1, 0.5, 0.1], [0.2, 0.0, -0.4]])
    fld = LinearField(A, np.zeros(3), mat, 3)
    for method in ("fs-fem", "bfs-fem", "mini"):
        dofmap, u = interpolate_linear(disc, fld, method != "fs-fem")
        p = np.full(disc.mesh.n_nodes, mat.lam * np.trace(A))
        norm, total = error_energy(disc, method, u, p, fld, mat)
        assert abs(total) < 1e-10 * mat.lam * np.abs(u).max() ** 2


def test_mini_energy_ignores_smoothing_domains(disc_annulus, monkeypatch):
    mat = MaterialParams(21000.0, 0.3)
    fld = LinearField([[0.1, 0.0], [0.0, 0.2]], [0.0, 0.0], mat, 2)
    dofmap, u = interpolate_linear(disc_annulus, fld, with_bubble=True)
    p = np.full(disc_annulus.mesh.n_nodes, mat.lam * 0.3)

    def forbidden(kind):
        raise AssertionError("MINI norm must not build smoothing domains")

    monkeypatch.setattr(disc_annulus, "domains", forbidden)
    norm, total = error_energy(disc_annulus, "mini", u, p, fld, mat)
    assert np.isfinite(norm)


def test_energy_cross_term_is_signed(disc_cook):
    """The reported total keeps the sign of the pressure cross-term."""
    mat = MaterialParams(250.0, 0.4999)
    fld = LinearField([[0.0, 0.0], [0.0, 0.0]], [0.0, 0.0], mat, 2)
    dofmap = disc_cook.dofmap(True)
    u = np.zeros(dofmap.n_disp)
    # constant discrete pressure offset, zero displacement: the defect is
    # (0 - p_h) * (0 - 0) = 0 within domains, so total equals zero
    p = np.full(disc_cook.mesh.n_nodes, 4.0)
    norm, total = error_energy(disc_cook, "bes-fem", u, p, fld, mat)
    assert total == pytest.approx(0.0, abs=1e-14)
    assert norm == 0.0


def test_locate_points_finds_containing_elements(disc_cook):
    rng = np.random.default_rng(11)
    mesh = disc_cook.mesh
    lam = rng.dirichlet(np.ones(3), size=30)
    elems = rng.integers(0, mesh.n_elements, 30)
    X = np.einsum("si,sid->sd", lam, mesh.nodes[mesh.elements[elems]])
    found, bary = locate_points(disc_cook, X)
    rebuilt = np.einsum("si,sid->sd", bary, mesh.nodes[mesh.elements[found]])
    np.testing.assert_allclose(rebuilt, X, atol=1e-10)
    outside = np.array([[100.0, 100.0]])
    with pytest.raises(ValueError, match="outside"):
        locate_points(disc_cook, outside)


def test_pressure_profile_constant_and_monotone(disc_cook):
    n = disc_cook.mesh.n_nodes
    ts, vals = pressure_profile(disc_cook, np.full(n, 2.0), n_samples=200)
    assert total_variation(vals) == 0.0

    p = disc_cook.mesh.nodes[:, 1].copy()
    ts, vals = pressure_profile(disc_cook, p, n_samples=400)
    assert np.all(np.diff(ts) > 0.0)
    assert total_variation(vals) == pytest.approx(monotone_envelope_tv(vals))
    assert monotone_envelope_tv(vals) > 0.0


def test_pressure_profile_continuous_linear(disc_cook):
    nodes = disc_cook.mesh.nodes
    p = 3.0 * nodes[:, 0] + 2.0 * nodes[:, 1]
    ts, vals = pressure_profile(disc_cook, p, value=24.0, n_samples=150,
                                continuous=True)
    np.testing.assert_allclose(vals, 3.0 * 24.0 + 2.0 * ts, rtol=1e-10)


def test_fit_rate_quadratic_and_errors():
    h = np.array([0.4, 0.2, 0.1, 0.05])
    assert fit_rate(h, 3.7 * h ** 2) == pytest.approx(2.0, abs=1e-12)
    assert fit_rate(h, 0.2 * h ** 1.93) == pytest.approx(1.93, abs=1e-10)
    with pytest.raises(ValueError, match="3 points"):
        fit_rate([0.1, 0.05], [1.0, 0.25])
    with pytest.raises(ValueError, match="positive"):
        fit_rate(h, [1.0, -1.0, 0.1, 0.01])


def test_richardson_limit_geometric_series():
    limit = 13.7
    vals = [limit - 2.0 / 4.0 ** k for k in range(4)]
    assert richardson_limit(vals) == pytest.approx(limit, rel=1e-12)
    assert richardson_limit([1.0, 1.0, 1.0]) == 1.0
    with pytest.raises(ValueError, match="3 values"):
        richardson_limit([1.0, 2.0])


def test_characteristic_h_decreases(disc_annulus):
    fine = Discretization(generate_annulus(8))
    assert characteristic_h(fine) < characteristic_h(disc_annulus)


def test_tip_displacement_reads_nearest_node(disc_cook):
    mesh = disc_cook.mesh
    dofmap = disc_cook.dofmap(False)
    u = np.arange(dofmap.n_disp, dtype=float)
    node = int(np.argmin(((mesh.nodes - [48.0, 60.0]) ** 2).sum(1)))
    assert tip_displacement(mesh, dofmap, u, (48.0, 60.0)) == u[2 * node + 1]


def test_report_serialization_round_trip():
    reports = [
        ErrorReport("bes-fem", "pipe-8", 0.25, 256, 1e-4, 2e-3, 5e-2, 0.7),
        ErrorReport("mini", "pipe-8", 0.25, 256, 2e-4, 4e-3, 6e-2, 0.69,
                    extra={"raw_energy": -1.2e-5}),
    ]
    text = reports_to_json(reports, summary={"rate_u": 1.95})
    back, summary = reports_from_json(text)
    assert summary == {"rate_u": 1.95}
    assert [r.to_dict() for r in back] == [r.to_dict() for r in reports]

    csv_text = reports_to_csv(reports)
    lines = csv_text.strip().split("\n")
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert len(lines) == 3
    assert reports_to_csv(reports) == csv_text
    stamped = reports_to_csv(reports, timestamp="2026-01-01T00:00:00")
    assert stamped.split("\n", 1)[1] == csv_text
