"""Tests for the linear solution paths and pressure recovery."""

import numpy as np
import pytest

from smoothfem.assembly import (
    Discretization,
    MaterialParams,
    assemble_h1_gram,
    assemble_loads,
    assemble_method,
    dirichlet_dofs,
)
from smoothfem.mesh import (
    build_topology,
    distort_mesh,
    generate_block,
    generate_cook,
)
from smoothfem.solve import (
    infsup_measure,
    recover_pressure,
    solve_bundle,
    solve_condensed,
    solve_mixed,
)

RNG = np.random.default_rng(99)


def boundary_values(disc, exact):
    """All boundary nodes constrained to an exact displacement field."""
    mesh = disc.mesh
    bnodes = disc.topo.boundary_nodes()
    fixed, values = [], []
    for n in bnodes:
        u = exact(mesh.nodes[n])
        for c in range(mesh.dim):
            fixed.append(n * mesh.dim + c)
            values.append(u[c])
    order = np.argsort(fixed)
    return np.asarray(fixed)[order], np.asarray(values)[order]


@pytest.mark.parametrize("method,bubble", [
    ("bes-fem", "power"), ("bes-fem", "hat"), ("es-fem", None),
    ("ns-fem", None), ("fem-t3", None), ("mini", None),
])
def test_patch_test_linear_field(method, bubble):
    """Every method reproduces a linear displacement field exactly."""
    mesh = distort_mesh(generate_cook(3), 0.3, seed=14)
    disc = Discretization(mesh)
    mat = MaterialParams(E=200.0, nu=0.3)
    bundle = assemble_method(disc, method, mat, bubble=bubble or "power")
    A = np.array([[0.02, -0.01], [0.03, 0.015]])
    b = np.array([0.1, -0.2])
    exact = lambda x: A @ x + b
    fixed, values = boundary_values(disc, exact)
    f = np.zeros(bundle.dofmap.n_disp)
    sol = solve_bundle(bundle, f, fixed, values=values)
    U = bundle.dofmap.reshape(sol.u)
    expected = mesh.nodes @ A.T + b
    scale = np.abs(expected).max()
    np.testing.assert_allclose(U[: mesh.n_nodes], expected, atol=1e-10 * scale)
    if bundle.dofmap.with_bubble:
        assert np.abs(U[mesh.n_nodes:]).max() < 1e-10 * scale
    # the recovered pressure is lam tr(A) everywhere
    p_exact = mat.lam * np.trace(A)
    np.testing.assert_allclose(sol.p, p_exact, rtol=1e-8)


def test_patch_test_3d():
    mesh = distort_mesh(generate_block(2, size=(1.0, 1.0, 1.0)), 0.2, seed=15)
    disc = Discretization(mesh)
    mat = MaterialParams(E=10.0, nu=0.3)
    bundle = assemble_method(disc, "bfs-fem", mat, bubble="power")
    A = RNG.normal(size=(3, 3)) * 0.05
    exact = lambda x: A @ x
    fixed, values = boundary_values(disc, exact)
    sol = solve_bundle(bundle, np.zeros(bundle.dofmap.n_disp), fixed,
                       values=values)
    U = bundle.dofmap.reshape(sol.u)
    expected = mesh.nodes @ A.T
    scale = max(np.abs(expected).max(), 1e-30)
    np.testing.assert_allclose(U[: mesh.n_nodes], expected, atol=1e-9 * scale)
    np.testing.assert_allclose(sol.p, mat.lam * np.trace(A), rtol=1e-7)


def cook_problem(disc, method, nu, bubble="power"):
    mat = MaterialParams(E=250.0, nu=nu)
    bundle = assemble_method(disc, method, mat, bubble=bubble)
    f = assemble_loads(disc.mesh, disc.topo, bundle.dofmap,
                       {"traction": (0.0, 100.0)})
    fixed = dirichlet_dofs(disc.mesh, bundle.dofmap)
    return bundle, f, fixed


@pytest.mark.parametrize("nu", [0.4999, 0.4999999])
def test_mixed_equals_condensed(nu):
    """Both solution paths agree to tight tolerance even near the limit."""
    disc = Discretization(generate_cook(4))
    bundle, f, fixed = cook_problem(disc, "bes-fem", nu)
    mixed = solve_bundle(bundle, f, fixed, path="mixed")
    cond = solve_bundle(bundle, f, fixed, path="condensed")
    du = np.abs(mixed.u - cond.u).max() / np.abs(mixed.u).max()
    dp = np.abs(mixed.p - cond.p).max() / np.abs(mixed.p).max()
    assert du < 1e-9
    assert dp < 1e-9


def test_pressure_recovery_identity():
    disc = Discretization(generate_cook(3))
    bundle, f, fixed = cook_problem(disc, "bes-fem", 0.4999)
    sol = solve_bundle(bundle, f, fixed, path="mixed")
    p2 = recover_pressure(bundle.B, bundle.C, bundle.mat.lam, sol.u)
    np.testing.assert_allclose(p2, sol.p, rtol=1e-9)


def test_energy_identity():
    """For the condensed solve, u^T K u = f^T u (Galerkin)."""
    disc = Discretization(generate_cook(4))
    bundle, f, fixed = cook_problem(disc, "bes-fem", 0.4999)
    sol = solve_bundle(bundle, f, fixed, path="condensed")
    K = bundle.condensed()
    lhs = sol.u @ (K @ sol.u)
    rhs = f @ sol.u
    assert lhs == pytest.approx(rhs, rel=1e-10)


def test_singular_system_reports_missing_constraints():
    disc = Discretization(generate_cook(2))
    bundle, f, _ = cook_problem(disc, "fem-t3", 0.3)
    with pytest.raises(RuntimeError, match="constraint"):
        solve_condensed(bundle.condensed(), f, np.array([], dtype=np.int64))


def test_locking_order_cook():
    """Near the limit, plain FEM locks while the bubble pair stays soft."""
    disc = Discretization(generate_cook(4))
    tips = {}
    for method in ("fem-t3", "bes-fem"):
        bundle, f, fixed = cook_problem(disc, method, 0.4999)
        sol = solve_bundle(bundle, f, fixed)
        tip = np.flatnonzero(
            np.all(np.abs(disc.mesh.nodes - [48.0, 60.0]) < 1e-9, axis=1)
        )[0]
        tips[method] = sol.u[2 * tip + 1]
    assert tips["bes-fem"] > 2.0 * tips["fem-t3"]


def test_block_smoke_3d():
    mesh = generate_block(5)
    disc = Discretization(mesh)
    mat = MaterialParams(E=250.0, nu=0.4999)
    bundle = assemble_method(disc, "bfs-fem", mat)
    f = assemble_loads(mesh, disc.topo, bundle.dofmap,
                       {"traction": ("pressure", 250.0)})
    fixed = dirichlet_dofs(mesh, bundle.dofmap)
    sol = solve_bundle(bundle, f, fixed)
    assert np.isfinite(sol.u).all()
    corner = np.flatnonzero(
        np.all(np.abs(mesh.nodes - [0.0, 0.0, 50.0]) < 1e-9, axis=1)
    )[0]
    assert sol.u[3 * corner + 2] < 0.0


def test_infsup_smoke():
    betas = {}
    for n in (2, 4):
        disc = Discretization(generate_cook(n))
        mat = MaterialParams(E=250.0, nu=0.4999)
        bundle = assemble_method(disc, "bes-fem", mat)
        G = assemble_h1_gram(disc, bundle.dofmap, bubble="power")
        fixed = dirichlet_dofs(disc.mesh, bundle.dofmap)
        beta, eigs = infsup_measure(G, bundle.B, bundle.C, fixed,
                                    bundle.dofmap.n_disp)
        assert 0.0 < beta < 10.0
        betas[n] = beta
    assert betas[4] > 0.3 * betas[2]
