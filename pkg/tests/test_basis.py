"""Tests for quadrature rules and simplex shape functions."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from smoothfem.basis import (
    affine_maps,
    barycentric_coordinates,
    bubble_gradient,
    bubble_normalization,
    bubble_value,
    bubble_volume_mean,
    eval_p1,
)
from smoothfem.quadrature import (
    barycentric_monomial_integral,
    boundary_quadrature,
    simplex_quadrature,
)

RNG = np.random.default_rng(20240811)


def random_barycentric(rng, dim, n):
    """Uniform-ish interior barycentric points."""
    lam = rng.dirichlet(np.ones(dim + 1), size=n)
    return lam


def all_exponents(dim, total):
    if dim == 0:
        yield (total,)
        return
    for a in range(total + 1):
        for rest in all_exponents(dim - 1, total - a):
            yield (a,) + rest


@pytest.mark.parametrize("dim", [1, 2, 3])
@pytest.mark.parametrize("degree", [1, 2, 3, 4, 5, 6, 7])
def test_simplex_quadrature_exactness(dim, degree):
    """Every rule integrates all monomials up to its degree exactly."""
    rule = simplex_quadrature(dim, degree)
    assert rule.weights.sum() == pytest.approx(1.0, rel=1e-14)
    assert np.all(rule.points >= -1e-14)
    np.testing.assert_allclose(rule.points.sum(axis=1), 1.0, rtol=1e-13)
    for total in range(rule.degree + 1):
        for expo in all_exponents(dim, total):
            approx = np.sum(
                rule.weights * np.prod(rule.points ** np.asarray(expo), axis=1)
            )
            exact = barycentric_monomial_integral(dim, expo)
            assert approx == pytest.approx(exact, rel=1e-12, abs=1e-15), expo


@pytest.mark.parametrize("facet,degree", [("segment", 1), ("segment", 3),
                                          ("triangle", 2), ("triangle", 4),
                                          ("triangle", 6)])
def test_boundary_quadrature_exactness(facet, degree):
    dim = 1 if facet == "segment" else 2
    rule = boundary_quadrature(facet, degree)
    assert rule.degree >= degree
    for total in range(degree + 1):
        for expo in all_exponents(dim, total):
            approx = np.sum(
                rule.weights * np.prod(rule.points ** np.asarray(expo), axis=1)
            )
            exact = barycentric_monomial_integral(dim, expo)
            assert approx == pytest.approx(exact, rel=1e-12, abs=1e-15)


def test_monomial_integral_basics():
    # area-normalized integrals on the triangle: classical values
    assert barycentric_monomial_integral(2, (1, 0, 0)) == pytest.approx(1 / 3)
    assert barycentric_monomial_integral(2, (1, 1, 0)) == pytest.approx(1 / 12)
    assert barycentric_monomial_integral(2, (2, 0, 0)) == pytest.approx(1 / 6)
    assert barycentric_monomial_integral(2, (1, 1, 1)) == pytest.approx(1 / 60)
    assert barycentric_monomial_integral(3, (1, 1, 1, 1)) == pytest.approx(
        6 / 5040
    )


@pytest.mark.parametrize("dim", [2, 3])
def test_affine_maps_reference(dim):
    verts = np.vstack([np.zeros(dim), np.eye(dim)])
    grads, meas = affine_maps(verts, np.arange(dim + 1)[None, :])
    assert meas[0] == pytest.approx({2: 0.5, 3: 1 / 6}[dim])
    np.testing.assert_allclose(grads[0, 0], -np.ones(dim))
    np.testing.assert_allclose(grads[0, 1:], np.eye(dim), atol=1e-15)


@pytest.mark.parametrize("dim", [2, 3])
def test_barycentric_roundtrip(dim):
    verts = RNG.normal(size=(dim + 1, dim))
    lam = random_barycentric(RNG, dim, 40)
    pts = lam @ verts
    lam2 = barycentric_coordinates(verts, pts)
    np.testing.assert_allclose(lam2, lam, atol=1e-12)
    vals, grads = eval_p1(verts, pts)
    np.testing.assert_allclose(vals, lam, atol=1e-12)
    np.testing.assert_allclose(grads.sum(axis=0), 0.0, atol=1e-12)


@given(st.integers(0, 2 ** 32 - 1), st.sampled_from([2, 3]))
@settings(max_examples=30, deadline=None)
def test_partition_of_unity(seed, dim):
    rng = np.random.default_rng(seed)
    lam = random_barycentric(rng, dim, 20)
    np.testing.assert_allclose(lam.sum(axis=1), 1.0, atol=1e-12)


@given(st.integers(0, 2 ** 32 - 1), st.sampled_from([2, 3]),
       st.sampled_from(["power", "hat"]))
@settings(max_examples=40, deadline=None)
def test_bubble_range_and_boundary(seed, dim, kind):
    """Bubbles live in [0, 1], vanish on facets, and peak at the centroid."""
    rng = np.random.default_rng(seed)
    lam = random_barycentric(rng, dim, 30)
    vals = bubble_value(kind, lam)
    assert np.all(vals >= 0.0) and np.all(vals <= 1.0 + 1e-12)
    centroid = np.full(dim + 1, 1.0 / (dim + 1))
    assert bubble_value(kind, centroid) == pytest.approx(1.0, abs=1e-14)
    on_facet = lam.copy()
    on_facet[:, 0] = 0.0
    on_facet /= on_facet.sum(axis=1, keepdims=True)
    np.testing.assert_allclose(bubble_value(kind, on_facet), 0.0, atol=1e-14)


def test_bubble_normalization_values():
    assert bubble_normalization("power", 2) == pytest.approx(1.0)
    assert bubble_normalization("power", 3) == pytest.approx(4.0)
    assert bubble_normalization("hat", 2) == pytest.approx(1 / 3)
    assert bubble_normalization("hat", 3) == pytest.approx(1 / 4)
    with pytest.raises(ValueError):
        bubble_normalization("cubic", 2)


@pytest.mark.parametrize("dim", [2, 3])
def test_power_bubble_volume_mean(dim):
    """Quadrature of the power bubble matches the closed form."""
    rule = simplex_quadrature(dim, dim + 1)
    val = np.sum(rule.weights * bubble_value("power", rule.points))
    assert val == pytest.approx(bubble_volume_mean("power", dim), rel=1e-13)
    expected = 9 / 20 if dim == 2 else 32 / 105
    assert val == pytest.approx(expected, rel=1e-13)


@pytest.mark.parametrize("dim", [2, 3])
def test_hat_bubble_volume_mean(dim):
    """Cone-wise quadrature of the hat bubble matches 1/(d+1).

    The hat bubble is linear on each cone spanned by a facet and the
    centroid, so integrating cone by cone is exact.
    """
    centroid = np.full(dim + 1, 1.0 / (dim + 1))
    rule = simplex_quadrature(dim, 2)
    total = 0.0
    for i in range(dim + 1):
        corners = []
        for j in range(dim + 1):
            if j == i:
                continue
            e = np.zeros(dim + 1)
            e[j] = 1.0
            corners.append(e)
        corners.append(centroid)
        corners = np.asarray(corners)           # (d+1, d+1) barycentric corners
        sub_pts = rule.points @ corners         # rule points inside the cone
        # cone volume fraction is 1/(d+1)
        total += np.sum(rule.weights * bubble_value("hat", sub_pts)) / (dim + 1)
    assert total == pytest.approx(1.0 / (dim + 1), rel=1e-13)
    assert bubble_volume_mean("hat", dim) == pytest.approx(1.0 / (dim + 1))


@pytest.mark.parametrize("dim", [2, 3])
def test_power_bubble_gradient_fd(dim):
    verts = RNG.normal(size=(dim + 1, dim)) * 2.0
    grads, meas = affine_maps(verts, np.arange(dim + 1)[None, :])
    if meas[0] < 0:
        verts[[0, 1]] = verts[[1, 0]]
        grads, meas = affine_maps(verts, np.arange(dim + 1)[None, :])
    pts = random_barycentric(RNG, dim, 15) @ verts
    h = 1e-6
    for x in pts:
        lam = barycentric_coordinates(verts, x)
        g = bubble_gradient("power", lam, grads[0])
        for c in range(dim):
            xp, xm = x.copy(), x.copy()
            xp[c] += h
            xm[c] -= h
            fd = (
                bubble_value("power", barycentric_coordinates(verts, xp))
                - bubble_value("power", barycentric_coordinates(verts, xm))
            ) / (2 * h)
            assert g[c] == pytest.approx(fd, rel=5e-6, abs=5e-6)


@pytest.mark.parametrize("dim", [2, 3])
def test_hat_bubble_gradient_fd(dim):
    """FD check at points safely inside one cone of the hat bubble."""
    verts = np.vstack([np.zeros(dim), np.eye(dim)]) * 1.7
    grads, _ = affine_maps(verts, np.arange(dim + 1)[None, :])
    # bias points toward vertex 0 so lambda_0 is the strict minimum... the
    # minimum coordinate must be unique and stay unique under perturbation
    rng = np.random.default_rng(7)
    lam = rng.dirichlet(np.ones(dim + 1), size=40)
    lam = lam[np.min(np.abs(np.diff(np.sort(lam, axis=1), axis=1)), axis=1) > 1e-3]
    pts = lam @ verts
    h = 1e-7
    for x in pts[:10]:
        lam_x = barycentric_coordinates(verts, x)
        g = bubble_gradient("hat", lam_x, grads[0])
        for c in range(dim):
            xp, xm = x.copy(), x.copy()
            xp[c] += h
            xm[c] -= h
            fd = (
                bubble_value("hat", barycentric_coordinates(verts, xp))
                - bubble_value("hat", barycentric_coordinates(verts, xm))
            ) / (2 * h)
            assert g[c] == pytest.approx(fd, rel=1e-4, abs=1e-4)
