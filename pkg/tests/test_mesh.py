"""Tests for benchmark mesh generators, topology, distortion, and IO."""

import numpy as np
import pytest

from smoothfem.mesh import (
    PrimalMesh,
    build_topology,
    distort_mesh,
    generate_annulus,
    generate_benchmark_mesh,
    generate_block,
    generate_cook,
)

COOK_AREA = 1440.0  # shoelace area of (0,0), (48,44), (48,60), (0,44)


def test_cook_geometry():
    mesh = generate_cook(4)
    assert mesh.n_elements == 2 * 4 * 4
    assert mesh.element_measures().sum() == pytest.approx(COOK_AREA, rel=1e-13)
    for corner in [(0, 0), (48, 44), (48, 60), (0, 44)]:
        dist = np.linalg.norm(mesh.nodes - np.asarray(corner, float), axis=1)
        assert dist.min() < 1e-12
    clamped = mesh.nodes[np.unique(mesh.boundary["clamped"])]
    np.testing.assert_allclose(clamped[:, 0], 0.0, atol=1e-13)
    loaded = mesh.nodes[np.unique(mesh.boundary["traction"])]
    np.testing.assert_allclose(loaded[:, 0], 48.0, atol=1e-12)
    # right edge has length 16, split into ny facets
    seg = mesh.nodes[mesh.boundary["traction"]]
    lengths = np.linalg.norm(seg[:, 1] - seg[:, 0], axis=1)
    assert lengths.sum() == pytest.approx(16.0, rel=1e-13)


def test_cook_profile_mesh_has_midline_nodes():
    mesh = generate_cook((16, 8))
    assert mesh.n_elements == 256
    assert np.any(np.abs(mesh.nodes[:, 0] - 24.0) < 1e-9)


def test_annulus_geometry():
    mesh = generate_annulus((4, 8), inner=1.0, outer=2.0)
    assert mesh.n_elements == 64
    r = np.linalg.norm(mesh.nodes, axis=1)
    assert r.min() == pytest.approx(1.0, rel=1e-13)
    assert r.max() == pytest.approx(2.0, rel=1e-13)
    inner = mesh.nodes[np.unique(mesh.boundary["traction"])]
    np.testing.assert_allclose(np.linalg.norm(inner, axis=1), 1.0, rtol=1e-13)
    np.testing.assert_allclose(
        mesh.nodes[np.unique(mesh.boundary["roller-y"])][:, 1], 0.0, atol=1e-13
    )
    np.testing.assert_allclose(
        mesh.nodes[np.unique(mesh.boundary["roller-x"])][:, 0], 0.0, atol=1e-13
    )
    # polygonal quarter annulus area approaches pi (b^2 - a^2) / 4 from below
    exact = np.pi * 3.0 / 4.0
    area = mesh.element_measures().sum()
    assert 0.97 * exact < area < exact


def test_annulus_default_series():
    for n, count in [(4, 64), (8, 256), (16, 1024), (32, 4096)]:
        mesh = generate_annulus(n)
        assert mesh.n_elements == count


def test_block_geometry():
    mesh = generate_block(5)
    assert mesh.n_elements == 750
    assert mesh.element_measures().sum() == pytest.approx(50.0 ** 3, rel=1e-12)
    # traction patch: the [0,10]^2 corner of the top face, area 100
    tri = mesh.nodes[mesh.boundary["traction"]]
    areas = 0.5 * np.linalg.norm(
        np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1
    )
    assert areas.sum() == pytest.approx(100.0, rel=1e-12)
    np.testing.assert_allclose(tri[..., 2], 50.0, atol=1e-12)
    clamped = mesh.nodes[np.unique(mesh.boundary["clamped"])]
    np.testing.assert_allclose(clamped[:, 2], 0.0, atol=1e-13)


def test_dispatcher():
    assert generate_benchmark_mesh("cook", 2).n_elements == 8
    assert generate_benchmark_mesh("pipe", (2, 4)).n_elements == 16
    assert generate_benchmark_mesh("block", 2).n_elements == 48
    with pytest.raises(ValueError):
        generate_benchmark_mesh("sphere", 2)


def test_inverted_element_rejected():
    nodes = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    with pytest.raises(ValueError, match="non-positive"):
        PrimalMesh(nodes, np.array([[0, 2, 1]]), {})


def test_unknown_boundary_label_rejected():
    nodes = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    with pytest.raises(ValueError, match="label"):
        PrimalMesh(nodes, np.array([[0, 1, 2]]), {"glued": [[0, 1]]})


def test_topology_euler_2d():
    mesh = generate_cook(5)
    topo = build_topology(mesh)
    # disk-like domain: V - E + F = 1
    assert mesh.n_nodes - topo.n_edges + mesh.n_elements == 1
    counts = np.diff(topo.facet_ptr)
    assert set(counts.tolist()) <= {1, 2}
    assert np.all(counts[topo.boundary_facet_mask] == 1)


def test_topology_boundary_3d():
    mesh = generate_block(2, size=(1.0, 1.0, 1.0))
    topo = build_topology(mesh)
    bfaces = topo.facets[topo.boundary_facet_mask]
    tri = mesh.nodes[bfaces]
    areas = 0.5 * np.linalg.norm(
        np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1
    )
    assert areas.sum() == pytest.approx(6.0, rel=1e-12)
    # every labeled facet is a real boundary facet
    labeled = np.vstack(list(mesh.boundary.values()))
    ids = topo.facet_index(labeled)
    assert np.all(topo.boundary_facet_mask[ids])


def test_facet_index_roundtrip():
    mesh = generate_cook(3)
    topo = build_topology(mesh)
    ids = topo.facet_index(topo.facets[::3])
    np.testing.assert_array_equal(ids, np.arange(topo.n_facets)[::3])
    with pytest.raises(KeyError):
        topo.facet_index(np.array([[0, mesh.n_nodes - 1]]))


@pytest.mark.parametrize("make", [
    lambda: generate_cook(6),
    lambda: generate_annulus((4, 8)),
    lambda: generate_block(3, size=(1.0, 1.0, 1.0)),
])
def test_distortion_validity_and_determinism(make):
    mesh = make()
    out1 = distort_mesh(mesh, 0.4, seed=11)
    out2 = distort_mesh(mesh, 0.4, seed=11)
    np.testing.assert_array_equal(out1.nodes, out2.nodes)
    assert np.all(out1.element_measures() > 0.0)
    # some interior node actually moved
    assert np.max(np.abs(out1.nodes - mesh.nodes)) > 1e-6
    out3 = distort_mesh(mesh, 0.4, seed=12)
    assert np.max(np.abs(out3.nodes - out1.nodes)) > 1e-9


def test_distortion_keeps_boundary_fixed():
    mesh = generate_cook(5)
    topo = build_topology(mesh)
    out = distort_mesh(mesh, 0.35, seed=3)
    bnodes = topo.boundary_nodes()
    np.testing.assert_array_equal(out.nodes[bnodes], mesh.nodes[bnodes])


def test_distortion_density_zero_is_identity():
    mesh = generate_annulus((3, 4))
    out = distort_mesh(mesh, 0.0, seed=5)
    np.testing.assert_array_equal(out.nodes, mesh.nodes)


def test_json_roundtrip():
    mesh = generate_annulus((3, 5))
    text = mesh.to_json()
    back = PrimalMesh.from_json(text)
    np.testing.assert_array_equal(back.nodes, mesh.nodes)
    np.testing.assert_array_equal(back.elements, mesh.elements)
    assert set(back.boundary) == set(mesh.boundary)
    for key in mesh.boundary:
        np.testing.assert_array_equal(back.boundary[key], mesh.boundary[key])
    assert back.to_json() == text
