import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spinglass.errors import DegenerateTorusError, WindowTooLargeError
from spinglass.lattice import (Lattice, Window, build_lattice, full_window,
                               translate_couplings, translate_spins,
                               window_edges, window_vertices)


def test_edge_counts():
    assert build_lattice(1, [6]).n_edges == 6
    assert build_lattice(2, [3, 3]).n_edges == 18
    assert build_lattice(3, [3, 3, 3]).n_edges == 81


def test_degenerate_torus_rejected():
    with pytest.raises(DegenerateTorusError):
        build_lattice(1, [2])
    with pytest.raises(DegenerateTorusError):
        build_lattice(2, [3, 2])


def test_edges_canonical():
    lat = build_lattice(2, [4, 3])
    assert lat.edges.shape == (2 * 12, 2)
    assert np.all(lat.edges[:, 0] < lat.edges[:, 1])
    # sorted by (min vertex, axis, max vertex), no duplicates
    keys = list(map(tuple, lat.edges))
    assert len(set(keys)) == lat.n_edges


def test_vertex_degree_is_2d():
    for d, sides in [(1, [5]), (2, [3, 4]), (3, [3, 3, 3])]:
        lat = build_lattice(d, sides)
        counts = np.bincount(lat.edges.ravel(), minlength=lat.n_vertices)
        assert np.all(counts == 2 * d)


def test_neighbor_tables_consistent():
    lat = build_lattice(2, [3, 3])
    for x in range(lat.n_vertices):
        for k in range(lat.neighbors.shape[1]):
            y = lat.neighbors[x, k]
            e = lat.neighbor_edge[x, k]
            assert {x, y} == set(lat.edges[e])


def test_coords_roundtrip():
    lat = build_lattice(3, [3, 4, 5])
    for v in [0, 7, lat.n_vertices - 1]:
        assert lat.vertex_index(lat.vertex_coords(v)) == v


def test_translation_permutation_bijective():
    lat = build_lattice(2, [3, 4])
    perm = lat.translation_permutation([1, 2])
    assert sorted(perm) == list(range(lat.n_vertices))
    # translating by the sides is the identity
    assert np.array_equal(lat.translation_permutation([3, 4]),
                          np.arange(lat.n_vertices))


@given(st.integers(0, 5), st.integers(0, 5))
@settings(max_examples=20, deadline=None)
def test_energy_translation_invariant(ax, ay):
    lat = build_lattice(2, [3, 4])
    rng = np.random.default_rng(11)
    values = rng.normal(size=lat.n_edges)
    sigma = rng.choice(np.array([-1, 1], dtype=np.int8), size=lat.n_vertices)

    def energy(vals, s):
        return -float((s[lat.edges[:, 0]] * s[lat.edges[:, 1]]) @ vals)

    shifted = translate_spins(lat, sigma, [ax, ay])
    values_t = translate_couplings(lat, values, [ax, ay])
    assert energy(values_t, shifted) == pytest.approx(energy(values, sigma),
                                                      abs=1e-12)


def test_window_edges_ring():
    lat = build_lattice(1, [6])
    interior, boundary = window_edges(lat, Window(0, (3,)))
    assert len(interior) == 2 and len(boundary) == 2


def test_window_edges_2d():
    lat = build_lattice(2, [5, 5])
    interior, boundary = window_edges(lat, Window(0, (3, 3)))
    assert len(interior) == 12 and len(boundary) == 12


def test_window_wraps():
    lat = build_lattice(1, [6])
    verts = window_vertices(lat, Window(5, (3,)))
    assert sorted(verts) == [0, 1, 5]


def test_full_window_has_no_boundary():
    lat = build_lattice(2, [3, 3])
    win = full_window(lat)
    interior, boundary = window_edges(lat, win)
    assert len(interior) == lat.n_edges and len(boundary) == 0


def test_window_too_large():
    lat = build_lattice(1, [6])
    with pytest.raises(WindowTooLargeError):
        window_vertices(lat, Window(0, (7,)))


def test_lattice_spec_roundtrip():
    from spinglass.lattice import lattice_from_spec
    lat = build_lattice(2, [3, 4])
    again = lattice_from_spec(lat.spec())
    assert np.array_equal(lat.edges, again.edges)
