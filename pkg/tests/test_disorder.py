import numpy as np
import pytest

from spinglass.disorder import (DistributionSpec, Perturbation,
                                distribution_from_spec, load_coupling_field,
                                perturb_couplings, sample_couplings,
                                save_coupling_field, sk_edges)
from spinglass.errors import (BadDistributionParameterError,
                              GeometryMismatchError)
from spinglass.lattice import Window, build_lattice


def test_bad_distribution_parameters():
    with pytest.raises(BadDistributionParameterError):
        DistributionSpec("gaussian", -1.0)
    with pytest.raises(BadDistributionParameterError):
        DistributionSpec("lorentzian", 1.0)


def test_distribution_from_spec_roundtrip():
    d = DistributionSpec("uniform", 0.5)
    assert distribution_from_spec(d.spec()) == d
    assert distribution_from_spec(d) is d


def test_draw_statistics():
    rng = np.random.default_rng(0)
    x = DistributionSpec("rademacher", 1.0).draw(rng, 10000)
    assert set(np.unique(x)) == {-1.0, 1.0}
    y = DistributionSpec("gaussian", 2.0).draw(rng, 200_000)
    assert np.std(y) == pytest.approx(2.0, rel=0.02)
    z = DistributionSpec("uniform", 0.5).draw(rng, 1000)
    assert np.all(np.abs(z) <= 0.5)


def test_sk_edges():
    e = sk_edges(4)
    assert e.shape == (6, 2)
    assert np.all(e[:, 0] < e[:, 1])
    assert e.tolist() == [[0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3]]


def test_sample_couplings_ea_and_sk():
    lat = build_lattice(2, [3, 3])
    rng = np.random.default_rng(4)
    field = sample_couplings(lat, DistributionSpec("gaussian", 1.0), rng)
    assert field.values.shape == (lat.n_edges,)
    sk = sample_couplings(5, DistributionSpec("gaussian", 1.0), rng)
    assert sk.values.shape == (10,)
    assert field.geometry != sk.geometry


def test_coupling_field_io_roundtrip(tmp_path):
    lat = build_lattice(1, [8])
    rng = np.random.default_rng(9)
    field = sample_couplings(lat, DistributionSpec("uniform", 0.3), rng)
    path = tmp_path / "field.sgcf"
    save_coupling_field(path, field)
    again = load_coupling_field(path)
    assert np.array_equal(field.values, again.values)
    assert again.geometry == field.geometry
    assert again.dist == field.dist


def test_perturb_couplings_only_touches_window():
    lat = build_lattice(1, [8])
    rng = np.random.default_rng(2)
    field = sample_couplings(lat, DistributionSpec("gaussian", 1.0), rng)
    win = Window(0, (3,))
    from spinglass.lattice import window_edges
    interior, _ = window_edges(lat, win)
    pert = Perturbation(win, np.array([0.5, -0.25]))
    new = perturb_couplings(lat, field, pert)
    delta = new.values - field.values
    assert np.count_nonzero(delta) == 2
    assert np.all(np.flatnonzero(delta) == interior)


def test_perturbation_size_mismatch():
    lat = build_lattice(1, [8])
    rng = np.random.default_rng(2)
    field = sample_couplings(lat, DistributionSpec("gaussian", 1.0), rng)
    pert = Perturbation(Window(0, (3,)), np.array([1.0, 2.0, 3.0]))
    with pytest.raises(GeometryMismatchError):
        perturb_couplings(lat, field, pert)
