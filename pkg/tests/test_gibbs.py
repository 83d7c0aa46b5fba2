import math

import numpy as np
import pytest

from spinglass.disorder import CouplingField, DistributionSpec, sample_couplings
from spinglass.errors import (BoundRequiresGaussianError,
                              EnumerationTooLargeError)
from spinglass.gibbs import (GibbsTable, ea_energy, edge_parity_columns,
                             effective_sample_size, enumerate_gibbs,
                             exact_gibbs, load_replica_ensemble,
                             sample_replicas, save_replica_ensemble,
                             sk_energy, spins_for_indices, window_free_energy)
from spinglass.lattice import Window, build_lattice


def _gaussian_field(lat, seed=0, scale=1.0):
    rng = np.random.default_rng(seed)
    return sample_couplings(lat, DistributionSpec("gaussian", scale), rng)


def test_ea_energy_ring_ferromagnet():
    lat = build_lattice(1, [3])
    field = CouplingField(values=np.ones(3), dist=DistributionSpec("gaussian", 1.0),
                          geometry="ea:d=1,sides=3", seed=0)
    sigma = np.ones(3, dtype=np.int8)
    assert ea_energy(lat, field, sigma) == pytest.approx(-3.0)


def test_sk_energy_two_spins():
    field = CouplingField(values=np.ones(1), dist=DistributionSpec("gaussian", 1.0),
                          geometry="sk:n=2", seed=0)
    sigma = np.ones(2, dtype=np.int8)
    assert sk_energy(field, sigma, 2) == pytest.approx(-1.0 / math.sqrt(2))


def test_spins_for_indices_convention():
    spins = spins_for_indices(np.array([0, 1, 2]), 3)
    # bit = 1 flips the spin to -1; bit k is vertex k
    assert spins[0].tolist() == [1, 1, 1]
    assert spins[1].tolist() == [-1, 1, 1]
    assert spins[2].tolist() == [1, -1, 1]


def test_edge_parity_columns_match_explicit_products():
    lat = build_lattice(1, [4])
    u = edge_parity_columns(lat.edges, 4)
    spins = spins_for_indices(np.arange(16), 4).astype(np.float64)
    expect = spins[:, lat.edges[:, 0]] * spins[:, lat.edges[:, 1]]
    assert np.array_equal(u, expect)


def test_log_z_beta_zero():
    lat = build_lattice(2, [3, 3])
    table = exact_gibbs(_gaussian_field(lat), 0.0, lat)
    assert table.log_z == pytest.approx(9 * math.log(2), abs=1e-10)
    assert table.probs.sum() == pytest.approx(1.0, abs=1e-12)


def test_mean_energy_is_log_z_derivative():
    lat = build_lattice(1, [6])
    field = _gaussian_field(lat, seed=3)
    beta, h = 0.7, 1e-5
    up = exact_gibbs(field, beta + h, lat).log_z
    dn = exact_gibbs(field, beta - h, lat).log_z
    mean_e = exact_gibbs(field, beta, lat).mean_energy()
    assert -(up - dn) / (2 * h) == pytest.approx(mean_e, abs=1e-6)


def test_log_z_convex_in_beta():
    lat = build_lattice(1, [6])
    field = _gaussian_field(lat, seed=5)
    betas = np.linspace(0.0, 2.0, 9)
    lz = np.array([exact_gibbs(field, b, lat).log_z for b in betas])
    second = np.diff(lz, 2)
    assert np.all(second >= -1e-9)


def test_enumeration_cap():
    edges = np.array([[0, 1]])
    with pytest.raises(EnumerationTooLargeError):
        enumerate_gibbs(edges, np.ones(1), 25, 1.0)


def test_exact_sampling_matches_table():
    lat = build_lattice(1, [5])
    field = _gaussian_field(lat, seed=7)
    table = exact_gibbs(field, 1.0, lat)
    rng = np.random.default_rng(1)
    idx = table.sample_indices(rng, 50_000)
    freq = np.bincount(idx, minlength=len(table.probs)) / len(idx)
    assert np.max(np.abs(freq - table.probs)) < 0.01


def test_effective_sample_size():
    assert effective_sample_size(np.ones(10) / 10) == pytest.approx(10.0)
    w = np.zeros(10)
    w[0] = 1.0
    assert effective_sample_size(w) == pytest.approx(1.0)


def test_replica_ensemble_io_roundtrip(tmp_path):
    lat = build_lattice(2, [3, 3])
    field = _gaussian_field(lat, seed=2)
    ens = sample_replicas(field, 0.8, lat, 7, "exact", np.random.default_rng(0))
    path = tmp_path / "replicas.bin"
    save_replica_ensemble(path, ens)
    again = load_replica_ensemble(path)
    assert np.array_equal(ens.spins, again.spins)
    assert again.beta == ens.beta
    assert again.sampler == ens.sampler


def test_window_free_energy_beta_w_zero_is_log2():
    lat = build_lattice(1, [8])
    rng = np.random.default_rng(0)
    fr = window_free_energy({"kind": "gaussian", "scale": 1.0}, 0.5, 0.0,
                            lat, Window(0, (4,)), 20, rng)
    assert fr.f_lambda_w == pytest.approx(math.log(2), abs=1e-12)
    assert fr.f_w == pytest.approx(math.log(2), abs=1e-12)
    assert fr.diff == pytest.approx(0.0, abs=1e-12)


def test_window_free_energy_bound_holds():
    lat = build_lattice(1, [8])
    rng = np.random.default_rng(1)
    fr = window_free_energy({"kind": "gaussian", "scale": 1.0}, 0.5, 0.5,
                            lat, Window(0, (4,)), 400, rng)
    # |bd W| = 2 boundary edges, |W| = 4 sites
    assert fr.bound == pytest.approx((0.25 / 2) * (2 / 4))
    assert fr.lower_ok and fr.upper_ok


def test_window_free_energy_requires_gaussian():
    lat = build_lattice(1, [8])
    rng = np.random.default_rng(1)
    with pytest.raises(BoundRequiresGaussianError):
        window_free_energy({"kind": "rademacher", "scale": 1.0}, 0.5, 0.5,
                           lat, Window(0, (4,)), 10, rng)
