import numpy as np
import pytest

from spinglass.disorder import DistributionSpec, sample_couplings
from spinglass.errors import McmcNotConvergedError
from spinglass.gibbs import ea_energy, exact_gibbs, sample_replicas
from spinglass.lattice import build_lattice
from spinglass.mc import integrated_autocorr_time, metropolis_sweeps_inplace


def _field(lat, seed=0):
    rng = np.random.default_rng(seed)
    return sample_couplings(lat, DistributionSpec("gaussian", 1.0), rng)


def test_autocorr_time_iid_series():
    rng = np.random.default_rng(0)
    tau = integrated_autocorr_time(rng.normal(size=20_000))
    assert tau == pytest.approx(1.0, abs=0.1)


def test_autocorr_time_correlated_series():
    rng = np.random.default_rng(1)
    x = np.zeros(20_000)
    rho = 0.9
    for t in range(1, len(x)):
        x[t] = rho * x[t - 1] + rng.normal()
    # AR(1) integrated time = (1+rho)/(1-rho) = 19
    assert integrated_autocorr_time(x) == pytest.approx(19.0, rel=0.25)


def test_metropolis_matches_exact_mean_energy():
    lat = build_lattice(1, [8])
    field = _field(lat, seed=3)
    beta = 0.6
    exact_mean = exact_gibbs(field, beta, lat).mean_energy()
    ens = sample_replicas(field, beta, lat, 400, {"method": "metropolis"},
                          np.random.default_rng(0))
    energies = [ea_energy(lat, field, s) for s in ens.spins]
    se = np.std(energies, ddof=1) / np.sqrt(len(energies))
    assert abs(np.mean(energies) - exact_mean) < 4 * se + 0.05


def test_parallel_tempering_matches_exact_mean_energy():
    lat = build_lattice(1, [8])
    field = _field(lat, seed=3)
    beta = 1.2
    exact_mean = exact_gibbs(field, beta, lat).mean_energy()
    ens = sample_replicas(field, beta, lat, 200,
                          {"method": "parallel-tempering"},
                          np.random.default_rng(0))
    energies = [ea_energy(lat, field, s) for s in ens.spins]
    se = np.std(energies, ddof=1) / np.sqrt(len(energies))
    assert abs(np.mean(energies) - exact_mean) < 4 * se + 0.05
    assert 0.0 < ens.diagnostics["swap_acceptance"] <= 1.0


def test_burn_in_budget_enforced():
    lat = build_lattice(2, [4, 4])
    field = _field(lat, seed=1)
    with pytest.raises(McmcNotConvergedError) as exc:
        sample_replicas(field, 1.5, lat, 4,
                        {"method": "metropolis", "max_burn_sweeps": 5},
                        np.random.default_rng(0))
    assert exc.value.diagnostics["burn_sweeps"] > 5


def test_sweep_kernel_deterministic():
    lat = build_lattice(2, [4, 4])
    field = _field(lat, seed=2)
    a = np.ones(16, dtype=np.int8)
    b = np.ones(16, dtype=np.int8)
    metropolis_sweeps_inplace(lat, field.values, a, 0.8, 50, seed=123)
    metropolis_sweeps_inplace(lat, field.values, b, 0.8, 50, seed=123)
    assert np.array_equal(a, b)
    c = np.ones(16, dtype=np.int8)
    metropolis_sweeps_inplace(lat, field.values, c, 0.8, 50, seed=124)
    assert not np.array_equal(a, c)
