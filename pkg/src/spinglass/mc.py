"""Single-site Metropolis and parallel-tempering samplers.

The sweep kernel is JIT-compiled; a sweep visits every site once in index
order.  Each replica gets its own chain (and its own RNG stream derived
from the caller's generator), so the returned replicas are independent.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

from .errors import McmcNotConvergedError
from .lattice import Lattice


@njit(cache=True)
def _sweeps(spins, neighbors, nbr_couplings, beta, n_sweeps, seed):
    """n_sweeps sequential-scan Metropolis sweeps in place."""
    np.random.seed(seed)
    n = spins.shape[0]
    deg = neighbors.shape[1]
    for _ in range(n_sweeps):
        for x in range(n):
            h = 0.0
            for k in range(deg):
                h += nbr_couplings[x, k] * spins[neighbors[x, k]]
            d_e = 2.0 * spins[x] * h
            if d_e <= 0.0 or np.random.random() < math.exp(-beta * d_e):
                spins[x] = -spins[x]


@njit(cache=True)
def _sweeps_recording(spins, neighbors, nbr_couplings, edge_u, edge_v,
                      couplings, beta, n_sweeps, seed):
    """Sweeps that record the energy after each sweep."""
    np.random.seed(seed)
    n = spins.shape[0]
    deg = neighbors.shape[1]
    energies = np.empty(n_sweeps)
    for t in range(n_sweeps):
        for x in range(n):
            h = 0.0
            for k in range(deg):
                h += nbr_couplings[x, k] * spins[neighbors[x, k]]
            d_e = 2.0 * spins[x] * h
            if d_e <= 0.0 or np.random.random() < math.exp(-beta * d_e):
                spins[x] = -spins[x]
        e = 0.0
        for i in range(edge_u.shape[0]):
            e -= couplings[i] * spins[edge_u[i]] * spins[edge_v[i]]
        energies[t] = e
    return energies


def _energy(spins, edges, couplings):
    return -float((spins[edges[:, 0]] * spins[edges[:, 1]]).astype(float)
                  @ couplings)


def integrated_autocorr_time(series: np.ndarray, c: float = 5.0) -> float:
    """Integrated autocorrelation time by the self-consistent window method."""
    x = np.asarray(series, dtype=np.float64)
    x = x - x.mean()
    n = len(x)
    if n < 4 or np.allclose(x, 0.0):
        return 1.0
    f = np.fft.rfft(x, n=2 * n)
    acf = np.fft.irfft(f * np.conjugate(f))[:n].real
    if acf[0] <= 0:
        return 1.0
    acf /= acf[0]
    taus = 2.0 * np.cumsum(acf) - 1.0
    window = np.arange(n) >= c * taus
    idx = np.argmax(window) if window.any() else n - 1
    return float(max(taus[idx], 1.0))


def _seed_from(rng: np.random.Generator) -> int:
    return int(rng.integers(0, 2 ** 31 - 1))


def metropolis_replicas(lat: Lattice, couplings: np.ndarray, beta: float,
                        s: int, rng: np.random.Generator,
                        pilot_sweeps: int = 2000,
                        max_burn_sweeps: int = 200_000,
                        tau_cap: float | None = None):
    """One independent Metropolis chain per replica.

    A pilot chain estimates the energy autocorrelation time tau; every
    replica chain is then burned in for 20*tau sweeps from a random start.
    Raises mcmc-not-converged when the implied burn-in exceeds the budget.
    """
    nbr_couplings = couplings[lat.neighbor_edge]
    edges = lat.edges
    pilot = rng.choice(np.array([-1, 1], dtype=np.int8), size=lat.n_vertices)
    energies = _sweeps_recording(pilot, lat.neighbors, nbr_couplings,
                                 edges[:, 0].copy(), edges[:, 1].copy(),
                                 couplings, beta, pilot_sweeps,
                                 _seed_from(rng))
    # discard the transient half before estimating tau
    tau = integrated_autocorr_time(energies[pilot_sweeps // 2:])
    burn = int(math.ceil(20.0 * tau)) + 10
    diag = {"tau": tau, "burn_sweeps": burn, "pilot_sweeps": pilot_sweeps}
    if burn > max_burn_sweeps or (tau_cap is not None and tau > tau_cap):
        raise McmcNotConvergedError(
            f"burn-in {burn} sweeps exceeds budget {max_burn_sweeps}",
            diagnostics=diag)
    spins = np.empty((s, lat.n_vertices), dtype=np.int8)
    for i in range(s):
        chain = rng.choice(np.array([-1, 1], dtype=np.int8), size=lat.n_vertices)
        _sweeps(chain, lat.neighbors, nbr_couplings, beta, burn, _seed_from(rng))
        spins[i] = chain
    return spins, diag


def tune_beta_ladder(lat: Lattice, couplings: np.ndarray, beta: float,
                     rng: np.random.Generator, beta_min: float = 0.1,
                     pilot_sweeps: int = 300, max_rounds: int = 6):
    """Geometric beta ladder with neighbor swap acceptance tuned to [0.2, 0.5]."""
    n_temps = max(3, int(math.ceil(math.log(beta / beta_min) / math.log(1.25))))
    for _ in range(max_rounds):
        betas = np.geomspace(beta_min, beta, n_temps)[::-1].copy()
        acc = _pilot_swap_acceptance(lat, couplings, betas, pilot_sweeps, rng)
        if 0.2 <= acc <= 0.5:
            return betas, acc
        n_temps = n_temps + 2 if acc < 0.2 else max(3, n_temps - 1)
    return betas, acc


def _pilot_swap_acceptance(lat, couplings, betas, n_sweeps, rng):
    nbr_couplings = couplings[lat.neighbor_edge]
    chains = rng.choice(np.array([-1, 1], dtype=np.int8),
                        size=(len(betas), lat.n_vertices))
    attempts = accepts = 0
    for t in range(n_sweeps):
        for k, b in enumerate(betas):
            _sweeps(chains[k], lat.neighbors, nbr_couplings, b, 1,
                    _seed_from(rng))
        for k in range(len(betas) - 1):
            e1 = _energy(chains[k], lat.edges, couplings)
            e2 = _energy(chains[k + 1], lat.edges, couplings)
            attempts += 1
            if rng.random() < math.exp(min(0.0, (betas[k] - betas[k + 1])
                                           * (e1 - e2))):
                chains[[k, k + 1]] = chains[[k + 1, k]]
                accepts += 1
    return accepts / max(attempts, 1)


def parallel_tempering_replicas(lat: Lattice, couplings: np.ndarray,
                                beta: float, s: int, rng: np.random.Generator,
                                beta_min: float = 0.1,
                                pilot_sweeps: int = 500,
                                max_burn_sweeps: int = 50_000):
    """One independent parallel-tempering run per replica; the target-chain
    state after burn-in is the sample."""
    betas, swap_acc = tune_beta_ladder(lat, couplings, beta, rng,
                                       beta_min=beta_min)
    nbr_couplings = couplings[lat.neighbor_edge]

    def run(n_sweeps, record=False):
        chains = rng.choice(np.array([-1, 1], dtype=np.int8),
                            size=(len(betas), lat.n_vertices))
        rec = np.empty(n_sweeps) if record else None
        for t in range(n_sweeps):
            for k, b in enumerate(betas):
                _sweeps(chains[k], lat.neighbors, nbr_couplings, b, 1,
                        _seed_from(rng))
            for k in range(len(betas) - 1):
                e1 = _energy(chains[k], lat.edges, couplings)
                e2 = _energy(chains[k + 1], lat.edges, couplings)
                if rng.random() < math.exp(min(0.0, (betas[k] - betas[k + 1])
                                               * (e1 - e2))):
                    chains[[k, k + 1]] = chains[[k + 1, k]]
            if record:
                rec[t] = _energy(chains[0], lat.edges, couplings)
        return chains[0].copy(), rec

    _, pilot_energies = run(pilot_sweeps, record=True)
    tau = integrated_autocorr_time(pilot_energies[pilot_sweeps // 2:])
    burn = int(math.ceil(20.0 * tau)) + 10
    diag = {"tau": tau, "burn_sweeps": burn, "swap_acceptance": swap_acc,
            "beta_ladder": [float(b) for b in betas]}
    if burn > max_burn_sweeps:
        raise McmcNotConvergedError(
            f"burn-in {burn} sweeps exceeds budget {max_burn_sweeps}",
            diagnostics=diag)
    spins = np.empty((s, lat.n_vertices), dtype=np.int8)
    for i in range(s):
        spins[i], _ = run(burn)
    return spins, diag


def metropolis_sweeps_inplace(lat: Lattice, couplings: np.ndarray,
                              spins: np.ndarray, beta: float,
                              n_sweeps: int, seed: int) -> None:
    """Raw kernel entry point (used by the performance checks)."""
    _sweeps(spins, lat.neighbors, couplings[lat.neighbor_edge], beta,
            n_sweeps, seed)
