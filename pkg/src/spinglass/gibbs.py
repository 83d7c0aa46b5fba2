"""Hamiltonians, exact Gibbs enumeration, replica sampling, window free energies.

Spin configurations of a V-vertex system are enumerated by the integers
0..2^V-1, bit x giving the spin at vertex x via s_x = 1 - 2*bit.  Exact
tables are capped at 2^24 configurations.  Throughout, the "bond sum"
S(sigma) = sum_e w_e s_u s_v is the negated Hamiltonian when w = J.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from . import mc
from .disorder import CouplingField, ea_geometry_tag, sk_edges
from .errors import (EnumerationTooLargeError, GeometryMismatchError,
                     BoundRequiresGaussianError, McmcNotConvergedError)
from .lattice import Lattice, Window, window_edges, window_vertices

ENUMERATION_CAP = 2 ** 24
_CHUNK = 2 ** 20


def ea_energy(lat: Lattice, field: CouplingField, sigma: np.ndarray) -> float:
    """H = -sum_{edges} J_xy s_x s_y on the periodic lattice."""
    if field.geometry != ea_geometry_tag(lat):
        raise GeometryMismatchError(
            f"field geometry {field.geometry} does not match lattice")
    sigma = np.asarray(sigma)
    if sigma.shape[-1] != lat.n_vertices:
        raise GeometryMismatchError("spin configuration length mismatch")
    prod = sigma[..., lat.edges[:, 0]] * sigma[..., lat.edges[:, 1]]
    return -float(np.dot(prod.astype(np.float64), field.values)) \
        if prod.ndim == 1 else -(prod.astype(np.float64) @ field.values)


def sk_energy(field: CouplingField, sigma: np.ndarray, n_spins: int) -> float:
    """H = -(1/sqrt(N)) sum_{x<y} J_xy s_x s_y on the complete graph."""
    sigma = np.asarray(sigma)
    if sigma.shape[-1] != n_spins:
        raise GeometryMismatchError("spin configuration length mismatch")
    if field.n_edges != n_spins * (n_spins - 1) // 2:
        raise GeometryMismatchError("SK field has wrong number of couplings")
    edges = sk_edges(n_spins)
    prod = (sigma[..., edges[:, 0]] * sigma[..., edges[:, 1]]).astype(np.float64)
    return -float(prod @ field.values) / math.sqrt(n_spins)


def spins_for_indices(indices, n_vertices: int) -> np.ndarray:
    """Configuration indices -> (..., n_vertices) int8 spins in {-1,+1}."""
    idx = np.asarray(indices, dtype=np.uint64)[..., None]
    bits = (idx >> np.arange(n_vertices, dtype=np.uint64)) & np.uint64(1)
    return (1 - 2 * bits.astype(np.int8)).astype(np.int8)


def edge_parity_columns(edges: np.ndarray, n_vertices: int,
                        dtype=np.float64) -> np.ndarray:
    """(2^V, n_edges) matrix of edge spin products s_u s_v over all configs."""
    n_conf = 1 << n_vertices
    if n_conf > ENUMERATION_CAP:
        raise EnumerationTooLargeError(f"2^{n_vertices} configurations")
    idx = np.arange(n_conf, dtype=np.uint64)[:, None]
    u = edges[:, 0].astype(np.uint64)
    v = edges[:, 1].astype(np.uint64)
    parity = ((idx >> u) ^ (idx >> v)) & np.uint64(1)
    return (1 - 2 * parity.astype(np.int8)).astype(dtype)


def bond_sums(edges: np.ndarray, weights: np.ndarray, n_vertices: int,
              out: np.ndarray | None = None) -> np.ndarray:
    """S(sigma) = sum_e w_e s_u s_v for every configuration, chunked."""
    n_conf = 1 << n_vertices
    if n_conf > ENUMERATION_CAP:
        raise EnumerationTooLargeError(f"2^{n_vertices} configurations")
    weights = np.asarray(weights, dtype=np.float64)
    res = out if out is not None else np.empty(n_conf, dtype=np.float64)
    u = edges[:, 0].astype(np.uint64)
    v = edges[:, 1].astype(np.uint64)
    for start in range(0, n_conf, _CHUNK):
        stop = min(start + _CHUNK, n_conf)
        idx = np.arange(start, stop, dtype=np.uint64)[:, None]
        parity = ((idx >> u) ^ (idx >> v)) & np.uint64(1)
        signs = 1.0 - 2.0 * parity.astype(np.float64)
        res[start:stop] = signs @ weights
    return res


def logsumexp_stream(chunks) -> float:
    """Streaming log-sum-exp over an iterable of 1-d arrays."""
    running_max = -np.inf
    running_sum = 0.0
    for chunk in chunks:
        m = float(np.max(chunk))
        if m > running_max:
            running_sum *= math.exp(running_max - m) if running_sum else 0.0
            running_max = m
        running_sum += float(np.sum(np.exp(chunk - running_max)))
    return running_max + math.log(running_sum)


@dataclass
class GibbsTable:
    """Exact Gibbs measure over all 2^V configurations."""

    n_vertices: int
    beta: float
    log_weights: np.ndarray  # unnormalized log probabilities
    probs: np.ndarray
    log_z: float
    bond_sum: np.ndarray | None = None  # S(sigma); <H> = -probs . bond_sum

    def sample_indices(self, rng: np.random.Generator, s: int) -> np.ndarray:
        cdf = np.cumsum(self.probs)
        cdf[-1] = 1.0
        return np.searchsorted(cdf, rng.random(s), side="right")

    def mean_energy(self) -> float:
        return -float(self.probs @ self.bond_sum)


def enumerate_gibbs(edges: np.ndarray, eff_weights: np.ndarray,
                    n_vertices: int, beta: float = 1.0,
                    keep_bond_sum: bool = True) -> GibbsTable:
    """Gibbs table for log weight = beta * S with S from ``eff_weights``."""
    s = bond_sums(edges, eff_weights, n_vertices)
    logw = beta * s
    m = float(np.max(logw))
    w = np.exp(logw - m)
    z = float(np.sum(w))
    return GibbsTable(n_vertices=n_vertices, beta=beta, log_weights=logw,
                      probs=w / z, log_z=m + math.log(z),
                      bond_sum=s if keep_bond_sum else None)


def exact_gibbs(field: CouplingField, beta: float, lat_or_n) -> GibbsTable:
    """Exact Gibbs measure: probabilities proportional to exp(-beta H)."""
    if isinstance(lat_or_n, Lattice):
        lat = lat_or_n
        if field.geometry != ea_geometry_tag(lat):
            raise GeometryMismatchError("field/lattice mismatch")
        return enumerate_gibbs(lat.edges, field.values, lat.n_vertices, beta)
    n_spins = int(lat_or_n)
    if field.n_edges != n_spins * (n_spins - 1) // 2:
        raise GeometryMismatchError("SK field has wrong number of couplings")
    return enumerate_gibbs(sk_edges(n_spins),
                           field.values / math.sqrt(n_spins), n_spins, beta)


def effective_sample_size(weights: np.ndarray) -> float:
    w = np.asarray(weights, dtype=np.float64)
    return float(np.sum(w) ** 2 / np.sum(w ** 2))


@dataclass
class ReplicaEnsemble:
    """Independent replicas from one Gibbs measure, with importance weights."""

    spins: np.ndarray            # (s, n_vertices) int8 in {-1,+1}
    beta: float
    sampler: str                 # exact | metropolis | parallel-tempering
    field_id: str
    weights: np.ndarray = None   # per-replica nonnegative weights, default 1
    diagnostics: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        self.spins = np.asarray(self.spins, dtype=np.int8)
        if self.weights is None:
            self.weights = np.ones(self.spins.shape[0])
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if not np.all(np.isfinite(self.weights)) or not np.any(self.weights > 0):
            raise GeometryMismatchError("weights must be finite, not all zero")

    @property
    def n_replicas(self) -> int:
        return self.spins.shape[0]

    @property
    def ess(self) -> float:
        return effective_sample_size(self.weights)


def save_replica_ensemble(path, ens: ReplicaEnsemble) -> None:
    """JSON header line + packed little-endian bitmatrix, rows 64-bit aligned.

    Bit = 1 encodes spin -1 (bit b -> spin 1-2b, matching the enumeration
    convention)."""
    s, v = ens.spins.shape
    header = {
        "beta": ens.beta, "s": s, "n_vertices": v, "sampler": ens.sampler,
        "diagnostics": ens.diagnostics, "field_id": ens.field_id,
        "weights": ens.weights.tolist(),
    }
    bits = (ens.spins < 0).astype(np.uint8)
    row_words = (v + 63) // 64
    padded = np.zeros((s, row_words * 64), dtype=np.uint8)
    padded[:, :v] = bits
    packed = np.packbits(padded, axis=1, bitorder="little")
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        fh.write(packed.tobytes())


def load_replica_ensemble(path) -> ReplicaEnsemble:
    blob = Path(path).read_bytes()
    nl = blob.index(b"\n")
    header = json.loads(blob[:nl])
    s, v = header["s"], header["n_vertices"]
    row_words = (v + 63) // 64
    packed = np.frombuffer(blob[nl + 1:], dtype=np.uint8)
    packed = packed.reshape(s, row_words * 8)
    bits = np.unpackbits(packed, axis=1, bitorder="little")[:, :v]
    spins = (1 - 2 * bits.astype(np.int8)).astype(np.int8)
    return ReplicaEnsemble(spins=spins, beta=header["beta"],
                           sampler=header["sampler"],
                           field_id=header["field_id"],
                           weights=np.array(header["weights"]),
                           diagnostics=header["diagnostics"])


def _field_id(field: CouplingField) -> str:
    return f"{field.geometry};seed={field.seed}"


def sample_replicas(field: CouplingField, beta: float, lat: Lattice, s: int,
                    sampler: dict | None, rng: np.random.Generator) -> ReplicaEnsemble:
    """Draw s independent replicas from the Gibbs measure at (J, beta).

    exact: inverse-CDF draws from the enumerated table (volume under cap).
    metropolis / parallel-tempering: one independent chain per replica, each
    burned in past 20 estimated autocorrelation times; never thinned from a
    single chain, so the replicas form a product measure.
    """
    if isinstance(sampler, str):
        sampler = {"method": sampler}
    sampler = dict(sampler or {"method": "exact"})
    method = sampler.pop("method", "exact")
    if method == "exact":
        table = exact_gibbs(field, beta, lat)
        idx = table.sample_indices(rng, s)
        spins = spins_for_indices(idx, lat.n_vertices)
        return ReplicaEnsemble(spins=spins, beta=beta, sampler="exact",
                               field_id=_field_id(field),
                               diagnostics={"log_z": table.log_z})
    if method == "metropolis":
        spins, diag = mc.metropolis_replicas(lat, field.values, beta, s, rng,
                                             **sampler)
        return ReplicaEnsemble(spins=spins, beta=beta, sampler="metropolis",
                               field_id=_field_id(field), diagnostics=diag)
    if method == "parallel-tempering":
        spins, diag = mc.parallel_tempering_replicas(lat, field.values, beta,
                                                     s, rng, **sampler)
        return ReplicaEnsemble(spins=spins, beta=beta,
                               sampler="parallel-tempering",
                               field_id=_field_id(field), diagnostics=diag)
    raise McmcNotConvergedError(f"unknown sampler method {method!r}")


@dataclass
class FreeEnergyReport:
    """Disorder-averaged window free energies and the boundary bound check."""

    beta: float
    beta_w: float
    n_draws: int
    f_lambda_w: float      # window free energy with the environment present
    f_lambda_w_se: float
    f_w: float             # stand-alone window free energy
    f_w_se: float
    diff: float
    diff_se: float
    bound: float           # (beta_w^2 scale^2 / 2) |bd W| / |W|
    lower_ok: bool
    upper_ok: bool
    flags: list = dc_field(default_factory=list)

    def to_dict(self) -> dict:
        return {k: (v if not isinstance(v, np.generic) else v.item())
                for k, v in self.__dict__.items()}


def window_free_energy(dist, beta: float, beta_w: float, lat: Lattice,
                       win: Window, n_draws: int,
                       rng: np.random.Generator) -> FreeEnergyReport:
    """Average f_{Lambda,W}(beta_w) and f_W(beta_w) over gaussian disorder.

    The window Hamiltonian (interior and boundary edges) runs at beta_w
    while the environment runs at beta; with beta_w = 0 the window then
    decouples and both free energies are exactly log 2 per site.  The
    Jensen bound 0 <= f_{Lambda,W} - f_W <= (beta_w^2 scale^2/2)|bdW|/|W|
    requires gaussian couplings.
    """
    from .disorder import distribution_from_spec, sample_couplings
    dist = distribution_from_spec(dist)
    if dist.kind != "gaussian":
        raise BoundRequiresGaussianError(f"got {dist.kind} couplings")
    interior, boundary = window_edges(lat, win)
    n_w = len(window_vertices(lat, win))
    outside = np.setdiff1d(np.arange(lat.n_edges),
                           np.concatenate([interior, boundary]))
    log2 = math.log(2.0)
    v = lat.n_vertices

    f_lw = np.empty(n_draws)
    f_w = np.empty(n_draws)
    for i in range(n_draws):
        j = sample_couplings(lat, dist, rng).values
        eff = np.zeros(lat.n_edges)
        eff[interior] = beta_w * j[interior]
        eff[boundary] = beta_w * j[boundary]
        eff[outside] = beta * j[outside]
        full = bond_sums(lat.edges, eff, v)
        eff_out = np.zeros(lat.n_edges)
        eff_out[outside] = beta * j[outside]
        out_sum = bond_sums(lat.edges, eff_out, v)
        log_num = logsumexp_stream([full])
        log_den = logsumexp_stream([out_sum]) - n_w * log2
        f_lw[i] = (log_num - log_den) / n_w

        eff_w = np.zeros(lat.n_edges)
        eff_w[interior] = beta_w * j[interior]
        w_sum = bond_sums(lat.edges, eff_w, v)
        f_w[i] = (logsumexp_stream([w_sum]) - (v - n_w) * log2) / n_w

    diff = f_lw - f_w
    diff_mean = float(np.mean(diff))
    diff_se = float(np.std(diff, ddof=1) / math.sqrt(n_draws)) if n_draws > 1 else 0.0
    bound = 0.5 * beta_w ** 2 * dist.scale ** 2 * len(boundary) / n_w
    report = FreeEnergyReport(
        beta=beta, beta_w=beta_w, n_draws=n_draws,
        f_lambda_w=float(np.mean(f_lw)),
        f_lambda_w_se=float(np.std(f_lw, ddof=1) / math.sqrt(n_draws)) if n_draws > 1 else 0.0,
        f_w=float(np.mean(f_w)),
        f_w_se=float(np.std(f_w, ddof=1) / math.sqrt(n_draws)) if n_draws > 1 else 0.0,
        diff=diff_mean, diff_se=diff_se, bound=bound,
        lower_ok=diff_mean >= -3 * diff_se - 1e-12,
        upper_ok=diff_mean <= bound + 3 * diff_se + 1e-12,
    )
    if len(boundary) == 0:
        report.flags.append("no-boundary")
    return report
