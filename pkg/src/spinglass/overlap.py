"""Edge and spin overlaps, overlap matrices, weighted moment estimators."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import EmptyWindowError, GeometryMismatchError
from .gibbs import ReplicaEnsemble
from .lattice import Lattice, Window, window_edges

TUPLE_CAP = 10 ** 6


def edge_overlap(sigma: np.ndarray, sigma_p: np.ndarray,
                 edge_list: np.ndarray) -> float:
    """(1/|W*|) sum over window edges of s_x s_y s'_x s'_y."""
    if len(edge_list) == 0:
        raise EmptyWindowError("edge overlap needs a nonempty edge set")
    u, v = edge_list[:, 0], edge_list[:, 1]
    prod = (sigma[u] * sigma[v] * sigma_p[u] * sigma_p[v]).astype(np.float64)
    return float(prod.mean())


def spin_overlap(sigma: np.ndarray, sigma_p: np.ndarray) -> float:
    """(1/N) sum_x s_x s'_x."""
    sigma = np.asarray(sigma)
    sigma_p = np.asarray(sigma_p)
    if sigma.shape != sigma_p.shape:
        raise GeometryMismatchError("spin overlap needs equal-length configs")
    return float(np.mean((sigma * sigma_p).astype(np.float64)))


@dataclass
class OverlapMatrix:
    """s x s symmetric overlap matrix with unit diagonal."""

    values: np.ndarray
    kind: str = "edge"          # edge | spin
    window: dict | None = None
    source: str | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)

    @property
    def s(self) -> int:
        return self.values.shape[0]

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.values)[0])

    def validate(self, psd_tol: float = 1e-8) -> None:
        a = self.values
        assert np.allclose(a, a.T), "matrix must be symmetric"
        assert np.allclose(np.diag(a), 1.0), "diagonal must be 1"
        assert np.all(a <= 1 + 1e-12) and np.all(a >= -1 - 1e-12)
        evals = np.linalg.eigvalsh(a)
        assert evals[0] >= -psd_tol * max(evals[-1], 1e-300), \
            f"matrix not PSD: min eigenvalue {evals[0]}"

    def to_csv(self, path) -> None:
        np.savetxt(path, self.values, delimiter=",")

    @classmethod
    def from_csv(cls, path, **kw) -> "OverlapMatrix":
        return cls(values=np.atleast_2d(np.loadtxt(path, delimiter=",")), **kw)


def replica_edge_products(spins: np.ndarray, edge_list: np.ndarray) -> np.ndarray:
    """(s, m) matrix of s_x s_y per replica over the given edges."""
    return (spins[:, edge_list[:, 0]] * spins[:, edge_list[:, 1]]).astype(np.float64)


def overlap_matrix(ens: ReplicaEnsemble, lat_or_n,
                   win: Window | None = None) -> OverlapMatrix:
    """Pairwise overlaps of an ensemble: edge overlap on a lattice window
    (full lattice when win is None) or spin overlap for an SK system."""
    if ens.n_replicas < 2:
        raise GeometryMismatchError("need at least 2 replicas")
    if isinstance(lat_or_n, Lattice):
        lat = lat_or_n
        if win is None:
            edge_list = lat.edges
            window_spec = None
        else:
            interior, _ = window_edges(lat, win)
            if len(interior) == 0:
                raise EmptyWindowError("window has no interior edges")
            edge_list = lat.edges[interior]
            window_spec = win.spec()
        b = replica_edge_products(ens.spins, edge_list)
        q = (b @ b.T) / b.shape[1]
        kind = "edge"
    else:
        x = ens.spins.astype(np.float64)
        q = (x @ x.T) / x.shape[1]
        kind = "spin"
        window_spec = None
    np.fill_diagonal(q, 1.0)
    return OverlapMatrix(values=q, kind=kind, window=window_spec,
                         source=ens.field_id)


def weighted_pair_moment(q: np.ndarray, weights: np.ndarray,
                         power: int = 1) -> float:
    """E[q_12^power] over distinct replica pairs, weighted by w_i w_j."""
    w = np.asarray(weights, dtype=np.float64)
    qp = q ** power
    num = w @ qp @ w - np.sum(w ** 2 * np.diag(qp))
    den = np.sum(w) ** 2 - np.sum(w ** 2)
    return float(num / den)


def weighted_tuple_moment(q: np.ndarray, weights: np.ndarray,
                          monomial: dict, rng: np.random.Generator | None = None,
                          tuple_cap: int = TUPLE_CAP) -> float:
    """E[prod q_{ij}^{n_ij}] over distinct replica tuples.

    ``monomial`` maps replica-index pairs (1-based, i < j) to powers.
    Exhaustive enumeration of ordered distinct tuples, falling back to
    ``tuple_cap`` random tuples when the count is too large.
    """
    if not monomial:
        return 1.0
    s_needed = max(max(p) for p in monomial)
    n = q.shape[0]
    if n < s_needed:
        raise GeometryMismatchError(
            f"monomial needs {s_needed} replicas, matrix has {n}")
    w = np.asarray(weights, dtype=np.float64)

    def value(tup):
        out = 1.0
        for (i, j), p in monomial.items():
            out *= q[tup[i - 1], tup[j - 1]] ** p
        return out

    count = 1
    for k in range(s_needed):
        count *= (n - k)
    if count <= tuple_cap:
        num = den = 0.0
        for tup in itertools.permutations(range(n), s_needed):
            pw = float(np.prod(w[list(tup)]))
            num += pw * value(tup)
            den += pw
        return num / den
    if rng is None:
        rng = np.random.default_rng(0)
    num = den = 0.0
    drawn = 0
    while drawn < tuple_cap:
        tup = tuple(rng.choice(n, size=s_needed, replace=False))
        pw = float(np.prod(w[list(tup)]))
        num += pw * value(tup)
        den += pw
        drawn += 1
    return num / den
