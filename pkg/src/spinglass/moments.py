"""Windowed replica-overlap moments computed exactly from Gibbs tables.

Under a product measure G x G, E[q_12] over a window with edge-product
columns U reduces to single-measure edge correlations: E[q_12] =
(1/m) sum_e (p . u_e)^2, and similarly for higher moments.  The batched
variants process many disorder draws at once via matrix products.
"""

from __future__ import annotations

import numpy as np

from .gibbs import edge_parity_columns
from .lattice import Lattice, Window, window_edges


def window_parity_columns(lat: Lattice, win: Window | None) -> np.ndarray:
    """(2^V, m) edge products over the window's interior edges
    (full lattice when win is None)."""
    if win is None:
        edges = lat.edges
    else:
        interior, _ = window_edges(lat, win)
        edges = lat.edges[interior]
    return edge_parity_columns(edges, lat.n_vertices)


def probs_from_log_weights(logw: np.ndarray) -> np.ndarray:
    """Column-normalized probabilities from (n_conf, B) log weights."""
    m = logw.max(axis=0, keepdims=True)
    w = np.exp(logw - m)
    return w / w.sum(axis=0, keepdims=True)


def pair_moments_batch(p: np.ndarray, u_w: np.ndarray,
                       orders=(1, 2)) -> dict[int, np.ndarray]:
    """E[q_12^k] per probability column for k in ``orders`` (k <= 2)."""
    if p.ndim == 1:
        p = p[:, None]
    m = u_w.shape[1]
    out: dict[int, np.ndarray] = {}
    if 1 in orders:
        c = p.T @ u_w                      # (B, m) edge correlations
        out[1] = np.mean(c ** 2, axis=1)
    if 2 in orders:
        # pair correlations E[u_e u_f]; diagonal terms are exactly 1
        total = np.full(p.shape[1], float(m))
        for e in range(m):
            cols = u_w[:, e + 1:] * u_w[:, e:e + 1]
            if cols.shape[1]:
                d = p.T @ cols             # (B, m-e-1)
                total += 2.0 * np.sum(d ** 2, axis=1)
        out[2] = total / m ** 2
    unknown = set(orders) - {1, 2}
    if unknown:
        raise ValueError(f"batched path supports orders 1 and 2, got {unknown}")
    return out


def config_pair_overlaps(u_w: np.ndarray) -> np.ndarray:
    """(n_conf, n_conf) matrix of window overlaps between config pairs."""
    return (u_w @ u_w.T) / u_w.shape[1]


def overlap_moment_set(p: np.ndarray, u_w: np.ndarray,
                       kmax: int = 4, triples: bool = True) -> dict[str, float]:
    """Exact overlap moments under the product measure of a single table.

    Returns E[q12^k] for k=1..kmax plus the 3-replica moments
    E[q12 q13] and E[q12 q13 q23].  Builds the full config-pair overlap
    matrix; intended for enumerable volumes only.
    """
    q = config_pair_overlaps(u_w)
    out: dict[str, float] = {}
    qk = q.copy()
    for k in range(1, kmax + 1):
        out[f"q12^{k}"] = float(p @ qk @ p)
        if k < kmax:
            qk = qk * q
    if triples:
        h = q @ p
        out["q12*q13"] = float(p @ (h ** 2))
        m = (q * p[None, :]) @ q
        out["q12*q13*q23"] = float(p @ (m * q) @ p)
    return out


def overlap_pmf(p: np.ndarray, u_w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Exact pmf of q_12 under the product measure.

    The window overlap over m edges takes values (m - 2j)/m; returns
    (values, probabilities) on that grid."""
    m = u_w.shape[1]
    q = config_pair_overlaps(u_w)
    j = np.rint((1.0 - q) * m / 2.0).astype(np.int64)
    pmf = np.zeros(m + 1)
    joint = np.outer(p, p)
    np.add.at(pmf, j.ravel(), joint.ravel())
    values = (m - 2.0 * np.arange(m + 1)) / m
    return values, pmf


def pmf_ks_distance(pmf_a: np.ndarray, pmf_b: np.ndarray) -> float:
    """KS distance between two pmfs on the same (descending) value grid."""
    return float(np.max(np.abs(np.cumsum(pmf_a) - np.cumsum(pmf_b))))
