import numpy as np
import pytest

from spinglass.disorder import sk_edges
from spinglass.gibbs import edge_parity_columns
from spinglass.lattice import Window
from spinglass.metastate import (j_independence_test, metastate_sweep,
                                 sk_equivalence_test, subset_parity_columns)
from spinglass.moments import probs_from_log_weights
from spinglass.parallel import task_rng

GAUSS = {"kind": "gaussian", "scale": 1.0}


def test_sweep_beta_zero_exact():
    rep = metastate_sweep(GAUSS, 0.0, [[6], [8], [10]], Window(0, (3,)),
                          20, seed=0)
    assert rep.verdict == "exact-pass"
    for row in rep.extra["per_volume"]:
        assert row["q12^1"] == pytest.approx(0.0, abs=1e-14)


def test_sweep_gaps_shrink():
    rep = metastate_sweep(GAUSS, 0.9, [[5], [8], [12]], Window(0, (3,)),
                          1500, seed=1)
    gaps = [g["gap"] for g in rep.extra["gaps"]]
    assert gaps[-1] < gaps[0]
    assert rep.verdict in ("statistical-pass", "exact-pass")


def test_j_independence_insufficient_replication():
    rep = j_independence_test(GAUSS, 0.5, [[6]], Window(0, (3,)),
                              n_j=10, n_replicas=2, seed=2)
    assert "insufficient-replication" in rep.flags
    assert rep.verdict == "fail"


def test_j_independence_beta_zero_null_band():
    # at beta = 0 the overlap law is J-free: the variance ratio sits in the
    # chi-square null band
    rep = j_independence_test(GAUSS, 0.0, [[6]], Window(0, (3,)),
                              n_j=80, n_replicas=40, seed=3)
    row = rep.extra["per_volume"][0]
    assert row["vr_in_null_band"]
    assert rep.verdict == "statistical-pass"


def test_j_independence_detects_dispersion_at_positive_beta():
    rep = j_independence_test(GAUSS, 1.2, [[6]], Window(0, (3,)),
                              n_j=80, n_replicas=40, seed=4)
    row = rep.extra["per_volume"][0]
    assert row["variance_ratio"] > row["null_band_1pct"][1]


def test_subset_parity_columns():
    cols = subset_parity_columns([frozenset(), frozenset({0, 1})], 2)
    assert cols[:, 0].tolist() == [1.0, 1.0, 1.0, 1.0]
    # spin product s_0 s_1 over configs 00, 01, 10, 11
    assert cols[:, 1].tolist() == [1.0, -1.0, -1.0, 1.0]


def test_sk_trivial_monomial():
    rep = sk_equivalence_test([4, 6], 1.0, {}, 10, seed=5)
    assert rep.verdict == "exact-pass"


def test_sk_odd_monomial_symmetric_zero():
    rep = sk_equivalence_test([4, 6], 1.0, {(1, 2): 1}, 60, seed=6)
    assert "symmetric-zero" in rep.flags
    assert rep.verdict == "exact-pass"
    for row in rep.extra["per_n"]:
        assert abs(row["delta"]) <= 1e-12


def test_sk_direct_side_matches_brute_force():
    # replicate the internal disorder draw, then check the direct overlap
    # expectation against a full two-replica enumeration for N = 4
    n, beta, seed = 4, 1.0, 7
    rep = sk_equivalence_test([n], beta, {(1, 2): 2}, 1, seed=seed)
    edges = sk_edges(n)
    rng = task_rng(seed, 23, 0)
    j = rng.standard_normal((edges.shape[0], 1))
    u = edge_parity_columns(edges, n)
    p = probs_from_log_weights(u @ ((beta / np.sqrt(n)) * j))[:, 0]
    # spin overlap between config pairs
    idx = np.arange(16)
    bits = ((idx[:, None] >> np.arange(n)) & 1)
    spins = 1.0 - 2.0 * bits
    q = (spins @ spins.T) / n
    direct = float(p @ (q ** 2) @ p)
    assert rep.extra["per_n"][0]["direct"] == pytest.approx(direct, abs=1e-12)
    distinct = float(p @ (spins[:, 0] * spins[:, 1])) ** 2
    assert rep.extra["per_n"][0]["distinct"] == pytest.approx(distinct,
                                                              abs=1e-12)


def test_sk_decay_slope():
    rep = sk_equivalence_test([4, 8, 12], 1.0, {(1, 2): 2}, 600, seed=8)
    assert -1.5 <= rep.extra["slope"] <= -0.6
    assert rep.verdict == "statistical-pass"
