"""Finite-volume metastate approximants: volume sweeps at fixed window,
coupling-independence of the overlap law, and the SK two-construction
equivalence with its O(1/N) combinatorial gap.
"""

from __future__ import annotations

import itertools
import math
from collections import Counter

import numpy as np

from .disorder import distribution_from_spec, sk_edges
from .errors import EnumerationTooLargeError
from .gibbs import ENUMERATION_CAP, edge_parity_columns, enumerate_gibbs
from .lattice import Lattice, Window, build_lattice, window_edges
from .moments import pair_moments_batch, probs_from_log_weights
from .overlap import edge_overlap
from .parallel import run_tasks, task_rng
from .stability import EXACT_TOL, MomentStat, StabilityReport

_KIND_SWEEP = 21
_KIND_JIND = 22
_KIND_SK = 23


def _make_lattice(d, sides):
    return build_lattice(d, sides if isinstance(sides, (list, tuple))
                         else [sides] * d)


def _sweep_pair_moments(lats, win: Window, dist, beta: float, n_draws: int,
                        seed: int, threads: int, batch: int = 64):
    """Per-draw exact windowed overlap moments E[q12^k] (k = 1, 2) for each
    volume, with common couplings across volumes.

    Each draw assigns one coupling vector for the largest volume; smaller
    volumes use its prefix in the canonical edge order.  Sharing the
    couplings near the window makes consecutive-volume gaps paired
    statistics with far smaller variance than independent draws."""
    tables = []
    for lat in lats:
        if (1 << lat.n_vertices) > ENUMERATION_CAP:
            raise EnumerationTooLargeError(f"2^{lat.n_vertices} configurations")
        interior, _ = window_edges(lat, win)
        u_full = edge_parity_columns(lat.edges, lat.n_vertices)
        tables.append((lat.n_edges, u_full, u_full[:, interior]))
    m_max = max(t[0] for t in tables)
    n_batches = (n_draws + batch - 1) // batch

    def worker(b):
        rng = task_rng(seed, _KIND_SWEEP, b)
        nb = min(batch, n_draws - b * batch)
        j = dist.draw(rng, m_max * nb).reshape(m_max, nb)
        out = []
        for m, u_full, u_w in tables:
            p = probs_from_log_weights(u_full @ (beta * j[:m]))
            out.append(pair_moments_batch(p, u_w))
        return out

    results = run_tasks(worker, n_batches, threads)
    return [{k: np.concatenate([r[i][k] for r in results]) for k in (1, 2)}
            for i in range(len(lats))]


def metastate_sweep(dist, beta: float, sides_list, win: Window, n_draws: int,
                    seed: int, d: int = 1, threads: int = 1) -> StabilityReport:
    """Windowed overlap moments across a nested volume sequence, with a
    Cauchy-style convergence diagnostic on consecutive-volume gaps."""
    dist = distribution_from_spec(dist)
    lats = [_make_lattice(d, sides) for sides in sides_list]
    series = _sweep_pair_moments(lats, win, dist, beta, n_draws, seed, threads)
    per_volume = []
    for lat, res in zip(lats, series):
        row = {"sides": list(lat.sides)}
        for k in (1, 2):
            n = len(res[k])
            row[f"q12^{k}"] = float(np.mean(res[k]))
            row[f"se_q12^{k}"] = float(np.std(res[k], ddof=1) / math.sqrt(n)) \
                if n > 1 else 0.0
        per_volume.append(row)

    moments = []
    gaps = []
    for (a, ra), (b, rb) in zip(zip(per_volume, series),
                                zip(per_volume[1:], series[1:])):
        name = f"L={'x'.join(map(str, a['sides']))}->" \
               f"{'x'.join(map(str, b['sides']))}"
        for k in (1, 2):
            diff = rb[k] - ra[k]
            se = float(np.std(diff, ddof=1) / math.sqrt(len(diff))) \
                if len(diff) > 1 else 0.0
            moments.append(MomentStat(name=f"{name}:q12^{k}",
                                      value_a=a[f"q12^{k}"],
                                      value_b=b[f"q12^{k}"], stderr=se))
            if k == 1:
                gaps.append({"name": name,
                             "gap": abs(float(np.mean(diff))), "se": se})

    extra = {"per_volume": per_volume, "gaps": gaps}
    if len(gaps) >= 2:
        first, last = gaps[0], gaps[-1]
        se = math.hypot(first["se"], last["se"])
        extra["gap_shrinking"] = bool(first["gap"] - last["gap"] > 2.0 * se)
    report = StabilityReport(
        test="metastate-sweep",
        params={"beta": beta, "window": win.spec(), "n_draws": n_draws,
                "dist": dist.spec(), "d": d,
                "sides_list": [r["sides"] for r in per_volume]},
        moments=moments, extra=extra)
    if not moments:
        report.verdict = "statistical-pass"  # single volume: nothing to compare
    elif all(abs(m.diff) <= EXACT_TOL for m in moments):
        report.verdict = "exact-pass"
    elif extra.get("gap_shrinking", True):
        report.verdict = "statistical-pass"
    else:
        report.verdict = "fail"
    return report


def j_independence_test(dist, beta: float, sides_list, win: Window,
                        n_j: int, n_replicas: int, seed: int, d: int = 1,
                        threads: int = 1,
                        n_bootstrap: int = 200) -> StabilityReport:
    """Between-disorder dispersion of the windowed overlap law versus the
    within-disorder sampling error, per volume, with the trend across
    volumes.  Replicas are drawn from the exact Gibbs table and paired."""
    from scipy import stats

    dist = distribution_from_spec(dist)
    n_pairs = n_replicas // 2
    flags = []
    if n_pairs < 2:
        flags.append("insufficient-replication")
    per_volume = []
    for vol_idx, sides in enumerate(sides_list):
        lat = _make_lattice(d, sides)
        interior, _ = window_edges(lat, win)
        window_edge_list = lat.edges[interior]

        def worker(i, lat=lat, window_edge_list=window_edge_list):
            rng = task_rng(seed, _KIND_JIND, i + vol_idx * n_j)
            j = dist.draw(rng, lat.n_edges)
            table = enumerate_gibbs(lat.edges, j, lat.n_vertices, beta,
                                    keep_bond_sum=False)
            idx = table.sample_indices(rng, n_replicas)
            from .gibbs import spins_for_indices
            spins = spins_for_indices(idx, lat.n_vertices)
            qs = [edge_overlap(spins[2 * k], spins[2 * k + 1], window_edge_list)
                  for k in range(n_pairs)]
            qs = np.asarray(qs)
            within = float(np.var(qs, ddof=1) / n_pairs) if n_pairs > 1 else float("nan")
            return float(np.mean(qs)), within

        rows = run_tasks(worker, n_j, threads)
        means = np.array([r[0] for r in rows])
        within = np.array([r[1] for r in rows])
        have_within = bool(np.any(np.isfinite(within)))
        between = float(np.var(means, ddof=1))
        mean_within = float(np.nanmean(within)) if have_within else float("nan")
        tau2 = between - mean_within if have_within else between
        vr = between / mean_within if mean_within > 0 else float("inf")
        boot_rng = task_rng(seed, _KIND_JIND, 10_000 + vol_idx)
        boot = np.empty(n_bootstrap)
        for b in range(n_bootstrap):
            pick = boot_rng.integers(0, n_j, size=n_j)
            boot[b] = np.var(means[pick], ddof=1)
            if have_within:
                boot[b] -= np.nanmean(within[pick])
        df = n_j - 1
        band = (stats.chi2.ppf(0.005, df) / df, stats.chi2.ppf(0.995, df) / df)
        per_volume.append({
            "sides": list(lat.sides), "between": between,
            "mean_within": mean_within, "tau2": tau2,
            "tau2_se": float(np.std(boot, ddof=1)),
            "variance_ratio": vr, "null_band_1pct": list(band),
            "vr_in_null_band": bool(band[0] <= vr <= band[1]),
        })

    moments = [MomentStat(name=f"L={'x'.join(map(str, r['sides']))}:tau2",
                          value_a=0.0, value_b=r["tau2"],
                          stderr=r["tau2_se"]) for r in per_volume]
    extra = {"per_volume": per_volume}
    if len(per_volume) >= 2:
        a, b = per_volume[0], per_volume[-1]
        se = math.hypot(a["tau2_se"], b["tau2_se"])
        extra["dispersion_shrinking"] = bool(a["tau2"] - b["tau2"] > 2.0 * se)
    report = StabilityReport(
        test="j-independence",
        params={"beta": beta, "window": win.spec(), "n_j": n_j,
                "n_replicas": n_replicas, "dist": dist.spec(), "d": d,
                "sides_list": [r["sides"] for r in per_volume]},
        moments=moments, flags=flags, extra=extra)
    if "insufficient-replication" in flags:
        report.verdict = "fail"
    elif len(per_volume) >= 2:
        report.verdict = ("statistical-pass"
                          if extra["dispersion_shrinking"] else "fail")
    else:
        report.verdict = ("statistical-pass"
                          if per_volume[0]["vr_in_null_band"] else "fail")
    return report


# ---------------------------------------------------------------------------
# SK two-construction equivalence
# ---------------------------------------------------------------------------

def _monomial_layout(monomial: dict, n_spins: int):
    """Slot layout for the tuple expansion of prod q_ij^{n_ij}.

    Returns (slot_pairs, degrees): slot t belongs to replica pair
    slot_pairs[t]; degrees[i] is replica i's total degree."""
    pairs = sorted(monomial)
    slot_pairs = []
    degrees = Counter()
    for (i, j) in pairs:
        if not 1 <= i < j:
            raise ValueError(f"monomial pair {(i, j)} must satisfy 1 <= i < j")
        n = int(monomial[(i, j)])
        slot_pairs.extend([(i, j)] * n)
        degrees[i] += n
        degrees[j] += n
    t = len(slot_pairs)
    if t > n_spins:
        raise ValueError("monomial degree exceeds the number of spins")
    return slot_pairs, degrees


def _reduced_subsets_for_tuple(slot_pairs, tup, replicas):
    """Per-replica vertex subsets after mod-2 reduction."""
    subsets = {}
    for i in replicas:
        acc = set()
        for t, (a, b) in enumerate(slot_pairs):
            if i in (a, b):
                acc ^= {tup[t]}
        subsets[i] = frozenset(acc)
    return subsets


def subset_parity_columns(subsets, n_vertices: int) -> np.ndarray:
    """(2^V, K) matrix of spin products over vertex subsets."""
    n_conf = 1 << n_vertices
    idx = np.arange(n_conf, dtype=np.uint64)
    cols = np.empty((n_conf, len(subsets)), dtype=np.float64)
    for k, sub in enumerate(subsets):
        parity = np.zeros(n_conf, dtype=np.uint64)
        for x in sub:
            parity ^= (idx >> np.uint64(x)) & np.uint64(1)
        cols[:, k] = 1.0 - 2.0 * parity.astype(np.float64)
    return cols


def sk_equivalence_test(n_list, beta: float, monomial: dict, n_draws: int,
                        seed: int, threads: int = 1, batch: int = 50,
                        scale: float = 1.0) -> StabilityReport:
    """Gap between E[F(spin overlaps)] and the distinct-vertex correlation
    product, per system size N, with the fitted log-log decay slope.

    F is a monomial prod q_ij^{n_ij}; "value_a" is the distinct-vertex
    product (vertices 0..T-1 assigned in pair order), "value_b" the direct
    overlap expectation, both disorder-averaged over the same gaussian
    draws."""
    if any(n > 20 for n in n_list):
        raise EnumerationTooLargeError("SK equivalence capped at N = 20")
    monomial = {tuple(k): int(v) for k, v in monomial.items() if int(v) != 0}
    if not monomial:
        # empty product: both sides are identically 1
        moments = [MomentStat(name=f"N={n}:F", value_a=1.0, value_b=1.0)
                   for n in n_list]
        return StabilityReport(test="sk-equivalence",
                               params={"beta": beta, "monomial": {},
                                       "n_draws": n_draws,
                                       "n_list": list(n_list)},
                               moments=moments, verdict="exact-pass",
                               extra={"slope": 0.0, "trivial": True})

    slot_pairs, degrees = _monomial_layout(monomial, min(n_list))
    replicas = sorted(degrees)
    symmetric_zero = any(deg % 2 for deg in degrees.values())
    t_total = len(slot_pairs)

    per_n = []
    moments = []
    for n_idx, n_spins in enumerate(n_list):
        edges = sk_edges(n_spins)
        # group tuples by their per-replica reduced subsets
        groups = Counter()
        all_subsets = set()
        for tup in itertools.product(range(n_spins), repeat=t_total):
            subsets = _reduced_subsets_for_tuple(slot_pairs, tup, replicas)
            key = tuple(subsets[i] for i in replicas)
            groups[key] += 1
            all_subsets.update(key)
        fixed_tup = tuple(range(t_total))
        fixed_subsets = _reduced_subsets_for_tuple(slot_pairs, fixed_tup,
                                                   replicas)
        all_subsets.update(fixed_subsets.values())
        subset_list = sorted(all_subsets, key=sorted)
        subset_idx = {s: k for k, s in enumerate(subset_list)}
        u_sub = subset_parity_columns(subset_list, n_spins)

        n_batches = (n_draws + batch - 1) // batch
        eff_scale = beta / math.sqrt(n_spins)

        def worker(b, n_spins=n_spins, edges=edges, u_sub=u_sub,
                   eff_scale=eff_scale, groups=groups,
                   subset_idx=subset_idx, fixed_subsets=fixed_subsets,
                   n_idx=n_idx):
            rng = task_rng(seed, _KIND_SK, b + 10_000 * n_idx)
            nb = min(batch, n_draws - b * batch)
            j = scale * rng.standard_normal((edges.shape[0], nb))
            u_edges = edge_parity_columns(edges, n_spins)
            p = probs_from_log_weights(u_edges @ (eff_scale * j))
            corr = p.T @ u_sub                        # (nb, K)
            direct = np.zeros(nb)
            for key, count in groups.items():
                term = np.ones(nb)
                for sub in key:
                    if sub:
                        term = term * corr[:, subset_idx[sub]]
                direct += count * term
            direct /= float(n_spins) ** t_total
            distinct = np.ones(nb)
            for i in replicas:
                sub = fixed_subsets[i]
                if sub:
                    distinct = distinct * corr[:, subset_idx[sub]]
            return direct, distinct

        results = run_tasks(worker, n_batches, threads)
        direct = np.concatenate([r[0] for r in results])
        distinct = np.concatenate([r[1] for r in results])
        delta = direct - distinct
        se = float(np.std(delta, ddof=1) / math.sqrt(len(delta))) \
            if len(delta) > 1 else 0.0
        per_n.append({"N": int(n_spins), "delta": float(np.mean(delta)),
                      "se": se, "direct": float(np.mean(direct)),
                      "distinct": float(np.mean(distinct))})
        moments.append(MomentStat(name=f"N={n_spins}:F",
                                  value_a=float(np.mean(distinct)),
                                  value_b=float(np.mean(direct)), stderr=se))

    flags = []
    extra = {"per_n": per_n, "monomial": {f"{i},{j}": v
                                          for (i, j), v in monomial.items()}}
    if symmetric_zero:
        flags.append("symmetric-zero")
        verdict = "exact-pass" if all(abs(r["delta"]) <= EXACT_TOL
                                      for r in per_n) else "fail"
    elif len(per_n) < 2:
        flags.append("single-size")
        extra["slope"] = None
        verdict = "statistical-pass"
    else:
        log_n = np.log([r["N"] for r in per_n])
        deltas = np.array([abs(r["delta"]) for r in per_n])
        if np.any(deltas <= 0):
            verdict = "fail"
            extra["slope"] = float("nan")
        else:
            slope, intercept = np.polyfit(log_n, np.log(deltas), 1)
            # delta-method error on each log delta, propagated through the fit
            sigma = np.array([r["se"] / abs(r["delta"]) for r in per_n])
            x = log_n - log_n.mean()
            slope_se = float(math.sqrt(np.sum((x * sigma) ** 2) /
                                       np.sum(x ** 2) ** 2))
            extra["slope"] = float(slope)
            extra["slope_se"] = slope_se
            extra["intercept"] = float(intercept)
            verdict = "statistical-pass" if -1.5 <= slope <= -0.6 else "fail"
    report = StabilityReport(
        test="sk-equivalence",
        params={"beta": beta, "n_draws": n_draws, "n_list": list(n_list),
                "monomial": {f"{i},{j}": v for (i, j), v in monomial.items()}},
        moments=moments, flags=flags, extra=extra)
    report.verdict = verdict
    return report
