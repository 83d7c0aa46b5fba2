"""Finite-volume stability checks for replica-overlap laws.

Four tests: the exact coupling-perturbation covariance identity, the
local-stability tilt (discrepancy trend in volume), stochastic stability
of a discrete sampling measure under gaussian-field tilts, and the
gaussian beta-shift identity in law for a window.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .disorder import (CouplingField, DistributionSpec, Perturbation,
                       distribution_from_spec, perturb_couplings)
from .errors import (BoundRequiresGaussianError, EnumerationTooLargeError,
                     FieldCovarianceSingularError)
from .gibbs import ENUMERATION_CAP, edge_parity_columns, exact_gibbs
from .lattice import Lattice, Window, build_lattice, window_edges
from .moments import (overlap_moment_set, overlap_pmf, pair_moments_batch,
                      pmf_ks_distance, probs_from_log_weights)
from .parallel import run_tasks, task_rng
from .rost import SamplingAtoms

SCHEMA_VERSION = 1

_KIND_LOCAL = 11
_KIND_BETA_SHIFT = 12
_KIND_STOCH = 13

EXACT_TOL = 1e-10


@dataclass
class MomentStat:
    name: str
    value_a: float
    value_b: float
    stderr: float = 0.0

    @property
    def diff(self) -> float:
        return self.value_b - self.value_a

    def row(self) -> dict:
        return {"name": self.name, "value_a": self.value_a,
                "value_b": self.value_b, "diff": self.diff,
                "stderr": self.stderr}


@dataclass
class StabilityReport:
    test: str
    params: dict
    moments: list
    ks_stat: float | None = None
    ess: float | None = None
    verdict: str = "fail"
    flags: list = dc_field(default_factory=list)
    extra: dict = dc_field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION

    def max_abs_diff(self) -> float:
        return max((abs(m.diff) for m in self.moments), default=0.0)

    def to_dict(self) -> dict:
        return {"schema_version": self.schema_version, "test": self.test,
                "params": self.params, "verdict": self.verdict,
                "flags": self.flags, "ks_stat": self.ks_stat,
                "ess": self.ess, "extra": self.extra,
                "moments": [m.row() for m in self.moments]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1,
                          default=_jsonable)

    def csv_rows(self) -> list[dict]:
        return [{"test": self.test, **m.row()} for m in self.moments]


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"not JSON serializable: {type(x)}")


def decide_verdict(moments, exact_tol: float = EXACT_TOL,
                   n_sigma: float = 3.0) -> str:
    """exact-pass: every |diff| <= exact_tol.  statistical-pass: every
    |diff| within n_sigma stated errors.  Otherwise fail."""
    if all(abs(m.diff) <= exact_tol for m in moments):
        return "exact-pass"
    if all(abs(m.diff) <= n_sigma * m.stderr + exact_tol for m in moments):
        return "statistical-pass"
    return "fail"


def _dist_flags(dist: DistributionSpec) -> list[str]:
    if not dist.continuous:
        return ["assumption-violated: discrete couplings"]
    return []


# ---------------------------------------------------------------------------
# covariance identity (exact at finite volume)
# ---------------------------------------------------------------------------

def covariance_identity_check(lat: Lattice, field: CouplingField, beta: float,
                              win: Window, pert: Perturbation,
                              kmax: int = 4) -> StabilityReport:
    """Gibbs at J+Delta versus Gibbs at J tilted per replica by
    exp(beta * sum_{W*} Delta_xy s_x s_y): an exact identity, checked on
    windowed overlap moments for up to 3 replicas."""
    if (1 << lat.n_vertices) > ENUMERATION_CAP:
        raise EnumerationTooLargeError(f"2^{lat.n_vertices} configurations")
    interior, _ = window_edges(lat, pert.window)
    u_full = edge_parity_columns(lat.edges, lat.n_vertices)
    obs_interior, _ = window_edges(lat, win)
    u_w = u_full[:, obs_interior]

    lhs_table = exact_gibbs(perturb_couplings(lat, field, pert), beta, lat)
    rhs_table = exact_gibbs(field, beta, lat)
    tilt = u_full[:, interior] @ (beta * pert.deltas)
    logw = rhs_table.log_weights + tilt
    p_rhs = np.exp(logw - logw.max())
    p_rhs /= p_rhs.sum()

    m_lhs = overlap_moment_set(lhs_table.probs, u_w, kmax=kmax)
    m_rhs = overlap_moment_set(p_rhs, u_w, kmax=kmax)
    moments = [MomentStat(name=k, value_a=m_lhs[k], value_b=m_rhs[k])
               for k in m_lhs]
    ks = pmf_ks_distance(overlap_pmf(lhs_table.probs, u_w)[1],
                         overlap_pmf(p_rhs, u_w)[1])
    report = StabilityReport(
        test="covariance-identity",
        params={"beta": beta, "lattice": lat.spec(), "window": win.spec(),
                "perturbation_edges": int(len(pert.deltas))},
        moments=moments, ks_stat=ks,
        flags=_dist_flags(field.dist))
    report.verdict = decide_verdict(moments)
    return report


# ---------------------------------------------------------------------------
# local stability (trend in volume)
# ---------------------------------------------------------------------------

_SECOND_MOMENT_MAX_VERTICES = 16


def _tilted_pair_moments_for_volume(lat: Lattice, win: Window,
                                    dist: DistributionSpec, beta: float,
                                    tilt_deltas: np.ndarray, n_draws: int,
                                    seed: int, threads: int,
                                    batch: int = 64):
    """Per-draw (untilted, tilted) full-volume overlap moments, exact
    enumeration, batched over disorder draws.

    The tilt is supported on the fixed window's interior edges, but the
    overlap is measured over every edge of the volume: the tilt's influence
    on the global overlap law is what must vanish as the volume grows.  The
    second moment costs O(n_edges^2) per configuration, so it is reported
    only for volumes enumerable within 2^16 configurations."""
    if (1 << lat.n_vertices) > ENUMERATION_CAP:
        raise EnumerationTooLargeError(f"2^{lat.n_vertices} configurations")
    interior, _ = window_edges(lat, win)
    u_full = edge_parity_columns(lat.edges, lat.n_vertices)
    u_w = u_full[:, interior]
    tilt_factor = np.exp(u_w @ (beta * np.asarray(tilt_deltas,
                                                  dtype=np.float64)))
    orders = (1, 2) if lat.n_vertices <= _SECOND_MOMENT_MAX_VERTICES else (1,)
    # cap batch memory: probability table is (2^V, batch) float64
    batch = max(1, min(batch, (1 << 24) // (1 << lat.n_vertices)))
    n_batches = (n_draws + batch - 1) // batch

    def worker(b):
        rng = task_rng(seed, _KIND_LOCAL, b)
        nb = min(batch, n_draws - b * batch)
        j = dist.draw(rng, lat.n_edges * nb).reshape(lat.n_edges, nb)
        logw = u_full @ (beta * j)
        logw -= logw.max(axis=0)
        w = np.exp(logw, out=logw)
        if orders == (1,):
            # first moment only: correlations from unnormalized weights,
            # dividing by the partition sums at the (m, nb) level
            w_t = w * tilt_factor[:, None]
            c = (u_full.T @ w) / w.sum(axis=0)
            c_t = (u_full.T @ w_t) / w_t.sum(axis=0)
            return ({1: np.mean(c ** 2, axis=0)},
                    {1: np.mean(c_t ** 2, axis=0)})
        w_t = w * tilt_factor[:, None]
        p = w / w.sum(axis=0)
        p_t = w_t / w_t.sum(axis=0)
        base = pair_moments_batch(p, u_full, orders=orders)
        tilted = pair_moments_batch(p_t, u_full, orders=orders)
        return base, tilted

    results = run_tasks(worker, n_batches, threads)
    out = {}
    for k in orders:
        out[k] = (np.concatenate([r[0][k] for r in results]),
                  np.concatenate([r[1][k] for r in results]))
    return out


def local_stability_test(dist, beta: float, sides_list, win: Window,
                         j_prime: Perturbation, n_draws: int, seed: int,
                         d: int = 1, threads: int = 1) -> StabilityReport:
    """Disorder-averaged tilted vs untilted full-volume overlap moments
    across a sequence of volumes with a fixed tilt window.

    The tilt weight is exp(beta * sum_{W*} J'_xy s_x s_y) per replica.  At
    finite volume the two laws differ; the report tracks the per-volume
    discrepancy and whether it decreases with volume.
    """
    dist = distribution_from_spec(dist)
    moments: list[MomentStat] = []
    per_size = []
    for sides in sides_list:
        lat = build_lattice(d, sides if isinstance(sides, (list, tuple))
                            else [sides] * d)
        res = _tilted_pair_moments_for_volume(
            lat, win, dist, beta, j_prime.deltas, n_draws, seed, threads)
        row = {"sides": list(lat.sides)}
        for k in sorted(res):
            base, tilted = res[k]
            delta = tilted - base
            se = float(np.std(delta, ddof=1) / math.sqrt(len(delta))) \
                if len(delta) > 1 else 0.0
            name = f"L={'x'.join(map(str, lat.sides))}:q12^{k}"
            moments.append(MomentStat(name=name,
                                      value_a=float(np.mean(base)),
                                      value_b=float(np.mean(tilted)),
                                      stderr=se))
            row[f"diff_q12^{k}"] = float(np.mean(delta))
            row[f"se_q12^{k}"] = se
        per_size.append(row)

    first = per_size[0]
    last = per_size[-1]
    gap = abs(first["diff_q12^1"]) - abs(last["diff_q12^1"])
    gap_se = math.hypot(first["se_q12^1"], last["se_q12^1"])
    decreasing = gap > 2.0 * gap_se
    report = StabilityReport(
        test="local-stability",
        params={"beta": beta, "window": win.spec(), "n_draws": n_draws,
                "dist": dist.spec(), "d": d,
                "sides_list": [list(r["sides"]) for r in per_size]},
        moments=moments,
        flags=_dist_flags(dist),
        extra={"per_size": per_size, "trend_gap": gap, "trend_gap_se": gap_se,
               "decreasing": decreasing})
    if report.max_abs_diff() <= EXACT_TOL:
        report.verdict = "exact-pass"
    else:
        report.verdict = "statistical-pass" if decreasing else "fail"
    return report


# ---------------------------------------------------------------------------
# stochastic stability of a discrete sampling measure
# ---------------------------------------------------------------------------

def _observable_matrix(atoms: SamplingAtoms, spec: dict) -> np.ndarray:
    q = atoms.gram()
    if spec["kind"] == "moment":
        return q ** spec["power"]
    if spec["kind"] == "indicator_eq":
        return (np.abs(q - spec["value"]) <= spec.get("atol", 1e-9)).astype(float)
    raise ValueError(f"unknown observable {spec!r}")


def _observable_name(spec: dict) -> str:
    if spec["kind"] == "moment":
        return f"q12^{spec['power']}"
    return f"1[q12={spec['value']}]"


def stochastic_stability_test(atoms: SamplingAtoms, lam: float, n_draws: int,
                              seed: int, observables=None,
                              threads: int = 1,
                              batch: int = 100_000) -> StabilityReport:
    """Tilt the atom weights by exp(lam*l(v) - lam^2/2 |v|^2) with an
    isonormal gaussian field l (covariance v_i . v_j) and compare pair
    observables against the untilted measure, averaged over field draws."""
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    observables = observables or [{"kind": "moment", "power": 1},
                                  {"kind": "moment", "power": 2}]
    k = atoms.k
    cov = atoms.gram() + 1e-12 * np.eye(k)
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise FieldCovarianceSingularError(str(exc)) from exc
    sq_norms = np.sum(atoms.vectors ** 2, axis=1)
    f_mats = [_observable_matrix(atoms, spec) for spec in observables]
    # baseline normalized the same way as the tilted values so that a tilt
    # factor of exactly 1.0 (lam = 0, or a single atom) gives a bitwise-zero
    # difference
    w0 = atoms.weights
    base = [float(np.einsum("bi,ij,bj->b", w0[None, :], f, w0[None, :])[0]
                  / w0.sum() ** 2) for f in f_mats]

    n_batches = (n_draws + batch - 1) // batch

    def worker(b):
        rng = task_rng(seed, _KIND_STOCH, b)
        nb = min(batch, n_draws - b * batch)
        z = rng.standard_normal((nb, k))
        field = z @ chol.T
        w = w0 * np.exp(lam * field - 0.5 * lam ** 2 * sq_norms[None, :])
        norm = w.sum(axis=1) ** 2
        # per-draw paired differences: bitwise zero when the tilt is 1.0
        return [np.einsum("bi,ij,bj->b", w, f, w) / norm - base[i]
                for i, f in enumerate(f_mats)]

    results = run_tasks(worker, n_batches, threads)
    moments = []
    for idx, spec in enumerate(observables):
        deltas = np.concatenate([r[idx] for r in results])
        se = float(np.std(deltas, ddof=1) / math.sqrt(len(deltas))) \
            if len(deltas) > 1 else 0.0
        moments.append(MomentStat(name=_observable_name(spec),
                                  value_a=base[idx],
                                  value_b=base[idx] + float(np.mean(deltas)),
                                  stderr=se))
    report = StabilityReport(
        test="stochastic-stability",
        params={"lambda": lam, "n_draws": n_draws, "atoms": atoms.k},
        moments=moments)
    report.verdict = decide_verdict(moments)
    return report


# ---------------------------------------------------------------------------
# gaussian beta-shift identity in law
# ---------------------------------------------------------------------------

def beta_shift_identity_test(dist, beta: float, lam: float, lat: Lattice,
                             win: Window, n_draws: int, seed: int,
                             threads: int = 1,
                             batch: int = 64) -> StabilityReport:
    """Window at beta_W(lambda) = sqrt(beta^2 + lambda^2/|W*|) versus the
    beta-Gibbs measure tilted by exp((lambda/sqrt(|W*|)) H_{W,J'}) with an
    independent gaussian copy J'; disorder-averaged windowed overlap
    moments must agree (gaussian couplings only)."""
    dist = distribution_from_spec(dist)
    if dist.kind != "gaussian":
        raise BoundRequiresGaussianError(
            "beta-shift identity requires gaussian couplings")
    if (1 << lat.n_vertices) > ENUMERATION_CAP:
        raise EnumerationTooLargeError(f"2^{lat.n_vertices} configurations")
    interior, _ = window_edges(lat, win)
    m_w = len(interior)
    beta_w = math.sqrt(beta ** 2 + lam ** 2 / m_w)
    u_full = edge_parity_columns(lat.edges, lat.n_vertices)
    u_w = u_full[:, interior]
    scale_in = np.full(lat.n_edges, beta)
    scale_in[interior] = beta_w
    n_batches = (n_draws + batch - 1) // batch

    def worker(b):
        rng = task_rng(seed, _KIND_BETA_SHIFT, b)
        nb = min(batch, n_draws - b * batch)
        j = dist.draw(rng, lat.n_edges * nb).reshape(lat.n_edges, nb)
        j_prime = dist.draw(rng, m_w * nb).reshape(m_w, nb)
        # side (a): per-edge inverse temperatures
        p_a = probs_from_log_weights(u_full @ (scale_in[:, None] * j))
        side_a = pair_moments_batch(p_a, u_w)
        # side (b): beta everywhere, tilted with the independent copy
        logw = u_full @ (beta * j) + u_w @ ((lam / math.sqrt(m_w)) * j_prime)
        p_b = probs_from_log_weights(logw)
        side_b = pair_moments_batch(p_b, u_w)
        pmf_a = sum(overlap_pmf(p_a[:, i], u_w)[1] for i in range(nb))
        pmf_b = sum(overlap_pmf(p_b[:, i], u_w)[1] for i in range(nb))
        return side_a, side_b, pmf_a, pmf_b

    results = run_tasks(worker, n_batches, threads)
    moments = []
    for k in (1, 2):
        a = np.concatenate([r[0][k] for r in results])
        b = np.concatenate([r[1][k] for r in results])
        delta = b - a
        se = float(np.std(delta, ddof=1) / math.sqrt(len(delta))) \
            if len(delta) > 1 else 0.0
        moments.append(MomentStat(name=f"q12^{k}", value_a=float(np.mean(a)),
                                  value_b=float(np.mean(b)), stderr=se))
    pmf_a = sum(r[2] for r in results) / n_draws
    pmf_b = sum(r[3] for r in results) / n_draws
    report = StabilityReport(
        test="beta-shift-identity",
        params={"beta": beta, "lambda": lam, "beta_w": beta_w,
                "lattice": lat.spec(), "window": win.spec(),
                "n_draws": n_draws, "dist": dist.spec()},
        moments=moments, ks_stat=pmf_ks_distance(pmf_a, pmf_b))
    report.verdict = decide_verdict(moments)
    return report
