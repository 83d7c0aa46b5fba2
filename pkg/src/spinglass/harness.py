"""Experiment configuration, execution, persistence, and report emission.

A run is (experiment name, parameter dict, master seed).  The config hash
covers exactly those three plus the schema version, so re-running the same
config reproduces identical report bytes regardless of output directory or
thread count.  Wall-clock timing is persisted separately (timing.json) and
never enters report files.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import time
from dataclasses import dataclass

import numpy as np

from . import metastate, stability
from .disorder import Perturbation, distribution_from_spec
from .errors import SpinGlassError, ValidationError
from .gibbs import window_free_energy
from .lattice import Window, build_lattice, window_edges
from .overlap import OverlapMatrix
from .parallel import task_rng
from .rost import SamplingAtoms, congruence_collapse, effective_rank, gram_factorize
from .stability import SCHEMA_VERSION, MomentStat, StabilityReport

OUTPUT_ROOT_ENV = "SPINGLASS_OUTPUT_ROOT"
INCOMPLETE_MARKER = "INCOMPLETE"

EXPERIMENTS = ("covariance", "local-stability", "stochastic-stability",
               "beta-shift", "metastate-sweep", "j-independence",
               "sk-equivalence", "free-energy", "factorize")

_KIND_HARNESS_FIELD = 1
_KIND_HARNESS_PERT = 2
_KIND_HARNESS_MISC = 3


def canonical_json(obj) -> str:
    """Deterministic JSON: sorted keys, no whitespace variation."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


@dataclass
class RunConfig:
    """One experiment invocation.  `params` is experiment-specific and must
    be JSON-serializable; `outdir` and `threads` do not affect results and
    are excluded from the config hash."""

    experiment: str
    params: dict
    seed: int
    outdir: str | None = None
    threads: int = 1
    schema_version: int = SCHEMA_VERSION

    def hashed_view(self) -> dict:
        return {"experiment": self.experiment, "params": self.params,
                "seed": self.seed, "schema_version": self.schema_version}

    def config_hash(self) -> str:
        return hashlib.sha256(
            canonical_json(self.hashed_view()).encode()).hexdigest()

    def validate(self) -> list:
        """All violated preconditions, empty when the config is runnable."""
        v = []
        if self.experiment not in EXPERIMENTS:
            v.append(f"unknown experiment {self.experiment!r}")
            return v
        if not isinstance(self.seed, int) or not 0 <= self.seed < 2 ** 64:
            v.append("seed must be an integer in [0, 2^64)")
        if not isinstance(self.threads, int) or self.threads < 1:
            v.append("threads must be a positive integer")
        p = self.params
        required = _REQUIRED_PARAMS[self.experiment]
        for key in required:
            if key not in p:
                v.append(f"missing parameter {key!r}")
        if v:
            return v
        # geometry / distribution checks, reported with module error codes
        try:
            if "dist" in p:
                distribution_from_spec(p["dist"])
            if "sides" in p:
                build_lattice(int(p.get("d", len(_as_sides(p["sides"])))),
                              _as_sides(p["sides"]))
            for sides in p.get("sides_list", []):
                d = int(p.get("d", 1))
                build_lattice(d, _as_sides(sides, d))
            if "window" in p and "sides" in p:
                lat = build_lattice(int(p.get("d", len(_as_sides(p["sides"])))),
                                    _as_sides(p["sides"]))
                window_edges(lat, _window_from(p["window"]))
            if "beta" in p and float(p["beta"]) < 0:
                v.append("beta must be >= 0")
            if "n_draws" in p and int(p["n_draws"]) < 1:
                v.append("n_draws must be >= 1")
        except SpinGlassError as exc:
            v.append(exc.code if getattr(exc, "code", None) else str(exc))
        except (TypeError, ValueError) as exc:
            v.append(str(exc))
        return v


_REQUIRED_PARAMS = {
    "covariance": ("d", "sides", "beta", "window", "dist"),
    "local-stability": ("dist", "beta", "sides_list", "window", "j_prime",
                        "n_draws"),
    "stochastic-stability": ("atoms", "lam", "n_draws"),
    "beta-shift": ("dist", "beta", "lam", "sides", "window", "n_draws"),
    "metastate-sweep": ("dist", "beta", "sides_list", "window", "n_draws"),
    "j-independence": ("dist", "beta", "sides_list", "window", "n_j",
                       "n_replicas"),
    "sk-equivalence": ("beta", "monomial", "n_list", "n_draws"),
    "free-energy": ("dist", "beta", "beta_w", "sides", "window", "n_draws"),
    "factorize": ("matrix",),
}


def _as_sides(sides, d=None):
    if isinstance(sides, int):
        return [sides] * (d or 1)
    return list(sides)


def _window_from(spec) -> Window:
    return Window(anchor=int(spec["anchor"]),
                  sides=tuple(int(s) for s in spec["sides"]))


@dataclass
class ResultRecord:
    """Outcome of one run.  Timing fields are informational only and are
    excluded from the deterministic on-disk record."""

    config_hash: str
    input_id: str
    reports: list
    verdict_summary: dict
    wall_clock_s: float = 0.0
    task_count: int = 0
    schema_version: int = SCHEMA_VERSION

    def to_dict(self, include_timing: bool = False) -> dict:
        out = {"schema_version": self.schema_version,
               "config_hash": self.config_hash,
               "input_id": self.input_id,
               "verdict_summary": self.verdict_summary,
               "reports": [r.to_dict() for r in self.reports]}
        if include_timing:
            out["wall_clock_s"] = self.wall_clock_s
            out["task_count"] = self.task_count
        return out


# ---------------------------------------------------------------------------
# experiment dispatch
# ---------------------------------------------------------------------------

def _run_covariance(cfg: RunConfig) -> StabilityReport:
    p = cfg.params
    d = int(p["d"])
    lat = build_lattice(d, _as_sides(p["sides"], d))
    dist = distribution_from_spec(p["dist"])
    win = _window_from(p["window"])
    interior, _ = window_edges(lat, win)
    n_pert = int(p.get("n_perturbations", 20))
    betas = p.get("betas", [float(p["beta"])])
    rng = task_rng(cfg.seed, _KIND_HARNESS_FIELD, 0)
    from .disorder import sample_couplings
    field = sample_couplings(lat, dist, rng)

    moments, flags, ks_max = [], [], 0.0
    all_exact = True
    for t in range(n_pert):
        prng = task_rng(cfg.seed, _KIND_HARNESS_PERT, t)
        k = 1 if t % 2 == 0 else int(prng.integers(2, len(interior) + 1))
        chosen = np.sort(prng.choice(len(interior), size=k, replace=False))
        deltas = np.zeros(len(interior))
        deltas[chosen] = prng.normal(0.0, dist.scale, size=k)
        pert = Perturbation(window=win, deltas=deltas)
        beta = float(betas[t % len(betas)])
        rep = stability.covariance_identity_check(lat, field, beta, win, pert)
        ks_max = max(ks_max, rep.ks_stat or 0.0)
        all_exact &= rep.verdict == "exact-pass"
        worst = max(rep.moments, key=lambda m: abs(m.diff))
        moments.append(MomentStat(name=f"pert{t}:beta={beta}:{worst.name}",
                                  value_a=worst.value_a,
                                  value_b=worst.value_b, stderr=worst.stderr))
        for f in rep.flags:
            if f not in flags:
                flags.append(f)
    report = StabilityReport(
        test="covariance",
        params={"d": d, "sides": list(lat.sides), "betas": betas,
                "window": win.spec(), "dist": dist.spec(),
                "n_perturbations": n_pert},
        moments=moments, ks_stat=ks_max, flags=flags)
    report.verdict = "exact-pass" if all_exact else "fail"
    return report


def _run_local_stability(cfg: RunConfig) -> StabilityReport:
    p = cfg.params
    win = _window_from(p["window"])
    deltas = np.asarray(p["j_prime"], dtype=np.float64)
    j_prime = Perturbation(window=win, deltas=deltas)
    return stability.local_stability_test(
        p["dist"], float(p["beta"]), [_as_sides(s, int(p.get("d", 1)))
                                      for s in p["sides_list"]],
        win, j_prime, int(p["n_draws"]), cfg.seed, d=int(p.get("d", 1)),
        threads=cfg.threads)


def _run_stochastic_stability(cfg: RunConfig) -> StabilityReport:
    p = cfg.params
    atoms_spec = p["atoms"]
    if isinstance(atoms_spec, str):
        with open(atoms_spec) as fh:
            atoms = SamplingAtoms.from_json(fh.read())
    else:
        atoms = SamplingAtoms.from_json(json.dumps(atoms_spec))
    return stability.stochastic_stability_test(
        atoms, float(p["lam"]), int(p["n_draws"]), cfg.seed,
        observables=p.get("observables"), threads=cfg.threads)


def _run_beta_shift(cfg: RunConfig) -> StabilityReport:
    p = cfg.params
    d = int(p.get("d", 1))
    lat = build_lattice(d, _as_sides(p["sides"], d))
    return stability.beta_shift_identity_test(
        p["dist"], float(p["beta"]), float(p["lam"]), lat,
        _window_from(p["window"]), int(p["n_draws"]), cfg.seed,
        threads=cfg.threads)


def _run_metastate_sweep(cfg: RunConfig) -> StabilityReport:
    p = cfg.params
    d = int(p.get("d", 1))
    return metastate.metastate_sweep(
        p["dist"], float(p["beta"]),
        [_as_sides(s, d) for s in p["sides_list"]], _window_from(p["window"]),
        int(p["n_draws"]), cfg.seed, d=d, threads=cfg.threads)


def _run_j_independence(cfg: RunConfig) -> StabilityReport:
    p = cfg.params
    d = int(p.get("d", 1))
    return metastate.j_independence_test(
        p["dist"], float(p["beta"]),
        [_as_sides(s, d) for s in p["sides_list"]], _window_from(p["window"]),
        int(p["n_j"]), int(p["n_replicas"]), cfg.seed, d=d,
        threads=cfg.threads)


def _run_sk_equivalence(cfg: RunConfig) -> StabilityReport:
    p = cfg.params
    monomial = {tuple(int(x) for x in k.split(",")): int(v)
                for k, v in p["monomial"].items()}
    return metastate.sk_equivalence_test(
        [int(n) for n in p["n_list"]], float(p["beta"]), monomial,
        int(p["n_draws"]), cfg.seed, threads=cfg.threads)


def _run_free_energy(cfg: RunConfig) -> StabilityReport:
    p = cfg.params
    d = int(p.get("d", 1))
    lat = build_lattice(d, _as_sides(p["sides"], d))
    rng = task_rng(cfg.seed, _KIND_HARNESS_MISC, 0)
    fr = window_free_energy(p["dist"], float(p["beta"]), float(p["beta_w"]),
                            lat, _window_from(p["window"]),
                            int(p["n_draws"]), rng)
    moments = [
        MomentStat(name="f_window_in_volume", value_a=0.0,
                   value_b=fr.f_lambda_w, stderr=fr.f_lambda_w_se),
        MomentStat(name="f_window_alone", value_a=0.0, value_b=fr.f_w,
                   stderr=fr.f_w_se),
        MomentStat(name="diff_vs_bound", value_a=fr.bound, value_b=fr.diff,
                   stderr=fr.diff_se),
    ]
    report = StabilityReport(
        test="free-energy",
        params={"d": d, "sides": list(lat.sides), "beta": fr.beta,
                "beta_w": fr.beta_w, "window": p["window"],
                "dist": distribution_from_spec(p["dist"]).spec(),
                "n_draws": fr.n_draws},
        moments=moments, flags=list(fr.flags), extra=fr.to_dict())
    report.verdict = ("statistical-pass"
                      if fr.lower_ok and fr.upper_ok else "fail")
    return report


def _run_factorize(cfg: RunConfig) -> StabilityReport:
    p = cfg.params
    spec = p["matrix"]
    if isinstance(spec, str):
        a = OverlapMatrix.from_csv(spec).values
    else:
        a = np.asarray(spec, dtype=np.float64)
    factor = gram_factorize(a, tol=float(p.get("tol", 1e-8)))
    rank, spectrum = effective_rank(a, tol=float(p.get("tol", 1e-8)))
    err = float(np.max(np.abs(factor @ factor.T - a)))
    extra = {"rank": int(rank), "spectrum": [float(x) for x in spectrum],
             "factor": factor.tolist()}
    if "weights" in p:
        atoms = congruence_collapse(
            np.asarray(p["weights"], dtype=np.float64), a)
        extra["collapsed_weights"] = atoms.weights.tolist()
        extra["collapsed_vectors"] = atoms.vectors.tolist()
    moments = [MomentStat(name="reconstruction_max_abs_err",
                          value_a=0.0, value_b=err)]
    report = StabilityReport(test="factorize",
                             params={"shape": list(a.shape),
                                     "tol": float(p.get("tol", 1e-8))},
                             moments=moments, extra=extra)
    report.verdict = "exact-pass" if err <= 1e-8 else "fail"
    return report


_DISPATCH = {
    "covariance": _run_covariance,
    "local-stability": _run_local_stability,
    "stochastic-stability": _run_stochastic_stability,
    "beta-shift": _run_beta_shift,
    "metastate-sweep": _run_metastate_sweep,
    "j-independence": _run_j_independence,
    "sk-equivalence": _run_sk_equivalence,
    "free-energy": _run_free_energy,
    "factorize": _run_factorize,
}


# ---------------------------------------------------------------------------
# run + persistence
# ---------------------------------------------------------------------------

def output_root(cfg: RunConfig) -> str:
    return cfg.outdir or os.environ.get(OUTPUT_ROOT_ENV, "runs")


def run_experiment(cfg: RunConfig) -> ResultRecord:
    """Validate, execute, persist.  Raises ValidationError (listing every
    violated precondition) before anything is written; an interrupted run
    leaves an INCOMPLETE marker in its directory."""
    violations = cfg.validate()
    if violations:
        raise ValidationError(violations)
    chash = cfg.config_hash()
    rundir = os.path.join(output_root(cfg), f"{cfg.experiment}-{chash[:12]}")
    os.makedirs(rundir, exist_ok=True)
    marker = os.path.join(rundir, INCOMPLETE_MARKER)
    with open(marker, "w") as fh:
        fh.write("run in progress or interrupted\n")
    t0 = time.perf_counter()
    report = _DISPATCH[cfg.experiment](cfg)
    wall = time.perf_counter() - t0
    record = ResultRecord(
        config_hash=chash,
        input_id=hashlib.sha256(canonical_json(
            {"params": cfg.params, "seed": cfg.seed}).encode()).hexdigest(),
        reports=[report],
        verdict_summary={report.test: report.verdict},
        wall_clock_s=wall,
        task_count=1)
    with open(os.path.join(rundir, "config.json"), "w") as fh:
        fh.write(canonical_json(cfg.hashed_view()))
    emit_report(record, "all", rundir)
    with open(os.path.join(rundir, "timing.json"), "w") as fh:
        json.dump({"wall_clock_s": wall, "task_count": record.task_count}, fh)
    os.remove(marker)
    return record


def is_complete(rundir: str) -> bool:
    return (os.path.isfile(os.path.join(rundir, "record.json"))
            and not os.path.exists(os.path.join(rundir, INCOMPLETE_MARKER)))


def report_csv_text(record: ResultRecord) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["test", "name", "value_a", "value_b", "diff", "stderr"])
    for rep in record.reports:
        for m in rep.moments:
            writer.writerow([rep.test, m.name, repr(m.value_a),
                             repr(m.value_b), repr(m.diff), repr(m.stderr)])
    return buf.getvalue()


def summary_text(record: ResultRecord) -> str:
    lines = [f"config {record.config_hash}", ""]
    for rep in record.reports:
        lines.append(f"{rep.test:24s} {rep.verdict}")
        if rep.flags:
            lines.append(f"{'':24s} flags: {', '.join(rep.flags)}")
        worst = max((abs(m.diff) for m in rep.moments), default=0.0)
        lines.append(f"{'':24s} max |diff| = {worst:.6g}  "
                     f"statistics = {len(rep.moments)}")
    lines.append("")
    overall = all(v.endswith("pass") for v in record.verdict_summary.values())
    lines.append(f"overall: {'PASS' if overall else 'FAIL'}")
    return "\n".join(lines) + "\n"


def emit_report(record: ResultRecord, fmt: str, outdir: str) -> list:
    """Write report files; returns the paths written.  fmt is one of
    'json', 'csv', 'summary', 'all'."""
    if fmt not in ("json", "csv", "summary", "all"):
        raise ValueError(f"unknown report format {fmt!r}")
    os.makedirs(outdir, exist_ok=True)
    written = []
    if fmt in ("json", "all"):
        path = os.path.join(outdir, "record.json")
        with open(path, "w") as fh:
            fh.write(canonical_json(record.to_dict()))
        written.append(path)
    if fmt in ("csv", "all"):
        path = os.path.join(outdir, "report.csv")
        with open(path, "w") as fh:
            fh.write(report_csv_text(record))
        written.append(path)
    if fmt in ("summary", "all"):
        path = os.path.join(outdir, "summary.txt")
        with open(path, "w") as fh:
            fh.write(summary_text(record))
        written.append(path)
    return written
