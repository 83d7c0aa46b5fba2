"""Gram factorization of overlap matrices into unit-ball sampling atoms,
congruence-class collapse, effective rank, and replica exchangeability tests.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import (AmbiguousCongruenceError, NotPsdError,
                     TooFewSamplesError, ValidationError)


def gram_factorize(a: np.ndarray, tol: float = 1e-8) -> np.ndarray:
    """Factor a PSD matrix A into row vectors with v_i . v_j = A_ij.

    Eigendecomposition-based (rank-revealing): columns of the result are
    ordered by descending eigenvalue.  Negative eigenvalues above
    -tol * max eigenvalue are clipped to zero; anything below raises
    not-psd with the offending eigenvalue.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValidationError(["gram_factorize needs a square matrix"])
    if not np.allclose(a, a.T, atol=1e-10):
        raise ValidationError(["gram_factorize needs a symmetric matrix"])
    evals, evecs = np.linalg.eigh(a)
    max_eval = max(float(evals[-1]), 0.0)
    if evals[0] < -tol * max(max_eval, 1e-300):
        raise NotPsdError(f"eigenvalue {evals[0]:.3e} below -tol*max",
                          eigenvalue=float(evals[0]))
    evals = np.clip(evals, 0.0, None)[::-1]
    evecs = evecs[:, ::-1]
    keep = evals > tol * max(max_eval, 1e-300)
    return evecs[:, keep] * np.sqrt(evals[keep])


def effective_rank(a: np.ndarray, tol: float = 1e-8):
    """Count of eigenvalues above tol * max eigenvalue, plus the spectrum
    sorted in descending order."""
    evals = np.linalg.eigvalsh(np.asarray(a, dtype=np.float64))[::-1]
    max_eval = max(float(evals[0]), 0.0)
    rank = int(np.sum(evals > tol * max(max_eval, 1e-300)))
    return rank, evals


@dataclass
class SamplingAtoms:
    """Discrete sampling measure: weighted vectors in the unit ball."""

    weights: np.ndarray
    vectors: np.ndarray  # (k, dim)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.vectors = np.atleast_2d(np.asarray(self.vectors, dtype=np.float64))
        if abs(self.weights.sum() - 1.0) > 1e-12:
            raise ValidationError(
                [f"atom weights must sum to 1, got {self.weights.sum()!r}"])
        if np.any(self.weights < 0):
            raise ValidationError(["atom weights must be nonnegative"])
        norms = np.linalg.norm(self.vectors, axis=1)
        if np.any(norms > 1 + 1e-9):
            raise ValidationError(
                [f"atom vectors must lie in the unit ball, max norm {norms.max()}"])

    @property
    def k(self) -> int:
        return len(self.weights)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def gram(self) -> np.ndarray:
        return self.vectors @ self.vectors.T

    def to_json(self) -> str:
        return json.dumps({"dim": self.dim,
                           "atoms": [{"w": float(w), "v": v.tolist()}
                                     for w, v in zip(self.weights, self.vectors)]},
                          sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "SamplingAtoms":
        spec = json.loads(text)
        return cls(weights=np.array([a["w"] for a in spec["atoms"]]),
                   vectors=np.array([a["v"] for a in spec["atoms"]]))


def congruence_classes(a: np.ndarray, tol: float) -> list[list[int]]:
    """Partition indices by entrywise row equality within tol.

    The relation must be transitive at the given tolerance; a violating
    triple raises ambiguous-congruence so the caller can tighten tol.
    """
    a = np.asarray(a, dtype=np.float64)
    n = a.shape[0]
    close = np.all(np.abs(a[:, None, :] - a[None, :, :]) <= tol, axis=2)
    labels = -np.ones(n, dtype=int)
    classes: list[list[int]] = []
    for i in range(n):
        if labels[i] >= 0:
            continue
        members = list(np.flatnonzero(close[i] & (labels < 0)))
        for j in members:
            labels[j] = len(classes)
        classes.append(members)
    # transitivity check: any close pair must share a class
    for i in range(n):
        for j in range(i + 1, n):
            if close[i, j] != (labels[i] == labels[j]):
                k = int(np.flatnonzero(close[i] != close[j])[0])
                raise AmbiguousCongruenceError(
                    f"rows {i} and {j} are within tol but disagree about {k}",
                    triple=(i, j, k))
    return classes


def congruence_collapse(weights: np.ndarray, a: np.ndarray,
                        tol: float = 1e-9, psd_tol: float = 1e-8) -> SamplingAtoms:
    """Merge congruent states (identical overlap rows) into single atoms.

    Class weights are summed; atom vectors come from gram_factorize of the
    collapsed matrix formed by class representatives."""
    w = np.asarray(weights, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    if abs(w.sum() - 1.0) > 1e-9 or np.any(w < 0):
        raise ValidationError(["weights must form a probability vector"])
    classes = congruence_classes(a, tol)
    reps = [c[0] for c in classes]
    collapsed = a[np.ix_(reps, reps)]
    collapsed = 0.5 * (collapsed + collapsed.T)
    vectors = gram_factorize(collapsed, tol=psd_tol)
    new_w = np.array([w[c].sum() for c in classes])
    new_w = new_w / new_w.sum()
    norms = np.linalg.norm(vectors, axis=1)
    vectors = vectors / np.maximum(norms, 1.0)[:, None]
    return SamplingAtoms(weights=new_w, vectors=vectors)


@dataclass
class ExchangeabilityReport:
    p_value: float
    statistic: float
    n_samples: int
    n_permutations: int


def exchangeability_test(matrices, n_permutations: int = 199,
                         rng: np.random.Generator | None = None,
                         permutations=None) -> ExchangeabilityReport:
    """Permutation test for weak exchangeability of replica labels.

    Statistic: max over pairs (i<j) of |mean_m q_ij - grand mean|.  Null
    samples relabel every matrix with an independent uniform permutation;
    p = (1 + #{T_perm >= T_obs}) / (1 + n_permutations).
    """
    mats = np.asarray([np.asarray(m.values if hasattr(m, "values") else m)
                       for m in matrices], dtype=np.float64)
    n, s, _ = mats.shape
    if n < 50:
        raise TooFewSamplesError(f"need >= 50 overlap matrices, got {n}")
    iu = np.triu_indices(s, k=1)

    def statistic(stack):
        means = stack.mean(axis=0)[iu]
        return float(np.max(np.abs(means - means.mean())))

    t_obs = statistic(mats)
    if rng is None:
        rng = np.random.default_rng(0)
    if permutations is not None:
        perm_list = [np.asarray(p) for p in permutations]
        n_permutations = len(perm_list)
    else:
        perm_list = None
    count = 0
    rows = np.arange(n)[:, None, None]
    base = np.tile(np.arange(s), (n, 1))
    for b in range(n_permutations):
        if perm_list is not None:
            perm = perm_list[b]
            permuted = mats[:, perm][:, :, perm]
        else:
            perms = rng.permuted(base, axis=1)
            permuted = mats[rows, perms[:, :, None], perms[:, None, :]]
        if statistic(permuted) >= t_obs - 1e-15:
            count += 1
    p = (1 + count) / (1 + n_permutations)
    return ExchangeabilityReport(p_value=float(p), statistic=t_obs,
                                 n_samples=n, n_permutations=n_permutations)
