"""Coupling-field sampling and local deterministic perturbations.

Coupling values live in the lattice's canonical edge order (EA) or in
upper-triangular (x, y), x < y order (SK).  The SK 1/sqrt(N) scaling is
applied by the Hamiltonian, not stored in the field.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from .errors import BadDistributionParameterError, GeometryMismatchError
from .lattice import Lattice, Window, window_edges

_MAGIC = b"SGCF"
_VERSION = 1


@dataclass(frozen=True)
class DistributionSpec:
    """Symmetric i.i.d. coupling law: gaussian(std), uniform(half-width), rademacher."""

    kind: str
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in ("gaussian", "uniform", "rademacher"):
            raise BadDistributionParameterError(f"unknown distribution {self.kind!r}")
        if self.kind in ("gaussian", "uniform") and not self.scale > 0:
            raise BadDistributionParameterError(
                f"{self.kind} requires positive scale, got {self.scale}")

    @property
    def continuous(self) -> bool:
        return self.kind in ("gaussian", "uniform")

    def draw(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.kind == "gaussian":
            return rng.normal(0.0, self.scale, size=n)
        if self.kind == "uniform":
            return rng.uniform(-self.scale, self.scale, size=n)
        return rng.choice(np.array([-1.0, 1.0]), size=n)

    def spec(self) -> dict:
        return {"kind": self.kind, "scale": self.scale}


def distribution_from_spec(spec) -> DistributionSpec:
    if isinstance(spec, DistributionSpec):
        return spec
    return DistributionSpec(kind=spec["kind"], scale=float(spec.get("scale", 1.0)))


def sk_edges(n_spins: int) -> np.ndarray:
    """Complete-graph edge list in (x, y), x < y order."""
    pairs = [(x, y) for x in range(n_spins) for y in range(x + 1, n_spins)]
    return np.array(pairs, dtype=np.int64)


@dataclass
class CouplingField:
    """One real value per edge, plus distribution/seed provenance."""

    values: np.ndarray
    dist: DistributionSpec
    geometry: str                       # "ea:d=..,sides=.." or "sk:N=.."
    seed: str | None = None
    meta: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if not np.all(np.isfinite(self.values)):
            raise BadDistributionParameterError("coupling values must be finite")

    @property
    def n_edges(self) -> int:
        return self.values.shape[0]


def ea_geometry_tag(lat: Lattice) -> str:
    return f"ea:d={lat.d},sides={'x'.join(map(str, lat.sides))}"


def sk_geometry_tag(n_spins: int) -> str:
    return f"sk:N={n_spins}"


def sample_couplings(lat_or_n, dist, rng: np.random.Generator,
                     seed: str | None = None) -> CouplingField:
    """Draw i.i.d. couplings for a lattice (EA) or for N spins (SK)."""
    dist = distribution_from_spec(dist)
    if isinstance(lat_or_n, Lattice):
        n_edges = lat_or_n.n_edges
        geometry = ea_geometry_tag(lat_or_n)
    else:
        n_spins = int(lat_or_n)
        n_edges = n_spins * (n_spins - 1) // 2
        geometry = sk_geometry_tag(n_spins)
    values = dist.draw(rng, n_edges)
    return CouplingField(values=values, dist=dist, geometry=geometry, seed=seed)


@dataclass(frozen=True)
class Perturbation:
    """Deterministic coupling deltas supported on a window's interior edges."""

    window: Window
    deltas: np.ndarray  # one per interior edge of the window, canonical order

    def __post_init__(self):
        object.__setattr__(self, "deltas",
                           np.asarray(self.deltas, dtype=np.float64))
        if not np.all(np.isfinite(self.deltas)):
            raise BadDistributionParameterError("perturbation deltas must be finite")


def perturb_couplings(lat: Lattice, field: CouplingField,
                      pert: Perturbation) -> CouplingField:
    """J' = J + delta on the window's interior edges, unchanged elsewhere."""
    if field.geometry != ea_geometry_tag(lat):
        raise GeometryMismatchError(
            f"field geometry {field.geometry} does not match lattice")
    interior, _ = window_edges(lat, pert.window)
    if len(pert.deltas) != len(interior):
        raise GeometryMismatchError(
            f"perturbation has {len(pert.deltas)} deltas for "
            f"{len(interior)} interior edges")
    values = field.values.copy()
    values[interior] += pert.deltas
    return CouplingField(values=values, dist=field.dist,
                         geometry=field.geometry, seed=field.seed,
                         meta={**field.meta, "perturbed": True})


def save_coupling_field(path, field: CouplingField) -> None:
    """Binary format: 8-byte header (magic + LE uint32 version), then
    little-endian float64 values in canonical edge order.  A JSON sidecar
    records the distribution, geometry, and seed provenance."""
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", _VERSION))
        fh.write(field.values.astype("<f8").tobytes())
    sidecar = {"dist": field.dist.spec(), "geometry": field.geometry,
               "seed": field.seed, "n_edges": field.n_edges}
    path.with_suffix(path.suffix + ".json").write_text(
        json.dumps(sidecar, sort_keys=True, indent=1))


def load_coupling_field(path) -> CouplingField:
    path = Path(path)
    blob = path.read_bytes()
    if blob[:4] != _MAGIC:
        raise GeometryMismatchError(f"{path} is not a coupling-field file")
    version, = struct.unpack("<I", blob[4:8])
    if version != _VERSION:
        raise GeometryMismatchError(f"unsupported coupling-field version {version}")
    values = np.frombuffer(blob[8:], dtype="<f8")
    sidecar = json.loads(path.with_suffix(path.suffix + ".json").read_text())
    return CouplingField(values=values.copy(),
                         dist=distribution_from_spec(sidecar["dist"]),
                         geometry=sidecar["geometry"], seed=sidecar["seed"])
