"""Periodic torus geometry in d = 1..3: vertices, edges, windows, translations.

Vertices are indexed row-major over coordinates, so vertex ``v`` of a lattice
with sides ``(L0, L1, ...)`` has coordinates ``np.unravel_index(v, sides)``.
Edges are unordered nearest-neighbor pairs stored as (min, max) vertex index
and listed in a canonical order: sorted by (min vertex, axis, max vertex).
The edge list is a function of (d, sides) only, so coupling vectors indexed
by edge position are portable across runs and machines.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateTorusError, WindowTooLargeError


@dataclass(frozen=True)
class Lattice:
    """Immutable periodic torus. Build with :func:`build_lattice`."""

    d: int
    sides: tuple[int, ...]
    n_vertices: int
    edges: np.ndarray          # (n_edges, 2) int64, each row (u, v) with u < v
    edge_axis: np.ndarray      # (n_edges,) axis along which each edge runs
    neighbors: np.ndarray      # (n_vertices, 2d) neighbor indices (+axis then -axis)
    neighbor_edge: np.ndarray  # (n_vertices, 2d) edge index of each incident edge
    _edge_lookup: dict = field(repr=False, compare=False, default_factory=dict)

    @property
    def n_edges(self) -> int:
        return self.edges.shape[0]

    def vertex_coords(self, v: int) -> tuple[int, ...]:
        return tuple(int(c) for c in np.unravel_index(v, self.sides))

    def vertex_index(self, coords) -> int:
        wrapped = tuple(int(c) % s for c, s in zip(coords, self.sides))
        return int(np.ravel_multi_index(wrapped, self.sides))

    def edge_index(self, u: int, v: int) -> int:
        return self._edge_lookup[(min(u, v), max(u, v))]

    def translation_permutation(self, a) -> np.ndarray:
        """perm[v] = index of vertex at coords(v) + a (mod sides)."""
        coords = np.stack(np.unravel_index(np.arange(self.n_vertices), self.sides))
        shifted = [(coords[k] + int(a[k])) % self.sides[k] for k in range(self.d)]
        return np.ravel_multi_index(shifted, self.sides)

    def spec(self) -> dict:
        return {"d": self.d, "sides": list(self.sides)}

    def to_json(self) -> str:
        return json.dumps(self.spec(), sort_keys=True)


def build_lattice(d: int, sides) -> Lattice:
    """Construct the periodic torus with the canonical edge order.

    Every side must be >= 3: a periodic side of 2 would create doubled
    edges between the same vertex pair.
    """
    sides = tuple(int(s) for s in sides)
    if not 1 <= d <= 3:
        raise DegenerateTorusError(f"dimension must be 1..3, got {d}")
    if len(sides) != d:
        raise DegenerateTorusError(f"expected {d} side lengths, got {len(sides)}")
    if any(s < 3 for s in sides):
        raise DegenerateTorusError(f"every side must be >= 3, got {sides}")

    n = int(np.prod(sides))
    coords = np.stack(np.unravel_index(np.arange(n), sides))  # (d, n)

    raw = []
    for axis in range(d):
        shifted = [coords[k] if k != axis else (coords[k] + 1) % sides[k]
                   for k in range(d)]
        nbr = np.ravel_multi_index(shifted, sides)
        lo = np.minimum(np.arange(n), nbr)
        hi = np.maximum(np.arange(n), nbr)
        raw.append(np.stack([lo, hi, np.full(n, axis, dtype=np.int64)], axis=1))
    raw = np.concatenate(raw, axis=0)
    order = np.lexsort((raw[:, 1], raw[:, 2], raw[:, 0]))
    raw = raw[order]
    edges = np.ascontiguousarray(raw[:, :2])
    edge_axis = np.ascontiguousarray(raw[:, 2])

    lookup = {(int(u), int(v)): i for i, (u, v) in enumerate(edges)}

    neighbors = np.empty((n, 2 * d), dtype=np.int64)
    neighbor_edge = np.empty((n, 2 * d), dtype=np.int64)
    for axis in range(d):
        for sign, slot in ((+1, axis), (-1, d + axis)):
            shifted = [coords[k] if k != axis else (coords[k] + sign) % sides[k]
                       for k in range(d)]
            nbr = np.ravel_multi_index(shifted, sides)
            neighbors[:, slot] = nbr
            for v in range(n):
                neighbor_edge[v, slot] = lookup[(min(v, int(nbr[v])),
                                                 max(v, int(nbr[v])))]

    return Lattice(d=d, sides=sides, n_vertices=n, edges=edges,
                   edge_axis=edge_axis, neighbors=neighbors,
                   neighbor_edge=neighbor_edge, _edge_lookup=lookup)


def lattice_from_spec(spec: dict) -> Lattice:
    return build_lattice(int(spec["d"]), spec["sides"])


@dataclass(frozen=True)
class Window:
    """Axis-aligned box of vertices, anchored at a vertex, wrapping mod sides."""

    anchor: int
    sides: tuple[int, ...]

    def spec(self) -> dict:
        return {"anchor": self.anchor, "sides": list(self.sides)}


def window_vertices(lat: Lattice, win: Window) -> np.ndarray:
    """Sorted vertex indices covered by the window box."""
    if len(win.sides) != lat.d:
        raise WindowTooLargeError("window dimensionality mismatch")
    if any(w > s for w, s in zip(win.sides, lat.sides)):
        raise WindowTooLargeError(f"window sides {win.sides} exceed lattice {lat.sides}")
    if any(w < 1 for w in win.sides):
        raise WindowTooLargeError("window sides must be >= 1")
    base = lat.vertex_coords(win.anchor)
    axes = [np.arange(w) for w in win.sides]
    grids = np.meshgrid(*axes, indexing="ij")
    coords = [(base[k] + grids[k].ravel()) % lat.sides[k] for k in range(lat.d)]
    verts = np.ravel_multi_index(coords, lat.sides)
    return np.sort(np.unique(verts))


def window_edges(lat: Lattice, win: Window) -> tuple[np.ndarray, np.ndarray]:
    """Return (interior, boundary) edge indices for the window.

    Interior: both endpoints in the window. Boundary: exactly one endpoint.
    Both lists follow the lattice's canonical edge order.
    """
    verts = window_vertices(lat, win)
    inside = np.zeros(lat.n_vertices, dtype=bool)
    inside[verts] = True
    count = inside[lat.edges[:, 0]].astype(int) + inside[lat.edges[:, 1]].astype(int)
    interior = np.flatnonzero(count == 2)
    boundary = np.flatnonzero(count == 1)
    return interior, boundary


def full_window(lat: Lattice) -> Window:
    return Window(anchor=0, sides=lat.sides)


def translate_spins(lat: Lattice, sigma: np.ndarray, a) -> np.ndarray:
    """(T_a sigma)_x = sigma_{x+a}. Works on (..., n_vertices) arrays."""
    perm = lat.translation_permutation(a)
    return np.asarray(sigma)[..., perm]


def translate_couplings(lat: Lattice, values: np.ndarray, a) -> np.ndarray:
    """Translated field: new value on edge {x,y} is the old value on {x+a,y+a}."""
    perm = lat.translation_permutation(a)
    u, v = perm[lat.edges[:, 0]], perm[lat.edges[:, 1]]
    idx = np.array([lat.edge_index(int(x), int(y)) for x, y in zip(u, v)])
    return np.asarray(values)[..., idx]
