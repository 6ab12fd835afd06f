"""Lattice geometry for Z^d: sites, canonical edges, boxes, annuli, paths.

Sites are plain integer tuples. Boxes are l-infinity balls Lambda_t(x).
An annulus around an edge is Lambda_{3N}(x_e) minus Lambda_N(x_e); crossing
paths and annulus-restricted distances use the closed version that keeps the
inner shell, matching how crossing segments of a longer path are cut out.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence, Tuple

import numpy as np

Site = Tuple[int, ...]


def l1(u: Site, v: Site) -> int:
    return int(sum(abs(a - b) for a, b in zip(u, v)))


def linf(u: Site, v: Site) -> int:
    return int(max(abs(a - b) for a, b in zip(u, v)))


def is_adjacent(u: Site, v: Site) -> bool:
    return l1(u, v) == 1


@dataclass(frozen=True)
class CanonicalEdge:
    """Nearest-neighbour edge in canonical orientation.

    x is the endpoint with the smaller l1 norm (the two norms always differ
    by exactly 1, so the orientation is well defined), y the other.
    """

    x: Site
    y: Site

    @property
    def axis(self) -> int:
        for k, (a, b) in enumerate(zip(self.x, self.y)):
            if a != b:
                return k
        raise ValueError("degenerate edge")

    @property
    def step(self) -> int:
        k = self.axis
        return self.y[k] - self.x[k]

    @property
    def direction_code(self) -> int:
        # axis-major, positive step before negative
        return 2 * self.axis + (0 if self.step > 0 else 1)

    def lower(self) -> Site:
        """Geometric lower endpoint: min coordinate along the edge axis."""
        return self.x if self.step > 0 else self.y

    def __iter__(self):
        yield self.x
        yield self.y


def canonicalize(u: Site, v: Site) -> CanonicalEdge:
    """Orient an edge so x has the smaller l1 norm.

    Raises ValueError for non-adjacent endpoints.
    """
    u = tuple(int(c) for c in u)
    v = tuple(int(c) for c in v)
    if not is_adjacent(u, v):
        raise ValueError(f"not a nearest-neighbour pair: {u}, {v}")
    nu = sum(abs(c) for c in u)
    nv = sum(abs(c) for c in v)
    # |nu - nv| == 1 for any adjacent pair, so no tie-break is needed
    return CanonicalEdge(u, v) if nu < nv else CanonicalEdge(v, u)


def _as_array(points: Iterable[Site]) -> np.ndarray:
    arr = np.asarray(list(points), dtype=np.int64)
    if arr.ndim == 1:
        arr = arr[None, :]
    return arr


class Region:
    """A finite vertex set with a bounding box and a dense membership mask."""

    def bbox(self) -> Tuple[Site, Site]:
        raise NotImplementedError

    def mask(self, lo: Site, dims: Site) -> np.ndarray:
        """Flat boolean membership over the dense box [lo, lo+dims)."""
        raise NotImplementedError

    def contains(self, points: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def contains_site(self, v: Site) -> bool:
        return bool(self.contains(_as_array([v]))[0])


def grid_coords(lo: Site, dims: Site) -> np.ndarray:
    """Coordinates of the dense box [lo, lo+dims), shape (nv, d), lex order."""
    axes = [np.arange(lo[k], lo[k] + dims[k], dtype=np.int64) for k in range(len(lo))]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def grid_strides(dims: Site) -> np.ndarray:
    """Row-major strides matching the flat order of grid_coords."""
    d = len(dims)
    strides = np.empty(d, dtype=np.int64)
    s = 1
    for k in range(d - 1, -1, -1):
        strides[k] = s
        s *= dims[k]
    return strides


def flatten_sites(lo: Site, dims: Site, sites: Iterable[Site]) -> np.ndarray:
    """Flat indices of sites inside the dense box [lo, lo+dims)."""
    arr = _as_array(sites)
    off = arr - np.asarray(lo, dtype=np.int64)
    if np.any(off < 0) or np.any(off >= np.asarray(dims, dtype=np.int64)):
        raise ValueError("site outside the dense box")
    return off @ grid_strides(dims)


def unflatten_site(lo: Site, dims: Site, flat: int) -> Site:
    strides = grid_strides(dims)
    return tuple(int(lo[k] + (flat // strides[k]) % dims[k]) for k in range(len(lo)))


@dataclass(frozen=True)
class BoxRegion(Region):
    """Box Lambda_t(c) = {v : ||v - c||_inf <= t}."""

    center: Site
    radius: int

    def __post_init__(self):
        if self.radius < 0:
            raise ValueError("radius must be >= 0")
        object.__setattr__(self, "center", tuple(int(c) for c in self.center))

    @property
    def d(self) -> int:
        return len(self.center)

    def bbox(self) -> Tuple[Site, Site]:
        lo = tuple(c - self.radius for c in self.center)
        hi = tuple(c + self.radius for c in self.center)
        return lo, hi

    def side(self) -> int:
        return 2 * self.radius + 1

    def n_vertices(self) -> int:
        return self.side() ** self.d

    def n_edges(self) -> int:
        return self.d * self.side() ** (self.d - 1) * (self.side() - 1)

    def contains(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=np.int64)
        c = np.asarray(self.center, dtype=np.int64)
        return (np.abs(pts - c) <= self.radius).all(axis=1)

    def mask(self, lo: Site, dims: Site) -> np.ndarray:
        return self.contains(grid_coords(lo, dims))

    def vertices(self) -> np.ndarray:
        lo, _ = self.bbox()
        return grid_coords(lo, tuple(self.side() for _ in range(self.d)))

    def boundary(self) -> np.ndarray:
        """Vertices at l-infinity distance exactly `radius` from the center."""
        pts = self.vertices()
        c = np.asarray(self.center, dtype=np.int64)
        on = np.abs(pts - c).max(axis=1) == self.radius
        return pts[on]


@dataclass(frozen=True)
class AnnulusRegion(Region):
    """Annulus A_N(c) = Lambda_{3N}(c) minus Lambda_N(c) around a center.

    `closed=True` keeps the inner shell {||v-c||_inf == N}; crossing paths and
    annulus-restricted distances operate on the closed version.
    """

    center: Site
    inner: int
    closed: bool = False

    def __post_init__(self):
        if self.inner < 1:
            raise ValueError("inner radius must be >= 1")
        object.__setattr__(self, "center", tuple(int(c) for c in self.center))

    @property
    def d(self) -> int:
        return len(self.center)

    @property
    def outer(self) -> int:
        return 3 * self.inner

    def bbox(self) -> Tuple[Site, Site]:
        lo = tuple(c - self.outer for c in self.center)
        hi = tuple(c + self.outer for c in self.center)
        return lo, hi

    def with_closed(self, closed: bool = True) -> "AnnulusRegion":
        return AnnulusRegion(self.center, self.inner, closed)

    def contains(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=np.int64)
        c = np.asarray(self.center, dtype=np.int64)
        r = np.abs(pts - c).max(axis=1)
        low = r >= self.inner if self.closed else r > self.inner
        return low & (r <= self.outer)

    def mask(self, lo: Site, dims: Site) -> np.ndarray:
        return self.contains(grid_coords(lo, dims))

    def vertices(self) -> np.ndarray:
        lo, _ = self.bbox()
        side = 2 * self.outer + 1
        pts = grid_coords(lo, tuple(side for _ in range(self.d)))
        return pts[self.contains(pts)]


@dataclass(frozen=True)
class MaskedRegion(Region):
    """Explicit vertex subset of a dense box, given as a flat boolean mask."""

    lo: Site
    dims: Site
    allowed: np.ndarray  # flat bool over the dense box

    def bbox(self) -> Tuple[Site, Site]:
        hi = tuple(l + s - 1 for l, s in zip(self.lo, self.dims))
        return self.lo, hi

    def contains(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=np.int64)
        lo = np.asarray(self.lo, dtype=np.int64)
        dims = np.asarray(self.dims, dtype=np.int64)
        rel = pts - lo
        inside = ((rel >= 0) & (rel < dims)).all(axis=1)
        out = np.zeros(len(pts), dtype=bool)
        if inside.any():
            strides = np.cumprod(np.append(dims[::-1][:-1], 1))[::-1]
            flat = (rel[inside] * strides).sum(axis=1)
            out[inside] = self.allowed[flat]
        return out

    def mask(self, lo: Site, dims: Site) -> np.ndarray:
        return self.contains(grid_coords(lo, dims))


def region_vertices(region: Region) -> np.ndarray:
    """All vertices of a region, shape (n, d), lexicographic order."""
    if isinstance(region, (BoxRegion, AnnulusRegion)):
        return region.vertices()
    lo, hi = region.bbox()
    dims = tuple(h - l + 1 for l, h in zip(lo, hi))
    pts = grid_coords(lo, dims)
    return pts[region.contains(pts)]


def box_edges(box: BoxRegion) -> list:
    """Canonical edges with both endpoints in the box.

    Ordered by (x lexicographic, direction code): the rank in this list is the
    dense per-window edge index.
    """
    lo, _ = box.bbox()
    side = box.side()
    dims = tuple(side for _ in range(box.d))
    pts = grid_coords(lo, dims)
    edges = []
    for k in range(box.d):
        keep = pts[:, k] < lo[k] + side - 1
        for u in pts[keep]:
            v = u.copy()
            v[k] += 1
            edges.append(canonicalize(tuple(u), tuple(v)))
    edges.sort(key=lambda e: (e.x, e.direction_code))
    return edges


def edge_index_map(box: BoxRegion) -> dict:
    """Dense integer id for every edge of the box (row-major over x, then direction)."""
    return {e: i for i, e in enumerate(box_edges(box))}


def path_edges(path: Sequence[Site]) -> list:
    """Canonical edges traversed by a vertex path (validates adjacency)."""
    return [canonicalize(path[i], path[i + 1]) for i in range(len(path) - 1)]


def is_self_avoiding(path: Sequence[Site]) -> bool:
    return len(set(map(tuple, path))) == len(path)


def linf_diameter(points: Iterable[Site]) -> int:
    """Max pairwise l-infinity distance: max over axes of coordinate spread."""
    arr = _as_array(points)
    if len(arr) == 0:
        raise ValueError("empty point set")
    return int((arr.max(axis=0) - arr.min(axis=0)).max())


def is_crossing_path(path: Sequence[Site], annulus: AnnulusRegion) -> bool:
    """True iff the path joins the two shells of the annulus from inside.

    Every vertex must lie in the closed annulus {N <= ||v-c||_inf <= 3N};
    one endpoint sits on the inner shell (distance exactly N), the other on
    the outer shell (distance exactly 3N). Merely touching a shell midway
    does not qualify a path whose endpoints are elsewhere.
    """
    if len(path) < 2:
        return False
    for i in range(len(path) - 1):
        if not is_adjacent(path[i], path[i + 1]):
            raise ValueError(f"non-adjacent step {path[i]} -> {path[i + 1]}")
    if not is_self_avoiding(path):
        raise ValueError("path repeats a vertex")
    c = annulus.center
    radii = [linf(v, c) for v in path]
    if any(r < annulus.inner or r > annulus.outer for r in radii):
        return False
    first, last = radii[0], radii[-1]
    inner_first = first == annulus.inner and last == annulus.outer
    outer_first = first == annulus.outer and last == annulus.inner
    return inner_first or outer_first
