"""Weighted passage times over coupled environments.

Distance fields are computed by a deterministic Dijkstra whose priority is
the triple (distance, hop count, vertex index) and whose predecessor choice
minimizes that triple; extraction therefore yields one canonical geodesic
per (source, target) and terminates even when zero-weight ties occur.

Passage times over large box regions are computed adaptively: Dijkstra runs
on a sub-box around the endpoints, and the run is accepted once the target's
distance is certified against every vertex through which a path could leave
the sub-box and re-enter. A certified value is exact for the full region and
for any region containing it, which is what makes Lambda_K-restricted times
tractable at K = n^2.
"""

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from . import _kernels as K
from .environment import CoupledEnvironment, EnvironmentParams
from .lattice import (
    BoxRegion,
    Region,
    Site,
    canonicalize,
    flatten_sites,
    grid_coords,
    grid_strides,
    is_self_avoiding,
)
from .percolation import (
    RegularizationUnavailableError,
    closest_point,
    infinite_cluster_proxy,
    label_clusters,
)


class NoPathError(RuntimeError):
    """Raised when a requested geodesic does not exist (infinite distance)."""


@dataclass(frozen=True)
class WeightView:
    """Truncated, region-restricted weights tau_e ^ M over the edges of A.

    M=None leaves weights untruncated, so p-closed edges stay infinite.
    overrides pins individual edges to fixed values (applied after the
    truncation, untouched by it); used for single-edge perturbations.
    """

    env: CoupledEnvironment
    params: EnvironmentParams
    M: Optional[float]
    region: Region
    overrides: Optional[dict] = None

    def weights(self, lo: Site, dims: Site) -> np.ndarray:
        w = self.env.weight_grid(lo, dims, self.params.p, self.M)
        if self.overrides:
            hi = tuple(l + s - 1 for l, s in zip(lo, dims))
            for e, value in self.overrides.items():
                low = e.lower()
                up = tuple(c + (1 if k == e.axis else 0) for k, c in enumerate(low))
                if all(a <= c <= b for a, c, b in zip(lo, low, hi)) and all(
                    a <= c <= b for a, c, b in zip(lo, up, hi)
                ):
                    flat = int(flatten_sites(lo, dims, [low])[0])
                    w[e.axis, flat] = value
        return w

    def edge_weight(self, u: Site, v: Site) -> float:
        e = canonicalize(u, v)
        if self.overrides and e in self.overrides:
            return float(self.overrides[e])
        return self.env.weight(e, self.params.p, self.M)

    def descriptor(self) -> str:
        m = "inf" if self.M is None else repr(float(self.M))
        ov = ""
        if self.overrides:
            parts = sorted(
                f"{e.lower()}+e{e.axis}={v!r}" for e, v in self.overrides.items()
            )
            ov = ",overrides[" + ";".join(parts) + "]"
        return f"p={self.params.p!r},M={m},region={self.region!r}{ov}"


@dataclass
class DistanceField:
    """Single-source distances with canonical predecessors on a dense box.

    superset_valid marks fields whose values were certified against the
    sub-box boundary: they equal the field any larger region would produce.
    """

    view: WeightView
    source: Site
    lo: Site
    dims: Site
    dist: np.ndarray
    hops: np.ndarray
    pred: np.ndarray
    superset_valid: bool = False

    def _flat(self, v: Site) -> int:
        return int(flatten_sites(self.lo, self.dims, [v])[0])

    def covers(self, v: Site) -> bool:
        return all(
            self.lo[k] <= v[k] < self.lo[k] + self.dims[k] for k in range(len(self.lo))
        )

    def distance_at(self, v: Site) -> float:
        return float(self.dist[self._flat(v)])

    def reached(self, v: Site) -> bool:
        return self.covers(v) and math.isfinite(self.distance_at(v))


@dataclass(frozen=True)
class GeodesicPath:
    """A canonical geodesic: self-avoiding, with its exact passage time."""

    vertices: Tuple[Site, ...]
    total: float
    view_descriptor: str

    def __len__(self) -> int:
        return len(self.vertices)

    @property
    def endpoints(self) -> Tuple[Site, Site]:
        return self.vertices[0], self.vertices[-1]


def _region_box(region: Region):
    lo, hi = region.bbox()
    dims = tuple(h - l + 1 for l, h in zip(lo, hi))
    return lo, dims


def _run_dijkstra(view: WeightView, lo, dims, mask, sources):
    weights = view.weights(lo, dims)
    dist, hops, pred = K.dijkstra_grid(
        np.asarray(dims, dtype=np.int64),
        weights,
        mask,
        np.asarray(sources, dtype=np.int64),
    )
    return dist, hops, pred


def distance_field(view: WeightView, source: Site) -> DistanceField:
    """Exact distances from source over the whole region of the view."""
    if not view.region.contains_site(source):
        raise ValueError("source lies outside the view's region")
    lo, dims = _region_box(view.region)
    mask = view.region.mask(lo, dims)
    src = flatten_sites(lo, dims, [source])
    dist, hops, pred = _run_dijkstra(view, lo, dims, mask, src)
    return DistanceField(view, source, lo, dims, dist, hops, pred)


def _exit_candidates(sublo, subdims, rlo, rdims, mask):
    """Flat indices through which a path could leave the sub-box yet stay
    inside the region: sub-box face vertices on sides not flush with the
    region's bounding box."""
    d = len(subdims)
    coords = grid_coords(sublo, subdims)
    exit_mask = np.zeros(coords.shape[0], dtype=bool)
    for k in range(d):
        if sublo[k] > rlo[k]:
            exit_mask |= coords[:, k] == sublo[k]
        if sublo[k] + subdims[k] < rlo[k] + rdims[k]:
            exit_mask |= coords[:, k] == sublo[k] + subdims[k] - 1
    return np.flatnonzero(exit_mask & mask)


def _adaptive_field(view: WeightView, x: Site, y: Site, need_path: bool):
    """Grow a sub-box around x, y until the target distance is certified
    exact for the full region (strictly below every exit distance when a
    path is requested), or until the sub-box covers the region."""
    region = view.region
    if not isinstance(region, BoxRegion):
        field = distance_field(view, x)
        return field, True
    rlo, rdims = _region_box(region)
    d = len(rlo)
    pad = max(4, -(-sum(abs(a - b) for a, b in zip(x, y)) // 4))
    while True:
        sublo = tuple(max(rlo[k], min(x[k], y[k]) - pad) for k in range(d))
        subhi = tuple(
            min(rlo[k] + rdims[k] - 1, max(x[k], y[k]) + pad) for k in range(d)
        )
        subdims = tuple(h - l + 1 for l, h in zip(sublo, subhi))
        full_cover = all(
            sublo[k] == rlo[k] and subdims[k] == rdims[k] for k in range(d)
        )
        mask = region.mask(sublo, subdims)
        src = flatten_sites(sublo, subdims, [x])
        dist, hops, pred = _run_dijkstra(view, sublo, subdims, mask, src)
        field = DistanceField(view, x, sublo, subdims, dist, hops, pred)
        if full_cover:
            return field, True
        ty = dist[int(flatten_sites(sublo, subdims, [y])[0])]
        exits = _exit_candidates(sublo, subdims, rlo, rdims, mask)
        min_exit = dist[exits].min() if exits.size else math.inf
        if math.isfinite(ty):
            if (need_path and ty < min_exit) or (not need_path and ty <= min_exit):
                field.superset_valid = True
                return field, False
        pad = pad + (pad * 7) // 10 + 1


def passage_time(view: WeightView, x: Site, y: Site) -> float:
    """T_M^A(x, y): the view's first passage time between x and y."""
    if not view.region.contains_site(x) or not view.region.contains_site(y):
        raise ValueError("endpoints must lie in the view's region")
    if tuple(x) == tuple(y):
        return 0.0
    field, _ = _adaptive_field(view, x, y, need_path=False)
    return field.distance_at(y)


def extract_geodesic(field: DistanceField, target: Site) -> GeodesicPath:
    """Canonical geodesic from the field's source to target."""
    flat = field._flat(target)
    if not math.isfinite(field.dist[flat]):
        raise NoPathError(f"no finite-weight path to {target}")
    chain = [flat]
    while field.pred[chain[-1]] >= 0:
        chain.append(int(field.pred[chain[-1]]))
    chain.reverse()
    coords = grid_coords(field.lo, field.dims)
    vertices = tuple(tuple(int(c) for c in coords[v]) for v in chain)
    assert vertices[0] == tuple(field.source)
    return GeodesicPath(
        vertices=vertices,
        total=float(field.dist[flat]),
        view_descriptor=field.view.descriptor(),
    )


def passage_time_and_path(view: WeightView, x: Site, y: Site):
    """Passage time plus a canonical geodesic realizing it."""
    if not view.region.contains_site(x) or not view.region.contains_site(y):
        raise ValueError("endpoints must lie in the view's region")
    if tuple(x) == tuple(y):
        return 0.0, GeodesicPath((tuple(x),), 0.0, view.descriptor())
    field, _ = _adaptive_field(view, x, y, need_path=True)
    path = extract_geodesic(field, y)
    return path.total, path


def path_weight(view: WeightView, vertices: Sequence[Site]) -> float:
    """Sum of view weights along consecutive path edges, in path order."""
    total = 0.0
    for u, v in zip(vertices[:-1], vertices[1:]):
        total += view.edge_weight(u, v)
    return total


def is_geodesic(vertices: Sequence[Site], view: WeightView, tol: float = 1e-12):
    """Whether the path's weight equals the view passage time of its endpoints."""
    vs = [tuple(v) for v in vertices]
    if not vs:
        raise ValueError("empty path")
    arr = np.asarray(vs, dtype=np.int64)
    if not bool(np.all(view.region.contains(arr))):
        raise ValueError("path leaves the view's region")
    if not is_self_avoiding(vs):
        raise ValueError("path repeats a vertex")
    if len(vs) == 1:
        return True
    total = path_weight(view, vs)
    t = passage_time(view, vs[0], vs[-1])
    if math.isinf(total) or math.isinf(t):
        return math.isinf(total) and math.isinf(t)
    return abs(total - t) <= tol


def default_regularization_window(x: Site, y: Site) -> BoxRegion:
    """A box holding x and y with margin for the closest-point displacement."""
    d = len(x)
    center = tuple((x[k] + y[k]) // 2 for k in range(d))
    spread = max(
        max(abs(x[k] - center[k]), abs(y[k] - center[k])) for k in range(d)
    )
    return BoxRegion(center, spread + max(16, spread // 4))


def regularized_time(
    env: CoupledEnvironment,
    params: EnvironmentParams,
    x: Site,
    y: Site,
    window: Optional[BoxRegion] = None,
    fraction: float = 0.1,
    return_points: bool = False,
    openness: str = "p",
):
    """T([x], [y]): untruncated passage time between the closest points to
    x and y in the window's infinite-cluster proxy (p-open by default; pass
    openness="q" to regularize against the q-percolation instead)."""
    if window is None:
        window = default_regularization_window(x, y)
    labeling = label_clusters(env, window, params, openness=openness)
    if infinite_cluster_proxy(labeling, fraction) is None:
        raise RegularizationUnavailableError("no proxy cluster in window")
    xs = closest_point(x, labeling, fraction)
    ys = closest_point(y, labeling, fraction)
    view = WeightView(env=env, params=params, M=None, region=window)
    t = passage_time(view, xs, ys)
    if return_points:
        return t, xs, ys
    return t
