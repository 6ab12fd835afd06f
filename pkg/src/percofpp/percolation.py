"""Cluster structure of the open subgraphs inside a window.

Labels connected components of the p-open or q-open edge set, identifies the
crossing cluster that stands in for the infinite cluster on a finite window,
and provides the closest-point regularization map and chemical distances.
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
    flatten_sites,
    grid_coords,
    grid_strides,
)


class RegularizationUnavailableError(RuntimeError):
    """Raised when no infinite-cluster proxy exists in the window."""


@dataclass
class ClusterLabeling:
    """Connected components of an open subgraph over a dense window box.

    labels[v] is the component id of flat vertex v; ids are assigned in
    first-seen lexicographic order, so id 0 is the component of the smallest
    vertex. sizes[c] counts vertices of component c.
    """

    window: BoxRegion
    openness: str
    labels: np.ndarray
    sizes: np.ndarray
    lo: Site
    dims: Site

    @property
    def n_clusters(self) -> int:
        return int(self.sizes.shape[0])

    def label_at(self, v: Site) -> int:
        return int(self.labels[int(flatten_sites(self.lo, self.dims, [v])[0])])

    def cluster_mask(self, label: int) -> np.ndarray:
        return self.labels == label

    def cluster_coords(self, label: int) -> np.ndarray:
        return grid_coords(self.lo, self.dims)[self.labels == label]


@dataclass(frozen=True)
class CrossingReport:
    """Which components join opposite window faces, per direction and overall."""

    direction_crossed: Tuple[bool, ...]
    crossing_ids: Tuple[int, ...]
    unique: bool
    cluster_id: Optional[int]


def _openness_grid(
    env: CoupledEnvironment, params: EnvironmentParams, lo, dims, openness: str
) -> np.ndarray:
    if openness == "q":
        return env.open_grid(lo, dims, params.p, params.lam)
    if openness == "p":
        return env.open_grid(lo, dims, params.p, None)
    raise ValueError("openness must be 'q' or 'p'")


def label_clusters(
    env: CoupledEnvironment,
    window: BoxRegion,
    params: EnvironmentParams,
    openness: str = "q",
) -> ClusterLabeling:
    """Exact connected components of the open subgraph on the window."""
    lo, hi = window.bbox()
    dims = tuple(h - l + 1 for l, h in zip(lo, hi))
    open_edges = _openness_grid(env, params, lo, dims, openness)
    nv = int(np.prod(dims))
    mask = np.ones(nv, dtype=bool)
    labels, count = K.flood_components(
        np.asarray(dims, dtype=np.int64), open_edges, mask
    )
    sizes = np.bincount(labels, minlength=count).astype(np.int64)
    return ClusterLabeling(
        window=window,
        openness=openness,
        labels=labels,
        sizes=sizes,
        lo=lo,
        dims=dims,
    )


def crossing_report(labeling: ClusterLabeling) -> CrossingReport:
    """Components joining both faces of the window, direction by direction."""
    dims = labeling.dims
    d = len(dims)
    labels = labeling.labels
    strides = grid_strides(dims)
    coords = grid_coords(tuple(0 for _ in dims), dims)
    crossing_sets = []
    direction_crossed = []
    for k in range(d):
        on_lo = coords[:, k] == 0
        on_hi = coords[:, k] == dims[k] - 1
        both = set(np.unique(labels[on_lo])) & set(np.unique(labels[on_hi]))
        crossing_sets.append(both)
        direction_crossed.append(bool(both))
    del strides
    all_dirs = set.intersection(*crossing_sets) if crossing_sets else set()
    ids = tuple(sorted(int(c) for c in all_dirs))
    unique = len(ids) == 1
    return CrossingReport(
        direction_crossed=tuple(direction_crossed),
        crossing_ids=ids,
        unique=unique,
        cluster_id=ids[0] if unique else None,
    )


def infinite_cluster_proxy(
    labeling: ClusterLabeling, fraction: float = 0.1
) -> Optional[int]:
    """Window stand-in for the infinite cluster.

    The unique all-directions crossing cluster when there is exactly one;
    otherwise the largest cluster provided it holds at least `fraction` of
    the window's vertices; otherwise None.
    """
    report = crossing_report(labeling)
    if report.unique:
        return report.cluster_id
    best = int(np.argmax(labeling.sizes)) if labeling.n_clusters else None
    if best is not None:
        nv = int(np.prod(labeling.dims))
        if labeling.sizes[best] >= fraction * nv:
            return best
    return None


def closest_point(
    x: Site, labeling: ClusterLabeling, fraction: float = 0.1
) -> Site:
    """d_1-closest proxy-cluster vertex, ties broken lexicographically."""
    proxy = infinite_cluster_proxy(labeling, fraction)
    if proxy is None:
        raise RegularizationUnavailableError(
            "window has no crossing cluster and no dominant cluster"
        )
    coords = labeling.cluster_coords(proxy)
    dists = np.abs(coords - np.asarray(x, dtype=np.int64)).sum(axis=1)
    # argmin returns the first minimum; coords are in lexicographic order
    return tuple(int(c) for c in coords[int(np.argmin(dists))])


def hole_size(x: Site, labeling: ClusterLabeling, fraction: float = 0.1) -> int:
    """l-infinity displacement of the regularization map at x."""
    y = closest_point(x, labeling, fraction)
    return int(max(abs(a - b) for a, b in zip(x, y)))


def _region_grid(region: Region):
    lo, hi = region.bbox()
    dims = tuple(h - l + 1 for l, h in zip(lo, hi))
    return lo, dims, region.mask(lo, dims)


def chemical_path(
    env: CoupledEnvironment,
    params: EnvironmentParams,
    openness: str,
    region: Region,
    A: Sequence[Site],
    B: Sequence[Site],
):
    """Shortest open path inside the region from vertex set A to vertex set B.

    Returns (hop count or inf, path or None); the path runs from A to B and
    is the canonical breadth-first one (first-discoverer predecessors with
    neighbours scanned in fixed axis order, final vertex smallest in B).
    """
    if not len(A) or not len(B):
        raise ValueError("chemical distance needs non-empty vertex sets")
    a_arr = np.asarray(list(A), dtype=np.int64)
    b_arr = np.asarray(list(B), dtype=np.int64)
    if not np.all(region.contains(a_arr)) or not np.all(region.contains(b_arr)):
        raise ValueError("A and B must lie inside the region")
    lo, dims, mask = _region_grid(region)
    open_edges = _openness_grid(env, params, lo, dims, openness)
    sources = np.unique(flatten_sites(lo, dims, a_arr))
    dist, pred = K.bfs_grid(
        np.asarray(dims, dtype=np.int64), open_edges, mask, sources, -1
    )
    targets = np.unique(flatten_sites(lo, dims, b_arr))
    reached = targets[dist[targets] >= 0]
    if reached.size == 0:
        return math.inf, None
    dmin = dist[reached].min()
    best = int(reached[dist[reached] == dmin].min())
    chain = [best]
    while pred[chain[-1]] >= 0:
        chain.append(int(pred[chain[-1]]))
    chain.reverse()
    coords = grid_coords(lo, dims)
    path = tuple(tuple(int(c) for c in coords[v]) for v in chain)
    return int(dmin), path


def chemical_distance(
    env: CoupledEnvironment,
    params: EnvironmentParams,
    openness: str,
    region: Region,
    A: Sequence[Site],
    B: Sequence[Site],
):
    """Edge count of the shortest open path in the region joining A to B."""
    dist, _ = chemical_path(env, params, openness, region, A, B)
    return dist
