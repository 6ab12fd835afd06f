"""Effective radii: exact small-scale checker, good-box certificate, bypasses.

The effective radius of an edge e is the smallest annulus scale N at which
every pair of truncated-weight crossing geodesics of the annulus around e can
be linked by a q-open path of length at most span_factor * N inside the
annulus. Two evaluation routes are provided:

* exact mode enumerates all crossing geodesic segments (depth-first over
  tight edges of per-source distance fields, capped per endpoint pair) and
  checks all pairs by bitset ball intersections; feasible for small N;
* certificate mode evaluates the three-condition good-box predicate
  (crossing cluster in every sub-box, short local q-distances, long
  truncated geodesics meet the cluster), which implies the exact condition
  and scales to larger N.

Censoring is reported, never silently replaced by a value.

Annulus conventions: the annulus around e with scale N has vertex radii
(N, 3N] relative to the lower endpoint of e; crossing paths and q-connector
distances use its closure, radii [N, 3N], with crossing-path endpoints on
the two extreme rings. The boundary of the open annulus, used by the deep
zone of certificate condition (ii), consists of the rings N+1 and 3N.
"""

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from . import _kernels as K
from .environment import CoupledEnvironment, EnvironmentParams
from .lattice import (
    AnnulusRegion,
    BoxRegion,
    CanonicalEdge,
    Site,
    canonicalize,
    flatten_sites,
    grid_coords,
    path_edges,
)
from .passage import WeightView, passage_time
from .percolation import chemical_path, crossing_report, label_clusters

EXACT_SCAN_LIMIT = {2: 6, 3: 3}


class WindowTooSmallError(ValueError):
    """The environment window does not cover the box the check needs."""


@dataclass(frozen=True)
class RadiusParams:
    """Tunables of the radius machinery.

    span_factor is the budget multiplier (the checker accepts N once all
    crossing-geodesic pairs are within span_factor*N q-steps); stretch is
    the certificate's aspect parameter (sub-box scale N_rho = N//(8*stretch^2));
    H is the weight truncation level defining the geodesics under test.
    """

    H: float
    span_factor: int = 10
    stretch: int = 1
    nmax: int = 32
    enum_cap: int = 10_000
    step_cap: int = 5_000_000
    path_buffer: int = 4_000_000
    offset_buffer: int = 400_000
    max_paths: int = 20_000
    fraction: float = 0.1
    exact_limit: Optional[int] = None

    def __post_init__(self):
        if self.span_factor < 3:
            raise ValueError("span_factor must be >= 3")
        if self.stretch < 1:
            raise ValueError("stretch must be a positive integer")
        if self.H <= 0:
            raise ValueError("H must be positive")

    def n_rho(self, N: int) -> int:
        return N // (8 * self.stretch * self.stretch)

    def certificate_start(self) -> int:
        return max(3, 8 * self.stretch * self.stretch)

    def exact_scan_limit(self, d: int) -> int:
        if self.exact_limit is not None:
            return self.exact_limit
        return EXACT_SCAN_LIMIT.get(d, 3)


@dataclass
class GoodBoxReport:
    """Outcome of the three good-box conditions at one scale N.

    Lazily evaluated conditions that were skipped after an earlier failure
    are None. witness carries the offending sub-box origin, vertex pair, or
    geodesic endpoint pair for whichever condition failed.
    """

    N: int
    crossing_ok: Optional[bool]
    links_ok: Optional[bool]
    meets_ok: Optional[bool]
    cluster_id: Optional[int] = None
    witness: dict = field(default_factory=dict)

    @property
    def good(self) -> bool:
        return bool(self.crossing_ok and self.links_ok and self.meets_ok)


@dataclass
class ExactCheck:
    """Outcome of the enumeration-based crossing-geodesic condition at N.

    shortcut=True means acceptance was decided by start linkage (every
    crossing geodesic passes through its inner-ring start vertex, so
    pairwise q-linkage of the active starts within the budget implies the
    full pair condition) and no enumeration was needed.
    """

    N: int
    ok: Optional[bool]
    overflow: bool
    n_paths: int
    shortcut: bool = False
    witness: dict = field(default_factory=dict)


@dataclass(frozen=True)
class RadiusResult:
    edge: CanonicalEdge
    value: Optional[int]
    censored: bool
    bound: int
    method: str
    overflow: bool = False
    trail: Tuple = ()

    def at_least(self, t: int) -> bool:
        """Whether the (possibly censored) radius is known to be >= t."""
        if self.value is not None:
            return self.value >= t
        return t <= self.bound


def _edge_center(e: CanonicalEdge) -> Site:
    return e.x


def _require_window(env: CoupledEnvironment, center: Site, radius: int):
    box = BoxRegion(center, radius)
    lo, hi = box.bbox()
    if not (env.window.contains_site(lo) and env.window.contains_site(hi)):
        raise WindowTooSmallError(
            f"environment window must cover a radius-{radius} box at {center}"
        )


def _box_radii(center: Site, lo, dims) -> np.ndarray:
    coords = grid_coords(lo, dims)
    return np.abs(coords - np.asarray(center, dtype=np.int64)).max(axis=1)


def _cond_crossing(dims3, qopen3, in_cluster, m: int):
    if m < 1:
        raise ValueError("certificate needs N_rho >= 1")
    bad = K.subbox_crossing_scan(
        np.asarray(dims3, dtype=np.int64), qopen3, in_cluster, m
    )
    if bad < 0:
        return True, None
    return False, int(bad)


def _cond_links(env, params, rparams, center, N, lo3, dims3, qopen3, in_cluster):
    radii = _box_radii(center, lo3, dims3)
    deep = (2 * radii >= 3 * N + 2) & (2 * radii <= 5 * N)
    n_rho = rparams.n_rho(N)
    bound = 4 * rparams.stretch * n_rho
    n_viol, wx, wy, unresolved = K.local_links_scan(
        np.asarray(dims3, dtype=np.int64),
        qopen3,
        deep,
        in_cluster,
        2 * n_rho,
        bound,
    )
    coords = grid_coords(lo3, dims3)
    if n_viol:
        pair = (tuple(map(int, coords[wx])), tuple(map(int, coords[wy])))
        return False, pair
    if unresolved.shape[0]:
        # connectivity not decidable inside Lambda_3N: label the big box
        bigbox = BoxRegion(center, rparams.span_factor * N)
        labeling = label_clusters(env, bigbox, params, openness="q")
        for fx, fy in unresolved:
            sx = tuple(map(int, coords[fx]))
            sy = tuple(map(int, coords[fy]))
            if labeling.label_at(sx) == labeling.label_at(sy):
                return False, (sx, sy)
    return True, None


def _cond_meets(env, params, rparams, center, N, lo3, dims3, in_cluster):
    n_rho = rparams.n_rho(N)
    d = len(center)
    nv3 = int(np.prod(dims3))
    all_edges = np.ones((d, nv3), dtype=bool)
    comp_labels, n_comp = K.flood_components(
        np.asarray(dims3, dtype=np.int64), all_edges, ~in_cluster
    )
    if n_comp == 0:
        return True, None
    coords = grid_coords(lo3, dims3)
    bigbox = BoxRegion(center, rparams.span_factor * N)
    big_view = WeightView(env=env, params=params, M=rparams.H, region=bigbox)
    for cid in range(n_comp):
        sel = comp_labels == cid
        size = int(sel.sum())
        if size < 2:
            continue
        mcoords = coords[sel]
        spread = mcoords.max(axis=0) - mcoords.min(axis=0)
        if int(spread.max()) < n_rho:
            continue
        clo = tuple(int(c) for c in mcoords.min(axis=0))
        cdims = tuple(int(s) + 1 for s in spread)
        cmask = np.zeros(int(np.prod(cdims)), dtype=bool)
        local_flats = flatten_sites(clo, cdims, mcoords)
        cmask[local_flats] = True
        wloc = env.weight_grid(clo, cdims, params.p, rparams.H)
        for u_idx in range(size - 1):
            # row at a time keeps memory linear in the component size
            far = (
                np.abs(mcoords[u_idx + 1 :] - mcoords[u_idx]).max(axis=1) >= n_rho
            )
            if not far.any():
                continue
            u_site = tuple(int(c) for c in mcoords[u_idx])
            dist_r, _, _ = K.dijkstra_grid(
                np.asarray(cdims, dtype=np.int64),
                wloc,
                cmask,
                np.asarray([local_flats[u_idx]], dtype=np.int64),
            )
            for v_idx in np.flatnonzero(far) + u_idx + 1:
                v_site = tuple(int(c) for c in mcoords[v_idx])
                t_restricted = float(dist_r[local_flats[v_idx]])
                t_big = passage_time(big_view, u_site, v_site)
                if t_restricted == t_big:
                    return False, (u_site, v_site)
    return True, None


def good_box_check(
    env: CoupledEnvironment,
    e: CanonicalEdge,
    N: int,
    params: EnvironmentParams,
    rparams: RadiusParams,
    lazy: bool = False,
) -> GoodBoxReport:
    """Evaluate the three-condition certificate at scale N around edge e.

    With lazy=True later conditions are skipped (left None) after the first
    failure; the full report always evaluates all three.
    """
    if rparams.n_rho(N) < 1:
        raise ValueError(f"certificate needs N >= {rparams.certificate_start()}")
    center = _edge_center(e)
    _require_window(env, center, rparams.span_factor * N)
    box3 = BoxRegion(center, 3 * N)
    lo3, hi3 = box3.bbox()
    dims3 = tuple(h - l + 1 for l, h in zip(lo3, hi3))
    qopen3 = env.open_grid(lo3, dims3, params.p, params.lam)
    labeling = label_clusters(env, box3, params, openness="q")
    candidates = crossing_report(labeling).crossing_ids

    if not candidates:
        report = GoodBoxReport(
            N=N,
            crossing_ok=False,
            links_ok=None,
            meets_ok=None,
            witness={"crossing": "no crossing cluster"},
        )
        if not lazy:
            no_cluster = np.zeros(int(np.prod(dims3)), dtype=bool)
            report.links_ok, wit = _cond_links(
                env, params, rparams, center, N, lo3, dims3, qopen3, no_cluster
            )
            if wit:
                report.witness["links"] = wit
        return report

    links_cache = None
    first_report = None
    for cid in candidates:
        in_cluster = labeling.labels == cid
        report = GoodBoxReport(
            N=N, crossing_ok=None, links_ok=None, meets_ok=None, cluster_id=int(cid)
        )
        ok_i, wit_i = _cond_crossing(dims3, qopen3, in_cluster, rparams.n_rho(N))
        report.crossing_ok = ok_i
        if wit_i is not None:
            report.witness["crossing"] = tuple(
                map(int, grid_coords(lo3, dims3)[wit_i])
            )
        if lazy and not ok_i:
            first_report = first_report or report
            continue
        if links_cache is None:
            links_cache = _cond_links(
                env, params, rparams, center, N, lo3, dims3, qopen3, in_cluster
            )
        report.links_ok, wit_ii = links_cache
        if wit_ii:
            report.witness["links"] = wit_ii
        if lazy and not report.links_ok:
            first_report = first_report or report
            continue
        report.meets_ok, wit_iii = _cond_meets(
            env, params, rparams, center, N, lo3, dims3, in_cluster
        )
        if wit_iii:
            report.witness["meets"] = wit_iii
        if report.good:
            return report
        first_report = first_report or report
    return first_report


def exact_condition_check(
    env: CoupledEnvironment,
    e: CanonicalEdge,
    N: int,
    params: EnvironmentParams,
    rparams: RadiusParams,
) -> ExactCheck:
    """Enumerate crossing geodesic segments of the annulus at scale N and
    test every pair for q-linkage within span_factor*N steps.

    Enumeration walks tight edges (dist[b] == dist[a] + w exactly) of the
    per-source distance field over the full span_factor*N box, restricted to
    the closed annulus, starting on the inner ring and stopping at the first
    outer-ring hit. Every crossing geodesic contains an enumerated one as a
    sub-path, and the pair condition is monotone under taking sub-paths, so
    checking enumerated pairs decides the full condition. Overflow of any
    cap is reported for the caller to fall back to the certificate.
    """
    if N < 3:
        raise ValueError("annulus scale starts at N = 3")
    center = _edge_center(e)
    big_r = rparams.span_factor * N
    _require_window(env, center, big_r)
    bigbox = BoxRegion(center, big_r)
    blo, bhi = bigbox.bbox()
    bdims = tuple(h - l + 1 for l, h in zip(blo, bhi))
    nvb = int(np.prod(bdims))
    dims_arr = np.asarray(bdims, dtype=np.int64)
    weights = env.weight_grid(blo, bdims, params.p, rparams.H)
    qopen = env.open_grid(blo, bdims, params.p, params.lam)
    radii = _box_radii(center, blo, bdims)
    ring_in = radii == N
    ring_out = radii == 3 * N
    ann_mask = (radii >= N) & (radii <= 3 * N)

    full_mask = np.ones(nvb, dtype=bool)
    budget = rparams.span_factor * N

    # phase 1: distance field per inner-ring start, keeping only starts that
    # launch at least one crossing geodesic
    starts = []
    fields = []
    for a in np.flatnonzero(ring_in):
        dist_a, _, _ = K.dijkstra_grid(
            dims_arr, weights, full_mask, np.asarray([a], dtype=np.int64)
        )
        region_mask = ann_mask & ~ring_in
        region_mask[a] = True
        if K.tight_reachable(dims_arr, weights, dist_a, region_mask, ring_out, a):
            starts.append(int(a))
            fields.append(dist_a)
    if not starts:
        return ExactCheck(N=N, ok=True, overflow=False, n_paths=0)

    # phase 2: every crossing geodesic contains its start, so pairwise
    # q-linkage of the starts inside the closed annulus settles acceptance
    start_arr = np.asarray(starts, dtype=np.int64)
    linked = True
    for a in starts:
        qd, _ = K.bfs_grid(
            dims_arr, qopen, ann_mask, np.asarray([a], dtype=np.int64), budget
        )
        if not np.all(qd[start_arr] >= 0):
            linked = False
            break
    if linked:
        return ExactCheck(N=N, ok=True, overflow=False, n_paths=0, shortcut=True)

    # phase 3: full enumeration and pairwise ball intersection
    out_paths = np.empty(rparams.path_buffer, dtype=np.int64)
    out_offsets = np.empty(rparams.offset_buffer, dtype=np.int64)
    dedup = {}
    for a, dist_a in zip(starts, fields):
        region_mask = ann_mask & ~ring_in
        region_mask[a] = True
        n_paths, _, ovf = K.enumerate_tight_paths(
            dims_arr,
            weights,
            dist_a,
            region_mask,
            ring_out,
            a,
            rparams.enum_cap,
            rparams.step_cap,
            out_paths,
            out_offsets,
        )
        if ovf:
            return ExactCheck(N=N, ok=None, overflow=True, n_paths=len(dedup))
        pos = 0
        for i in range(n_paths):
            end = int(out_offsets[i])
            p_arr = np.sort(out_paths[pos:end].copy())
            pos = end
            dedup.setdefault(p_arr.tobytes(), p_arr)
        if len(dedup) > rparams.max_paths:
            return ExactCheck(N=N, ok=None, overflow=True, n_paths=len(dedup))

    if not dedup:
        return ExactCheck(N=N, ok=True, overflow=False, n_paths=0)

    paths = list(dedup.values())
    members = np.concatenate(paths)
    offsets = np.cumsum([len(p) for p in paths]).astype(np.int64)
    compact = np.full(nvb, -1, dtype=np.int64)
    ann_flats = np.flatnonzero(ann_mask)
    compact[ann_flats] = np.arange(ann_flats.size)
    nwords = (ann_flats.size + 63) >> 6
    balls, vsets = K.ball_bitsets(
        dims_arr,
        qopen,
        ann_mask,
        members,
        offsets,
        rparams.span_factor * N,
        nwords,
        compact,
    )
    i, j = K.pairwise_ball_check_fast(balls, vsets)
    if i < 0:
        return ExactCheck(N=N, ok=True, overflow=False, n_paths=len(paths))
    coords = grid_coords(blo, bdims)

    def _ends(p_arr):
        ends = p_arr[np.isin(p_arr, np.flatnonzero(ring_in | ring_out))]
        return tuple(tuple(map(int, coords[v])) for v in ends[:2])

    return ExactCheck(
        N=N,
        ok=False,
        overflow=False,
        n_paths=len(paths),
        witness={"pair": (_ends(paths[i]), _ends(paths[j]))},
    )


def effective_radius(
    env: CoupledEnvironment,
    e: CanonicalEdge,
    params: EnvironmentParams,
    rparams: RadiusParams,
    mode: str = "auto",
) -> RadiusResult:
    """Smallest accepted annulus scale for e, or a censored result.

    mode='exact' scans N=3..exact_scan_limit by enumeration; 'certificate'
    scans N=certificate_start..nmax by the good-box predicate; 'auto' runs
    the exact scan first and continues with the certificate. Enumeration
    overflow always falls back to the certificate.
    """
    if mode not in ("exact", "certificate", "auto"):
        raise ValueError("mode must be exact, certificate or auto")
    d = len(e.x)
    trail = []
    overflow = False
    if mode in ("exact", "auto"):
        hi = min(rparams.exact_scan_limit(d), rparams.nmax)
        for N in range(3, hi + 1):
            chk = exact_condition_check(env, e, N, params, rparams)
            trail.append(chk)
            if chk.overflow:
                overflow = True
                break
            if chk.ok:
                return RadiusResult(
                    edge=e,
                    value=N,
                    censored=False,
                    bound=hi,
                    method="exact",
                    trail=tuple(trail),
                )
        if mode == "exact" and not overflow:
            return RadiusResult(
                edge=e,
                value=None,
                censored=True,
                bound=hi,
                method="exact",
                trail=tuple(trail),
            )
    start = rparams.certificate_start()
    for N in range(start, rparams.nmax + 1):
        if rparams.n_rho(N) < 1:
            continue
        rep = good_box_check(env, e, N, params, rparams, lazy=True)
        trail.append(rep)
        if rep is not None and rep.good:
            return RadiusResult(
                edge=e,
                value=N,
                censored=False,
                bound=rparams.nmax,
                method="certificate",
                overflow=overflow,
                trail=tuple(trail),
            )
    return RadiusResult(
        edge=e,
        value=None,
        censored=True,
        bound=rparams.nmax,
        method="certificate" if mode != "exact" else "exact",
        overflow=overflow,
        trail=tuple(trail),
    )


@dataclass(frozen=True)
class SurvivalTable:
    """Right tail of sampled radii: row (t, #{R >= t}, total, #censored)."""

    t_grid: Tuple[int, ...]
    n_ge_t: Tuple[int, ...]
    n_total: int
    n_censored: int

    def survival(self, idx: int) -> float:
        return self.n_ge_t[idx] / self.n_total

    def rows(self):
        return [
            (t, self.n_ge_t[i], self.n_total, self.n_censored)
            for i, t in enumerate(self.t_grid)
        ]


def radius_tail(
    seeds: Sequence[int],
    params: EnvironmentParams,
    rparams: RadiusParams,
    t_grid: Sequence[int],
    mode: str = "auto",
    edge: Optional[CanonicalEdge] = None,
) -> SurvivalTable:
    """Empirical radius survival over an ensemble of environments.

    One radius per seed, at the canonical edge unless one is given. Censored
    radii count toward every t within the censoring bound, and the censored
    count is reported alongside.
    """
    if len(seeds) < 1:
        raise ValueError("need at least one seed")
    d = params.d
    if edge is None:
        o = tuple(0 for _ in range(d))
        edge = canonicalize(o, (1,) + (0,) * (d - 1))
    # certificate fallback is reachable from every mode, so the window must
    # cover the largest certificate box
    need = rparams.span_factor * rparams.nmax
    window = BoxRegion(edge.x, need + 2)
    results = []
    for seed in seeds:
        env = CoupledEnvironment(window=window, seed=int(seed), law=params.law)
        results.append(effective_radius(env, edge, params, rparams, mode=mode))
    n_ge = tuple(sum(1 for r in results if r.at_least(t)) for t in t_grid)
    return SurvivalTable(
        t_grid=tuple(int(t) for t in t_grid),
        n_ge_t=n_ge,
        n_total=len(results),
        n_censored=sum(1 for r in results if r.censored),
    )


@dataclass(frozen=True)
class BypassResult:
    """A constructed bypass with its verified properties.

    rejected carries a precondition failure; feasible=False with empty
    rejected means no q-open connector existed in the annulus (a censoring
    artifact or an invalid radius). The boolean fields are the verified
    claims: eta avoids the radius-(R-1) box, its new edges are all q-open,
    and it adds at most span_factor*R edges.
    """

    edge: CanonicalEdge
    radius: int
    feasible: bool
    rejected: Optional[str] = None
    gamma1: Optional[Tuple[Site, ...]] = None
    gamma2: Optional[Tuple[Site, ...]] = None
    connector: Optional[Tuple[Site, ...]] = None
    eta: Optional[Tuple[Site, ...]] = None
    avoids_inner: Optional[bool] = None
    new_edges_q_open: Optional[bool] = None
    extra_edges: Optional[int] = None
    within_budget: Optional[bool] = None

    @property
    def ok(self) -> bool:
        return bool(
            self.feasible
            and self.avoids_inner
            and self.new_edges_q_open
            and self.within_budget
        )


def build_bypass(
    gamma: Sequence[Site],
    e: CanonicalEdge,
    R: int,
    env: CoupledEnvironment,
    params: EnvironmentParams,
    rparams: RadiusParams,
) -> BypassResult:
    """Splice a q-open connector between the first and last crossings of the
    radius-R annulus around e, yielding a path from gamma's endpoints that
    avoids e's neighbourhood; verifies the avoidance, openness and length
    properties rather than assuming them."""
    verts = [tuple(int(c) for c in v) for v in gamma]
    if len(verts) < 2:
        return BypassResult(edge=e, radius=R, feasible=False, rejected="degenerate path")
    if len(set(verts)) != len(verts):
        return BypassResult(
            edge=e, radius=R, feasible=False, rejected="path revisits a vertex"
        )
    gamma_edges = set(path_edges(verts))
    if e not in gamma_edges:
        return BypassResult(edge=e, radius=R, feasible=False, rejected="edge not on path")
    center = _edge_center(e)
    radii = [max(abs(v[k] - center[k]) for k in range(len(center))) for v in verts]
    if radii[0] <= 3 * R or radii[-1] <= 3 * R:
        return BypassResult(
            edge=e, radius=R, feasible=False, rejected="endpoint inside 3R box"
        )
    inner_hits = [i for i, r in enumerate(radii) if r == R]
    outer_hits = [i for i, r in enumerate(radii) if r == 3 * R]
    if not inner_hits or not outer_hits:
        return BypassResult(
            edge=e, radius=R, feasible=False, rejected="path does not cross annulus"
        )
    i_plus = min(inner_hits)
    i_minus = max(i for i in outer_hits if i <= i_plus)
    o_minus = max(inner_hits)
    o_plus = min(i for i in outer_hits if i >= o_minus)
    gamma1 = tuple(verts[i_minus : i_plus + 1])
    gamma2 = tuple(verts[o_minus : o_plus + 1])

    annulus = AnnulusRegion(center, R, closed=True)
    dist, connector = chemical_path(env, params, "q", annulus, gamma1, gamma2)
    if connector is None:
        return BypassResult(
            edge=e,
            radius=R,
            feasible=False,
            gamma1=gamma1,
            gamma2=gamma2,
        )
    z1, z2 = connector[0], connector[-1]
    iz1 = verts.index(z1)
    iz2 = verts.index(z2)
    eta = tuple(verts[: iz1 + 1]) + tuple(connector[1:]) + tuple(verts[iz2 + 1 :])

    inner_box = BoxRegion(center, R - 1)
    avoids = not any(inner_box.contains_site(v) for v in eta)
    new_edges = [ed for ed in path_edges(eta) if ed not in gamma_edges]
    all_q_open = all(env.is_q_open(ed, params.p, params.lam) for ed in new_edges)
    extra = len(new_edges)
    return BypassResult(
        edge=e,
        radius=R,
        feasible=True,
        gamma1=gamma1,
        gamma2=gamma2,
        connector=tuple(connector),
        eta=eta,
        avoids_inner=avoids,
        new_edges_q_open=all_q_open,
        extra_edges=extra,
        within_budget=extra <= rparams.span_factor * R,
    )
