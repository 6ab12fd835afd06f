"""Greedy lattice animals over paths: exact maximization and bound probes.

Gamma(gamma) sums per-edge Bernoulli indicators along a self-avoiding path
from a start vertex, and Gamma_{L,N} maximizes over all such paths with at
most L edges. The maximization is exact (depth-first with branch-and-bound)
up to a guarded L; beyond that only a flagged stochastic lower bound is
offered. Indicator sources: i.i.d. Bernoulli fields from an auxiliary
randomness stream, and effective-radius class indicators 1{R in [N-1, N)}
whose dependency range is inherited from radius locality.
"""

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from . import _kernels as K
from .environment import CoupledEnvironment, EnvironmentParams, derive_seed
from .lattice import (
    BoxRegion,
    CanonicalEdge,
    Site,
    box_edges,
    flatten_sites,
    grid_strides,
    path_edges,
)
from .passage import WeightView, passage_time_and_path
from .radius import RadiusParams, exact_condition_check

EXACT_L_GUARD = {2: 14, 3: 9}


@dataclass(frozen=True)
class IndicatorField:
    """Per-edge 0/1 values on a dense box, with declared dependence metadata.

    values[k, flat(v)] is the indicator of edge (v, v + e_k); edges leaving
    the box are zero. dependency_range is the radius within which indicators
    may depend on each other (0 for i.i.d. sources); mean_bound is the
    declared upper bound q_N on each indicator's mean.
    """

    lo: Site
    dims: Site
    values: np.ndarray
    N: int
    dependency_range: float
    mean_bound: Optional[float]
    excluded: int = 0

    def indicator(self, e: CanonicalEdge) -> int:
        # grids store edge (v, v + e_k) at [k, flat(v)]: key on the
        # geometric lower endpoint, not the canonical orientation
        flat = int(flatten_sites(self.lo, self.dims, np.asarray([e.lower()]))[0])
        return int(self.values[e.axis, flat])

    def covers(self, box: BoxRegion) -> bool:
        lo, hi = box.bbox()
        mine_hi = tuple(l + s - 1 for l, s in zip(self.lo, self.dims))
        return all(a >= b for a, b in zip(lo, self.lo)) and all(
            a <= b for a, b in zip(hi, mine_hi)
        )

    def mean_value(self) -> float:
        """Empirical mean over interior edges (the padded last slices along
        each axis carry no edge and are skipped)."""
        d = len(self.dims)
        total = 0
        count = 0
        for k in range(d):
            sl = self.values[k].reshape(self.dims)
            idx = [slice(None)] * d
            idx[k] = slice(0, self.dims[k] - 1)
            total += int(sl[tuple(idx)].sum())
            count += sl[tuple(idx)].size
        return total / count


@dataclass(frozen=True)
class AnimalResult:
    L: int
    value: int
    path: Tuple[Site, ...]
    exact: bool = True

    def __post_init__(self):
        if len(set(self.path)) != len(self.path):
            raise ValueError("animal path must be self-avoiding")
        if len(self.path) - 1 > self.L:
            raise ValueError("animal path exceeds its length budget")


def bernoulli_field(
    env: CoupledEnvironment, box: BoxRegion, N: int, q_N: float
) -> IndicatorField:
    """I.i.d. Bernoulli(q_N) indicators from the auxiliary stream, so they
    are independent of the environment's weights."""
    if not 0.0 <= q_N <= 1.0:
        raise ValueError("q_N must be a probability")
    lo, hi = box.bbox()
    dims = tuple(h - l + 1 for l, h in zip(lo, hi))
    grid = env.auxiliary_grid(lo, dims)
    values = (grid <= q_N).astype(np.int64)
    d = len(dims)
    for k in range(d):
        sl = values[k].reshape(dims)
        idx = [slice(None)] * d
        idx[k] = dims[k] - 1
        sl[tuple(idx)] = 0
    return IndicatorField(
        lo=lo,
        dims=dims,
        values=values,
        N=N,
        dependency_range=0.0,
        mean_bound=q_N,
    )


def exact_radius_value(
    env: CoupledEnvironment,
    e: CanonicalEdge,
    params: EnvironmentParams,
    rparams: RadiusParams,
    upto: Optional[int] = None,
):
    """Scan annulus scales from 3 upward by exact enumeration until the
    first acceptance. Returns (value, settled): value None with settled True
    means every scale up to the limit was genuinely rejected; settled False
    means an enumeration overflow stopped the scan undecided."""
    limit = upto if upto is not None else rparams.exact_scan_limit(params.d)
    for t in range(3, limit + 1):
        chk = exact_condition_check(env, e, t, params, rparams)
        if chk.overflow:
            return None, False
        if chk.ok:
            return t, True
    return None, True


def indicator_from_radius(
    env: CoupledEnvironment,
    params: EnvironmentParams,
    rparams: RadiusParams,
    N: int,
    box: BoxRegion,
    mean_bound: Optional[float] = None,
) -> IndicatorField:
    """Radius class indicators I = 1{R in [N-1, N)} on the box's edges.

    Integer radii make this 1{R == N-1}; a scan settled below N-1 or
    rejected through N-1 gives a definite 0, an acceptance at N-1 gives 1,
    and only overflow-undecided edges are excluded (forced to 0, counted).
    """
    if N < 4:
        raise ValueError("radius classes start at N = 4 (R >= 3 always)")
    d = params.d
    if N - 1 > rparams.exact_scan_limit(d):
        raise ValueError("radius class above the exact enumeration guard")
    lo, hi = box.bbox()
    dims = tuple(h - l + 1 for l, h in zip(lo, hi))
    values = np.zeros((d, int(np.prod(dims))), dtype=np.int64)
    excluded = 0
    for e in box_edges(box):
        value, settled = exact_radius_value(env, e, params, rparams, upto=N - 1)
        if not settled:
            excluded += 1
            continue
        if value == N - 1:
            flat = int(flatten_sites(lo, dims, np.asarray([e.lower()]))[0])
            values[e.axis, flat] = 1
    return IndicatorField(
        lo=lo,
        dims=dims,
        values=values,
        N=N,
        dependency_range=2.0 * rparams.span_factor * N,
        mean_bound=mean_bound,
        excluded=excluded,
    )


def _check_animal_domain(field: IndicatorField, start: Site, L: int):
    if not field.covers(BoxRegion(start, L)):
        raise ValueError(
            "field must cover the radius-L box around the start vertex"
        )


def gamma_max(
    field: IndicatorField,
    L: int,
    start: Optional[Site] = None,
    guard: Optional[int] = None,
) -> AnimalResult:
    """Exact Gamma_{L,N}: max indicator sum over self-avoiding paths with at
    most L edges from the start (origin by default).

    Rejected above the exactness guard; use gamma_anneal there instead.
    """
    d = len(field.dims)
    if start is None:
        start = tuple(0 for _ in range(d))
    limit = guard if guard is not None else EXACT_L_GUARD.get(d, 8)
    if L > limit:
        raise ValueError(
            f"L={L} exceeds the exact-maximization guard {limit}; "
            "gamma_anneal provides a flagged lower bound"
        )
    if L < 0:
        raise ValueError("L must be non-negative")
    _check_animal_domain(field, start, L)
    start_flat = int(flatten_sites(field.lo, field.dims, np.asarray([start]))[0])
    best, best_path, best_len = K.animal_best_sum(
        np.asarray(field.dims, dtype=np.int64), field.values, start_flat, L
    )
    strides = grid_strides(field.dims)
    path = []
    for flat in best_path[:best_len]:
        rem = int(flat)
        site = []
        for k in range(d):
            site.append(field.lo[k] + (rem // strides[k]) % field.dims[k])
        path.append(tuple(site))
    return AnimalResult(L=L, value=int(best), path=tuple(path), exact=True)


def _gamma_of(field: IndicatorField, path: Sequence[Site]) -> int:
    return sum(field.indicator(e) for e in path_edges(list(path)))


def gamma_anneal(
    field: IndicatorField,
    L: int,
    start: Optional[Site] = None,
    seed: int = 0,
    sweeps: int = 4000,
) -> AnimalResult:
    """Stochastic lower bound on Gamma_{L,N}: truncate-and-regrow proposals
    with a geometric cooling schedule. Never exact; the result is flagged."""
    d = len(field.dims)
    if start is None:
        start = tuple(0 for _ in range(d))
    _check_animal_domain(field, start, L)
    rng = np.random.default_rng(seed)
    lo = field.lo
    hi = tuple(l + s - 1 for l, s in zip(lo, field.dims))

    def regrow(prefix):
        path = list(prefix)
        used = set(path)
        while len(path) - 1 < L:
            v = path[-1]
            options = []
            for k in range(d):
                for sgn in (1, -1):
                    u = tuple(v[j] + (sgn if j == k else 0) for j in range(d))
                    if u in used or any(
                        not (lo[j] <= u[j] <= hi[j]) for j in range(d)
                    ):
                        continue
                    options.append(u)
            if not options:
                break
            u = options[rng.integers(len(options))]
            path.append(u)
            used.add(u)
        return path

    current = regrow([start])
    cur_val = _gamma_of(field, current)
    best, best_path = cur_val, list(current)
    temp = 1.0
    for _ in range(sweeps):
        cut = int(rng.integers(1, max(2, len(current))))
        proposal = regrow(current[:cut])
        val = _gamma_of(field, proposal)
        if val >= cur_val or rng.random() < math.exp((val - cur_val) / temp):
            current, cur_val = proposal, val
            if val > best:
                best, best_path = val, list(proposal)
        temp = max(0.05, temp * 0.999)
    return AnimalResult(L=L, value=best, path=tuple(best_path), exact=False)


@dataclass(frozen=True)
class BoundRow:
    L: int
    N: int
    q_N: float
    mean_gamma: float
    stderr: float
    ratio: Optional[float]


def bound_check(
    field_factory: Callable[[int], IndicatorField],
    L_grid: Sequence[int],
    replicas: int,
) -> list:
    """Monte Carlo E[Gamma_{L,N}] against the L * N^d * q_N^(1/d) scaling.

    One field per replica (factory receives the replica index); the inner
    maximization is exact. Ratio is None when q_N = 0 (Gamma is then 0
    almost surely and the bound holds trivially).
    """
    if replicas < 2:
        raise ValueError("need at least two replicas for a standard error")
    sums = {L: [] for L in L_grid}
    meta = None
    for r in range(replicas):
        field = field_factory(r)
        if meta is None:
            meta = (field.N, field.mean_bound, len(field.dims))
        elif (field.N, field.mean_bound, len(field.dims)) != meta:
            raise ValueError("all replica fields must share N, q_N and d")
        for L in L_grid:
            sums[L].append(gamma_max(field, L).value)
    N, q_N, d = meta
    if q_N is None:
        raise ValueError("bound_check needs fields with a declared mean bound")
    rows = []
    for L in L_grid:
        vals = np.asarray(sums[L], dtype=np.float64)
        mean = float(vals.mean())
        stderr = float(vals.std(ddof=1) / math.sqrt(replicas))
        if q_N == 0.0:
            ratio = None
        else:
            ratio = mean / (L * N**d * q_N ** (1.0 / d))
        rows.append(
            BoundRow(L=L, N=N, q_N=q_N, mean_gamma=mean, stderr=stderr, ratio=ratio)
        )
    return rows


@dataclass(frozen=True)
class PathSumRow:
    n: int
    replicas: int
    mean_sum_ratio: float
    stderr: float
    mean_length_ratio: float
    p_length_ge_4n: float
    censored_fraction: float


def path_sum_bound_check(
    params: EnvironmentParams,
    rparams: RadiusParams,
    n_grid: Sequence[int],
    replicas: int,
    master_seed: int,
) -> list:
    """Mean of the radius sum along truncated box-restricted geodesics.

    Per replica: the canonical geodesic of the truncated passage time from
    the origin to n*e1 in the side-n^2 box, then the exact radius of each
    of its edges (scanned up to the enumeration guard). Undecided radii are
    excluded from the sum and reported as a censored fraction; lengths feed
    the P(|gamma| >= 4n) diagnostic.
    """
    if replicas < 2:
        raise ValueError("need at least two replicas for a standard error")
    d = params.d
    origin = tuple(0 for _ in range(d))
    rows = []
    for n in n_grid:
        M = math.log(float(n)) ** 3
        window = BoxRegion(origin, n * n)
        target = (n,) + (0,) * (d - 1)
        ratios = []
        lengths = []
        censored = 0
        edges_total = 0
        for r in range(replicas):
            seed = derive_seed(master_seed, r)
            env = CoupledEnvironment(window=window, seed=seed, law=params.law)
            view = WeightView(env=env, params=params, M=M, region=window)
            _, geo = passage_time_and_path(view, origin, target)
            lengths.append(len(geo.vertices) - 1)
            total = 0.0
            for e in path_edges(list(geo.vertices)):
                edges_total += 1
                value, settled = exact_radius_value(env, e, params, rparams)
                if value is None:
                    censored += 1
                    continue
                if value <= M:
                    total += value
            ratios.append(total / n)
        arr = np.asarray(ratios, dtype=np.float64)
        lens = np.asarray(lengths, dtype=np.float64)
        rows.append(
            PathSumRow(
                n=n,
                replicas=replicas,
                mean_sum_ratio=float(arr.mean()),
                stderr=float(arr.std(ddof=1) / math.sqrt(replicas)),
                mean_length_ratio=float(lens.mean() / n),
                p_length_ge_4n=float((lens >= 4 * n).mean()),
                censored_fraction=censored / max(1, edges_total),
            )
        )
    return rows
