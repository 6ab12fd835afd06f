"""Monte Carlo estimators for the time constant and its p-dependence.

Every experiment draws replica r from the deterministic seed stream
derive_seed(master_seed, r), so a scan over p reuses the same environments
point for point: common random numbers. Under that coupling, raising p can
only open edges and never raises a weight, so per-replica passage times are
monotone in p exactly, not just in distribution. The scan estimators lean on
this twice: once as a correctness assertion, once for variance reduction in
slopes and finite differences.

The Russo identity checker is the one exact piece: on a tiny edge set it
enumerates every state assignment with Fraction arithmetic and compares the
polynomial derivative of E[X] against the per-edge resampling sum. Both
sides come from independent enumerations, so agreement is a real check, not
a tautology.
"""

import math
from dataclasses import dataclass
from fractions import Fraction
from itertools import product
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .environment import (
    TAG_RESAMPLE,
    CoupledEnvironment,
    EnvironmentParams,
    WeightLaw,
    derive_seed,
    edge_uniforms,
)
from .lattice import (
    BoxRegion,
    CanonicalEdge,
    Site,
    canonicalize,
    flatten_sites,
    grid_strides,
)
from .passage import (
    WeightView,
    default_regularization_window,
    passage_time,
    passage_time_and_path,
    regularized_time,
)
from .percolation import (
    RegularizationUnavailableError,
    chemical_path,
    closest_point,
    hole_size,
    label_clusters,
)


class CRNViolationError(ValueError):
    """Grid points fed to a coupled scan did not share replica seeds."""


def _origin(d: int) -> Site:
    return (0,) * d


def _axis_target(d: int, n: int) -> Site:
    return (n,) + (0,) * (d - 1)


def _mean_stderr(values: Sequence[float]) -> Tuple[float, float]:
    arr = np.asarray(list(values), dtype=np.float64)
    if arr.size == 0:
        return math.nan, math.nan
    mean = float(np.mean(arr))
    if arr.size < 2:
        return mean, 0.0
    return mean, float(np.std(arr, ddof=1) / math.sqrt(arr.size))


# ---------------------------------------------------------------------------
# experiment configuration


@dataclass
class ExperimentConfig:
    """Sampling plan for one environment family.

    The truncation M and restriction box radius K default to (log n)^3 and
    n^2; overrides replace the value, not the (log n)^3 normalization used
    when reporting truncation gaps.
    """

    d: int
    law: WeightLaw
    p_grid: Tuple[float, ...]
    p0: float
    n_grid: Tuple[int, ...]
    delta0: float = 0.05
    lam: Optional[float] = None
    M_override: Optional[float] = None
    K_override: Optional[int] = None
    replicas: int = 200
    master_seed: int = 0
    window_policy: str = "tight"

    def __post_init__(self):
        self.p_grid = tuple(float(p) for p in self.p_grid)
        self.n_grid = tuple(int(n) for n in self.n_grid)
        if not self.p_grid:
            raise ValueError("p grid must be non-empty")
        for p in self.p_grid:
            if not (self.p0 <= p <= 1.0):
                raise ValueError(f"grid point p={p} outside [p0={self.p0}, 1]")
        if not self.n_grid:
            raise ValueError("n grid must be non-empty")
        if any(b <= a for a, b in zip(self.n_grid, self.n_grid[1:])):
            raise ValueError("n grid must be strictly increasing")
        if min(self.n_grid) < 1:
            raise ValueError("n must be >= 1")
        if self.replicas < 1:
            raise ValueError("need at least one replica")
        if self.window_policy not in ("tight", "wide"):
            raise ValueError("window policy must be 'tight' or 'wide'")

    def truncation(self, n: int) -> float:
        if self.M_override is not None:
            return float(self.M_override)
        return math.log(n) ** 3

    def restriction(self, n: int) -> int:
        if self.K_override is not None:
            return int(self.K_override)
        return n * n

    def params(self, p: float) -> EnvironmentParams:
        return EnvironmentParams(
            d=self.d, law=self.law, p=p, p0=self.p0,
            delta0=self.delta0, lam=self.lam,
        )

    def seed(self, replica: int) -> int:
        return derive_seed(self.master_seed, replica)

    def seeds(self, replicas: Optional[int] = None) -> Tuple[int, ...]:
        r = self.replicas if replicas is None else int(replicas)
        return tuple(self.seed(i) for i in range(r))

    def regularization_window(self, x: Site, y: Site) -> BoxRegion:
        w = default_regularization_window(x, y)
        if self.window_policy == "wide":
            return BoxRegion(w.center, 2 * w.radius)
        return w

    def comparison_region(self, n: int) -> BoxRegion:
        """Box for untruncated/unrestricted reference times at scale n."""
        r = max(4 * n, n + 40)
        if self.window_policy == "wide":
            r = max(6 * n, n + 64)
        return BoxRegion(_origin(self.d), r)

    def single_p(self) -> float:
        if len(self.p_grid) != 1:
            raise ValueError("config has a p grid; pass p explicitly")
        return self.p_grid[0]

    def environment(self, n: int, seed: int) -> CoupledEnvironment:
        # window must cover Lambda_K, the comparison region, and every
        # regularization window hung off 0 or n e1
        radius = max(self.restriction(n), 6 * n + 80)
        return CoupledEnvironment(
            window=BoxRegion(_origin(self.d), radius), seed=seed, law=self.law
        )


# ---------------------------------------------------------------------------
# mu estimation


@dataclass(frozen=True)
class MuSamples:
    """Per-replica normalized passage times at one (p, n) grid cell.

    values[r] is T_M^{Lambda_K}(0, n e1)/n under seeds[r]. regularized[r] is
    the untruncated regularized time over the policy window, or None where
    the window had no proxy cluster (those replicas count as excluded).
    """

    p: float
    n: int
    seeds: Tuple[int, ...]
    values: Tuple[float, ...]
    regularized: Optional[Tuple[Optional[float], ...]]
    excluded: int


@dataclass(frozen=True)
class MuEstimate:
    p: float
    n: int
    mean: float
    stderr: float
    mean_regularized: Optional[float]
    stderr_regularized: Optional[float]
    replicas: int
    excluded: int


def mu_samples(
    config: ExperimentConfig,
    p: float,
    n: int,
    replicas: Optional[int] = None,
    regularized: bool = False,
) -> MuSamples:
    params = config.params(p)
    m = config.truncation(n)
    region = BoxRegion(_origin(config.d), config.restriction(n))
    source = _origin(config.d)
    target = _axis_target(config.d, n)
    seeds = config.seeds(replicas)
    values: List[float] = []
    reg: List[Optional[float]] = []
    excluded = 0
    for seed in seeds:
        env = config.environment(n, seed)
        view = WeightView(env=env, params=params, M=m, region=region)
        values.append(passage_time(view, source, target) / n)
        if regularized:
            window = config.regularization_window(source, target)
            try:
                t = regularized_time(env, params, source, target, window=window)
                reg.append(t / n)
            except RegularizationUnavailableError:
                excluded += 1
                reg.append(None)
    return MuSamples(
        p=float(p),
        n=int(n),
        seeds=seeds,
        values=tuple(values),
        regularized=tuple(reg) if regularized else None,
        excluded=excluded,
    )


def mu_estimate(
    config: ExperimentConfig,
    p: float,
    n: int,
    replicas: Optional[int] = None,
    regularized: bool = False,
) -> MuEstimate:
    """Replica mean of T_M^{Lambda_K}(0, n e1)/n, optionally with the
    regularized companion where the window proxy exists."""
    s = mu_samples(config, p, n, replicas=replicas, regularized=regularized)
    mean, stderr = _mean_stderr(s.values)
    mean_r = stderr_r = None
    if regularized:
        present = [v for v in s.regularized if v is not None]
        if present:
            mean_r, stderr_r = _mean_stderr(present)
        else:
            mean_r, stderr_r = math.nan, math.nan
    return MuEstimate(
        p=s.p,
        n=s.n,
        mean=mean,
        stderr=stderr,
        mean_regularized=mean_r,
        stderr_regularized=stderr_r,
        replicas=len(s.seeds),
        excluded=s.excluded,
    )


# ---------------------------------------------------------------------------
# Lipschitz scan


@dataclass(frozen=True)
class SlopeRow:
    p_low: float
    p_high: float
    slope: float
    stderr: float


@dataclass(frozen=True)
class LipschitzScan:
    n: int
    p_grid: Tuple[float, ...]
    means: Tuple[float, ...]
    stderrs: Tuple[float, ...]
    slopes: Tuple[SlopeRow, ...]
    monotone: bool
    violations: int
    replicas: int

    @property
    def max_slope(self) -> float:
        return max(row.slope for row in self.slopes)


def lipschitz_from_samples(tables: Sequence[MuSamples]) -> LipschitzScan:
    """Aggregate coupled per-p sample tables into slopes.

    The tables must come from one CRN run: identical seed tuples, one n.
    Slope errors use the paired differences, which is what the coupling
    buys; unpaired propagation would overstate them.
    """
    if len(tables) < 2:
        raise ValueError("a Lipschitz scan needs at least two grid points")
    tables = sorted(tables, key=lambda t: t.p)
    ps = [t.p for t in tables]
    if any(b <= a for a, b in zip(ps, ps[1:])):
        raise ValueError("p grid must be strictly increasing")
    if len({t.n for t in tables}) != 1:
        raise ValueError("all grid points must share one n")
    seeds0 = tables[0].seeds
    for t in tables[1:]:
        if t.seeds != seeds0:
            raise CRNViolationError(
                "replica seeds differ across the p grid; the scan is only "
                "meaningful under common random numbers"
            )
    violations = 0
    slopes = []
    for lo, hi in zip(tables, tables[1:]):
        a = np.asarray(lo.values)
        b = np.asarray(hi.values)
        # opening edges can only shorten a replica's time: exact, not statistical
        violations += int(np.sum(b > a))
        diffs = a - b
        dp = hi.p - lo.p
        mean, stderr = _mean_stderr(diffs)
        slopes.append(
            SlopeRow(p_low=lo.p, p_high=hi.p, slope=mean / dp, stderr=stderr / dp)
        )
    means = []
    stderrs = []
    for t in tables:
        m, s = _mean_stderr(t.values)
        means.append(m)
        stderrs.append(s)
    return LipschitzScan(
        n=tables[0].n,
        p_grid=tuple(ps),
        means=tuple(means),
        stderrs=tuple(stderrs),
        slopes=tuple(slopes),
        monotone=violations == 0,
        violations=violations,
        replicas=len(seeds0),
    )


def lipschitz_scan(
    config: ExperimentConfig,
    n: Optional[int] = None,
    replicas: Optional[int] = None,
) -> LipschitzScan:
    """|mu_p - mu_q| / |p - q| along the config's p grid under CRN."""
    if len(config.p_grid) < 2:
        raise ValueError("a Lipschitz scan needs at least two grid points")
    if n is None:
        n = config.n_grid[-1]
    grid = tuple(sorted(config.p_grid))
    tables = [mu_samples(config, p, n, replicas=replicas) for p in grid]
    return lipschitz_from_samples(tables)


# ---------------------------------------------------------------------------
# exact Russo check on tiny graphs

_RUSSO_MAX_EDGES = 16
_RUSSO_MAX_ATOMS = 3
_RUSSO_MAX_STATES = 5_000_000

Poly = Tuple[Fraction, ...]


def _poly_add(a: Poly, b: Poly) -> Poly:
    n = max(len(a), len(b))
    return tuple(
        (a[i] if i < len(a) else Fraction(0)) + (b[i] if i < len(b) else Fraction(0))
        for i in range(n)
    )


def _poly_scale(a: Poly, s: Fraction) -> Poly:
    return tuple(c * s for c in a)


def _poly_mul_linear(a: Poly, c0: Fraction, c1: Fraction) -> Poly:
    out = [Fraction(0)] * (len(a) + 1)
    for i, c in enumerate(a):
        out[i] += c * c0
        out[i + 1] += c * c1
    return tuple(out)


def _poly_derivative(a: Poly) -> Poly:
    if len(a) <= 1:
        return (Fraction(0),)
    return tuple(Fraction(i) * a[i] for i in range(1, len(a)))


def _poly_eval(a: Poly, x: Fraction) -> Fraction:
    acc = Fraction(0)
    for c in reversed(a):
        acc = acc * x + c
    return acc


@dataclass(frozen=True)
class RussoInstance:
    """A tiny weighted two-terminal network for the exact derivative check.

    Each edge independently takes the cap value with probability 1-p and
    atom value a_j with probability p*g_j. X is the source-target passage
    time. Atom data is stored as Fractions so enumeration stays exact.
    """

    name: str
    edges: Tuple[CanonicalEdge, ...]
    atom_values: Tuple[Fraction, ...]
    atom_masses: Tuple[Fraction, ...]
    cap: Fraction
    source: Site
    target: Site

    @classmethod
    def build(cls, name, edges, law: WeightLaw, cap: float, source, target):
        if not law.is_discrete:
            raise ValueError("the resampling law G must have finite atoms")
        edges = tuple(canonicalize(e.x, e.y) for e in edges)
        if len(set(edges)) != len(edges):
            raise ValueError("duplicate edges")
        vertices = {e.x for e in edges} | {e.y for e in edges}
        source = tuple(int(c) for c in source)
        target = tuple(int(c) for c in target)
        if source not in vertices or target not in vertices:
            raise ValueError("marked vertices must touch the edge set")
        return cls(
            name=name,
            edges=edges,
            atom_values=tuple(Fraction(float(v)) for v in law.values),
            atom_masses=tuple(Fraction(float(m)) for m in law.masses),
            cap=Fraction(float(cap)),
            source=source,
            target=target,
        )

    def state_count(self) -> int:
        return (len(self.atom_values) + 1) ** len(self.edges)


@dataclass(frozen=True)
class RussoReport:
    name: str
    p_grid: Tuple[float, ...]
    lhs: Tuple[float, ...]
    rhs: Tuple[float, ...]
    discrepancy: Tuple[float, ...]
    max_discrepancy: float
    states: int


def _russo_guard(instance: RussoInstance) -> None:
    if len(instance.edges) > _RUSSO_MAX_EDGES:
        raise ValueError(
            f"rejected: {len(instance.edges)} edges exceeds the "
            f"enumeration guard of {_RUSSO_MAX_EDGES}"
        )
    if len(instance.atom_values) > _RUSSO_MAX_ATOMS:
        raise ValueError(
            f"rejected: {len(instance.atom_values)} atoms exceeds the "
            f"enumeration guard of {_RUSSO_MAX_ATOMS}"
        )
    if instance.state_count() > _RUSSO_MAX_STATES:
        raise ValueError(
            f"rejected: {instance.state_count()} states exceeds the "
            f"enumeration budget of {_RUSSO_MAX_STATES}"
        )


def _simple_paths(instance: RussoInstance) -> Tuple[Tuple[int, ...], ...]:
    adj: Dict[Site, List[Tuple[Site, int]]] = {}
    for i, e in enumerate(instance.edges):
        adj.setdefault(e.x, []).append((e.y, i))
        adj.setdefault(e.y, []).append((e.x, i))
    paths: List[Tuple[int, ...]] = []

    def walk(v, visited, trail):
        if v == instance.target:
            paths.append(tuple(trail))
            return
        for w, i in adj.get(v, ()):
            if w not in visited:
                visited.add(w)
                trail.append(i)
                walk(w, visited, trail)
                trail.pop()
                visited.remove(w)

    walk(instance.source, {instance.source}, [])
    if not paths:
        raise ValueError("marked vertices are not connected by the edge set")
    return tuple(paths)


def _expectation_poly(
    instance: RussoInstance,
    paths: Tuple[Tuple[int, ...], ...],
    forced: Dict[int, str],
) -> Poly:
    """E[X] as a polynomial in p, with forced edges pinned.

    forced maps edge index to "cap" (weight = cap, probability 1) or "law"
    (weight ~ G, probabilities g_j with no p factor).
    """
    one = Fraction(1)
    zero = Fraction(0)
    options = []
    for i in range(len(instance.edges)):
        mode = forced.get(i)
        if mode == "cap":
            options.append((((one, zero), instance.cap),))
        elif mode == "law":
            options.append(
                tuple(
                    ((g, zero), v)
                    for v, g in zip(instance.atom_values, instance.atom_masses)
                )
            )
        else:
            # closed with prob (1 - p), atom j with prob p g_j
            opts = [((one, -one), instance.cap)]
            opts.extend(
                ((zero, g), v)
                for v, g in zip(instance.atom_values, instance.atom_masses)
            )
            options.append(tuple(opts))
    acc: Poly = (zero,)
    for assignment in product(*options):
        prob: Poly = (one,)
        for (c0, c1), _ in assignment:
            prob = _poly_mul_linear(prob, c0, c1)
        vals = [v for _, v in assignment]
        x = min(sum((vals[i] for i in path), zero) for path in paths)
        acc = _poly_add(acc, _poly_scale(prob, x))
    return acc


def russo_exact_check(
    instance: RussoInstance, p_grid: Sequence[float]
) -> RussoReport:
    """Compare d/dp E[X] against the per-edge resampling sum, exactly.

    The left side differentiates the full-enumeration polynomial; the right
    side re-enumerates once per edge with that edge forced to the law and to
    the cap. Both sides are Fraction polynomials evaluated at the exact
    binary value of each grid point, so the reported discrepancy is a true
    zero whenever the identity holds.
    """
    _russo_guard(instance)
    paths = _simple_paths(instance)
    lhs_poly = _poly_derivative(_expectation_poly(instance, paths, {}))
    rhs_poly: Poly = (Fraction(0),)
    for i in range(len(instance.edges)):
        to_law = _expectation_poly(instance, paths, {i: "law"})
        to_cap = _expectation_poly(instance, paths, {i: "cap"})
        rhs_poly = _poly_add(rhs_poly, _poly_add(to_law, _poly_scale(to_cap, Fraction(-1))))
    lhs_vals = []
    rhs_vals = []
    disc = []
    for p in p_grid:
        pf = Fraction(float(p))
        l = _poly_eval(lhs_poly, pf)
        r = _poly_eval(rhs_poly, pf)
        lhs_vals.append(float(l))
        rhs_vals.append(float(r))
        disc.append(float(abs(l - r)))
    return RussoReport(
        name=instance.name,
        p_grid=tuple(float(p) for p in p_grid),
        lhs=tuple(lhs_vals),
        rhs=tuple(rhs_vals),
        discrepancy=tuple(disc),
        max_discrepancy=max(disc) if disc else 0.0,
        states=instance.state_count(),
    )


def builtin_single_edge(cap: float = 2.0) -> RussoInstance:
    """One edge, G = delta_0: E[X] = (1-p) cap, so d/dp E[X] = -cap."""
    e = canonicalize((0, 0), (1, 0))
    return RussoInstance.build(
        "single-edge", (e,), WeightLaw.dirac(0.0), cap, (0, 0), (1, 0)
    )


def builtin_square() -> RussoInstance:
    """Unit square, G = delta_1, cap 3, corner to opposite corner."""
    vs = [(0, 0), (1, 0), (0, 1), (1, 1)]
    edges = [
        canonicalize(vs[0], vs[1]),
        canonicalize(vs[0], vs[2]),
        canonicalize(vs[1], vs[3]),
        canonicalize(vs[2], vs[3]),
    ]
    return RussoInstance.build(
        "square", edges, WeightLaw.dirac(1.0), 3.0, (0, 0), (1, 1)
    )


def builtin_grid_2x3() -> RussoInstance:
    """2x3 vertex grid (7 edges), G = (delta_1 + delta_2)/2, cap 5."""
    edges = []
    for y in (0, 1):
        for x in (0, 1):
            edges.append(canonicalize((x, y), (x + 1, y)))
    for x in (0, 1, 2):
        edges.append(canonicalize((x, 0), (x, 1)))
    law = WeightLaw.atoms([(1.0, 0.5), (2.0, 0.5)])
    return RussoInstance.build("grid-2x3", edges, law, 5.0, (0, 0), (2, 1))


BUILTIN_RUSSO = {
    "single-edge": builtin_single_edge,
    "square": builtin_square,
    "grid-2x3": builtin_grid_2x3,
}


# ---------------------------------------------------------------------------
# derivative bound via perturbed geodesics


@dataclass(frozen=True)
class DeltaReport:
    """CRN finite difference vs the summed single-edge perturbations.

    fd_* averages (T(p_high) - T(p_low)) / (p_high - p_low) per replica;
    sum_* averages sum over geodesic edges of Delta_e T, subsampled with
    Horvitz-Thompson scaling when the geodesic is long. Both come with the
    ratio to n. spot_failures counts off-geodesic edges whose perturbation
    difference came out negative (must be zero).
    """

    p: float
    n: int
    h: float
    p_low: float
    p_high: float
    mode: str
    fd_mean: float
    fd_stderr: float
    sum_mean: float
    sum_stderr: float
    fd_over_n: float
    sum_over_n: float
    mean_subsample_factor: float
    mean_geodesic_edges: float
    spot_checks: int
    spot_failures: int
    replicas: int


def _delta_minus_value(
    env: CoupledEnvironment, e: CanonicalEdge, law: WeightLaw, m: float, mode: str
) -> float:
    if mode == "cap":
        return 0.0
    # independent redraw from F, truncated like every other weight
    low = np.asarray([e.lower()], dtype=np.int64)
    ax = np.asarray([e.axis], dtype=np.int64)
    u = edge_uniforms(env.seed, low, ax, TAG_RESAMPLE)[0]
    return min(float(law.quantile(np.asarray([u]))[0]), m)


def _edge_perturbation(
    view: WeightView, e: CanonicalEdge, source, target, m: float, minus: float
) -> float:
    up = WeightView(
        env=view.env, params=view.params, M=view.M, region=view.region,
        overrides={e: m},
    )
    down = WeightView(
        env=view.env, params=view.params, M=view.M, region=view.region,
        overrides={e: minus},
    )
    return passage_time(up, source, target) - passage_time(down, source, target)


def delta_estimator(
    config: ExperimentConfig,
    p: float,
    n: int,
    h: float = 0.02,
    replicas: Optional[int] = None,
    mode: str = "cap",
    max_edges: int = 512,
    spot_checks: int = 20,
) -> DeltaReport:
    if mode not in ("cap", "resample"):
        raise ValueError("mode must be 'cap' or 'resample'")
    p_high = min(p + h, 1.0)
    p_low = max(p - h, config.p0)
    if not p_low < p_high:
        raise ValueError("finite-difference window collapsed; shrink h or move p")
    m = config.truncation(n)
    region = BoxRegion(_origin(config.d), config.restriction(n))
    source = _origin(config.d)
    target = _axis_target(config.d, n)
    seeds = config.seeds(replicas)
    fd_vals = []
    sum_vals = []
    factors = []
    lengths = []
    spot_failures = 0
    for r, seed in enumerate(seeds):
        env = config.environment(n, seed)
        t_high = passage_time(
            WeightView(env=env, params=config.params(p_high), M=m, region=region),
            source, target,
        )
        t_low = passage_time(
            WeightView(env=env, params=config.params(p_low), M=m, region=region),
            source, target,
        )
        fd_vals.append((t_high - t_low) / (p_high - p_low))

        view = WeightView(env=env, params=config.params(p), M=m, region=region)
        _, geo = passage_time_and_path(view, source, target)
        geo_edges = [
            canonicalize(u, v) for u, v in zip(geo.vertices, geo.vertices[1:])
        ]
        lengths.append(len(geo_edges))
        rng = np.random.default_rng(derive_seed(seed, 1))
        if len(geo_edges) <= max_edges:
            sampled = geo_edges
            factor = 1.0
        else:
            idx = rng.choice(len(geo_edges), size=max_edges, replace=False)
            sampled = [geo_edges[int(i)] for i in sorted(idx)]
            factor = len(geo_edges) / max_edges
        total = 0.0
        for e in sampled:
            minus = _delta_minus_value(env, e, config.law, m, mode)
            total += _edge_perturbation(view, e, source, target, m, minus)
        sum_vals.append(total * factor)
        factors.append(factor)

        # off-geodesic probes: raising a bystander edge cannot change T and
        # lowering one can only help, so each difference must be >= 0
        geo_set = set(geo_edges)
        lo0 = -n
        hi0 = 2 * n
        done = 0
        tries = 0
        while done < spot_checks and tries < 50 * spot_checks:
            tries += 1
            v = tuple(
                int(rng.integers(lo0, hi0 + 1)) if k == 0
                else int(rng.integers(-n, n + 1))
                for k in range(config.d)
            )
            axis = int(rng.integers(config.d))
            w = tuple(c + (1 if k == axis else 0) for k, c in enumerate(v))
            if not (region.contains_site(v) and region.contains_site(w)):
                continue
            e = canonicalize(v, w)
            if e in geo_set:
                continue
            minus = _delta_minus_value(env, e, config.law, m, mode)
            if _edge_perturbation(view, e, source, target, m, minus) < 0.0:
                spot_failures += 1
            done += 1
    fd_mean, fd_stderr = _mean_stderr(fd_vals)
    sum_mean, sum_stderr = _mean_stderr(sum_vals)
    return DeltaReport(
        p=float(p),
        n=int(n),
        h=float(h),
        p_low=p_low,
        p_high=p_high,
        mode=mode,
        fd_mean=fd_mean,
        fd_stderr=fd_stderr,
        sum_mean=sum_mean,
        sum_stderr=sum_stderr,
        fd_over_n=fd_mean / n,
        sum_over_n=sum_mean / n,
        mean_subsample_factor=float(np.mean(factors)),
        mean_geodesic_edges=float(np.mean(lengths)),
        spot_checks=spot_checks,
        spot_failures=spot_failures,
        replicas=len(seeds),
    )


# ---------------------------------------------------------------------------
# truncation gap


@dataclass(frozen=True)
class GapRow:
    """Normalized take of |T - T_M^{Lambda_K}| and its two-step split.

    part_tm compares T with T_M at the same regularized endpoints; part_tmk
    compares T_M at regularized endpoints against T_M^{Lambda_K} at the raw
    ones. All three are divided by (log n)^3.
    """

    n: int
    replicas: int
    excluded: int
    total_mean: float
    total_stderr: float
    part_tm_mean: float
    part_tm_stderr: float
    part_tmk_mean: float
    part_tmk_stderr: float
    normalizer: float


def truncation_gap(
    config: ExperimentConfig,
    p: Optional[float] = None,
    n_grid: Optional[Sequence[int]] = None,
    replicas: Optional[int] = None,
) -> Tuple[GapRow, ...]:
    """Gap between the plain and the truncated-restricted passage times.

    Endpoints of the plain time are regularized against the q-percolation,
    which keeps it finite whenever the window has a proxy cluster; the
    truncated time runs between the raw endpoints inside Lambda_K. The
    triangle split total <= part_tm + part_tmk is asserted per replica.
    """
    if p is None:
        p = config.single_p()
    params = config.params(p)
    grid = config.n_grid if n_grid is None else tuple(int(v) for v in n_grid)
    seeds = config.seeds(replicas)
    rows = []
    for n in grid:
        m = config.truncation(n)
        big = config.comparison_region(n)
        restricted = BoxRegion(_origin(config.d), config.restriction(n))
        source = _origin(config.d)
        target = _axis_target(config.d, n)
        window = config.regularization_window(source, target)
        norm = math.log(n) ** 3
        totals = []
        part1 = []
        part2 = []
        excluded = 0
        for seed in seeds:
            env = config.environment(n, seed)
            labeling = label_clusters(env, window, params, openness="q")
            try:
                xq = closest_point(source, labeling)
                yq = closest_point(target, labeling)
            except RegularizationUnavailableError:
                excluded += 1
                continue
            t_plain = passage_time(
                WeightView(env=env, params=params, M=None, region=big), xq, yq
            )
            t_trunc = passage_time(
                WeightView(env=env, params=params, M=m, region=big), xq, yq
            )
            t_restricted = passage_time(
                WeightView(env=env, params=params, M=m, region=restricted),
                source, target,
            )
            total = abs(t_plain - t_restricted)
            p1 = abs(t_plain - t_trunc)
            p2 = abs(t_trunc - t_restricted)
            if total > p1 + p2 + 1e-9:
                raise RuntimeError(
                    f"triangle decomposition violated at n={n}, seed={seed}: "
                    f"{total} > {p1} + {p2}"
                )
            totals.append(total / norm)
            part1.append(p1 / norm)
            part2.append(p2 / norm)
        tm, ts = _mean_stderr(totals)
        p1m, p1s = _mean_stderr(part1)
        p2m, p2s = _mean_stderr(part2)
        rows.append(
            GapRow(
                n=n,
                replicas=len(totals),
                excluded=excluded,
                total_mean=tm,
                total_stderr=ts,
                part_tm_mean=p1m,
                part_tm_stderr=p1s,
                part_tmk_mean=p2m,
                part_tmk_stderr=p2s,
                normalizer=norm,
            )
        )
    return tuple(rows)


# ---------------------------------------------------------------------------
# tail diagnostics


@dataclass(frozen=True)
class TailTable:
    """Empirical survival counts over a fixed threshold grid.

    strict=True tables count {value > t}; the rest count {value >= t}. The
    hole table is strict so its t=0 row is exactly P(x outside the proxy).
    """

    name: str
    t_grid: Tuple[float, ...]
    counts: Tuple[int, ...]
    total: int
    strict: bool

    def survival(self) -> Tuple[float, ...]:
        return tuple(c / self.total for c in self.counts)

    def log_survival(self) -> Tuple[float, ...]:
        return tuple(
            math.log(c / self.total) if c > 0 else -math.inf for c in self.counts
        )


def _tabulate(name, values, t_grid, strict) -> TailTable:
    arr = np.asarray(list(values), dtype=np.float64)
    counts = []
    for t in t_grid:
        if strict:
            counts.append(int(np.sum(arr > t)))
        else:
            counts.append(int(np.sum(arr >= t)))
    return TailTable(
        name=name,
        t_grid=tuple(float(t) for t in t_grid),
        counts=tuple(counts),
        total=int(arr.size),
        strict=strict,
    )


@dataclass(frozen=True)
class KestenDiagnostic:
    """Sampled lower-bound check on cheap long paths.

    min over sampled open self-avoiding paths of T(gamma)/|gamma|. The
    sample is random, not exhaustive: a healthy value is evidence, a tiny
    one is an alarm, and neither is a proof.
    """

    length: int
    paths_per_seed: int
    seeds_with_paths: int
    min_ratio: float
    table: TailTable
    exhaustive: bool = False


@dataclass(frozen=True)
class TailSuite:
    p: float
    n: int
    replicas: int
    excluded: int
    hole: TailTable
    overshoot: TailTable
    length: TailTable
    kesten: KestenDiagnostic
    p_length_ge_4n: float


DEFAULT_TAIL_GRIDS = {
    "hole": (0.0, 1.0),
    "overshoot": (1.25, 1.3125, 1.375, 1.4375),
    "length": None,  # filled per n below
    "kesten": (0.44, 0.455, 0.465, 0.475),
}


def _length_grid(n: int) -> Tuple[float, ...]:
    # leading row is the l1 floor: every 0 -> n e1 path has >= n edges
    return (float(n), 1.25 * n, 1.375 * n, 1.5 * n, 1.625 * n)


def _open_path_ratios(
    env: CoupledEnvironment,
    params: EnvironmentParams,
    rng: np.random.Generator,
    length: int,
    paths: int,
) -> List[float]:
    """Weight-per-hop ratios of random open self-avoiding paths from 0.

    Paths through closed edges cost +inf and can never realize a minimum,
    so the walk explores the p-open subgraph only.
    """
    box = BoxRegion(_origin(params.d), length + 1)
    lo, hi = box.bbox()
    dims = tuple(h - l + 1 for l, h in zip(lo, hi))
    flags = env.open_grid(lo, dims, params.p, None)
    weights = env.weight_grid(lo, dims, params.p, None)
    strides = [int(s) for s in grid_strides(dims)]
    d = params.d
    start = int(flatten_sites(lo, dims, [_origin(d)])[0])
    start_pos = tuple(-l for l in lo)
    ratios: List[float] = []
    attempts = 0
    # dead-ended walks are cheap, so the attempt budget is generous: a seed
    # only exhausts it when the origin's open component keeps trapping walks
    while len(ratios) < paths and attempts < 40 * paths:
        attempts += 1
        flat = start
        pos = list(start_pos)
        visited = {flat}
        total = 0.0
        for _ in range(length):
            moves = []
            for k in range(d):
                if pos[k] + 1 < dims[k] and flags[k, flat]:
                    nxt = flat + strides[k]
                    if nxt not in visited:
                        moves.append((k, 1, nxt, flat))
                if pos[k] - 1 >= 0 and flags[k, flat - strides[k]]:
                    nxt = flat - strides[k]
                    if nxt not in visited:
                        moves.append((k, -1, nxt, nxt))
            if not moves:
                break
            k, sgn, nxt, key = moves[int(rng.integers(len(moves)))]
            total += float(weights[k, key])
            visited.add(nxt)
            flat = nxt
            pos[k] += sgn
        else:
            ratios.append(total / length)
    return ratios


def tail_suite(
    config: ExperimentConfig,
    p: Optional[float] = None,
    n: Optional[int] = None,
    replicas: Optional[int] = None,
    grids: Optional[dict] = None,
    kesten_length: Optional[int] = None,
    kesten_paths: int = 25,
) -> TailSuite:
    """Survival tables for hole size, chemical overshoot, geodesic length,
    and the sampled path-cost floor."""
    if p is None:
        p = config.single_p()
    if n is None:
        n = config.n_grid[-1]
    params = config.params(p)
    g = dict(DEFAULT_TAIL_GRIDS)
    g["length"] = _length_grid(n)
    if grids:
        g.update(grids)
    m = config.truncation(n)
    restricted = BoxRegion(_origin(config.d), config.restriction(n))
    big = config.comparison_region(n)
    source = _origin(config.d)
    target = _axis_target(config.d, n)
    window = config.regularization_window(source, target)
    length = 2 * n if kesten_length is None else int(kesten_length)
    seeds = config.seeds(replicas)
    holes = []
    overshoots = []
    lengths = []
    kesten_mins = []
    excluded = 0
    for seed in seeds:
        env = config.environment(n, seed)
        labeling = label_clusters(env, window, params, openness="q")
        try:
            h = hole_size(source, labeling)
            xq = closest_point(source, labeling)
            yq = closest_point(target, labeling)
        except RegularizationUnavailableError:
            excluded += 1
            continue
        holes.append(float(h))
        hops, _ = chemical_path(env, params, "q", big, [xq], [yq])
        overshoots.append(hops / float(n))
        view = WeightView(env=env, params=params, M=m, region=restricted)
        _, geo = passage_time_and_path(view, source, target)
        lengths.append(float(len(geo.vertices) - 1))
        rng = np.random.default_rng(derive_seed(seed, 2))
        ratios = _open_path_ratios(env, params, rng, length, kesten_paths)
        if ratios:
            kesten_mins.append(min(ratios))
    total_len = np.asarray(lengths)
    p4n = float(np.mean(total_len >= 4 * n)) if lengths else math.nan
    kesten_table = _tabulate("kesten", kesten_mins, g["kesten"], strict=False)
    return TailSuite(
        p=float(p),
        n=int(n),
        replicas=len(holes),
        excluded=excluded,
        hole=_tabulate("hole", holes, g["hole"], strict=True),
        overshoot=_tabulate("overshoot", overshoots, g["overshoot"], strict=False),
        length=_tabulate("length", lengths, g["length"], strict=False),
        kesten=KestenDiagnostic(
            length=length,
            paths_per_seed=kesten_paths,
            seeds_with_paths=len(kesten_mins),
            min_ratio=min(kesten_mins) if kesten_mins else math.nan,
            table=kesten_table,
        ),
        p_length_ge_4n=p4n,
    )


# ---------------------------------------------------------------------------
# bypass construction over sampled geodesics


@dataclass(frozen=True)
class BypassCase:
    """One sampled (geodesic, edge) instance of the bypass construction."""

    seed: int
    edge: CanonicalEdge
    radius: Optional[int]
    censored: bool
    method: Optional[str]
    feasible: bool
    ok: bool
    rejected: Optional[str]
    extra_edges: Optional[int]
    budget: Optional[int]


def bypass_cases(
    params: EnvironmentParams,
    rparams,
    cases: int,
    master_seed: int,
    mode: str = "auto",
    span: int = 32,
) -> List[BypassCase]:
    """Sample geodesics across the origin, reroute them around one edge.

    Each case draws a fresh environment, takes the canonical truncated
    geodesic between -span e1 and span e1, picks an edge from its middle
    third, resolves that edge's effective radius in the requested mode, and
    runs the bypass construction at that radius. Censored radii yield
    censored cases with no construction attempted.
    """
    from .radius import build_bypass, effective_radius

    d = params.d
    source = (-span,) + (0,) * (d - 1)
    target = (span,) + (0,) * (d - 1)
    geo_region = BoxRegion(_origin(d), span + 6)
    window = BoxRegion(
        _origin(d), rparams.span_factor * rparams.nmax + span + 4
    )
    out: List[BypassCase] = []
    for i in range(cases):
        seed = derive_seed(master_seed, i)
        env = CoupledEnvironment(window=window, seed=seed, law=params.law)
        view = WeightView(env=env, params=params, M=rparams.H, region=geo_region)
        _, geo = passage_time_and_path(view, source, target)
        edges = [
            canonicalize(u, v) for u, v in zip(geo.vertices, geo.vertices[1:])
        ]
        rng = np.random.default_rng(derive_seed(seed, 3))
        third = len(edges) // 3
        e = edges[third + int(rng.integers(max(len(edges) - 2 * third, 1)))]
        r = effective_radius(env, e, params, rparams, mode=mode)
        if r.censored:
            out.append(
                BypassCase(
                    seed=seed, edge=e, radius=None, censored=True,
                    method=r.method, feasible=False, ok=False, rejected=None,
                    extra_edges=None, budget=None,
                )
            )
            continue
        bp = build_bypass(geo.vertices, e, r.value, env, params, rparams)
        out.append(
            BypassCase(
                seed=seed,
                edge=e,
                radius=r.value,
                censored=False,
                method=r.method,
                feasible=bp.feasible,
                ok=bp.ok,
                rejected=bp.rejected,
                extra_edges=bp.extra_edges,
                budget=rparams.span_factor * r.value,
            )
        )
    return out


# ---------------------------------------------------------------------------
# strong-law trajectory


@dataclass(frozen=True)
class SllnPoint:
    n: int
    value: Optional[float]  # None where the window had no proxy cluster


@dataclass(frozen=True)
class SllnReport:
    """Single-seed trajectory of the normalized regularized time.

    One environment extends over nested windows as n grows; the per-edge
    hashing makes the restriction of a larger window agree with the smaller
    one, so the trajectory is a genuine single-realization sequence. The
    translate means probe integrability of the one-step regularized time
    over two disjoint station sets.
    """

    seed: int
    p: float
    points: Tuple[SllnPoint, ...]
    flagged: int
    translate_mean_first: float
    translate_mean_second: float
    translate_count: int
    translate_excluded: int
    spacing: int


def slln_diagnostic(
    config: ExperimentConfig,
    seed: Optional[int] = None,
    p: Optional[float] = None,
    translates: int = 20,
    spacing: int = 32,
) -> SllnReport:
    if p is None:
        p = config.single_p()
    if seed is None:
        seed = config.master_seed
    params = config.params(p)
    n_max = config.n_grid[-1]
    guard = BoxRegion(_origin(config.d), max(6 * n_max + 80, spacing * translates + 80))
    env = CoupledEnvironment(window=guard, seed=int(seed), law=config.law)
    source = _origin(config.d)
    points = []
    flagged = 0
    for n in config.n_grid:
        target = _axis_target(config.d, n)
        window = config.regularization_window(source, target)
        try:
            t = regularized_time(env, params, source, target, window=window)
            points.append(SllnPoint(n=n, value=t / n))
        except RegularizationUnavailableError:
            flagged += 1
            points.append(SllnPoint(n=n, value=None))
    # two disjoint translate stations: along the first axis, and shifted off
    # it by `spacing` in the second coordinate
    step = (1,) + (0,) * (config.d - 1)
    means = []
    translate_excluded = 0
    for row in (0, 1):
        vals = []
        for j in range(translates):
            base = [j * spacing] + [0] * (config.d - 1)
            base[1 if config.d > 1 else 0] += row * spacing
            y = tuple(base)
            y1 = tuple(a + b for a, b in zip(y, step))
            try:
                vals.append(
                    regularized_time(
                        env, params, y, y1,
                        window=config.regularization_window(y, y1),
                    )
                )
            except RegularizationUnavailableError:
                translate_excluded += 1
        means.append(float(np.mean(vals)) if vals else math.nan)
    return SllnReport(
        seed=int(seed),
        p=float(p),
        points=tuple(points),
        flagged=flagged,
        translate_mean_first=means[0],
        translate_mean_second=means[1],
        translate_count=translates,
        translate_excluded=translate_excluded,
        spacing=spacing,
    )
