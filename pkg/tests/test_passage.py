"""Distance fields, truncated/restricted passage times, geodesics."""

import math
import warnings

import numpy as np
import pytest

from percofpp import (
    BoxRegion,
    CoupledEnvironment,
    EnvironmentParams,
    NoPathError,
    WeightLaw,
    WeightView,
    canonicalize,
    chemical_distance,
    distance_field,
    extract_geodesic,
    is_geodesic,
    passage_time,
    passage_time_and_path,
    path_weight,
    regularized_time,
    region_vertices,
)

import oracles

DIRAC1 = WeightLaw.dirac(1.0)
UNI01 = WeightLaw.uniform(0.0, 1.0)


def env_on(radius: int, seed: int = 42, law: WeightLaw = DIRAC1):
    return CoupledEnvironment(
        window=BoxRegion((0, 0), radius), seed=seed, law=law
    )


def quiet_params(**kwargs) -> EnvironmentParams:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return EnvironmentParams(**kwargs)


def view_on(radius, seed=42, law=DIRAC1, p=0.85, M=None, p0=None, lam=None):
    params = (
        EnvironmentParams(d=2, law=law, p=p, p0=p0, lam=lam)
        if p > 0.55
        else quiet_params(d=2, law=law, p=p, p0=p, lam=1.0)
    )
    return WeightView(
        env=env_on(radius, seed=seed, law=law),
        params=params,
        M=M,
        region=BoxRegion((0, 0), radius),
    )


def adjacency(env, sites, p, cap):
    """Weighted adjacency restricted to the site set, finite edges only."""
    site_set = set(sites)
    adj = {}
    for u in sites:
        rows = []
        for v in oracles.neighbors(u):
            if v not in site_set:
                continue
            w = env.weight(canonicalize(u, v), p, cap=cap)
            if math.isfinite(w):
                rows.append((v, w))
        adj[u] = rows
    return adj


# ---------------------------------------------------------------------------
# distance_field


def test_field_all_open_is_l1_metric():
    view = view_on(5, p=1.0)
    field = distance_field(view, (0, 0))
    for v in region_vertices(BoxRegion((0, 0), 5)):
        v = tuple(int(c) for c in v)
        assert field.distance_at(v) == abs(v[0]) + abs(v[1])


def test_field_all_closed_truncated_is_m_times_l1():
    view = view_on(4, p=0.0, M=7.0)
    field = distance_field(view, (0, 0))
    for v in region_vertices(BoxRegion((0, 0), 4)):
        v = tuple(int(c) for c in v)
        assert field.distance_at(v) == 7.0 * (abs(v[0]) + abs(v[1]))


def test_field_source_outside_region_rejected():
    view = view_on(4, p=0.9)
    with pytest.raises(ValueError):
        distance_field(view, (9, 0))


def test_field_matches_sap_enumeration_seed42():
    # every suffix of a self-avoiding path is a walk, so walk distances
    # lower-bound the remaining weight and the branch-and-bound stays exact
    radius = 4
    view = view_on(radius, seed=42, law=UNI01, p=0.9, M=5.0)
    sites = oracles.box_sites((0, 0), radius)
    adj = adjacency(view.env, sites, 0.9, cap=5.0)
    for source in [(0, 0), (-4, -4), (3, -2)]:
        field = distance_field(view, source)
        lower = oracles.label_correcting_distances(adj, source)
        for target in sites:
            want = oracles.sap_min_weight(adj, target, source, lower)
            # continuous weights: reversed summation order costs a few ulp
            assert field.distance_at(target) == pytest.approx(want, abs=1e-12)


def test_field_bellman_consistency():
    view = view_on(4, seed=7, law=UNI01, p=0.8, M=3.0)
    field = distance_field(view, (1, 1))
    sites = oracles.box_sites((0, 0), 4)
    site_set = set(sites)
    for v in sites:
        dv = field.distance_at(v)
        if v == (1, 1):
            assert dv == 0.0
            continue
        best = min(
            field.distance_at(u) + view.edge_weight(u, v)
            for u in oracles.neighbors(v)
            if u in site_set
        )
        assert dv == pytest.approx(best, abs=1e-12)


# ---------------------------------------------------------------------------
# passage_time


def test_passage_time_same_point_zero():
    view = view_on(4, p=0.8)
    assert passage_time(view, (2, -1), (2, -1)) == 0.0


def test_passage_time_full_lattice_is_l1():
    view = view_on(6, p=1.0)
    assert passage_time(view, (-3, 2), (4, -1)) == 10.0


def test_passage_time_symmetric():
    view = view_on(5, seed=3, law=UNI01, p=0.8, M=4.0)
    for x, y in [((0, 0), (4, 3)), ((-5, 1), (2, -2))]:
        assert passage_time(view, x, y) == pytest.approx(
            passage_time(view, y, x), abs=1e-12
        )
    exact = view_on(5, seed=3, p=0.8, p0=0.6, M=4.0)
    for x, y in [((0, 0), (4, 3)), ((-5, 1), (2, -2))]:
        # integer weights: symmetry must be bit-exact
        assert passage_time(exact, x, y) == passage_time(exact, y, x)


def test_truncated_restricted_matches_label_correcting_oracle():
    # n=8 with the default normalizations M=(log n)^3, K=n^2
    n = 8
    K = n * n
    M = math.log(n) ** 3
    view = view_on(K, seed=42, p=0.8, p0=0.6, M=M)
    got = passage_time(view, (0, 0), (n, 0))

    sites = oracles.box_sites((0, 0), K)
    adj = adjacency(view.env, sites, 0.8, cap=M)
    dist = oracles.label_correcting_distances(adj, (0, 0))
    assert got == dist[(n, 0)]


# ---------------------------------------------------------------------------
# extract_geodesic


def test_extracted_weight_equals_field_value_seed42():
    view = view_on(8, seed=42, p=0.85, p0=0.6, M=math.log(8) ** 3)
    field = distance_field(view, (-8, -8))
    for target in [(8, 8), (0, 0), (8, -8), (-2, 7)]:
        geo = extract_geodesic(field, target)
        assert geo.vertices[0] == (-8, -8)
        assert geo.vertices[-1] == target
        assert path_weight(view, geo.vertices) == field.distance_at(target)
        seen = set(geo.vertices)
        assert len(seen) == len(geo.vertices)


def test_lexicographic_tiebreak_on_equal_weight_l():
    # both staircases from (0,0) to (1,1) cost 2; the rule must pick the
    # one through (0,1) and keep picking it
    view = view_on(2, p=1.0)
    first = passage_time_and_path(view, (0, 0), (1, 1))[1]
    second = passage_time_and_path(view, (0, 0), (1, 1))[1]
    assert first.vertices == ((0, 0), (0, 1), (1, 1))
    assert second.vertices == first.vertices


def test_unreachable_target_raises():
    view = view_on(3, p=0.0)
    field = distance_field(view, (0, 0))
    with pytest.raises(NoPathError):
        extract_geodesic(field, (1, 0))


# ---------------------------------------------------------------------------
# is_geodesic


def test_single_vertex_is_geodesic():
    view = view_on(3, p=0.5)
    assert is_geodesic([(1, 1)], view) is True


def test_extracted_geodesic_passes():
    view = view_on(6, seed=5, law=UNI01, p=0.85, M=4.0)
    _, geo = passage_time_and_path(view, (-5, 0), (5, 2))
    assert is_geodesic(geo.vertices, view) is True


def test_subpath_is_geodesic_in_its_subbox():
    view = view_on(8, seed=42, p=0.85, p0=0.6, M=math.log(8) ** 3)
    _, geo = passage_time_and_path(view, (-7, -7), (7, 7))
    k = len(geo.vertices)
    for i, j in [(0, k), (k // 4, 3 * k // 4), (1, k - 1), (k // 2, k // 2 + 2)]:
        sub = geo.vertices[i:j]
        if len(sub) < 2:
            continue
        arr = np.asarray(sub)
        center = tuple(
            int(c) for c in (arr.min(axis=0) + arr.max(axis=0)) // 2
        )
        radius = int(np.abs(arr - np.asarray(center)).max())
        subview = WeightView(
            env=view.env,
            params=view.params,
            M=view.M,
            region=BoxRegion(center, radius),
        )
        assert is_geodesic(sub, subview) is True


def test_is_geodesic_structural_errors():
    view = view_on(3, p=1.0)
    with pytest.raises(ValueError):
        is_geodesic([(0, 0), (1, 0), (0, 0)], view)
    with pytest.raises(ValueError):
        is_geodesic([(0, 0), (2, 0)], view)
    with pytest.raises(ValueError):
        is_geodesic([(0, 0), (0, 9)], view)


def test_non_geodesic_detour_rejected():
    view = view_on(3, p=1.0)
    detour = [(0, 0), (0, 1), (1, 1), (1, 0)]
    assert is_geodesic(detour, view) is False


# ---------------------------------------------------------------------------
# regularized_time


def test_regularized_equals_plain_when_endpoints_in_proxy():
    env = env_on(20, seed=42)
    params = EnvironmentParams(d=2, law=DIRAC1, p=0.8, p0=0.6)
    t, xq, yq = regularized_time(
        env, params, (0, 0), (10, 0), return_points=True
    )
    assert (xq, yq) == ((0, 0), (10, 0))
    view = WeightView(
        env=env, params=params, M=None, region=BoxRegion((5, 0), 21)
    )
    assert t == passage_time(view, (0, 0), (10, 0))


def test_regularized_full_lattice_is_l1():
    env = env_on(20, seed=1)
    params = EnvironmentParams(d=2, law=DIRAC1, p=1.0, p0=0.6)
    assert regularized_time(env, params, (-3, 4), (5, 0)) == 12.0


def test_regularized_sandwich_seed42():
    n = 32
    env = env_on(6 * n, seed=42)
    params = EnvironmentParams(d=2, law=DIRAC1, p=0.8, p0=0.6)
    t = regularized_time(env, params, (0, 0), (n, 0))
    window = BoxRegion((n // 2, 0), n)
    dp = chemical_distance(
        env, params, "p", window, [(0, 0)], [(n, 0)]
    )
    assert 1.0 <= t / n <= dp / n


def test_subadditivity_per_environment():
    m = 12
    params = EnvironmentParams(d=2, law=DIRAC1, p=0.75, p0=0.6)
    window = BoxRegion((m, 0), 3 * m)
    for seed in (1, 2, 3, 4, 5, 6):
        env = env_on(4 * m, seed=seed)
        t_full = regularized_time(env, params, (0, 0), (2 * m, 0), window)
        t_a = regularized_time(env, params, (0, 0), (m, 0), window)
        t_b = regularized_time(env, params, (m, 0), (2 * m, 0), window)
        assert t_full <= t_a + t_b + 1e-12


# ---------------------------------------------------------------------------
# monotonicity properties


def test_truncation_monotonicity():
    for seed in (1, 2, 3):
        env = env_on(6, seed=seed, law=UNI01)
        params = EnvironmentParams(
            d=2, law=UNI01, p=0.7, p0=0.7, delta0=0.2
        )
        region = BoxRegion((0, 0), 6)
        views = [
            WeightView(env=env, params=params, M=M, region=region)
            for M in (2.0, 5.0, None)
        ]
        for x, y in [((-4, 0), (4, 0)), ((0, -5), (0, 5))]:
            t2, t5, t_inf = (passage_time(v, x, y) for v in views)
            assert t2 <= t5 <= t_inf


def test_region_monotonicity():
    params = EnvironmentParams(d=2, law=DIRAC1, p=0.7, p0=0.6)
    for seed in (1, 2, 3, 4):
        env = env_on(8, seed=seed)
        small = WeightView(
            env=env, params=params, M=3.0, region=BoxRegion((0, 0), 4)
        )
        large = WeightView(
            env=env, params=params, M=3.0, region=BoxRegion((0, 0), 8)
        )
        t_small = passage_time(small, (-3, 0), (3, 0))
        t_large = passage_time(large, (-3, 0), (3, 0))
        assert t_small >= t_large


def test_coupling_monotonicity_in_p():
    grid = (0.6, 0.7, 0.8, 0.9, 1.0)
    region = BoxRegion((0, 0), 8)
    for seed in range(8):
        env = env_on(8, seed=seed)
        times = []
        for p in grid:
            params = EnvironmentParams(d=2, law=DIRAC1, p=p, p0=0.6)
            view = WeightView(env=env, params=params, M=5.0, region=region)
            times.append(passage_time(view, (-6, 0), (6, 0)))
        assert all(a >= b for a, b in zip(times, times[1:]))


def test_small_box_oracle_equivalence_batch():
    # scaled-down version of the exhaustive-pair check, several laws
    atoms = WeightLaw.atoms([(1.0, 0.5), (2.0, 0.5)])
    for seed, law in [(0, UNI01), (1, atoms), (2, UNI01)]:
        view = view_on(3, seed=seed, law=law, p=0.85, M=4.0)
        sites = oracles.box_sites((0, 0), 3)
        adj = adjacency(view.env, sites, 0.85, cap=4.0)
        source = (-3, 3)
        field = distance_field(view, source)
        lower = oracles.label_correcting_distances(adj, source)
        for target in sites:
            want = oracles.sap_min_weight(adj, target, source, lower)
            got = field.distance_at(target)
            if law is atoms:
                assert got == want
            else:
                assert got == pytest.approx(want, abs=1e-12)
