import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from percofpp import (
    AnnulusRegion,
    BoxRegion,
    box_edges,
    canonicalize,
    is_crossing_path,
    linf_diameter,
    region_vertices,
)

sites2 = st.tuples(st.integers(-20, 20), st.integers(-20, 20))


def test_canonicalize_examples():
    e = canonicalize((0, 0), (1, 0))
    assert e.x == (0, 0) and e.y == (1, 0)
    e = canonicalize((1, 0), (0, 0))
    assert e.x == (0, 0) and e.y == (1, 0)
    e = canonicalize((-1, 0), (-2, 0))
    assert e.x == (-1, 0) and e.y == (-2, 0)


def test_canonicalize_rejects_non_adjacent():
    with pytest.raises(ValueError):
        canonicalize((0, 0), (1, 1))
    with pytest.raises(ValueError):
        canonicalize((0, 0), (0, 0))


@given(sites2, st.integers(0, 1), st.sampled_from([1, -1]))
def test_canonical_edge_norm_gap(a, axis, sign):
    b = list(a)
    b[axis] += sign
    e = canonicalize(a, tuple(b))
    na = sum(abs(c) for c in e.x)
    nb = sum(abs(c) for c in e.y)
    assert nb - na == 1


@given(sites2, st.integers(0, 1), st.sampled_from([1, -1]))
def test_canonicalize_swap_symmetric(a, axis, sign):
    b = tuple(a[k] + (sign if k == axis else 0) for k in range(2))
    assert canonicalize(a, b) == canonicalize(b, a)


def test_region_vertices_counts():
    v = region_vertices(BoxRegion((0, 0), 1))
    assert len(v) == 9
    v = region_vertices(BoxRegion((3, -2), 0))
    assert len(v) == 1 and tuple(v[0]) == (3, -2)
    v = region_vertices(AnnulusRegion((0, 0), 1))
    assert len(v) == 49 - 9


def test_region_vertices_sorted_unique():
    v = region_vertices(BoxRegion((1, 1), 3))
    rows = [tuple(r) for r in v]
    assert rows == sorted(set(rows))


def test_box_boundary_partition():
    for t in (1, 2, 5):
        box = BoxRegion((0, 0), t)
        inner = {tuple(r) for r in region_vertices(BoxRegion((0, 0), t - 1))}
        shell = {tuple(r) for r in box.boundary()}
        full = {tuple(r) for r in region_vertices(box)}
        assert shell | inner == full
        assert shell & inner == set()


def test_box_edge_count_formula():
    for d in (2, 3):
        for t in (1, 2, 3):
            box = BoxRegion((0,) * d, t)
            side = 2 * t + 1
            assert len(box_edges(box)) == d * side ** (d - 1) * (side - 1)


def test_canonicalize_bijection_over_box():
    box = BoxRegion((0, 0), 3)
    edges = box_edges(box)
    assert len(set(edges)) == len(edges)
    rebuilt = {canonicalize(e.y, e.x) for e in edges}
    assert rebuilt == set(edges)


def test_crossing_path_radial_segment():
    n = 2
    ann = AnnulusRegion((0, 0), n)
    path = [(x, 0) for x in range(n, 3 * n + 1)]
    assert is_crossing_path(path, ann)
    assert is_crossing_path(list(reversed(path)), ann)


def test_crossing_path_inside_inner_box_false():
    ann = AnnulusRegion((0, 0), 3)
    with pytest.raises(ValueError):
        # wholly inside Lambda_{N-1}: already structurally a path, but the
        # vertices are not in the annulus at all
        is_crossing_path([(0, 0), (0, 1), (1, 1), (1, 1)], ann)
    assert not is_crossing_path([(0, 0), (0, 1), (1, 1)], ann)


def test_crossing_path_exiting_outer_box_false():
    # touches both shells but steps outside Lambda_{3N} midway
    n = 1
    ann = AnnulusRegion((0, 0), n)
    path = [(1, 0), (2, 0), (3, 0), (4, 0), (4, 1), (3, 1), (3, 0)]
    with pytest.raises(ValueError):
        is_crossing_path(path, ann)  # revisits (3, 0): structural error
    path = [(1, 0), (2, 0), (3, 0), (4, 0), (4, 1), (3, 1), (2, 1)]
    assert not is_crossing_path(path, ann)


def test_crossing_path_non_adjacent_rejected():
    ann = AnnulusRegion((0, 0), 1)
    with pytest.raises(ValueError):
        is_crossing_path([(1, 0), (3, 0)], ann)


def test_linf_diameter_examples():
    assert linf_diameter([(0, 0)]) == 0
    assert linf_diameter([(0, 0), (3, 1)]) == 3
    stair = [(0, 0)]
    for k in range(8):
        stair.append((k + 1, k))
        stair.append((k + 1, k + 1))
    assert len(stair) == 17
    assert linf_diameter(stair) == 8
    brute = max(
        max(abs(a[0] - b[0]), abs(a[1] - b[1])) for a in stair for b in stair
    )
    assert brute == 8


def test_linf_diameter_empty_rejected():
    with pytest.raises(ValueError):
        linf_diameter([])


@given(st.lists(sites2, min_size=1, max_size=12))
def test_linf_diameter_matches_bruteforce(pts):
    brute = max(
        max(abs(a[0] - b[0]), abs(a[1] - b[1])) for a in pts for b in pts
    )
    assert linf_diameter(pts) == brute


def test_annulus_shell_membership():
    # default annulus is Lambda_{3N} \ Lambda_N: inner-shell vertices only
    # appear in the closed variant
    ann = AnnulusRegion((2, 2), 2)
    pts = {tuple(r) for r in region_vertices(ann)}
    closed = {tuple(r) for r in region_vertices(ann.with_closed())}
    assert (2, 2) not in pts and (2, 2) not in closed
    assert (4, 2) not in pts and (4, 2) in closed
    assert (8, 2) in pts and (8, 2) in closed
    assert closed - pts == {
        tuple(r) for r in region_vertices(BoxRegion((2, 2), 2))
    } - {tuple(r) for r in region_vertices(BoxRegion((2, 2), 1))}


def test_box_region_contains():
    box = BoxRegion((0, 0), 2)
    pts = np.asarray([(0, 0), (2, 2), (3, 0), (-2, -2), (0, -3)])
    np.testing.assert_array_equal(
        box.contains(pts), [True, True, False, True, False]
    )
