import math
import warnings
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from roekuiper import SpaceSpec, ball, ball_cardinality, boundary_set, distance, is_r_sparse
from roekuiper import realize_window, validate_metric
from roekuiper.errors import BadLabel, BadParams, BoundaryClippedWarning, EmptyWindow
from roekuiper.errors import OracleUnavailable
from roekuiper.metric_space import Window, block_index, block_members

from conftest import builtin_windows

Z = SpaceSpec.integer_line()
E = SpaceSpec.exponential_blocks()
FIB = SpaceSpec.fibered_line()


# --- realize_window / distance ------------------------------------------------

def test_line_window():
    w = realize_window(Z, {"n": 2})
    assert w.labels == (-2, -1, 0, 1, 2)
    assert w.d(w.index[-2], w.index[2]) == 4


def test_expblocks_window_size_and_distance():
    w = realize_window(E, {"kmin": -2, "kmax": 2})
    assert w.n == 1 + 2 * (2 + 4)
    assert w.d(w.index[1], w.index[3]) == 2


def test_fibered_window():
    w = realize_window(FIB, {"n": 1, "fibers": 1})
    assert w.n == 6
    a = w.index[(0, 0)]
    assert w.d(a, w.index[(0, 1)]) == 1
    assert w.d(a, w.index[(1, 1)]) == 1
    assert w.d(a, w.index[(1, 0)]) == 1


def test_block_index_matches_definition():
    # X_0 = {0}, X_1 = {1, 2}, X_2 = {3..6}, X_3 = {7..14}
    assert [block_index(n) for n in (0, 1, 2, 3, 6, 7, 14, 15)] == [0, 1, 1, 2, 2, 3, 3, 4]
    assert block_members(3) == list(range(7, 15))
    assert block_members(-2) == [-6, -5, -4, -3]
    assert all(block_index(-n) == -block_index(n) for n in range(40))


def test_distance_examples():
    assert distance(E, 7, 0) == 4
    D3 = SpaceSpec.disjoint_power(Z, 3)
    assert distance(D3, (1, 5), (3, 5)) == 2
    for spec, a in [(Z, 3), (E, -9), (FIB, (2, 4)), (D3, (2, -1))]:
        assert distance(spec, a, a) == 0


def test_bad_labels_and_params():
    with pytest.raises(BadLabel):
        distance(Z, 1, (1, 2))
    with pytest.raises(BadParams):
        SpaceSpec("Nope")
    with pytest.raises(EmptyWindow):
        realize_window(SpaceSpec.bounded_infinite(1), {"n": 0})


# --- balls ------------------------------------------------------------------

def test_fibered_ball_is_whole_fiber_and_infinite():
    w = realize_window(FIB, {"n": 3, "fibers": 4})
    b = ball(w, (0, 0), 1)
    assert b.infinite
    assert set(b.labels) >= {(0, f) for f in range(5)}


def test_line_ball_finite():
    w = realize_window(Z, {"n": 6})
    b = ball(w, 0, 2)
    assert b.labels == (-2, -1, 0, 1, 2)
    assert b.cardinality == 5


def test_expblocks_small_ball():
    w = realize_window(E, {"blocks": 3})
    b = ball(w, 0, 1)
    assert b.labels == (0,)
    assert b.cardinality == 1
    # closed 1-ball of a point is its block
    assert set(ball(w, 5, 1).labels) == set(block_members(2))


def test_oracles_on_radii():
    for n in range(-3, 4):
        for f in range(3):
            for r in (1, Fraction(3, 2), 2, 5):
                assert ball_cardinality(FIB, (n, f), r) == math.inf
    for n in range(-20, 21):
        for r in (1, 2, 3, 7):
            c = ball_cardinality(E, n, r)
            assert c != math.inf
            # every block X_j with |j - k(n)| + 1 <= r lies in the ball
            k = block_index(n)
            brute = sum(len(block_members(j)) for j in range(k - r + 1, k + r))
            assert c == brute


@given(st.integers(0, 7), st.data())
def test_ball_monotone(kind_idx, data):
    _, w = builtin_windows()[kind_idx]
    c = data.draw(st.sampled_from(w.labels))
    r1 = Fraction(data.draw(st.integers(0, 12)), 2)
    r2 = r1 + Fraction(data.draw(st.integers(0, 12)), 2)
    b1, b2 = ball(w, c, r1), ball(w, c, r2)
    assert set(b1.labels) <= set(b2.labels)
    assert b1.cardinality <= b2.cardinality


# --- boundary ---------------------------------------------------------------

def test_boundary_line_example():
    w = realize_window(Z, {"n": 20})
    assert boundary_set(w, range(10), 2) == [-1, 0, 1, 8, 9, 10]


def test_boundary_modes_differ_on_line():
    w = realize_window(Z, {"n": 20})
    assert boundary_set(w, range(10), 2, "closed") == [-2, -1, 0, 1, 8, 9, 10, 11]
    assert boundary_set(w, range(10), 2, "strict") == [-1, 0, 9, 10]


def test_boundary_whole_space_empty():
    w = realize_window(SpaceSpec.explicit([[0, 1, 1], [1, 0, 1], [1, 1, 0]]))
    assert boundary_set(w, w.labels, 1) == []


def test_boundary_expblocks_contains_next_block():
    w = realize_window(E, {"blocks": 4})
    Y = block_members(0) + block_members(1)
    assert set(block_members(2)) <= set(boundary_set(w, Y, 2, "closed"))
    # the inner reading keeps only points strictly closer than 2 to Y
    assert boundary_set(w, Y, 2) == [0, 1, 2]


def test_boundary_warns_at_edge():
    w = realize_window(Z, {"n": 5})
    with pytest.warns(BoundaryClippedWarning):
        boundary_set(w, [4, 5], 1)


@pytest.mark.parametrize("mode", ["closed", "strict"])
@given(st.data())
def test_boundary_complement_symmetry(mode, data):
    w = realize_window(Z, {"n": 30})
    lo = data.draw(st.integers(-20, 15))
    hi = data.draw(st.integers(lo, 20))
    R = data.draw(st.integers(1, 4))
    Y = set(range(lo, hi + 1))
    interior = {w.labels[i] for i in w.interior(2 * R + 1)}
    comp = [x for x in w.labels if x not in Y]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", BoundaryClippedWarning)
        a = set(boundary_set(w, Y, R, mode)) & interior
        b = set(boundary_set(w, comp, R, mode)) & interior
    assert a == b


# --- sparse sets --------------------------------------------------------------

def test_sparse_tail():
    S = SpaceSpec.sparse_augmented(Z, 10)
    w = realize_window(S, {"base": {"n": 3}, "tail": 5})
    tail = [(1, j) for j in range(5)]
    assert is_r_sparse(S, tail, 5, w)
    assert not is_r_sparse(S, tail, 10, w)


def test_sparse_line_and_fiber():
    w = realize_window(Z, {"n": 6})
    check = is_r_sparse(Z, [0, 5], 1, w)
    assert not check and check.witness[0] == 0
    assert is_r_sparse(Z, [0, 5], Fraction(1, 2))
    wf = realize_window(FIB, {"n": 2, "fibers": 3})
    check = is_r_sparse(FIB, [(0, f) for f in range(4)], 1, wf)
    assert not check
    y, other = check.witness
    assert wf.d(wf.index[y], wf.index[other]) <= 1


def test_sparse_explicit_outside_window():
    ex = SpaceSpec.explicit([[0, 1], [1, 0]])
    with pytest.raises(OracleUnavailable):
        is_r_sparse(ex, [5], 1)


@given(st.lists(st.integers(-10, 10), min_size=1, max_size=5, unique=True),
       st.integers(0, 6), st.integers(0, 6))
def test_sparse_monotone_in_r(Y, a, b):
    S = SpaceSpec.sparse_augmented(Z, 7)
    pts = [(1, abs(y)) for y in Y] + [(0, y) for y in Y[:1]]
    r, r2 = max(a, b) / 2, min(a, b) / 2
    if is_r_sparse(S, pts, r):
        assert is_r_sparse(S, pts, r2)


# --- metric validation --------------------------------------------------------

@pytest.mark.parametrize("name,w", builtin_windows(), ids=[n for n, _ in builtin_windows()])
def test_builtin_windows_are_metrics(name, w):
    assert validate_metric(w).ok


def test_explicit_triangle_violation():
    w = realize_window(SpaceSpec.explicit([[0, 5, 10], [5, 0, 1], [10, 1, 0]]))
    rep = validate_metric(w)
    assert not rep.ok
    assert ("triangle", 0, 1, 2) in rep.violations


@given(st.integers(1, 3), st.integers(1, 4), st.integers(0, 3))
def test_disjoint_power_metric(copies, n, tail):
    w = realize_window(SpaceSpec.disjoint_power(Z, copies), {"base": {"n": n}})
    assert w.n == copies * (2 * n + 1)
    assert validate_metric(w).ok
    s = realize_window(SpaceSpec.sparse_augmented(E, 3), {"base": {"blocks": 2}, "tail": tail})
    assert validate_metric(s).ok


# --- windows ---------------------------------------------------------------------

@pytest.mark.parametrize("name,w", builtin_windows(), ids=[n for n, _ in builtin_windows()])
def test_window_json_roundtrip(name, w):
    w2 = Window.from_json(w.to_json())
    assert w2.labels == w.labels
    assert np.array_equal(w2.dnum(), w.dnum())
    assert w2.spec == w.spec


def test_window_json_rejects_tampered_distance():
    w = realize_window(Z, {"n": 2})
    obj = w.to_json()
    obj["dist"][3][0] = "7"
    with pytest.raises(BadParams):
        Window.from_json(obj)


def test_edges_line_and_fibers():
    w = realize_window(Z, {"n": 5})
    assert w.edge[w.index[0]] == 6 and w.edge[w.index[5]] == 1
    wf = realize_window(FIB, {"n": 3, "fibers": 2})
    i = wf.index[(0, 0)]
    assert wf.edge[i] == 1            # missing fiber points at distance 1
    assert wf.geometric_edge[i] == 4  # the base line is cut at |n| = 4


def test_subwindow_keeps_parent_ids():
    w = realize_window(Z, {"n": 5})
    sub = w.subwindow([3, 4, 5])
    assert sub.labels == (-2, -1, 0)
    assert sub.parent_ids == (3, 4, 5)
    assert sub.edge[0] == 1
