import math
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from roekuiper import SpaceSpec, distance, realize_window
from roekuiper.errors import BoundaryClipped, NotCiubb, UnsupportedSpace
from roekuiper.metric_space import block_index, block_members
from roekuiper.partition import (
    PiubsPartition,
    beta,
    ciubb_to_piubs,
    find_ciubb,
    folner_ratio,
    folner_search,
    natural_partition,
    paradoxical_check,
    verify_piubs,
)

Z = SpaceSpec.integer_line()
E = SpaceSpec.exponential_blocks()
FIB = SpaceSpec.fibered_line()


def fib(n=6, fibers=4):
    return realize_window(FIB, {"n": n, "fibers": fibers})


# --- CIUBB ------------------------------------------------------------------

def test_fibered_cover_by_infinite_balls():
    w = fib()
    cover = find_ciubb(w, 1)
    assert all(v == "infinite" for v in cover.verdicts)
    assert all(c[1] == 0 for c in cover.centers)
    covered = set()
    for c in cover.centers:
        covered |= {x for x in w.labels if distance(FIB, c, x) <= 1}
    assert covered == set(w.labels)


def test_expblocks_has_no_cover():
    w = realize_window(E, {"blocks": 3})
    with pytest.raises(NotCiubb) as info:
        find_ciubb(w, 1)
    wit = info.value.witness
    assert wit["cardinality"] != math.inf
    assert set(wit["ball"]) == set(block_members(block_index(wit["center"])))


def test_bounded_single_center():
    w = realize_window(SpaceSpec.bounded_infinite(2), {"n": 7})
    cover = find_ciubb(w, 2)
    assert cover.centers == (0,)
    part = ciubb_to_piubs(cover)
    assert part.blocks == (w.labels,)
    assert verify_piubs(part).ok


# --- CIUBB -> PIUBS ----------------------------------------------------------

def _ball(w, c, r):
    return {x for x in w.labels if distance(w.spec, c, x) <= r}


@given(st.integers(2, 8), st.integers(1, 5), st.sampled_from([1, 2]))
def test_sandwich_on_fibered(n, fibers, r):
    w = fib(n, fibers)
    cover = find_ciubb(w, r)
    part = ciubb_to_piubs(cover)
    assert part.r == 3 * r
    for c, blk in zip(part.centers, part.blocks):
        assert _ball(w, c, r) <= set(blk) <= _ball(w, c, 3 * r)
    cert = verify_piubs(part, sandwich_r=r)
    assert cert.ok, cert.violations


def test_two_separated_clusters():
    B = SpaceSpec.bounded_infinite(Fraction(1, 2))
    w = realize_window(SpaceSpec.disjoint_power(B, 2), {"base": {"n": 4}})
    part = ciubb_to_piubs(find_ciubb(w, Fraction(1, 2)))
    assert part.blocks == (tuple((1, j) for j in range(4)), tuple((2, j) for j in range(4)))
    assert verify_piubs(part, sandwich_r=Fraction(1, 2)).ok


def test_missing_center_is_a_violation():
    w = fib(3, 2)
    part = natural_partition(w)
    blocks = list(part.blocks)
    blocks[0] = tuple(x for x in blocks[0] if x != part.centers[0])
    blocks[1] = blocks[1] + (part.centers[0],)
    bad = PiubsPartition(part.r, part.centers, tuple(blocks), part.verdicts, w)
    cert = verify_piubs(bad)
    assert not cert.containment_ok
    assert any(v[0] == "center-missing" for v in cert.violations)


def test_expblocks_block_partition_is_finite():
    w = realize_window(E, {"blocks": 3})
    cert = verify_piubs(natural_partition(w))
    assert cert.partition_ok and not cert.infinite_ok


def test_natural_partition_kinds():
    part = natural_partition(fib(2, 3))
    assert part.r == 1 and len(part.blocks) == 5
    assert verify_piubs(part).ok
    with pytest.raises(UnsupportedSpace):
        natural_partition(realize_window(Z, {"n": 3}))


# --- Folner ratios --------------------------------------------------------------

def _box(L, start=0):
    return [(a, b) for a in range(start, start + L) for b in range(start, start + L)]


def test_lattice_box_ratio_formula():
    w = realize_window(SpaceSpec.integer_lattice(2), {"n": 10})
    prev = None
    for L in (4, 8, 16):
        q = folner_ratio(w, _box(L, -(L // 2)), 1)
        assert q == Fraction(4 * L - 4, L * L)
        assert prev is None or q < prev
        prev = q


def test_lattice_search_succeeds():
    w = realize_window(SpaceSpec.integer_lattice(2), {"n": 8})
    rep = folner_search(w, 1, Fraction(3, 10))
    assert rep.success and rep.bound < Fraction(3, 10)


def _brute_block_ratio(s, t, R=2):
    F = {x for k in range(s, t + 1) for x in block_members(k)}
    outside = block_members(s - 1) + block_members(t + 1)
    bd = [x for x in F if min(distance(E, x, y) for y in outside) <= R]
    return Fraction(len(bd), len(F))


def test_expblocks_intervals_bounded_below():
    w = realize_window(E, {"blocks": 6})
    rep = folner_search(w, 2, Fraction(1, 5))
    assert rep.verdict == "antifolner-evidence"
    assert rep.tried and all(q >= Fraction(1, 4) for *_, q in rep.tried)
    for desc, size, _, q in rep.tried:
        s, t = map(int, desc[len("blocks ["):-1].split(","))
        assert q == _brute_block_ratio(s, t)


def test_whole_finite_space_ratio_zero():
    w = realize_window(SpaceSpec.explicit([[0, 1, 2], [1, 0, 1], [2, 1, 0]]))
    assert folner_ratio(w, w.labels, 1) == 0


def test_bounded_space_is_inconclusive():
    w = realize_window(SpaceSpec.bounded_infinite(1), {"n": 8})
    assert folner_search(w, 1, Fraction(1, 10)).verdict == "inconclusive"


def test_ratio_refuses_clipped_sets():
    w = realize_window(Z, {"n": 5})
    with pytest.raises(BoundaryClipped):
        folner_ratio(w, [3, 4, 5], 1)


@given(st.integers(-8, 3), st.integers(0, 5), st.integers(1, 3), st.integers(-4, 4))
def test_ratio_translation_invariant(a, length, R, k):
    w = realize_window(Z, {"n": 20})
    F = list(range(a, a + length + 1))
    G = [x + k for x in F]
    assert folner_ratio(w, F, R) == folner_ratio(w, G, R)


@given(st.integers(1, 6), st.integers(-2, 2))
def test_ratio_lattice_symmetry(L, s):
    w = realize_window(SpaceSpec.integer_lattice(2), {"n": 9})
    F = [(x, y) for x in range(s, s + L) for y in range(s - 1, s + 1)]
    swap = [(y, x) for x, y in F]
    neg = [(-x, -y) for x, y in F]
    q = folner_ratio(w, F, 1)
    assert q == folner_ratio(w, swap, 1) == folner_ratio(w, neg, 1)


# --- paradoxical map --------------------------------------------------------------

def test_paradoxical_window():
    w = realize_window(E, {"blocks": 4})
    rep = paradoxical_check(w)
    assert rep.ok
    assert all(v == 2 for v in rep.fiber_sizes.values())
    assert rep.max_displacement == 2


def test_beta_values():
    assert beta(0) == 0 and distance(E, 0, beta(0)) == 0
    assert beta(7) == 3 and block_index(3) == 2
    assert distance(E, 7, beta(7)) == 2
    for n in range(-200, 200):
        assert sorted(m for m in range(-500, 500) if beta(m) == n) == [2 * n, 2 * n + 1]


def test_paradoxical_needs_expblocks():
    with pytest.raises(UnsupportedSpace):
        paradoxical_check(realize_window(Z, {"n": 4}))
