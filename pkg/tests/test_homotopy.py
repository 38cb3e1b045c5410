import math
from fractions import Fraction

import numpy as np
import pytest

from roekuiper import SpaceSpec, SparseOperator, realize_window
from roekuiper.errors import (
    InsufficientVisits,
    LedgerStale,
    NotTriangular,
    Singular,
    StageFailed,
    WindowTooSmall,
)
from roekuiper.homotopy import (
    HALF_PI,
    ContractConfig,
    LayerDecomposition,
    SelectionData,
    VertexFamily,
    contract,
    epsilon_margin,
    inverse_approximation,
    kuiper_via_sparse,
    layer_copy,
    layer_decomposition,
    polar_path,
    rotation_block,
    rotation_layer,
    select_sequences,
    shift_isometry,
    upper_triangular_collapse,
    whirl_pair,
    whirl_schedule,
    zero_out,
)
from roekuiper.partition import natural_partition
from roekuiper.paths import smallest_singular_value
from roekuiper.roe_operator import (
    permutation_operator,
    random_band,
    random_block_unitary,
    shift_operator,
)

FIB = SpaceSpec.fibered_line()
Z = SpaceSpec.integer_line()
CYCLE = [-3, -1, 1, 3, 2, 0, -2]      # consecutive steps of length <= 2


def cycle_vertex(w, phase=0.3):
    mp = {(CYCLE[k], 0): (CYCLE[(k + 1) % 7], 0) for k in range(7)}
    ph = {(n, 0): np.exp(1j * phase * (n + 4)) for n in range(-3, 4)}
    return permutation_operator(w, mp, ph)


@pytest.fixture(scope="module")
def fib():
    return realize_window(FIB, {"n": 6, "fibers": 7})


def manual_sel(w, z, y, eps=0.5, r=1):
    """Selection record with given z/y labels and no ledger."""
    zi, yi = tuple(w.ids(z)), tuple(w.ids(y))
    return SelectionData(Fraction(r), eps, zi, yi, tuple(range(len(zi))), tuple((i,) for i in yi),
                         {}, 0, [], w)


# --- epsilon margin -----------------------------------------------------------

def test_margin_unitary(fib):
    assert epsilon_margin(VertexFamily((cycle_vertex(fib),))) == pytest.approx(0.5, abs=1e-6)


def test_margin_along_edge():
    w = realize_window(Z, {"n": 3})
    A = SparseOperator.identity(w)
    B = SparseOperator(w, 0.5 * np.eye(w.n))
    assert epsilon_margin(VertexFamily((A, B))) == pytest.approx(0.25, abs=1e-6)


def test_margin_singular_vertex():
    w = realize_window(Z, {"n": 3})
    m = np.eye(w.n)
    m[0, 0] = 1e-13
    with pytest.raises(Singular):
        epsilon_margin(VertexFamily((SparseOperator(w, m),)))


def test_family_grid_barycentric():
    w = realize_window(Z, {"n": 1})
    I = SparseOperator.identity(w)
    fam = VertexFamily((I, 2 * I, 3 * I), resolution=4)
    grid = fam.grid()
    assert len(grid) == 15                      # (4+1)(4+2)/2 points of a triangle
    assert all(sum(g) == 1 and min(g) >= 0 for g in grid)


# --- selection --------------------------------------------------------------

def test_selection_example():
    w = realize_window(FIB, {"n": 12, "fibers": 24})
    part = natural_partition(w)
    fam = VertexFamily((cycle_vertex(w),))
    # seven active fibers, three visits each
    sel = select_sequences(part, fam, 0.5, 21, 3)
    assert sel.L == 21
    ids = set(sel.z) | set(sel.y)
    assert len(ids) == 42
    block_of = part.block_of()
    for z, y, k in zip(sel.z, sel.y, sel.blocks):
        assert block_of[w.labels[z]] == block_of[w.labels[y]] == k
    assert all(v >= 3 for v in sel.visits.values())
    # brute-force the almost-orthogonality conditions
    F = np.abs(fam.vertices[0].matrix)
    for i in range(1, 22):
        for j in range(1, 22):
            val = F[sel.z[i - 1], sel.y[j - 1]]
            if i > j:
                assert val == 0
            elif i < j:
                assert val < 0.5 / 2 ** (i + j)
    assert not sel.to_json()["ledger_violations"]


def test_selection_identity_family(fib):
    part = natural_partition(fib)
    sel = select_sequences(part, VertexFamily((SparseOperator.identity(fib),)), 0.5, 13, 1)
    assert sel.max_cross() == 0
    assert all(v == 0 for _, _, _, v, _ in sel.ledger)


def test_selection_window_too_small():
    w = realize_window(FIB, {"n": 1, "fibers": 2})
    part = natural_partition(w)
    with pytest.raises(WindowTooSmall):
        select_sequences(part, VertexFamily((SparseOperator.identity(w),)), 0.5, 10, 1)


# --- zero-out ------------------------------------------------------------------

def test_zero_out_identity(fib):
    part = natural_partition(fib)
    fam = VertexFamily((SparseOperator.identity(fib),))
    sel = select_sequences(part, fam, 0.5, 13, 1)
    res = zero_out(fam.vertices[0], sel)
    assert np.array_equal(res.F_prime.matrix, np.eye(fib.n))
    assert res.total == 0


def test_zero_out_removes_small_entries():
    w = realize_window(Z, {"n": 4})
    sel = manual_sel(w, [-4, -3, -2], [0, 1, 2])
    m = np.eye(w.n, dtype=complex)
    ix = w.index
    m[ix[-4], ix[1]] = 1e-8          # (z(1), y(2))
    m[ix[0], ix[2]] = 2e-8           # (v, y(3)), v in V_1
    m[ix[3], ix[1]] = 0.5            # outside the mask, kept
    F = SparseOperator(w, m)
    res = zero_out(F, sel)
    diff = m - res.F_prime.matrix
    assert np.count_nonzero(diff) == 2
    assert res.F_prime.matrix[ix[3], ix[1]] == 0.5
    assert res.column_changes == (0.0, 1e-8, 2e-8)
    assert np.linalg.norm(diff, 2) == pytest.approx(res.total, rel=1e-6)
    assert 0 < res.total < sel.eps
    assert np.array_equal(res.segment.at(0.0), m)
    assert np.array_equal(res.segment.at(1.0), res.F_prime.matrix)


def test_zero_out_stale_ledger(fib):
    part = natural_partition(fib)
    I = SparseOperator.identity(fib)
    sel = select_sequences(part, VertexFamily((I,)), 0.5, 13, 1)
    m = np.eye(fib.n, dtype=complex)
    m[sel.z[1], sel.y[0]] = 0.5
    with pytest.raises(LedgerStale):
        zero_out(SparseOperator(fib, m), sel)


# --- rotations -----------------------------------------------------------------

def test_first_rotation_scalar_case():
    w = realize_window(Z, {"n": 2})
    sel = manual_sel(w, [0], [1])
    I = SparseOperator.identity(w)
    for t in (0.0, 0.4, 1.1, HALF_PI):
        U = rotation_block(I, sel, 1, t).matrix
        ids = [w.index[0], w.index[1]]
        c, s = math.cos(t), math.sin(t)
        assert np.allclose(U[np.ix_(ids, ids)], [[c, s], [-s, c]], atol=1e-15)
    assert np.array_equal(rotation_block(I, sel, 1, 0.0).matrix, np.eye(w.n))


def test_first_rotation_moves_column_to_z():
    w = realize_window(Z, {"n": 4})
    rng = np.random.default_rng(9)
    m = np.eye(w.n, dtype=complex)
    y = w.index[1]
    supp = [w.index[0], w.index[1], w.index[2]]
    m[:, y] = 0
    m[supp, y] = rng.standard_normal(3) + 1j * rng.standard_normal(3)
    F = SparseOperator(w, m)
    sel = manual_sel(w, [-2], [1])
    U, info = rotation_block(F, sel, 1, HALF_PI, info=True)
    out = U.matrix @ m[:, y]
    target = np.zeros(w.n)
    target[w.index[-2]] = 1
    assert np.allclose(out, target, atol=1e-12)
    assert abs(info.det - 1) < 1e-12
    assert not info.unit_column


def test_first_rotation_unitary_for_unit_column():
    w = realize_window(Z, {"n": 4})
    a = np.array([0.6, 0.8j])
    m = np.eye(w.n, dtype=complex)
    y = w.index[0]
    m[:, y] = 0
    m[[w.index[0], w.index[1]], y] = a
    sel = manual_sel(w, [-1], [0])
    for t in np.linspace(0, HALF_PI, 7):
        U, info = rotation_block(SparseOperator(w, m), sel, 1, float(t), info=True)
        assert info.unit_column
        assert np.abs(U.matrix @ U.matrix.conj().T - np.eye(w.n)).max() <= 1e-10


def test_second_rotation_plane(fib):
    sel = manual_sel(fib, [(0, 1)], [(0, 2)])
    U = rotation_block(SparseOperator.identity(fib), sel, 1, HALF_PI, mode="second").matrix
    z, y = fib.index[(0, 1)], fib.index[(0, 2)]
    e = np.zeros(fib.n)
    e[z] = 1
    assert np.allclose(U @ e, np.eye(fib.n)[:, y])
    assert SparseOperator(fib, U).propagation <= 2


def test_rotation_layer_propagation_on_fibers(fib):
    V = cycle_vertex(fib)
    fam = VertexFamily((V,))
    sel = select_sequences(natural_partition(fib), fam, 0.5, 12, 1)
    Fp = zero_out(V, sel).F_prime.matrix
    p, r = V.propagation, sel.r
    for t in np.linspace(0, HALF_PI, 5):
        A = SparseOperator(fib, rotation_layer(Fp, sel, float(t), "first"))
        B = SparseOperator(fib, rotation_layer(Fp, sel, float(t), "second"))
        assert A.propagation <= 2 * r + 2 * p
        assert B.propagation <= 2 * r


# --- triangular collapse -----------------------------------------------------------

def _triangular(w, y_labels, Gstar_scale, rng):
    n = w.n
    yid = w.ids(y_labels)
    uid = [i for i in range(n) if i not in yid]
    m = np.zeros((n, n), dtype=complex)
    m[yid, yid] = 1
    q, _ = np.linalg.qr(rng.standard_normal((len(uid), len(uid))))
    m[np.ix_(uid, uid)] = q
    gs = rng.standard_normal((len(yid), len(uid)))
    if Gstar_scale:
        gs *= Gstar_scale / np.linalg.norm(gs, 2)
    else:
        gs[:] = 0
    m[np.ix_(yid, uid)] = gs
    return m


def test_triangular_constant_when_gstar_zero():
    w = realize_window(Z, {"n": 3})
    sel = manual_sel(w, [-3], [0, 1])
    m = _triangular(w, [0, 1], 0, np.random.default_rng(0))
    res = upper_triangular_collapse(m, sel)
    assert res.gstar_norm == 0
    assert np.array_equal(res.segment.start, res.segment.end)


def test_triangular_margin():
    w = realize_window(Z, {"n": 3})
    sel = manual_sel(w, [-3], [0, 1])
    m = _triangular(w, [0, 1], 0.5, np.random.default_rng(1))
    res = upper_triangular_collapse(m, sel)
    assert res.gstar_norm == pytest.approx(0.5)
    for s in np.linspace(1, 0, 11):
        assert smallest_singular_value(res.segment.at(float(s))) >= 1 - 0.5 - 1e-12


def test_triangular_rejects_lower_block():
    w = realize_window(Z, {"n": 3})
    sel = manual_sel(w, [-3], [0, 1])
    m = _triangular(w, [0, 1], 0, np.random.default_rng(2))
    m[w.index[2], w.index[0]] = 1e-3
    with pytest.raises(NotTriangular):
        upper_triangular_collapse(m, sel)


# --- layers and whirls ---------------------------------------------------------

@pytest.fixture(scope="module")
def layered(fib):
    fam = VertexFamily((cycle_vertex(fib),))
    part = natural_partition(fib)
    sel = select_sequences(part, fam, 0.5, 28, 2)
    active = [fib.index[(n, 0)] for n in range(-3, 4)]
    return sel, part, layer_decomposition(sel, part, 2, active)


def test_layer_distances(fib, layered):
    sel, part, layers = layered
    assert len(layers.w) == 2
    for m in range(1, 3):
        for u, w_ in zip(layers.u, layers.w[m - 1]):
            assert fib.d(u, w_) <= 1 < 2 * layers.r
    assert layers.strict


def test_layer_zero_and_insufficient(fib, layered):
    sel, part, _ = layered
    active = [fib.index[(n, 0)] for n in range(-3, 4)]
    lay0 = layer_decomposition(sel, part, 0, active)
    assert lay0.w == () and len(lay0.u) == 7
    with pytest.raises(InsufficientVisits):
        layer_decomposition(sel, part, 5, active)


def test_shift_isometries(fib, layered):
    _, _, layers = layered
    J11 = shift_isometry(layers, 1, 1).matrix
    assert np.array_equal(J11, layers.projector(1))
    J12 = shift_isometry(layers, 1, 2)
    assert J12.propagation <= 2
    G = np.zeros((fib.n, fib.n), dtype=complex)
    u = list(layers.u)
    G[np.ix_(u, u)] = np.random.default_rng(0).standard_normal((7, 7))
    J10, J01 = shift_isometry(layers, 1, 0).matrix, shift_isometry(layers, 0, 1).matrix
    assert np.array_equal(J10 @ G @ J01, layer_copy(layers, G, 1))


def _one_point_layers(lam):
    w = realize_window(Z, {"n": 1})
    lay = LayerDecomposition((w.index[-1],), ((w.index[0],), (w.index[1],)), (), 2,
                             Fraction(1), True, w, Fraction(1))
    G = np.zeros((3, 3), dtype=complex)
    G[0, 0] = lam
    Gi = np.zeros((3, 3), dtype=complex)
    Gi[0, 0] = 1 / lam
    return w, lay, G, Gi


def test_whirl_identity_constant(fib, layered):
    _, _, layers = layered
    P0 = layers.projector(0)
    for d in ("up", "down"):
        for t in np.linspace(0, HALF_PI, 5):
            assert np.allclose(whirl_pair(P0, P0, layers, 1, d, float(t)), np.eye(fib.n))


def test_whirl_scalar_swindle():
    w, lay, G, Gi = _one_point_layers(2.0)
    end = whirl_pair(G, Gi, lay, 1, "up", HALF_PI)
    assert np.allclose(np.diag(end), [1, 0.5, 2], atol=1e-15)
    assert np.array_equal(whirl_pair(G, Gi, lay, 1, "up", 0.0), np.eye(3))


def test_whirl_unitary_band_endpoints(fib, layered):
    _, _, layers = layered
    u = list(layers.u)
    q = random_block_unitary(realize_window(Z, {"n": 3}), 2, np.random.default_rng(3)).matrix
    G0 = np.zeros((fib.n, fib.n), dtype=complex)
    G0[np.ix_(u, u)] = q
    G0i = np.zeros_like(G0)
    G0i[np.ix_(u, u)] = q.conj().T
    eye = np.eye(fib.n)
    for a in (0, 1):
        Pab = layers.projector(a) + layers.projector(a + 1)
        up = whirl_pair(G0, G0i, layers, a, "up", HALF_PI)
        tgt = layer_copy(layers, G0i, a) + layer_copy(layers, G0, a + 1) + eye - Pab
        assert np.abs(up - tgt).max() <= 1e-8
        down0 = whirl_pair(G0, G0i, layers, a, "down", 0.0)
        tgt = layer_copy(layers, G0, a) + layer_copy(layers, G0i, a + 1) + eye - Pab
        assert np.abs(down0 - tgt).max() <= 1e-8
        assert np.abs(whirl_pair(G0, G0i, layers, a, "down", HALF_PI) - eye).max() <= 1e-8


def test_whirl_schedule():
    assert whirl_schedule(2) == ([(1, 2)], [(0, 1)], 2)
    assert whirl_schedule(4) == ([(1, 2), (3, 4)], [(0, 1), (2, 3)], 4)
    assert whirl_schedule(0) == ([], [], 0)


# --- inverse approximation -------------------------------------------------------

def test_inverse_of_permutation_exact():
    w = realize_window(Z, {"n": 5})
    P = permutation_operator(w, {0: 1, 1: 0, 3: 4, 4: 3})
    approx = inverse_approximation(P, 1)
    assert approx.error == 0


def test_inverse_neumann_decay():
    w = realize_window(Z, {"n": 20})
    G = SparseOperator(w, np.eye(w.n) + 0.1 * shift_operator(w).matrix)
    errs = [inverse_approximation(G, n).error for n in range(1, 6)]
    for a, b in zip(errs, errs[1:]):
        assert 0.05 < b / a < 0.15


def test_inverse_diagonal_truncation():
    w = realize_window(Z, {"n": 6})
    G = SparseOperator(w, np.eye(w.n) + 0.3 * shift_operator(w).matrix)
    inv = np.linalg.inv(G.matrix)
    off = inv - np.diag(np.diag(inv))
    assert inverse_approximation(G, 0).error == pytest.approx(np.linalg.norm(off, 2), rel=1e-6)


# --- full pipeline ------------------------------------------------------------

def test_contract_identity(fib):
    part = natural_partition(fib)
    res = contract(VertexFamily((SparseOperator.identity(fib),)), part,
                   ContractConfig(L=26, M=2, samples=3))
    assert res.verdict == "ok"
    assert res.interior_residual == 0
    for p in res.paths:
        assert np.array_equal(p.final, np.eye(fib.n))


def test_contract_cycle_edge(fib):
    """Two banded unitaries and the segment between them."""
    part = natural_partition(fib)
    A, B = cycle_vertex(fib, 0.3), cycle_vertex(fib, 0.9)
    fam = VertexFamily((A, B), resolution=2)
    res = contract(fam, part, ContractConfig(L=24, M=2, samples=5))
    assert res.verdict == "ok"
    assert res.certificate.min_sigma > 0
    assert res.interior_residual <= 1e-6
    assert res.whirl_endpoint_error <= 1e-8
    assert res.continuity is not None
    for k, b in res.bounds.items():
        assert b["observed"] <= b["declared"], k


def test_contract_reports_bad_window():
    w = realize_window(FIB, {"n": 2, "fibers": 1})
    part = natural_partition(w)
    U = random_block_unitary(w, 4, np.random.default_rng(0), layers=2)
    with pytest.raises(StageFailed) as info:
        contract(VertexFamily((U,)), part, ContractConfig(L=24, M=2))
    assert info.value.stage == "select_sequences"
    assert isinstance(info.value.cause, WindowTooSmall)


# --- sparse complement --------------------------------------------------------

def test_polar_path():
    lam = -2
    for t in np.linspace(0, 1, 11):
        assert abs(polar_path(lam, float(t))) == pytest.approx(2 ** (1 - t))
    assert polar_path(lam, 0) == pytest.approx(-2)
    assert polar_path(lam, 1) == 1
    for t in np.linspace(0, 1, 11):
        assert abs(polar_path(np.exp(2.5j), float(t))) == pytest.approx(1)


def test_kuiper_via_sparse():
    S = SpaceSpec.sparse_augmented(Z, 10)
    w = realize_window(S, {"base": {"n": 4}, "tail": 5})
    U = random_block_unitary(w, 2, np.random.default_rng(2), layers=2)
    base = [x for x in w.labels if x[0] == 0]
    red = kuiper_via_sparse(VertexFamily((U,)), base, 5)
    F1 = red.family.vertices[0]
    assert F1.window.labels == tuple(base)
    assert epsilon_margin(red.family) == pytest.approx(0.5, abs=1e-6)
    assert red.min_modulus == pytest.approx(1)
    seg = red.segments[0]
    m0 = seg.at(0.0)
    assert np.allclose(m0, U.matrix)
    tail = w.ids([x for x in w.labels if x[0] == 1])
    assert np.allclose(seg.at(1.0)[tail, tail], 1)
