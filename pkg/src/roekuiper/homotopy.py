"""Contraction of a finite family of invertible finite-propagation operators
on a window carrying a partition into infinite bounded blocks.

The pipeline, one stage per function:

1. :func:`epsilon_margin`: half the smallest sampled ``sigma_min``.
2. :func:`select_sequences`: pairs ``(z(i), y(i))`` in a common block,
   with a ledger of the almost-orthogonality inequalities.
3. :func:`zero_out`: kill the small cross entries, a short linear segment.
4. :func:`rotation_block` (first): turn ``F'(delta_y(i))`` into
   ``delta_z(i)``; (second): turn ``delta_z(i)`` into ``delta_y(i)``.
5. :func:`upper_triangular_collapse`: the operator is now
   ``[[1, G_*], [0, G]]``; scale ``G_*`` to zero.
6. :func:`layer_decomposition`, :func:`shift_isometry`,
   :func:`whirl_pair`: rotate copies of ``G`` and ``G^-1`` through layers
   so that ``diag(G, 1, 1)`` becomes ``diag(1, 1, G_M)``.

With finitely many layers the last one keeps a copy of ``G``; the
certificate measures it and excludes it from the endpoint check.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .config import DEFAULT, Tolerances
from .errors import (
    InsufficientVisits,
    LayerMismatch,
    LedgerStale,
    NotTriangular,
    PropagationBoundViolated,
    RoeError,
    StageFailed,
    WindowMismatch,
    WindowTooSmall,
    ZeroColumn,
)
from .linalg import power_norm
from .metric_space import Window, is_r_sparse
from .partition import PiubsPartition
from .paths import Certificate, HomotopyPath, Segment, StageRecord, observed_propagation
from .roe_operator import SparseOperator, invert_matrix, sparse_corner_decompose

HALF_PI = math.pi / 2


def _cs(t: float) -> tuple[float, float]:
    """``(cos t, sin t)`` with exact values at ``0`` and ``pi/2``."""
    if t == 0:
        return 1.0, 0.0
    if t == HALF_PI:
        return 0.0, 1.0
    return math.cos(t), math.sin(t)


def _m(x) -> np.ndarray:
    return x.matrix if isinstance(x, SparseOperator) else np.asarray(x)


# ---------------------------------------------------------------------------
# vertex families

@dataclass
class VertexFamily:
    """Vertices of a polyhedron of invertibles, with its simplices.

    Each simplex has at most three vertices.  Convex combinations are
    sampled on a barycentric grid of ``resolution`` steps per edge.
    """

    vertices: tuple
    simplices: tuple = ()
    resolution: int = 8

    def __post_init__(self):
        self.vertices = tuple(self.vertices)
        if not self.vertices:
            raise ValueError("empty family")
        w = self.vertices[0].window
        for v in self.vertices[1:]:
            if not v.window.same_points(w):
                raise WindowMismatch("vertices live on different windows")
        if not self.simplices:
            if len(self.vertices) > 3:
                raise ValueError("give simplices explicitly for more than 3 vertices")
            self.simplices = (tuple(range(len(self.vertices))),)
        self.simplices = tuple(tuple(s) for s in self.simplices)
        if any(len(s) > 3 for s in self.simplices):
            raise ValueError("simplices of dimension <= 2 only")

    @property
    def window(self) -> Window:
        return self.vertices[0].window

    @property
    def p(self) -> Fraction:
        return max(v.propagation for v in self.vertices)

    def grid(self) -> list[tuple]:
        """Barycentric sample weights (tuples over all vertices), deduplicated."""
        res = self.resolution
        seen, out = set(), []
        nv = len(self.vertices)
        for simp in self.simplices:
            k = len(simp)
            steps = [0] if k == 1 else range(res + 1)
            for combo in itertools.product(steps, repeat=k - 1):
                if sum(combo) > res:
                    continue
                wts = [Fraction(c, res) for c in combo]
                wts.append(1 - sum(wts, Fraction(0)))
                w = [Fraction(0)] * nv
                for idx, val in zip(simp, wts):
                    w[idx] += val
                w = tuple(w)
                if w not in seen:
                    seen.add(w)
                    out.append(w)
        return out

    def combine(self, weights) -> np.ndarray:
        out = np.zeros_like(self.vertices[0].matrix)
        for wt, v in zip(weights, self.vertices):
            if wt:
                out = out + float(wt) * v.matrix
        return out

    def samples(self) -> list[tuple[tuple, np.ndarray]]:
        return [(w, self.combine(w)) for w in self.grid()]


def epsilon_margin(family: VertexFamily, tol: Tolerances = DEFAULT) -> float:
    """Half of the smallest ``sigma_min`` over the grid samples.

    Raises :class:`Singular` if a sample fails to invert.
    """
    return 0.5 * min(invert_matrix(m, tol)[1] for _, m in family.samples())


# ---------------------------------------------------------------------------
# selection

@dataclass
class SelectionData:
    r: Fraction
    eps: float
    z: tuple               # window ids
    y: tuple
    blocks: tuple          # block index per pair
    V: tuple               # V_i: union over vertices of supp F(delta_y(i)), as sorted id tuples
    visits: dict           # block -> number of pairs
    M: int
    ledger: list           # (i, j, condition, value, bound) with 1-based i, j
    window: Window = field(repr=False)
    fingerprint: tuple = field(repr=False, default=())

    @property
    def L(self) -> int:
        return len(self.y)

    def labels(self) -> dict:
        lab = self.window.labels
        return {"z": [lab[i] for i in self.z], "y": [lab[i] for i in self.y]}

    def max_cross(self) -> float:
        return max((v for _, _, c, v, _ in self.ledger if c == "b>"), default=0.0)

    def to_json(self) -> dict:
        from .metric_space import label_to_json
        lab = self.window.labels
        return {
            "r": str(self.r), "eps": self.eps, "M": self.M, "L": self.L,
            "z": [label_to_json(lab[i]) for i in self.z],
            "y": [label_to_json(lab[i]) for i in self.y],
            "blocks": list(self.blocks),
            "visits": {str(k): v for k, v in sorted(self.visits.items())},
            "ledger_violations": [list(e) for e in self.ledger if not _ledger_ok(e)],
            "ledger_entries": len(self.ledger),
        }


def _ledger_ok(entry) -> bool:
    _, _, cond, val, bound = entry
    return val == 0 if cond == "b>" else val < bound


def _active_ids(mats: Sequence[np.ndarray]) -> np.ndarray:
    n = mats[0].shape[0]
    act = np.zeros(n, dtype=bool)
    eye = np.eye(n)
    for m in mats:
        d = m != eye
        act |= d.any(axis=0) | d.any(axis=1)
    return act


def _fingerprint(mats) -> tuple:
    return tuple(hash(m.tobytes()) for m in mats)


def select_sequences(partition: PiubsPartition, family: VertexFamily, eps: float,
                     L: int, M: int) -> SelectionData:
    """Greedy inductive choice of ``L`` pairs ``(z(i), y(i))``.

    Blocks meeting the family's active support (the points where some
    vertex differs from the identity) are visited round-robin in center
    order; with no active support every block is used.  Inside a block,
    candidates are ordered by (active?, label).

    ``y(i)`` must satisfy, for every vertex ``F`` and ``k < i``,
    ``|F[z(k), y(i)]| < eps / 2^(k+i)`` and
    ``|F[v, y(i)]| < eps / (N_k 2^(k+i))`` for ``v`` in ``V_k``.
    ``z(i)`` avoids every ``V_k`` with ``k <= i``, which makes
    ``<delta_z(i), F delta_y(j)> = 0`` for ``j <= i`` exact.

    Raises :class:`WindowTooSmall` with the failing index.
    """
    win = family.window
    if not partition.window.same_points(win):
        raise WindowMismatch("partition and family live on different windows")
    if L < 0 or M < 0:
        raise ValueError("L and M must be >= 0")
    mats = [v.matrix for v in family.vertices]
    absm = [np.abs(m) for m in mats]
    active = _active_ids(mats)
    block_of = partition.block_of()
    members = [np.array(win.ids(b)) for b in partition.blocks]
    used_blocks = [k for k, ids in enumerate(members) if active[ids].any()]
    if not used_blocks:
        used_blocks = list(range(len(members)))
    order = {k: sorted(ids, key=lambda i: (bool(active[i]), win.labels[i]))
             for k, ids in enumerate(members)}
    taken = np.zeros(win.n, dtype=bool)
    banned_z = np.zeros(win.n, dtype=bool)
    zs, ys, blks, Vs = [], [], [], []
    for i in range(1, L + 1):
        k = used_blocks[(i - 1) % len(used_blocks)]
        y = None
        for cand in order[k]:
            if taken[cand]:
                continue
            good = True
            for kk in range(1, i):
                zb = eps / 2 ** (kk + i)
                vb = eps / (len(Vs[kk - 1]) * 2 ** (kk + i))
                Vk = list(Vs[kk - 1])
                for a in absm:
                    if a[zs[kk - 1], cand] >= zb or (Vk and a[Vk, cand].max() >= vb):
                        good = False
                        break
                if not good:
                    break
            if good:
                y = cand
                break
        if y is None:
            raise WindowTooSmall(f"no admissible y({i}) in block {k}", witness=i)
        supp = np.zeros(win.n, dtype=bool)
        for m in mats:
            supp |= m[:, y] != 0
        Vi = tuple(int(v) for v in np.flatnonzero(supp))
        if not Vi:
            raise ZeroColumn(f"column y({i}) vanishes for every vertex", witness=win.labels[y])
        banned_z[list(Vi)] = True
        z = None
        for cand in order[k]:
            if cand != y and not taken[cand] and not banned_z[cand]:
                z = cand
                break
        if z is None:
            raise WindowTooSmall(f"no admissible z({i}) in block {k}", witness=i)
        taken[y] = taken[z] = True
        zs.append(z)
        ys.append(y)
        blks.append(k)
        Vs.append(Vi)
    visits = {k: blks.count(k) for k in used_blocks}
    short = [k for k, c in visits.items() if c < M]
    if short:
        raise WindowTooSmall(f"block {short[0]} visited {visits[short[0]]} < M={M} times",
                             witness=L)
    ledger = _ledger(absm, zs, ys, Vs, eps)
    return SelectionData(partition.r, eps, tuple(zs), tuple(ys), tuple(blks), tuple(Vs),
                         visits, M, ledger, win, _fingerprint(mats))


def _ledger(absm, zs, ys, Vs, eps) -> list:
    out = []
    L = len(ys)
    for i in range(1, L + 1):
        for j in range(1, L + 1):
            if i == j:
                continue
            val = max(float(a[zs[i - 1], ys[j - 1]]) for a in absm)
            if i > j:
                out.append((i, j, "b>", val, 0.0))
            else:
                out.append((i, j, "b<", val, eps / 2 ** (i + j)))
                V = list(Vs[i - 1])
                cval = max(float(a[V, ys[j - 1]].max()) for a in absm)
                out.append((i, j, "c", cval, eps / (len(V) * 2 ** (i + j))))
    return out


# ---------------------------------------------------------------------------
# zero-out

def zero_mask(sel: SelectionData) -> np.ndarray:
    """Entries ``(z(i), y(j))`` and ``(v, y(j))``, ``v in V_i``, for ``i < j``."""
    mask = np.zeros((sel.window.n, sel.window.n), dtype=bool)
    for j in range(1, sel.L + 1):
        col = sel.y[j - 1]
        for i in range(1, j):
            mask[sel.z[i - 1], col] = True
            mask[list(sel.V[i - 1]), col] = True
    return mask


@dataclass
class ZeroOutResult:
    F_prime: SparseOperator
    segment: Segment
    column_changes: tuple      # ||F delta_y(j) - F' delta_y(j)||, j = 1..L
    total: float               # ||F - F'||

    def to_json(self) -> dict:
        return {"total": self.total, "max_column_change": max(self.column_changes, default=0.0)}


def _check_ledger(m: np.ndarray, sel: SelectionData):
    a = np.abs(m)
    for i in range(1, sel.L + 1):
        for j in range(1, sel.L + 1):
            if i > j and a[sel.z[i - 1], sel.y[j - 1]] != 0:
                raise LedgerStale("nonzero entry <delta_z(i), F delta_y(j)> with i > j",
                                  witness=(i, j, float(a[sel.z[i - 1], sel.y[j - 1]])))
            if i < j:
                if a[sel.z[i - 1], sel.y[j - 1]] >= sel.eps / 2 ** (i + j):
                    raise LedgerStale("cross entry exceeds eps/2^(i+j)", witness=(i, j))
                V = list(sel.V[i - 1])
                if a[V, sel.y[j - 1]].max() >= sel.eps / (len(V) * 2 ** (i + j)):
                    raise LedgerStale("support entry exceeds eps/(N_i 2^(i+j))", witness=(i, j))


def zero_out(F, sel: SelectionData, tol: Tolerances = DEFAULT) -> ZeroOutResult:
    """Zero the ledger's small entries and return the linear segment.

    Checks the per-column change ``< eps / 2^j``, the total ``< eps`` and
    the disjointness conditions on the new columns.
    """
    m = _m(F)
    win = sel.window
    _check_ledger(m, sel)
    mask = zero_mask(sel)
    mp = np.where(mask, 0, m)
    diff = m - mp
    cols = []
    for j in range(1, sel.L + 1):
        c = float(np.linalg.norm(diff[:, sel.y[j - 1]]))
        if not c < sel.eps / 2 ** j:
            raise LedgerStale(f"column {j} changes by {c:.3e} >= eps/2^j", witness=j)
        cols.append(c)
    total = power_norm(diff, tol) if diff.any() else 0.0
    if not total < sel.eps:
        raise LedgerStale(f"||F - F'|| = {total:.3e} is not < eps", witness=total)
    # disjoint supports, orthogonal to every delta_z
    owner = {}
    zset = set(sel.z)
    for j, y in enumerate(sel.y, start=1):
        for v in np.flatnonzero(mp[:, y]):
            v = int(v)
            if v in zset:
                raise LedgerStale("F'(delta_y) meets some delta_z", witness=(j, win.labels[v]))
            if v in owner:
                raise LedgerStale("columns F'(delta_y) overlap", witness=(owner[v], j))
            owner[v] = j
    window = F.window if isinstance(F, SparseOperator) else win
    Fp = SparseOperator(window, mp)
    seg = Segment.linear("zero_out", m, mp, window=window,
                         bound=max(observed_propagation(window, m), Fraction(0)))
    return ZeroOutResult(Fp, seg, tuple(cols), total)


# ---------------------------------------------------------------------------
# rotations

def _first_block(a: np.ndarray, t: float) -> np.ndarray:
    """The ``(1 + s) x (1 + s)`` block for a column ``a`` (length ``s``)."""
    c, s = _cs(t)
    b = float(np.vdot(a, a).real)
    pr = np.outer(a, a.conj()) / b
    k = a.size
    B = np.zeros((k + 1, k + 1), dtype=complex)
    B[0, 0] = c
    B[0, 1:] = s * a.conj() / b
    B[1:, 0] = -s * a
    B[1:, 1:] = c * pr + (np.eye(k) - pr)
    return B


@dataclass
class RotationInfo:
    rows: tuple            # window ids, block order
    unit_column: bool      # b == 1, so the block is unitary
    unitarity: float       # max-entry of B B* - Id (full operator)
    det: complex


def rotation_block(F_prime, sel: SelectionData, i: int, t: float, mode: str = "first",
                   tol: Tolerances = DEFAULT, info: bool = False):
    """Block operator of rotation ``i`` (1-based) embedded in the identity.

    ``mode="first"`` acts on ``z(i)`` and the support ``a`` of
    ``F'(delta_y(i))``; at ``t = pi/2`` it sends ``a`` to ``delta_z(i)``.
    The block has determinant 1 and is unitary exactly when ``|a| = 1``;
    unitarity is asserted in that case.  ``mode="second"`` is the plane
    rotation sending ``delta_z(i)`` to ``delta_y(i)`` at ``pi/2``.
    """
    n = sel.window.n
    z, y = sel.z[i - 1], sel.y[i - 1]
    if mode == "first":
        col = _m(F_prime)[:, y]
        supp = [int(v) for v in np.flatnonzero(col)]
        if not supp:
            raise ZeroColumn(f"F'(delta_y({i})) vanishes", witness=i)
        if z in supp:
            raise LedgerStale("z(i) lies in the support of F'(delta_y(i))", witness=i)
        rows = [z] + supp
        B = _first_block(col[supp], t)
    elif mode == "second":
        rows = [y, z]
        c, s = _cs(t)
        B = np.array([[c, s], [-s, c]], dtype=complex)
    else:
        raise ValueError("mode must be 'first' or 'second'")
    U = np.eye(n, dtype=complex)
    U[np.ix_(rows, rows)] = B
    dev = float(np.abs(B @ B.conj().T - np.eye(len(rows))).max())
    unit = True
    if mode == "first":
        b = float(np.vdot(col[supp], col[supp]).real)
        unit = abs(b - 1) <= tol.unitary
    det = complex(np.linalg.det(B))
    if abs(det - 1) > 1e-10 * max(1.0, np.abs(B).max() ** len(rows)):
        raise LedgerStale(f"rotation block has det {det}", witness=i)
    if unit and dev > tol.unitary:
        raise LedgerStale(f"rotation block not unitary ({dev:.2e})", witness=i)
    op = SparseOperator(sel.window, U)
    if info:
        return op, RotationInfo(tuple(rows), unit, dev, det)
    return op


def rotation_layer(F_prime, sel: SelectionData, t: float, mode: str) -> np.ndarray:
    """All rotation blocks of one kind at once (their supports are disjoint)."""
    n = sel.window.n
    U = np.eye(n, dtype=complex)
    m = _m(F_prime)
    for i in range(1, sel.L + 1):
        z, y = sel.z[i - 1], sel.y[i - 1]
        if mode == "first":
            supp = [int(v) for v in np.flatnonzero(m[:, y])]
            if not supp:
                raise ZeroColumn(f"F'(delta_y({i})) vanishes", witness=i)
            rows = [z] + supp
            B = _first_block(m[supp, y], t)
        else:
            c, s = _cs(t)
            rows = [y, z]
            B = np.array([[c, s], [-s, c]], dtype=complex)
        if not np.array_equal(U[np.ix_(rows, rows)], np.eye(len(rows))):
            raise LedgerStale("rotation blocks overlap", witness=i)
        U[np.ix_(rows, rows)] = B
    return U


# ---------------------------------------------------------------------------
# triangular collapse

@dataclass
class TriangularResult:
    segment: Segment
    G: np.ndarray              # full-window operator diag(1 on H', G on H'^perp)
    u_ids: tuple
    gstar_norm: float
    residual: float


def upper_triangular_collapse(F2, sel: SelectionData, tol: Tolerances = DEFAULT
                              ) -> TriangularResult:
    """Collapse ``[[1, s G_*], [0, G]]`` from ``s = 1`` to ``s = 0``.

    ``H'`` is spanned by the ``delta_y(i)``.  The columns ``y(i)`` must
    equal ``delta_y(i)`` within ``tol.triangular``; otherwise
    :class:`NotTriangular` is raised with the worst entry.
    """
    m = _m(F2)
    win = sel.window
    n = win.n
    Y = list(sel.y)
    target = np.zeros((n, len(Y)), dtype=complex)
    target[Y, range(len(Y))] = 1
    dev = np.abs(m[:, Y] - target)
    res = float(dev.max()) if Y else 0.0
    if res > tol.triangular:
        r, c = np.unravel_index(int(dev.argmax()), dev.shape)
        raise NotTriangular(f"column y({c + 1}) deviates by {res:.3e}",
                            witness=(win.labels[int(r)], win.labels[Y[c]], res))
    T1 = m.copy()
    T1[:, Y] = target
    ymask = np.zeros(n, dtype=bool)
    ymask[Y] = True
    gstar_mask = ymask[:, None] & ~ymask[None, :]
    Gstar = np.where(gstar_mask, T1, 0)
    base = T1 - Gstar
    u_ids = tuple(int(i) for i in np.flatnonzero(~ymask))

    def ev(s, base=base, Gstar=Gstar):
        return base + s * Gstar if s else base.copy()
    seg = Segment("triangular", "triangular", 1.0, 0.0, ev,
                  observed_propagation(win, T1), win)
    gn = power_norm(Gstar, tol) if Gstar.any() else 0.0
    return TriangularResult(seg, base, u_ids, gn, res)


# ---------------------------------------------------------------------------
# layers and whirls

@dataclass
class LayerDecomposition:
    u: tuple                   # H_0 ids
    w: tuple                   # w[m-1][j] = id of w(j, m)
    v: tuple                   # H'' ids
    M: int
    max_distance: Fraction
    strict: bool               # every d(u(j), w(j, m)) < 2r
    window: Window = field(repr=False)
    r: Fraction = Fraction(0)

    def layer(self, m: int) -> tuple:
        if m == 0:
            return self.u
        if not 1 <= m <= self.M:
            raise LayerMismatch(f"layer {m} outside 0..{self.M}", witness=m)
        return self.w[m - 1]

    def projector(self, m: int) -> np.ndarray:
        P = np.zeros((self.window.n, self.window.n))
        ids = list(self.layer(m))
        P[ids, ids] = 1
        return P

    def to_json(self) -> dict:
        lab = self.window.labels
        from .metric_space import label_to_json
        return {"M": self.M, "u": [label_to_json(lab[i]) for i in self.u],
                "w": [[label_to_json(lab[i]) for i in layer] for layer in self.w],
                "v_count": len(self.v), "max_distance": str(self.max_distance),
                "strict": self.strict}


def layer_decomposition(sel: SelectionData, partition: PiubsPartition, M: int,
                        active) -> LayerDecomposition:
    """Assign to each active ``u(j)`` ``M`` unused ``y(i)`` of its block.

    ``active`` are the ids of ``(H')^perp`` where ``G`` differs from the
    identity; the remaining ``u``s join ``H''`` together with the unused
    ``y``s.  Raises :class:`InsufficientVisits` with the block index.
    """
    win = sel.window
    block_of = partition.block_of()
    pool = {}
    for y, k in zip(sel.y, sel.blocks):
        pool.setdefault(k, []).append(y)
    yset = set(sel.y)
    u = tuple(sorted((int(i) for i in active if int(i) not in yset),
                     key=lambda i: win.labels[i]))
    cols = [[] for _ in range(M)]
    two_r = 2 * sel.r
    dmax, strict = Fraction(0), True
    for uj in u:
        k = block_of[win.labels[uj]]
        avail = pool.get(k, [])
        if len(avail) < M:
            raise InsufficientVisits(f"block {k} has {len(avail)} spare y's, need {M}",
                                     witness=k)
        for m in range(M):
            w = avail.pop(0)
            d = win.d(uj, w)
            if d > two_r:
                raise LayerMismatch(f"d(u, w) = {d} > 2r", witness=(win.labels[uj], win.labels[w]))
            strict &= d < two_r
            dmax = max(dmax, d)
            cols[m].append(w)
    used = set(u) | {w for c in cols for w in c}
    v = tuple(i for i in range(win.n) if i not in used)
    return LayerDecomposition(u, tuple(tuple(c) for c in cols), v, M, dmax, strict, win, sel.r)


def shift_isometry(layers: LayerDecomposition, m: int, m2: int) -> SparseOperator:
    """``J_{m, m2}``: ``delta_w(j, m2) -> delta_w(j, m)``, with ``w(j, 0) = u(j)``.

    Asserts ``P(J) <= 4r`` by direct scan.
    """
    src, dst = layers.layer(m2), layers.layer(m)
    if len(src) != len(dst):
        raise LayerMismatch("layers of different sizes", witness=(m, m2))
    n = layers.window.n
    J = np.zeros((n, n))
    J[list(dst), list(src)] = 1
    op = SparseOperator(layers.window, J)
    if op.propagation > 4 * layers.r:
        raise PropagationBoundViolated(f"P(J_{m},{m2}) = {op.propagation} > 4r",
                                       witness=(m, m2, op.propagation))
    return op


def layer_copy(layers: LayerDecomposition, G0: np.ndarray, m: int) -> np.ndarray:
    """``G_m = J_{m,0} G J_{0,m}`` by exact re-indexing (``G0`` lives on ``H_0``)."""
    if m == 0:
        return G0.copy()
    src, dst = list(layers.u), list(layers.layer(m))
    out = np.zeros_like(G0)
    out[np.ix_(dst, dst)] = G0[np.ix_(src, src)]
    return out


def _rot(layers: LayerDecomposition, m: int, t: float) -> np.ndarray:
    """``[[cos, -sin J_{m,m+1}], [sin J_{m+1,m}, cos]]`` on ``H_m + H_{m+1}``."""
    c, s = _cs(t) if t >= 0 else (_cs(-t)[0], -_cs(-t)[1])
    n = layers.window.n
    a, b = list(layers.layer(m)), list(layers.layer(m + 1))
    R = np.eye(n, dtype=complex)
    R[a, a] = c
    R[b, b] = c
    R[a, b] = -s     # -sin J_{m, m+1}: w(j, m+1) -> w(j, m)
    R[b, a] = s      # sin J_{m+1, m}
    return R


def whirl_pair(G0: np.ndarray, G0_inv: np.ndarray, layers: LayerDecomposition, m: int,
               direction: str, t: float) -> np.ndarray:
    """Whirl on ``H_m + H_{m+1}`` (identity elsewhere).

    ``up``:   ``R(t) diag(G_m, 1) R(-t) diag(G_m^-1, 1)``; runs from ``Id``
    to ``diag(G_m^-1, G_{m+1})``.
    ``down``: the same product with ``G_m`` and ``G_m^-1`` exchanged,
    evaluated at ``pi/2 - t``; runs from ``diag(G_m, G_{m+1}^-1)`` to ``Id``.
    ``G0`` and ``G0_inv`` are full-window matrices supported on ``H_0``.
    """
    if not 0 <= t <= HALF_PI:
        raise ValueError("t must lie in [0, pi/2]")
    n = layers.window.n
    P = layers.projector(m)
    Gm = layer_copy(layers, G0, m) + (np.eye(n) - P)
    Gi = layer_copy(layers, G0_inv, m) + (np.eye(n) - P)
    if direction == "up":
        return _rot(layers, m, t) @ Gm @ _rot(layers, m, -t) @ Gi
    if direction == "down":
        tau = 0.0 if t == HALF_PI else (HALF_PI if t == 0 else HALF_PI - t)
        return _rot(layers, m, tau) @ Gi @ _rot(layers, m, -tau) @ Gm
    raise ValueError("direction must be 'up' or 'down'")


def whirl_schedule(M: int) -> tuple[list, list, int]:
    """``(up pairs, down pairs, residual layer)``.

    Up pairs are ``(1, 2), (3, 4), ...`` inside ``1..M``; down pairs are
    ``(0, 1), (2, 3), ...`` wherever layer ``m + 1`` took part in an up pair.
    The residual layer is the last one left holding a copy of ``G``.
    """
    up = [(m, m + 1) for m in range(1, M, 2)]
    touched = {a for pr in up for a in pr}
    down = [(m, m + 1) for m in range(0, M, 2) if m + 1 in touched]
    residual = 2 * len(up)
    return up, down, residual


@dataclass
class InverseApproximation:
    G_n: np.ndarray
    p_n: Fraction
    error: float
    copies_exact: bool


def inverse_approximation(G, n: int, layers: LayerDecomposition | None = None,
                          tol: Tolerances = DEFAULT, window: Window | None = None
                          ) -> InverseApproximation:
    """Band truncation of ``G^-1`` to propagation ``p_n = n * P(G)``.

    With ``layers``, also checks that the layer copies ``J_{m,0} G^(n) J_{0,m}``
    carry exactly the re-indexed error of ``G^(n)``.
    """
    window = window or (G.window if isinstance(G, SparseOperator) else None)
    m = _m(G)
    inv = invert_matrix(m, tol)[0]
    pG = observed_propagation(window, m)
    p_n = n * pG
    keep = window.dnum() <= window.radius_num(p_n)
    Gn = np.where(keep, inv, 0)
    err_m = inv - Gn
    err = power_norm(err_m, tol) if err_m.any() else 0.0
    exact = True
    if layers is not None:
        for k in range(1, layers.M + 1):
            a = layer_copy(layers, err_m, k)
            b = layer_copy(layers, inv, k) - layer_copy(layers, Gn, k)
            exact &= bool(np.array_equal(a, b))
    return InverseApproximation(Gn, p_n, err, exact)


# ---------------------------------------------------------------------------
# orchestration

@dataclass
class ContractConfig:
    L: int = 24
    M: int = 2
    samples: int = 11
    refine: bool = False
    sigma_floor: float = 0.0
    finitize_drop: float = 0.0
    tol: Tolerances = DEFAULT

    def to_json(self) -> dict:
        return {"L": self.L, "M": self.M, "samples": self.samples, "refine": self.refine,
                "sigma_floor": self.sigma_floor, "finitize_drop": self.finitize_drop}


@dataclass
class SamplePath:
    weights: tuple
    F: np.ndarray
    path: HomotopyPath
    certificate: Certificate
    final: np.ndarray
    blocks: dict               # propagation of rotation layers / shift isometries


@dataclass
class ContractResult:
    eps: float
    selection: SelectionData
    layers: LayerDecomposition
    paths: list
    certificate: Certificate   # worst case over samples, per stage
    bounds: dict
    zero_out_total: float
    interior: tuple
    interior_residual: float
    residual_layer: int
    residual_norm: float
    continuity: float | None
    whirl_endpoint_error: float
    verdict: str

    def to_json(self) -> dict:
        from .metric_space import label_to_json
        lab = self.layers.window.labels
        return {
            "eps": self.eps, "verdict": self.verdict,
            "selection": self.selection.to_json(), "layers": self.layers.to_json(),
            "certificate": self.certificate.to_json(),
            "bounds": {k: {kk: str(vv) if isinstance(vv, Fraction) else vv
                           for kk, vv in v.items()} for k, v in self.bounds.items()},
            "zero_out_total": self.zero_out_total,
            "interior": [label_to_json(lab[i]) for i in self.interior],
            "interior_residual": self.interior_residual,
            "residual_layer": self.residual_layer, "residual_norm": self.residual_norm,
            "continuity_modulus": self.continuity,
            "whirl_endpoint_error": self.whirl_endpoint_error,
            "samples": len(self.paths),
        }


def _stage(name):
    def deco(fn):
        def wrapped(*a, **kw):
            try:
                return fn(*a, **kw)
            except StageFailed:
                raise
            except RoeError as exc:
                raise StageFailed(name, exc) from exc
        return wrapped
    return deco


def _run(stage, fn, *a, **kw):
    return _stage(stage)(fn)(*a, **kw)


def _merge(certs: list[Certificate], tol: Tolerances, floor: float) -> Certificate:
    stages = []
    for recs in zip(*[c.stages for c in certs]):
        worst = min(recs, key=lambda s: s.min_sigma)
        stages.append(StageRecord(
            recs[0].stage, recs[0].kind, recs[0].t0, recs[0].t1, recs[0].samples,
            max(s.bound_declared for s in recs), max(s.bound_observed for s in recs),
            worst.min_sigma, worst.worst_t, max(s.endpoint_residual for s in recs),
            max(s.margin_variation for s in recs), dict(recs[0].meta)))
    return Certificate(stages, tol.junction, floor)


def contract(family: VertexFamily, partition: PiubsPartition,
             config: ContractConfig = ContractConfig()) -> ContractResult:
    """Run the whole pipeline on every grid sample of ``family``.

    Returns the merged certificate and the propagation ledger:
    first rotation layer ``<= 2r + 2p``, second ``<= 2r``, composite
    ``<= 4r + 3p`` and every ``J_{m,m'} <= 4r``, each observed by scan.
    The endpoint claim covers the points at geometric edge distance
    ``>= 4r + 3p`` outside the residual layer.
    """
    tol = config.tol
    win = family.window
    r = Fraction(partition.r)
    p = family.p
    eps = _run("epsilon_margin", epsilon_margin, family, tol)
    sel = _run("select_sequences", select_sequences, partition, family, eps,
               config.L, config.M)
    samples = family.samples()

    # stages up to the triangular collapse, per sample
    pre = []
    for w, F in samples:
        op = SparseOperator(win, F)
        if config.finitize_drop:
            from .roe_operator import finitize_columns
            fin = _run("finitize", finitize_columns, op, None, config.finitize_drop, None, tol)
            F0, seg0 = fin.F_fin.matrix, fin.segment
            seg0.stage = "finitize"
        else:
            F0, seg0 = F, Segment.constant("finitize", op)
        zo = _run("zero_out", zero_out, SparseOperator(win, F0), sel, tol)
        Fp = zo.F_prime.matrix
        U1end = _run("rotation_first", rotation_layer, Fp, sel, HALF_PI, "first")
        U2end = rotation_layer(Fp, sel, HALF_PI, "second")
        F2 = U2end @ (U1end @ Fp)
        tri = _run("triangular", upper_triangular_collapse, F2, sel, tol)

        def rot1(t, Fp=Fp):
            return rotation_layer(Fp, sel, t, "first") @ Fp

        def rot2(t, Fp=Fp, B=U1end @ Fp):
            return rotation_layer(Fp, sel, t, "second") @ B
        segs = [
            seg0, zo.segment,
            Segment("rotation_first", "rotation", 0.0, HALF_PI, rot1, 2 * r + 3 * p, win),
            Segment("rotation_second", "rotation", 0.0, HALF_PI, rot2, 4 * r + 3 * p, win),
            tri.segment,
        ]
        pre.append((w, F, segs, tri, zo, U1end, U2end))

    active = np.zeros(win.n, dtype=bool)
    for *_, tri, _, _, _ in pre:
        active |= _active_ids([tri.G])
    layers = _run("layer_decomposition", layer_decomposition, sel, partition, config.M,
                  np.flatnonzero(active))
    up_pairs, down_pairs, top = whirl_schedule(config.M)
    J_props = {}
    for a in range(config.M + 1):
        for b in range(config.M + 1):
            J_props[(a, b)] = _run("shift_isometry", shift_isometry, layers, a, b).propagation
    P0 = layers.projector(0)
    eye = np.eye(win.n)

    paths, certs, finals = [], [], []
    rot_obs = {"first_layer": Fraction(0), "second_layer": Fraction(0)}
    whirl_err = 0.0
    for w, F, segs, tri, zo, U1end, U2end in pre:
        T0 = tri.G
        G0 = P0 @ T0 @ P0
        Ginv_full = _run("whirl", invert_matrix, T0, tol)[0]
        G0_inv = P0 @ Ginv_full @ P0
        pG = observed_propagation(win, G0)
        pGi = observed_propagation(win, G0_inv)
        pJ = max([J_props[(a, a + 1)] for a in range(config.M)], default=Fraction(0))
        whirl_bound = max(observed_propagation(win, T0), 2 * pJ + pG + pGi)

        def up(t, T0=T0, G0=G0, G0_inv=G0_inv):
            out = T0.copy()
            for a, _ in up_pairs:
                out = out @ whirl_pair(G0, G0_inv, layers, a, "up", t)
            return out

        res_block = layer_copy(layers, G0, top) + (eye - layers.projector(top))

        def down(t, G0=G0, G0_inv=G0_inv, res_block=res_block):
            out = res_block.copy()
            for a, _ in down_pairs:
                out = whirl_pair(G0, G0_inv, layers, a, "down", t) @ out
            return out
        wsegs = [Segment("whirl_up", "whirl", 0.0, HALF_PI, up, whirl_bound, win),
                 Segment("whirl_down", "whirl", 0.0, HALF_PI, down, whirl_bound, win)]
        # whirl endpoint oracles
        for a, b in up_pairs:
            tgt = layer_copy(layers, G0_inv, a) + layer_copy(layers, G0, b)
            Pab = layers.projector(a) + layers.projector(b)
            got = whirl_pair(G0, G0_inv, layers, a, "up", HALF_PI)
            whirl_err = max(whirl_err, float(np.abs(got - (tgt + eye - Pab)).max()),
                            float(np.abs(whirl_pair(G0, G0_inv, layers, a, "up", 0.0)
                                         - eye).max()))
        for a, b in down_pairs:
            tgt = layer_copy(layers, G0, a) + layer_copy(layers, G0_inv, b)
            Pab = layers.projector(a) + layers.projector(b)
            got = whirl_pair(G0, G0_inv, layers, a, "down", 0.0)
            whirl_err = max(whirl_err, float(np.abs(got - (tgt + eye - Pab)).max()),
                            float(np.abs(whirl_pair(G0, G0_inv, layers, a, "down", HALF_PI)
                                         - eye).max()))
        path = HomotopyPath(segs + wsegs)
        cert = path.certify(config.samples, tol, config.refine, config.sigma_floor)
        for t in segs[2].grid(config.samples):
            rot_obs["first_layer"] = max(rot_obs["first_layer"], observed_propagation(
                win, rotation_layer(zo.F_prime.matrix, sel, float(t), "first")))
            rot_obs["second_layer"] = max(rot_obs["second_layer"], observed_propagation(
                win, rotation_layer(zo.F_prime.matrix, sel, float(t), "second")))
        final = path.end
        paths.append(SamplePath(w, F, path, cert, final, {}))
        certs.append(cert)
        finals.append(final)

    merged = _merge(certs, tol, config.sigma_floor)
    margin = 4 * r + 3 * p
    residual_ids = set(layers.layer(top)) if layers.u else set()
    interior = tuple(i for i in win.interior(margin, geometric=True) if i not in residual_ids)
    ii = list(interior)
    int_res = max((float(np.abs((f - eye)[np.ix_(ii, ii)]).max()) if ii else 0.0)
                  for f in finals)
    res_norm = max(power_norm(f - eye, tol) if np.any(f != eye) else 0.0 for f in finals)
    bounds = {
        "rotation_first": {"declared": 2 * r + 2 * p, "observed": rot_obs["first_layer"]},
        "rotation_second": {"declared": 2 * r, "observed": rot_obs["second_layer"]},
        "composite": {"declared": 4 * r + 3 * p,
                      "observed": merged.stage("rotation_second")[0].bound_observed},
        "shift_isometry": {"declared": 4 * r, "observed": max(J_props.values())},
    }
    zo_total = max(x[4].total for x in pre)
    cont = _continuity(family, paths, config.samples) if len(paths) > 1 else None
    ok = (merged.ok and all(v["observed"] <= v["declared"] for v in bounds.values())
          and zo_total < eps and whirl_err <= tol.endpoint and int_res <= tol.final)
    return ContractResult(eps, sel, layers, paths, merged, bounds, zo_total, interior, int_res,
                          top, res_norm, cont, whirl_err, "ok" if ok else "violation")


def _continuity(family: VertexFamily, paths: list, samples: int) -> float:
    """Largest ``sup_t ||path_a(t) - path_b(t)|| / ||F_a - F_b||`` over grid
    neighbours ``a, b`` (weights one grid step apart)."""
    res = family.resolution
    worst = 0.0
    for A, B in itertools.combinations(paths, 2):
        step = max(abs(a - b) for a, b in zip(A.weights, B.weights))
        if step != Fraction(1, res):
            continue
        dF = np.linalg.norm(A.F - B.F, 2)
        if dF == 0:
            continue
        sup = 0.0
        for sa, sb in zip(A.path, B.path):
            for t in sa.grid(samples):
                sup = max(sup, float(np.linalg.norm(sa.at(t) - sb.at(t), 2)))
        worst = max(worst, sup / dF)
    return worst


# ---------------------------------------------------------------------------
# sparse complement

def polar_path(lam: complex, t: float) -> complex:
    """``|lam|^(1-t) exp(i (1-t) arg lam)``: ``lam`` at 0, ``1`` at 1, never 0."""
    if lam == 0:
        raise ZeroColumn("diagonal entry is zero")
    return abs(lam) ** (1 - t) * np.exp(1j * (1 - t) * np.angle(lam))


@dataclass
class SparseReduction:
    family: VertexFamily        # restrictions F_1 to X_r
    diagonals: tuple            # per vertex: {label: lambda}
    segments: tuple             # per vertex: Segment contracting the diagonal corner
    min_modulus: float


def kuiper_via_sparse(family: VertexFamily, X_r, r) -> SparseReduction:
    """Split each vertex as ``diag(F_1, D)`` along ``X_r`` and its ``r``-sparse
    complement, and contract ``D`` to the identity entrywise by
    :func:`polar_path`."""
    win = family.window
    keep = set(X_r)
    Y = [lab for lab in win.labels if lab not in keep]
    if not family.p < r:
        raise ValueError(f"vertex propagation {family.p} is not < r={r}")
    chk = is_r_sparse(win.spec, Y, r, win)
    if not chk:
        raise ValueError(f"complement is not {r}-sparse; witness {chk.witness}")
    F1s, diags, segs = [], [], []
    mod = math.inf
    for v in family.vertices:
        split = sparse_corner_decompose(v, Y, r)
        F1s.append(split.F1)
        diags.append(split.D)
        rest, yids = list(split.rest_ids), list(split.sparse_ids)
        lam = np.array([split.D[win.labels[i]] for i in yids])
        f1 = split.F1.matrix
        for t in np.linspace(0, 1, 11):
            if lam.size:
                mod = min(mod, float(np.abs([polar_path(x, t) for x in lam]).min()))

        def ev(t, f1=f1, lam=lam, rest=rest, yids=yids):
            m = np.zeros((win.n, win.n), dtype=complex)
            m[np.ix_(rest, rest)] = f1
            m[yids, yids] = [polar_path(x, t) for x in lam]
            return m
        segs.append(Segment("sparse_diagonal", "linear", 0.0, 1.0, ev, v.propagation, win))
    sub = VertexFamily(tuple(F1s), family.simplices, family.resolution)
    return SparseReduction(sub, tuple(diags), tuple(segs), mod)
