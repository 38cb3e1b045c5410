"""Obstructions: corner Fredholm index, determinant winding, tracial states
along Folner families, amplification for disjoint powers, and transport of
operators along bijections."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .config import DEFAULT, Tolerances
from .errors import (
    DisplacementExceeded,
    LoopNotClosed,
    MisalignedWindow,
    NotBijective,
    NotFredholmEvidence,
    StepTooLarge,
    Unstable,
)
from .metric_space import SpaceSpec, Window, block_index, distance, label_to_json
from .paths import smallest_singular_value
from .roe_operator import SparseOperator


@dataclass
class ObstructionReport:
    kind: str                  # index | winding | trace
    value: object
    witnesses: dict = field(default_factory=dict)
    stability: str = ""
    verdict: str = "ok"        # ok | violation | inconclusive

    def to_json(self) -> dict:
        return {"kind": self.kind, "value": self.value, "witnesses": self.witnesses,
                "stability": self.stability, "verdict": self.verdict}


# ---------------------------------------------------------------------------
# splits and shifts

@dataclass
class SplitDecomposition:
    window: Window
    A: tuple
    B: tuple
    ledger: list               # (R, sorted labels of {x in A : d(x, B) < R}, verdict)


def _near_b_verdict(spec: SpaceSpec, name: str | None, R) -> str:
    if name == "nonneg" and spec.kind in ("IntegerLine", "ExponentialBlocks"):
        # IntegerLine: {x >= 0 : x + 1 < R}; ExponentialBlocks: d(x, B) = k(x) + 2
        return "finite"
    return "finite-in-window"


def split_decomposition(window: Window, A: Iterable | str, Rs: Sequence = (1, 2, 4)
                        ) -> SplitDecomposition:
    """``A`` and its window complement ``B``, with the ledger of the sets
    ``{x in A : d(x, B) < R}``.  ``A="nonneg"`` selects labels ``>= 0``."""
    name = A if isinstance(A, str) else None
    if name == "nonneg":
        A = [x for x in window.labels if x >= 0]
    elif name is not None:
        raise ValueError(f"unknown split {name!r}")
    aset = set(A)
    Aids = [i for i, x in enumerate(window.labels) if x in aset]
    Bids = [i for i, x in enumerate(window.labels) if x not in aset]
    D = window.dnum()
    ledger = []
    for R in Rs:
        k = window.radius_num(R, strict=True)
        near = [window.labels[i] for i in Aids
                if Bids and D[i, Bids].min() <= k]
        ledger.append((R, tuple(near), _near_b_verdict(window.spec, name, R)))
    return SplitDecomposition(window, tuple(window.labels[i] for i in Aids),
                              tuple(window.labels[i] for i in Bids), ledger)


@dataclass
class ShiftResult:
    V: SparseOperator
    flagged: tuple             # x whose image leaves the window
    max_displacement: Fraction


def shift_from_bijection(window: Window, alpha: Callable | Mapping, C) -> ShiftResult:
    """Permutation operator ``V delta_x = delta_alpha(x)`` on the window.

    Columns whose image leaves the window are zero and flagged.  Raises
    :class:`DisplacementExceeded` if some ``d(x, alpha(x)) >= C``.
    """
    f = alpha.__getitem__ if isinstance(alpha, Mapping) else alpha
    m = np.zeros((window.n, window.n))
    flagged, worst = [], Fraction(0)
    for j, x in enumerate(window.labels):
        y = f(x)
        d = Fraction(distance(window.spec, x, y))
        if not d < C:
            raise DisplacementExceeded(f"d({x!r}, alpha(x)) = {d} >= {C}", witness=x)
        worst = max(worst, d)
        i = window.index.get(y)
        if i is None:
            flagged.append(x)
        else:
            m[i, j] = 1
    return ShiftResult(SparseOperator(window, m), tuple(flagged), worst)


def integer_shift(k: int) -> Callable[[int], int]:
    return lambda n: n + k


# ---------------------------------------------------------------------------
# corner index

@dataclass
class CornerIndex:
    n: int
    kernel: int                # interface-localized kernel dimension
    cokernel: int
    kernel_edge: int           # kernel vectors living at the truncation edge
    cokernel_edge: int
    smallest_nonzero: float
    corner_decay: list         # (R, ||V_12|| + ||V_21|| beyond distance R of the interface)

    @property
    def index(self) -> int:
        return self.kernel - self.cokernel


def _localized(vectors: np.ndarray, zone: np.ndarray, lo=0.1, hi=0.9) -> int:
    """Number of directions of ``span(vectors)`` inside the zone (eigenvalues
    of the compressed zone projector above 1/2)."""
    if vectors.shape[1] == 0:
        return 0
    K = vectors[zone]
    ev = np.linalg.eigvalsh(K.conj().T @ K)
    amb = ev[(ev > lo) & (ev < hi)]
    if amb.size:
        raise NotFredholmEvidence(f"kernel vector split across zones (weight {amb[0]:.3f})",
                                  witness=float(amb[0]))
    return int((ev > 0.5).sum())


def corner_index_on(V: SparseOperator, A: Iterable, tol: Tolerances = DEFAULT) -> CornerIndex:
    """Index data of the compression of ``V`` to ``l^2(A)`` on one window.

    Kernel and cokernel are the singular subspaces with ``sigma < tol.rank``.
    Only the part localized in the interface zone (points of ``A`` closer
    to the complement than to the window edge) counts; the truncation edge
    produces the rest.  Singular values in ``[tol.rank, tol.gray)`` raise
    :class:`NotFredholmEvidence`.
    """
    win = V.window
    aset = set(A)
    Aids = [i for i, x in enumerate(win.labels) if x in aset]
    Bids = [i for i, x in enumerate(win.labels) if x not in aset]
    C = V.matrix[np.ix_(Aids, Aids)]
    U, s, Wh = np.linalg.svd(C)
    gray = s[(s >= tol.rank) & (s < tol.gray)]
    if gray.size:
        raise NotFredholmEvidence(f"singular value {gray[0]:.3e} in the gray zone",
                                  witness=float(gray[0]))
    null = s < tol.rank
    ker = Wh.conj().T[:, null]
    coker = U[:, null]
    D = win.dnum()
    if Bids:
        dB = D[np.ix_(Aids, Bids)].min(axis=1) / win.scale
    else:
        dB = np.full(len(Aids), np.inf)
    edge = np.array([float(win.edge[i]) for i in Aids])
    zone = dB < edge
    k_int = _localized(ker, zone)
    c_int = _localized(coker, zone)
    nz = s[~null]
    decay = []
    if Bids:
        for R in (1, 2, 4, 8):
            far_a = [Aids[k] for k in range(len(Aids)) if dB[k] >= R]
            dA = D[np.ix_(Bids, Aids)].min(axis=1) / win.scale
            far_b = [Bids[k] for k in range(len(Bids)) if dA[k] >= R]
            v12 = V.matrix[np.ix_(far_a, Bids)] if far_a else np.zeros((0, 0))
            v21 = V.matrix[np.ix_(far_b, Aids)] if far_b else np.zeros((0, 0))
            nrm = sum(float(np.linalg.norm(x, 2)) if x.size else 0.0 for x in (v12, v21))
            decay.append((R, nrm))
    return CornerIndex(len(Aids), k_int, c_int, int(null.sum()) - k_int,
                       int(null.sum()) - c_int, float(nz.min()) if nz.size else 0.0, decay)


def corner_index(build: Callable[[Window], SparseOperator], windows: Sequence[Window],
                 A: Callable[[Window], Iterable], tol: Tolerances = DEFAULT) -> ObstructionReport:
    """Stabilized corner index (``dim ker - dim coker``) over nested windows.

    ``build(window)`` gives the operator, ``A(window)`` the labels of the
    corner.  Raises :class:`Unstable` if the windows disagree.
    """
    data = [corner_index_on(build(w), A(w), tol) for w in windows]
    vals = [d.index for d in data]
    wit = {"windows": [w.n for w in windows], "indices": vals,
           "kernel": [d.kernel for d in data], "cokernel": [d.cokernel for d in data],
           "edge_kernel": [d.kernel_edge for d in data],
           "edge_cokernel": [d.cokernel_edge for d in data],
           "smallest_nonzero_sigma": [d.smallest_nonzero for d in data],
           "corner_decay": [d.corner_decay for d in data]}
    if len(set(vals)) != 1:
        raise Unstable(f"indices {vals} disagree across windows", witness=wit)
    return ObstructionReport("index", vals[0], wit,
                             f"agrees on windows of size {[w.n for w in windows]}")


# ---------------------------------------------------------------------------
# determinant winding

def _phase(m: np.ndarray) -> complex:
    sign, _ = np.linalg.slogdet(m)
    return complex(sign)


def _increment(A: np.ndarray, B: np.ndarray, pa: complex, pb: complex, depth: int) -> float:
    d = float(np.angle(pb / pa))
    if abs(d) <= math.pi / 4 or depth == 0:
        return d
    mid = (A + B) / 2
    pm = _phase(mid)
    return _increment(A, mid, pa, pm, depth - 1) + _increment(mid, B, pm, pb, depth - 1)


def det_winding(loop: Sequence, tol: Tolerances = DEFAULT, max_depth: int = 20) -> ObstructionReport:
    """Winding number of ``t -> det X_t`` along a closed loop of samples.

    Consecutive samples must satisfy ``||X_{i+1} - X_i|| < sigma_min(X_i)``
    so the straight segment between them stays invertible; each segment
    is bisected until the phase step is at most ``pi/4``.
    """
    mats = [np.asarray(x.matrix if isinstance(x, SparseOperator) else x, dtype=complex)
            for x in loop]
    if len(mats) < 2:
        raise LoopNotClosed("need at least two samples")
    gap = float(np.abs(mats[0] - mats[-1]).max())
    if gap > tol.endpoint:
        raise LoopNotClosed(f"first and last sample differ by {gap:.3e}", witness=gap)
    total = 0.0
    phases = [_phase(m) for m in mats]
    for k, (A, B) in enumerate(zip(mats, mats[1:])):
        step = float(np.linalg.norm(B - A, 2))
        sig = smallest_singular_value(A)
        if not step < sig:
            raise StepTooLarge(f"step {k}: ||dX|| = {step:.3e} >= sigma_min = {sig:.3e}",
                               witness=k)
        total += _increment(A, B, phases[k], phases[k + 1], max_depth)
    w = total / (2 * math.pi)
    k = round(w)
    return ObstructionReport("winding", int(k), {"raw": w, "deviation": abs(w - k),
                                                 "samples": len(mats)},
                             verdict="ok" if abs(w - k) <= 1e-6 else "inconclusive")


def phase_loop(n: int, k: int, samples: int = 64, rng: np.random.Generator | None = None,
               dim: int = 1) -> list[np.ndarray]:
    """``t -> Q diag(e^{2 pi i k t}, 1, ..) Q*`` sampled on ``[0, 1]``; winding ``k``.

    With ``rng`` the conjugating unitary ``Q`` and a fixed diagonal factor
    are random, so the loop is not diagonal.
    """
    Q = np.eye(n, dtype=complex)
    base = np.eye(n, dtype=complex)
    if rng is not None:
        Q, _ = np.linalg.qr(rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)))
        base = np.diag(np.exp(2j * np.pi * rng.random(n)))
    out = []
    for t in np.linspace(0, 1, samples + 1):
        d = np.ones(n, dtype=complex)
        d[:dim] = np.exp(2j * np.pi * k * t)
        out.append(Q @ np.diag(d) @ Q.conj().T @ base)
    out[-1] = out[0].copy()
    return out


def reverse_loop(loop: Sequence) -> list:
    return list(loop)[::-1]


def concat_loops(a: Sequence, b: Sequence) -> list:
    """``a`` then ``b``; both must start at the same base point."""
    a, b = list(a), list(b)
    if float(np.abs(np.asarray(a[-1]) - np.asarray(b[0])).max()) > 1e-8:
        raise LoopNotClosed("loops do not share a base point")
    return a + b[1:]


# ---------------------------------------------------------------------------
# traces

def trace_state(T, F: Iterable) -> tuple[float, float]:
    """``(1/|F|) sum_{x in F} T_xx`` as ``(re, im)``."""
    F = list(dict.fromkeys(F))
    if not F:
        raise ValueError("F must be nonempty")
    win = T.window
    d = T.matrix[win.ids(F), win.ids(F)]
    v = complex(d.sum() / len(F))
    return v.real, v.imag


@dataclass
class TraceSequence:
    values: list               # complex f_{F_k}(T)
    sizes: list
    behaviour: str             # convergent | oscillating

    def to_json(self) -> dict:
        return {"values": [[v.real, v.imag] for v in self.values], "sizes": self.sizes,
                "behaviour": self.behaviour}


def trace_sequence(T: SparseOperator, family: Sequence[Iterable]) -> TraceSequence:
    """``f_{F_k}(T)`` along a Folner family.  The behaviour label is
    evidence: ``convergent`` when the last step is at most half the first
    (or all steps are below ``1e-12``)."""
    vals = [complex(*trace_state(T, F)) for F in family]
    sizes = [len(set(F)) for F in family]
    steps = [abs(b - a) for a, b in zip(vals, vals[1:])]
    if not steps or max(steps) < 1e-12 or steps[-1] <= steps[0] / 2:
        beh = "convergent"
    else:
        beh = "oscillating"
    return TraceSequence(vals, sizes, beh)


def commutator_trace(T1: SparseOperator, T2: SparseOperator, F: Iterable) -> float:
    """``|f_F(T1 T2) - f_F(T2 T1)|``."""
    a = complex(*trace_state(T1 @ T2, F))
    b = complex(*trace_state(T2 @ T1, F))
    return abs(a - b)


# ---------------------------------------------------------------------------
# amplification

@dataclass
class Amplified:
    blocks: list               # blocks[i][j]: SparseOperator on the base window
    base: Window

    @property
    def copies(self) -> int:
        return len(self.blocks)

    def as_array(self) -> np.ndarray:
        return np.block([[b.matrix for b in row] for row in self.blocks])

    def __matmul__(self, other: "Amplified") -> "Amplified":
        n = self.copies
        out = []
        for i in range(n):
            row = []
            for j in range(n):
                acc = np.zeros_like(self.blocks[0][0].matrix)
                for k in range(n):
                    acc = acc + self.blocks[i][k].matrix @ other.blocks[k][j].matrix
                row.append(SparseOperator(self.base, acc))
            out.append(row)
        return Amplified(out, self.base)

    def adjoint(self) -> "Amplified":
        n = self.copies
        return Amplified([[self.blocks[j][i].H for j in range(n)] for i in range(n)], self.base)

    def equal(self, other: "Amplified") -> bool:
        return all(np.array_equal(a.matrix, b.matrix)
                   for ra, rb in zip(self.blocks, other.blocks) for a, b in zip(ra, rb))


def _copy_ids(window: Window, base: Window) -> list[list[int]]:
    spec = window.spec
    if spec.kind != "DisjointPower" or spec.params["base"] != base.spec:
        raise MisalignedWindow("window is not a disjoint power of the base window's space")
    n = spec.params["copies"]
    try:
        return [[window.index[(i, x)] for x in base.labels] for i in range(1, n + 1)]
    except KeyError as exc:
        raise MisalignedWindow(f"missing point {exc.args[0]!r}", witness=exc.args[0]) from None


def amplify(T: SparseOperator, base: Window) -> Amplified:
    """``T`` on a window of ``n`` copies of ``X`` as an ``n x n`` matrix of
    operators on ``base`` (pure re-indexing)."""
    ids = _copy_ids(T.window, base)
    if sum(len(c) for c in ids) != T.window.n:
        raise MisalignedWindow("window has points outside the copies of the base")
    m = T.matrix
    return Amplified([[SparseOperator(base, m[np.ix_(ri, cj)]) for cj in ids] for ri in ids],
                     base)


def deamplify(A: Amplified, window: Window) -> SparseOperator:
    ids = _copy_ids(window, A.base)
    m = np.zeros((window.n, window.n), dtype=complex)
    for i, ri in enumerate(ids):
        for j, cj in enumerate(ids):
            m[np.ix_(ri, cj)] = A.blocks[i][j].matrix
    return SparseOperator(window, m)


# ---------------------------------------------------------------------------
# transport

@dataclass
class TransportResult:
    operator: SparseOperator
    moduli: dict               # d -> (min rho, max rho) over window pairs
    phi2_at_p: Fraction        # max rho over pairs with d <= P(T)

    def moduli_json(self) -> dict:
        return {str(d): [str(a), str(b)] for d, (a, b) in sorted(self.moduli.items())}


def transport(T: SparseOperator, f: Callable | Mapping, target: Window) -> TransportResult:
    """Conjugate ``T`` by the permutation ``delta_x -> delta_f(x)``.

    ``f`` must map the source window's labels bijectively onto the target
    window's.  Records the empirical distortion ``d -> [min, max] rho``
    and asserts ``P(transport(T)) <= max{rho(f x, f y) : d(x, y) <= P(T)}``.
    """
    src = T.window
    g = f.__getitem__ if isinstance(f, Mapping) else f
    img = [g(x) for x in src.labels]
    if len(set(img)) != len(img) or set(img) != set(target.labels):
        raise NotBijective("f is not a bijection between the windows")
    perm = np.array(target.ids(img))
    m = np.zeros((target.n, target.n), dtype=complex)
    m[np.ix_(perm, perm)] = T.matrix
    out = SparseOperator(target, m)
    Ds = src.dnum()
    Dt = target.dnum()[np.ix_(perm, perm)]
    moduli = {}
    for k in np.unique(Ds):
        rho = Dt[Ds == k]
        moduli[Fraction(int(k), src.scale)] = (Fraction(int(rho.min()), target.scale),
                                                 Fraction(int(rho.max()), target.scale))
    p = T.propagation
    phi2 = max((hi for d, (_, hi) in moduli.items() if d <= p), default=Fraction(0))
    if out.propagation > phi2:
        raise NotBijective(f"transported propagation {out.propagation} exceeds {phi2}")
    return TransportResult(out, moduli, phi2)


def interleave(copies: int) -> Callable:
    """``(i, n) -> copies * n + (i - 1)``: the disjoint power of Z onto Z."""
    return lambda lab: copies * lab[1] + (lab[0] - 1)
