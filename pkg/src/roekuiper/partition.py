"""Space classification on windows: covers by infinite balls, partitions
into infinite bounded blocks, Folner ratios and the paradoxical map.

Cardinality verdicts never come from window counts.  A ball's verdict is
the symbolic oracle's; a block ``D`` inside ``B_r(x)`` is declared infinite
only when it contains the whole window trace of one of the window's
atoms (the infinite bounded pieces of the space, see
:attr:`Window.atoms`).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .errors import BoundaryClipped, InductionStalled, NotCiubb, UnsupportedSpace
from .metric_space import (
    INFINITE,
    Window,
    ball_cardinality,
    block_index,
    block_members,
    boundary_set,
    realize_window,
)


INFINITE_VERDICT = "infinite"


def _verdict(count) -> str:
    return INFINITE_VERDICT if count == INFINITE else f"finite({count})"


@dataclass(frozen=True)
class CiubbCover:
    r: Fraction
    centers: tuple
    verdicts: tuple
    window: Window = field(repr=False, compare=False)

    def to_json(self) -> dict:
        from .metric_space import label_to_json
        return {"r": str(self.r), "centers": [label_to_json(c) for c in self.centers],
                "verdicts": list(self.verdicts)}


@dataclass(frozen=True)
class PiubsPartition:
    r: Fraction
    centers: tuple
    blocks: tuple          # tuple of label tuples, window order inside each
    verdicts: tuple
    window: Window = field(repr=False, compare=False)

    def block_of(self) -> dict:
        return {lab: k for k, blk in enumerate(self.blocks) for lab in blk}

    def to_json(self) -> dict:
        from .metric_space import label_to_json
        return {"r": str(self.r), "centers": [label_to_json(c) for c in self.centers],
                "blocks": [[label_to_json(x) for x in b] for b in self.blocks],
                "verdicts": list(self.verdicts)}


def _ball_ids(window: Window, center, r) -> np.ndarray:
    return np.flatnonzero(window.within(window.index[center], r))


def block_cardinality(window: Window, block: Iterable, center, r) -> str:
    """Verdict for a block contained in ``B_r(center)``."""
    count = ball_cardinality(window.spec, center, r)
    block = set(block)
    if count != INFINITE:
        return _verdict(len(block)) if len(block) <= count else _verdict(count)
    for atom in window.atoms:
        if atom and all(a in block for a in atom):
            return INFINITE_VERDICT
    return "finite-in-window"


def find_ciubb(window: Window, r) -> CiubbCover:
    """Greedy cover: scan the window in order and make every uncovered point
    a center.  Raises :class:`NotCiubb` at the first center whose true ball
    is finite."""
    if r <= 0:
        raise ValueError("r must be positive")
    r = Fraction(r)
    covered = np.zeros(window.n, dtype=bool)
    centers, verdicts = [], []
    for i, lab in enumerate(window.labels):
        if covered[i]:
            continue
        count = ball_cardinality(window.spec, lab, r)
        if count != INFINITE:
            members = tuple(window.labels[j] for j in _ball_ids(window, lab, r))
            raise NotCiubb(f"ball B_{r}({lab!r}) is finite ({count} points)",
                           witness={"center": lab, "ball": members, "cardinality": count})
        centers.append(lab)
        verdicts.append(INFINITE_VERDICT)
        covered |= window.within(i, r)
    return CiubbCover(r, tuple(centers), tuple(verdicts), window)


def ciubb_to_piubs(cover: CiubbCover, window: Window | None = None) -> PiubsPartition:
    """Turn a cover by infinite ``r``-balls into a partition of radius ``3r``.

    ``C(k)`` is the set of centers whose ball misses ``B_r(x(k))``.  Starting
    from the full family ``R_0``, step ``j`` picks ``k(j) = min R_{j-1}``,
    sets ``R_j = R_{j-1} & C(k(j))`` and

        ``D_j = U_{m in R_{j-1}} B_m  minus  U_{m in R_j} B_m``.

    Each block then sits between ``B_r(x(k(j)))`` and ``B_{3r}(x(k(j)))``.
    """
    window = window or cover.window
    r = cover.r
    ids = [window.index[c] for c in cover.centers]
    if not ids:
        raise InductionStalled("empty cover")
    balls = np.array([window.within(i, r) for i in ids])
    # disjoint[a, b]: the two window balls do not meet
    disjoint = ~(balls.astype(np.int32) @ balls.T.astype(np.int32)).astype(bool)
    residual = list(range(len(ids)))
    centers, blocks = [], []
    while residual:
        k = residual[0]
        nxt = [m for m in residual if disjoint[k, m]]
        before = balls[residual].any(axis=0)
        after = balls[nxt].any(axis=0) if nxt else np.zeros(window.n, dtype=bool)
        blk = np.flatnonzero(before & ~after)
        if blk.size == 0:
            raise InductionStalled("empty block", witness=cover.centers[k])
        centers.append(cover.centers[k])
        blocks.append(tuple(window.labels[i] for i in blk))
        residual = nxt
    covered = np.zeros(window.n, dtype=bool)
    for blk in blocks:
        covered[window.ids(blk)] = True
    if not covered.all():
        missing = window.labels[int(np.flatnonzero(~covered)[0])]
        raise InductionStalled("cover does not cover the window", witness=missing)
    R = 3 * r
    verdicts = tuple(block_cardinality(window, b, c, R) for b, c in zip(blocks, centers))
    return PiubsPartition(R, tuple(centers), tuple(blocks), verdicts, window)


@dataclass
class PiubsCertificate:
    partition_ok: bool
    containment_ok: bool
    infinite_ok: bool
    violations: list

    @property
    def ok(self) -> bool:
        return self.partition_ok and self.containment_ok and self.infinite_ok

    def to_json(self) -> dict:
        return {"partition": self.partition_ok, "containment": self.containment_ok,
                "infinite": self.infinite_ok, "ok": self.ok,
                "violations": [list(map(repr, v)) for v in self.violations]}


def verify_piubs(partition: PiubsPartition, window: Window | None = None,
                 sandwich_r=None) -> PiubsCertificate:
    """Check the three partition conditions with witnesses.

    1) blocks are disjoint and cover the window;
    2) ``x(k) in D_k`` and ``D_k`` inside ``B_r(x(k))``;
    3) every block verdict is infinite (by the oracle rule above).

    With ``sandwich_r`` also checks ``B_{sandwich_r}(x(k))`` inside ``D_k``.
    """
    window = window or partition.window
    viol = []
    seen = {}
    for k, blk in enumerate(partition.blocks):
        for lab in blk:
            if lab in seen:
                viol.append(("overlap", lab, seen[lab], k))
            seen[lab] = k
    for lab in window.labels:
        if lab not in seen:
            viol.append(("uncovered", lab))
    p_ok = not viol
    c_ok = True
    for k, (c, blk) in enumerate(zip(partition.centers, partition.blocks)):
        bset = set(blk)
        if c not in bset:
            viol.append(("center-missing", k, c))
            c_ok = False
        ball = set(window.labels[j] for j in _ball_ids(window, c, partition.r))
        out = [x for x in blk if x not in ball]
        if out:
            viol.append(("outside-ball", k, out[0]))
            c_ok = False
        if sandwich_r is not None:
            inner = [window.labels[j] for j in _ball_ids(window, c, sandwich_r)]
            miss = [x for x in inner if x not in bset]
            if miss:
                viol.append(("inner-ball", k, miss[0]))
                c_ok = False
    i_ok = True
    for k, (c, blk) in enumerate(zip(partition.centers, partition.blocks)):
        v = block_cardinality(window, blk, c, partition.r)
        if v != INFINITE_VERDICT:
            viol.append(("finite-block", k, v))
            i_ok = False
    return PiubsCertificate(p_ok, c_ok, i_ok, viol)


def natural_partition(window: Window) -> PiubsPartition:
    """The evident partition of the built-in kinds.

    FiberedLine: fibers, centers ``(n, 0)``, ``r = 1``.  ExponentialBlocks:
    blocks ``X_k``, centers their smallest member, ``r = 1``.
    BoundedInfinite: the whole window, ``r = D``.
    """
    kind = window.spec.kind
    if kind == "FiberedLine":
        groups = {}
        for lab in window.labels:
            groups.setdefault(lab[0], []).append(lab)
        keys = sorted(groups)
        centers = [(n, 0) for n in keys]
        r = Fraction(1)
    elif kind == "ExponentialBlocks":
        groups = {}
        for lab in window.labels:
            groups.setdefault(block_index(lab), []).append(lab)
        keys = sorted(groups)
        centers = [min(groups[k], key=abs) for k in keys]
        r = Fraction(1)
    elif kind == "BoundedInfinite":
        groups = {0: list(window.labels)}
        keys = [0]
        centers = [window.labels[0]]
        r = Fraction(window.spec.params["diameter"])
    else:
        raise UnsupportedSpace(f"no natural partition for {kind}")
    blocks = tuple(tuple(groups[k]) for k in keys)
    verdicts = tuple(block_cardinality(window, b, c, r) for b, c in zip(blocks, centers))
    return PiubsPartition(r, tuple(centers), blocks, verdicts, window)


# ---------------------------------------------------------------------------
# Folner ratios

def folner_ratio(window: Window, F: Iterable, R, mode: str = "inner") -> Fraction:
    """Exact ``|boundary_R F| / |F|``.

    ``F`` must keep distance ``> R`` from the window edge, otherwise the
    window cannot see the whole boundary and :class:`BoundaryClipped` is
    raised.
    """
    F = list(dict.fromkeys(F))
    if not F:
        raise ValueError("F must be nonempty")
    ids = window.ids(F)
    bad = [window.labels[i] for i in ids if window.edge[i] <= R]
    if bad:
        raise BoundaryClipped(f"{bad[0]!r} is within {R} of the window edge", witness=bad[0])
    if len(F) == window.n and all(e == INFINITE for e in window.edge):
        return Fraction(0)
    import warnings
    from .errors import BoundaryClippedWarning
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", BoundaryClippedWarning)
        b = boundary_set(window, F, R, mode)
    return Fraction(len(b), len(F))


@dataclass
class FolnerReport:
    R: Fraction
    eps: Fraction
    family: str
    tried: list            # (description, |F|, |boundary|, ratio)
    best: tuple | None
    verdict: str           # folner-evidence | antifolner-evidence | inconclusive
    bound: Fraction | None = None

    @property
    def success(self) -> bool:
        return self.verdict == "folner-evidence"

    def to_json(self) -> dict:
        return {
            "R": str(self.R), "eps": str(self.eps), "family": self.family,
            "tried": [{"set": d, "size": n, "boundary": b, "ratio": str(q)}
                      for d, n, b, q in self.tried],
            "best": None if self.best is None else {
                "set": self.best[0], "ratio": str(self.best[3])},
            "verdict": self.verdict,
            "bound": None if self.bound is None else str(self.bound),
        }


def _candidates(window: Window, R, budget: int):
    """Declared search family per kind: ``(family, [(description, labels)])``."""
    kind = window.spec.kind
    inside = [i for i in range(window.n) if window.edge[i] > R]
    ok = set(window.labels[i] for i in inside)
    out = []
    if kind == "IntegerLattice":
        dim = window.spec.params["dim"]
        lo, hi = window.extent.get("lo", -window.extent.get("n", 0)), window.extent.get(
            "hi", window.extent.get("n", 0))
        span = hi - lo + 1
        for L in range(1, span + 1):
            start = lo + (span - L) // 2
            box = [tuple(x) for x in itertools.product(range(start, start + L), repeat=dim)]
            if all(b in ok for b in box):
                out.append((f"box L={L} origin={start}", box))
        return "boxes", out[:budget]
    if kind == "IntegerLine":
        for a, b in itertools.combinations_with_replacement(sorted(ok), 2):
            out.append((f"interval [{a},{b}]", list(range(a, b + 1))))
        return "intervals", [c for c in out if all(x in ok for x in c[1])][:budget]
    if kind == "ExponentialBlocks":
        ks = sorted({block_index(x) for x in window.labels})
        for s, t in itertools.combinations_with_replacement(ks, 2):
            F = [x for k in range(s, t + 1) for x in block_members(k)]
            if all(x in ok for x in F):
                out.append((f"blocks [{s},{t}]", F))
        return "block-intervals", out[:budget]
    # balls around interior points
    for i in inside:
        for rr in range(1, 4):
            F = [window.labels[j] for j in np.flatnonzero(window.within(i, rr))]
            if all(x in ok for x in F):
                out.append((f"ball({window.labels[i]!r},{rr})", F))
    return "balls", out[:budget]


def folner_search(window: Window, R, eps, budget: int = 10_000,
                  mode: str = "inner") -> FolnerReport:
    """Try the declared family for the window's kind and report the best
    ratio.  The result is evidence on this window only."""
    R, eps = Fraction(R), Fraction(eps)
    if eps <= 0:
        raise ValueError("eps must be positive")
    family, cands = _candidates(window, R, budget)
    if window.spec.kind in ("BoundedInfinite", "ExplicitFinite") and not cands:
        return FolnerReport(R, eps, family, [], None, "inconclusive")
    tried = []
    for desc, F in cands:
        q = folner_ratio(window, F, R, mode)
        tried.append((desc, len(F), int(q * len(F)), q))
    if not tried:
        return FolnerReport(R, eps, family, [], None, "inconclusive")
    best = min(tried, key=lambda t: (t[3], t[1], t[0]))
    if window.spec.kind == "BoundedInfinite":
        return FolnerReport(R, eps, family, tried, best, "inconclusive", best[3])
    verdict = "folner-evidence" if best[3] < eps else "antifolner-evidence"
    return FolnerReport(R, eps, family, tried, best, verdict, best[3])


# ---------------------------------------------------------------------------
# paradoxical map on ExponentialBlocks

def beta(n: int) -> int:
    """``n -> floor(n / 2)``."""
    return n // 2


@dataclass
class ParadoxicalReport:
    fiber_sizes: dict        # n -> |beta^{-1}(n)| (interior n)
    max_displacement: int
    U: tuple
    V: tuple
    beta_U: dict             # n -> point of U
    beta_V: dict
    max_displacement_U: int
    max_displacement_V: int
    interior: tuple

    @property
    def ok(self) -> bool:
        return (all(v == 2 for v in self.fiber_sizes.values()) and self.max_displacement <= 2
                and self.max_displacement_U <= 2 and self.max_displacement_V <= 2)

    def to_json(self) -> dict:
        return {"fiber_sizes_ok": all(v == 2 for v in self.fiber_sizes.values()),
                "interior": list(self.interior), "max_displacement": self.max_displacement,
                "max_displacement_U": self.max_displacement_U,
                "max_displacement_V": self.max_displacement_V, "ok": self.ok}


def paradoxical_check(window: Window) -> ParadoxicalReport:
    """Check that ``beta`` is two-to-one with displacement ``<= 2``.

    Interior points are those whose whole preimage ``{2n, 2n+1}`` lies in
    the window.  ``U`` takes the even point of each fiber and ``V`` the odd
    one; ``beta_U(n) = 2n`` and ``beta_V(n) = 2n + 1`` are the inverse
    bijections onto them.
    """
    if window.spec.kind != "ExponentialBlocks":
        raise UnsupportedSpace("paradoxical_check needs ExponentialBlocks")
    spec = window.spec
    from .metric_space import distance
    labels = set(window.labels)
    interior = tuple(n for n in window.labels if 2 * n in labels and 2 * n + 1 in labels)
    pre = {}
    for m in window.labels:
        pre.setdefault(beta(m), []).append(m)
    sizes = {n: len(pre.get(n, ())) for n in interior}
    disp = max(distance(spec, beta(m), m) for m in window.labels if beta(m) in labels)
    bU = {n: 2 * n for n in interior}
    bV = {n: 2 * n + 1 for n in interior}
    dU = max((distance(spec, n, x) for n, x in bU.items()), default=0)
    dV = max((distance(spec, n, x) for n, x in bV.items()), default=0)
    return ParadoxicalReport(sizes, int(disp), tuple(sorted(bU.values())),
                             tuple(sorted(bV.values())), bU, bV, int(dU), int(dV), interior)
