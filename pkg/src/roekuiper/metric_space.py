"""Symbolic discrete metric spaces and their finite windows.

A :class:`SpaceSpec` names a (usually infinite) discrete metric space
symbolically; :func:`realize_window` cuts out a finite piece of it whose
distance matrix is stored exactly (integer numerators over one common
denominator).  Everything downstream runs on windows, and the symbolic
spec answers the questions a window cannot: whether a true ball is
finite, how far a point sits from the part of the space that was cut
away.

Built-in kinds
--------------
``ExplicitFinite``     labels ``0..n-1``, given distance matrix.
``BoundedInfinite``    labels ``0, 1, 2, ...``; every two distinct points at
                       distance ``D``.
``IntegerLine``        labels ``n`` in Z, ``|n - m|``.
``IntegerLattice``     labels in Z^dim, l1 (word) metric.
``ExponentialBlocks``  labels ``n`` in Z, ``d(n, m) = |k(n) - k(m)| + 1`` for
                       ``n != m`` where ``X_0 = {0}``, ``X_1 = {1, 2}``,
                       ``X_2 = {3..6}``, ... and ``-n in X_{-k}`` iff ``n in X_k``.
``FiberedLine``        labels ``(n, f)`` with ``n`` in Z, ``f >= 0``;
                       ``max(|n - m|, [f != g])``: an infinite fiber of
                       diameter 1 over every integer.
``DisjointPower``      labels ``(i, x)``, ``i = 1..copies``;
                       ``d_X(x, y) + |i - j|``.
``SparseAugmented``    labels ``(0, x)`` for base points and ``(1, j)``,
                       ``j >= 0``, for an isolated tail glued at the base
                       origin ``o``: ``d((1, j), (0, x)) = s (j + 1) + d_X(o, x)``,
                       ``d((1, j), (1, j')) = s |j - j'|``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from functools import reduce
from typing import Any, Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from .errors import (
    BadLabel,
    BadParams,
    BoundaryClippedWarning,
    EmptyWindow,
    OracleUnavailable,
)

INFINITE = math.inf

KINDS = (
    "ExplicitFinite",
    "BoundedInfinite",
    "IntegerLine",
    "IntegerLattice",
    "ExponentialBlocks",
    "FiberedLine",
    "DisjointPower",
    "SparseAugmented",
)


# ---------------------------------------------------------------------------
# labels

def block_index(n: int) -> int:
    """Block number ``k(n)`` of an integer in the exponential-block space."""
    k = (abs(n) + 1).bit_length() - 1
    return k if n >= 0 else -k


def block_members(k: int) -> list[int]:
    if k == 0:
        return [0]
    lo, hi = 2 ** abs(k) - 1, 2 ** (abs(k) + 1) - 2
    members = list(range(lo, hi + 1))
    return members if k > 0 else sorted(-m for m in members)


def block_size(k: int) -> int:
    return 1 if k == 0 else 2 ** abs(k)


def label_to_json(label):
    if isinstance(label, tuple):
        return [label_to_json(x) for x in label]
    return label


def label_from_json(obj):
    if isinstance(obj, list):
        return tuple(label_from_json(x) for x in obj)
    return obj


def _as_fraction(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, str):
        return Fraction(x)
    return Fraction(x)


# ---------------------------------------------------------------------------
# specs

@dataclass(frozen=True, eq=True)
class SpaceSpec:
    """Symbolic description of a discrete metric space."""

    kind: str
    params: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise BadParams(f"unknown space kind {self.kind!r}")

    # constructors
    @classmethod
    def explicit(cls, dist: Sequence[Sequence]) -> "SpaceSpec":
        rows = tuple(tuple(_as_fraction(x) for x in row) for row in dist)
        if any(len(r) != len(rows) for r in rows):
            raise BadParams("distance matrix must be square")
        return cls("ExplicitFinite", {"dist": rows})

    @classmethod
    def bounded_infinite(cls, diameter=1) -> "SpaceSpec":
        if _as_fraction(diameter) <= 0:
            raise BadParams("diameter must be positive")
        return cls("BoundedInfinite", {"diameter": _as_fraction(diameter)})

    @classmethod
    def integer_line(cls) -> "SpaceSpec":
        return cls("IntegerLine", {})

    @classmethod
    def integer_lattice(cls, dim: int) -> "SpaceSpec":
        if dim < 1:
            raise BadParams("lattice dimension must be >= 1")
        return cls("IntegerLattice", {"dim": int(dim)})

    @classmethod
    def exponential_blocks(cls) -> "SpaceSpec":
        return cls("ExponentialBlocks", {})

    @classmethod
    def fibered_line(cls) -> "SpaceSpec":
        return cls("FiberedLine", {})

    @classmethod
    def disjoint_power(cls, base: "SpaceSpec", copies: int) -> "SpaceSpec":
        if copies < 1:
            raise BadParams("copies must be >= 1")
        return cls("DisjointPower", {"base": base, "copies": int(copies)})

    @classmethod
    def sparse_augmented(cls, base: "SpaceSpec", spacing=10) -> "SpaceSpec":
        if _as_fraction(spacing) <= 0:
            raise BadParams("spacing must be positive")
        return cls("SparseAugmented", {"base": base, "spacing": _as_fraction(spacing)})

    @property
    def base(self) -> "SpaceSpec":
        return self.params["base"]

    def to_json(self) -> dict:
        params = {}
        for k, v in self.params.items():
            if isinstance(v, SpaceSpec):
                params[k] = v.to_json()
            elif k == "dist":
                params[k] = [[str(x) for x in row] for row in v]
            elif isinstance(v, Fraction):
                params[k] = str(v)
            else:
                params[k] = v
        return {"kind": self.kind, "params": params}

    @classmethod
    def from_json(cls, obj: Mapping) -> "SpaceSpec":
        kind, p = obj["kind"], dict(obj.get("params", {}))
        if kind == "ExplicitFinite":
            return cls.explicit(p["dist"])
        if kind == "BoundedInfinite":
            return cls.bounded_infinite(p.get("diameter", 1))
        if kind == "IntegerLine":
            return cls.integer_line()
        if kind == "IntegerLattice":
            return cls.integer_lattice(p["dim"])
        if kind == "ExponentialBlocks":
            return cls.exponential_blocks()
        if kind == "FiberedLine":
            return cls.fibered_line()
        if kind == "DisjointPower":
            return cls.disjoint_power(cls.from_json(p["base"]), p["copies"])
        if kind == "SparseAugmented":
            return cls.sparse_augmented(cls.from_json(p["base"]), p.get("spacing", 10))
        raise BadParams(f"unknown space kind {kind!r}")


# ---------------------------------------------------------------------------
# per-kind behaviour
#
# Each kind implements: valid(label), dist(a, b), labels(extent),
# ball_count(center, r), edge(extent, label, geometric), atoms(extent, labels),
# origin().  Extents are plain dicts (see realize_window).

def _interval(extent: Mapping, key: str = "n") -> tuple[int, int]:
    if "lo" in extent or "hi" in extent:
        lo, hi = int(extent["lo"]), int(extent["hi"])
    elif key in extent:
        n = int(extent[key])
        lo, hi = -n, n
    else:
        raise BadParams(f"extent needs {key!r} or lo/hi")
    if lo > hi:
        raise EmptyWindow(f"empty interval [{lo}, {hi}]")
    return lo, hi


class _Explicit:
    @staticmethod
    def size(p):
        return len(p["dist"])

    @classmethod
    def valid(cls, p, a):
        return isinstance(a, int) and 0 <= a < cls.size(p)

    @staticmethod
    def dist(p, a, b):
        return p["dist"][a][b]

    @classmethod
    def labels(cls, p, extent):
        if extent:
            raise BadParams("ExplicitFinite windows take no extent")
        if cls.size(p) == 0:
            raise EmptyWindow("empty explicit space")
        return list(range(cls.size(p)))

    @classmethod
    def ball_count(cls, p, c, r):
        return sum(1 for b in range(cls.size(p)) if p["dist"][c][b] <= r)

    @staticmethod
    def edge(p, extent, a, geometric):
        return INFINITE

    @staticmethod
    def atoms(p, extent, labels):
        return []

    @staticmethod
    def origin(p):
        return 0


class _Bounded:
    @staticmethod
    def valid(p, a):
        return isinstance(a, int) and a >= 0

    @staticmethod
    def dist(p, a, b):
        return Fraction(0) if a == b else p["diameter"]

    @staticmethod
    def labels(p, extent):
        n = int(extent.get("n", 0))
        if n <= 0:
            raise EmptyWindow("BoundedInfinite window needs n >= 1")
        return list(range(n))

    @staticmethod
    def ball_count(p, c, r):
        return INFINITE if r >= p["diameter"] else 1

    @staticmethod
    def edge(p, extent, a, geometric):
        # every missing point is interchangeable with a present one
        return INFINITE if geometric else p["diameter"]

    @staticmethod
    def atoms(p, extent, labels):
        return [list(labels)]

    @staticmethod
    def origin(p):
        return 0


class _Line:
    @staticmethod
    def valid(p, a):
        return isinstance(a, int) and not isinstance(a, bool)

    @staticmethod
    def dist(p, a, b):
        return abs(a - b)

    @staticmethod
    def labels(p, extent):
        lo, hi = _interval(extent)
        return list(range(lo, hi + 1))

    @staticmethod
    def matrix(p, labels):
        a = np.array(labels)
        return np.abs(a[:, None] - a[None, :])

    @staticmethod
    def ball_count(p, c, r):
        return 2 * math.floor(r) + 1

    @staticmethod
    def edge(p, extent, a, geometric):
        lo, hi = _interval(extent)
        return min(a - lo + 1, hi - a + 1)

    @staticmethod
    def atoms(p, extent, labels):
        return []

    @staticmethod
    def origin(p):
        return 0


class _Lattice:
    @staticmethod
    def valid(p, a):
        return (isinstance(a, tuple) and len(a) == p["dim"]
                and all(isinstance(x, int) for x in a))

    @staticmethod
    def dist(p, a, b):
        return sum(abs(x - y) for x, y in zip(a, b))

    @staticmethod
    def labels(p, extent):
        lo, hi = _interval(extent)
        axes = [range(lo, hi + 1)] * p["dim"]
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, p["dim"])
        return [tuple(int(v) for v in row) for row in grid]

    @staticmethod
    def matrix(p, labels):
        a = np.array(labels)
        return np.abs(a[:, None, :] - a[None, :, :]).sum(axis=2)

    @staticmethod
    def ball_count(p, c, r):
        R, d = math.floor(r), p["dim"]
        return sum(2 ** k * math.comb(d, k) * math.comb(R, k) for k in range(min(d, R) + 1))

    @staticmethod
    def edge(p, extent, a, geometric):
        lo, hi = _interval(extent)
        return min(min(x - lo + 1, hi - x + 1) for x in a)

    @staticmethod
    def atoms(p, extent, labels):
        return []

    @staticmethod
    def origin(p):
        return (0,) * p["dim"]


class _ExpBlocks:
    @staticmethod
    def valid(p, a):
        return isinstance(a, int) and not isinstance(a, bool)

    @staticmethod
    def dist(p, a, b):
        if a == b:
            return 0
        return abs(block_index(a) - block_index(b)) + 1

    @staticmethod
    def _blocks(extent):
        if "kmin" in extent or "kmax" in extent:
            return int(extent["kmin"]), int(extent["kmax"])
        return _interval(extent, "blocks")

    @classmethod
    def labels(cls, p, extent):
        kmin, kmax = cls._blocks(extent)
        if kmin > kmax:
            raise EmptyWindow("no blocks selected")
        return sorted(m for k in range(kmin, kmax + 1) for m in block_members(k))

    @staticmethod
    def matrix(p, labels):
        k = np.array([block_index(n) for n in labels])
        m = np.abs(k[:, None] - k[None, :]) + 1
        np.fill_diagonal(m, 0)
        return m

    @staticmethod
    def ball_count(p, c, r):
        if r < 1:
            return 1
        k0, span = block_index(c), math.floor(r - 1)
        return sum(block_size(k) for k in range(k0 - span, k0 + span + 1))

    @classmethod
    def edge(cls, p, extent, a, geometric):
        kmin, kmax = cls._blocks(extent)
        k = block_index(a)
        return min(kmax + 1 - k, k - kmin + 1) + 1

    @staticmethod
    def atoms(p, extent, labels):
        return []

    @staticmethod
    def origin(p):
        return 0


class _Fibered:
    @staticmethod
    def valid(p, a):
        return (isinstance(a, tuple) and len(a) == 2
                and all(isinstance(x, int) for x in a) and a[1] >= 0)

    @staticmethod
    def dist(p, a, b):
        return max(abs(a[0] - b[0]), int(a[1] != b[1]))

    @staticmethod
    def _fibers(extent):
        k = int(extent.get("fibers", 0))
        if k < 0:
            raise EmptyWindow("fibers must be >= 0")
        return k

    @classmethod
    def labels(cls, p, extent):
        lo, hi = _interval(extent)
        k = cls._fibers(extent)
        return [(n, f) for n in range(lo, hi + 1) for f in range(k + 1)]

    @staticmethod
    def matrix(p, labels):
        a = np.array(labels)
        base = np.abs(a[:, None, 0] - a[None, :, 0])
        return np.maximum(base, (a[:, None, 1] != a[None, :, 1]).astype(np.int64))

    @staticmethod
    def ball_count(p, c, r):
        return INFINITE if r >= 1 else 1

    @classmethod
    def edge(cls, p, extent, a, geometric):
        lo, hi = _interval(extent)
        base = min(a[0] - lo + 1, hi - a[0] + 1)
        # cutting a fiber short is a cardinality cut, not a geometric one
        return base if geometric else min(base, 1)

    @staticmethod
    def atoms(p, extent, labels):
        fibers: dict[int, list] = {}
        for lab in labels:
            fibers.setdefault(lab[0], []).append(lab)
        return [fibers[n] for n in sorted(fibers)]

    @staticmethod
    def origin(p):
        return (0, 0)


class _Disjoint:
    @staticmethod
    def valid(p, a):
        return (isinstance(a, tuple) and len(a) == 2 and isinstance(a[0], int)
                and 1 <= a[0] <= p["copies"] and _kind(p["base"]).valid(p["base"].params, a[1]))

    @staticmethod
    def dist(p, a, b):
        base = p["base"]
        return _kind(base).dist(base.params, a[1], b[1]) + abs(a[0] - b[0])

    @staticmethod
    def labels(p, extent):
        base = p["base"]
        inner = _kind(base).labels(base.params, extent.get("base", {}))
        return [(i, x) for i in range(1, p["copies"] + 1) for x in inner]

    @staticmethod
    def ball_count(p, c, r):
        base, total = p["base"], 0
        for j in range(1, p["copies"] + 1):
            rest = r - abs(c[0] - j)
            if rest >= 0:
                total += _kind(base).ball_count(base.params, c[1], rest)
        return total

    @staticmethod
    def edge(p, extent, a, geometric):
        base = p["base"]
        return _kind(base).edge(base.params, extent.get("base", {}), a[1], geometric)

    @staticmethod
    def atoms(p, extent, labels):
        base = p["base"]
        inner = sorted({lab[1] for lab in labels})
        base_atoms = _kind(base).atoms(base.params, extent.get("base", {}), inner)
        return [[(i, x) for x in atom] for i in range(1, p["copies"] + 1) for atom in base_atoms]

    @staticmethod
    def origin(p):
        return (1, _kind(p["base"]).origin(p["base"].params))


class _Sparse:
    @staticmethod
    def valid(p, a):
        if not (isinstance(a, tuple) and len(a) == 2 and a[0] in (0, 1)):
            return False
        if a[0] == 1:
            return isinstance(a[1], int) and a[1] >= 0
        return _kind(p["base"]).valid(p["base"].params, a[1])

    @staticmethod
    def dist(p, a, b):
        base, s = p["base"], p["spacing"]
        bk = _kind(base)
        o = bk.origin(base.params)
        if a[0] == 0 and b[0] == 0:
            return bk.dist(base.params, a[1], b[1])
        if a[0] == 1 and b[0] == 1:
            return s * abs(a[1] - b[1])
        t, x = (a, b) if a[0] == 1 else (b, a)
        return s * (t[1] + 1) + bk.dist(base.params, o, x[1])

    @staticmethod
    def _tail(extent):
        t = int(extent.get("tail", 0))
        if t < 0:
            raise BadParams("tail must be >= 0")
        return t

    @classmethod
    def labels(cls, p, extent):
        base = p["base"]
        inner = _kind(base).labels(base.params, extent.get("base", {}))
        return [(0, x) for x in inner] + [(1, j) for j in range(cls._tail(extent))]

    @staticmethod
    def ball_count(p, c, r):
        base, s = p["base"], p["spacing"]
        bk = _kind(base)
        o = bk.origin(base.params)
        if c[0] == 0:
            total = bk.ball_count(base.params, c[1], r)
            # tail points within r: s (j + 1) + d(o, x) <= r
            reach = r - bk.dist(base.params, o, c[1])
            if reach >= s:
                total += math.floor(reach / s)
            return total
        j = c[1]
        tail = 1 + min(j, math.floor(r / s)) + math.floor(r / s)
        reach = r - s * (j + 1)
        base_part = bk.ball_count(base.params, o, reach) if reach >= 0 else 0
        return tail + base_part

    @classmethod
    def edge(cls, p, extent, a, geometric):
        base, s = p["base"], p["spacing"]
        bk = _kind(base)
        bext = extent.get("base", {})
        o = bk.origin(base.params)
        T = cls._tail(extent)
        o_edge = bk.edge(base.params, bext, o, geometric)
        if a[0] == 0:
            return min(bk.edge(base.params, bext, a[1], geometric),
                       s * (T + 1) + bk.dist(base.params, o, a[1]))
        return min(s * (T - a[1]), s * (a[1] + 1) + o_edge)

    @staticmethod
    def atoms(p, extent, labels):
        base = p["base"]
        inner = [lab[1] for lab in labels if lab[0] == 0]
        base_atoms = _kind(base).atoms(base.params, extent.get("base", {}), inner)
        return [[(0, x) for x in atom] for atom in base_atoms]

    @staticmethod
    def origin(p):
        return (0, _kind(p["base"]).origin(p["base"].params))


_KIND_IMPL = {
    "ExplicitFinite": _Explicit,
    "BoundedInfinite": _Bounded,
    "IntegerLine": _Line,
    "IntegerLattice": _Lattice,
    "ExponentialBlocks": _ExpBlocks,
    "FiberedLine": _Fibered,
    "DisjointPower": _Disjoint,
    "SparseAugmented": _Sparse,
}


def _kind(spec: SpaceSpec):
    return _KIND_IMPL[spec.kind]


def _check_label(spec: SpaceSpec, a):
    if not _kind(spec).valid(spec.params, a):
        raise BadLabel(f"{a!r} is not a label of {spec.kind}", witness=a)


def distance(spec: SpaceSpec, a, b):
    """Symbolic distance between two labels (an int or a Fraction)."""
    _check_label(spec, a)
    _check_label(spec, b)
    return _kind(spec).dist(spec.params, a, b)


def ball_cardinality(spec: SpaceSpec, center, r) -> float | int:
    """Cardinality of the closed ball ``B_r(center)`` in the full space.

    Returns an int, or ``INFINITE``.
    """
    _check_label(spec, center)
    if r < 0:
        raise ValueError("radius must be >= 0")
    return _kind(spec).ball_count(spec.params, center, _as_fraction(r))


# ---------------------------------------------------------------------------
# windows

class PointId(NamedTuple):
    id: int
    label: Any


class Window:
    """A finite sub-square of a space's distance function.

    Distances are stored as integer numerators ``_dnum`` over the common
    denominator ``scale``; all comparisons against radii are exact.

    ``edge[i]`` is the distance from point ``i`` to the nearest point of the
    full space that is missing from the window (``inf`` if none is).
    ``geometric_edge[i]`` ignores cuts that only truncate an infinite
    bounded piece (a fiber of FiberedLine, a BoundedInfinite space): those
    cut cardinality, not geometry.
    """

    def __init__(self, spec: SpaceSpec, extent: Mapping, labels: Sequence,
                 dnum: np.ndarray, scale: int, edge: Sequence, geometric_edge: Sequence,
                 atoms: Sequence[Sequence], interior_margin=0):
        self.spec = spec
        self.extent = dict(extent)
        self.labels = tuple(labels)
        self.index = {lab: i for i, lab in enumerate(self.labels)}
        dnum = np.asarray(dnum, dtype=np.int64)
        dnum.setflags(write=False)
        self._dnum = dnum
        self.scale = int(scale)
        self.edge = tuple(edge)
        self.geometric_edge = tuple(geometric_edge)
        self.atoms = tuple(tuple(a) for a in atoms)
        self.interior_margin = interior_margin

    def __len__(self):
        return len(self.labels)

    def __repr__(self):
        return f"Window({self.spec.kind}, {len(self)} points)"

    @property
    def n(self) -> int:
        return len(self.labels)

    @property
    def points(self) -> list[PointId]:
        return [PointId(i, lab) for i, lab in enumerate(self.labels)]

    def ids(self, labels: Iterable) -> list[int]:
        try:
            return [self.index[lab] for lab in labels]
        except KeyError as exc:
            raise BadLabel(f"{exc.args[0]!r} not in window", witness=exc.args[0]) from None

    def d(self, i: int, j: int) -> Fraction:
        return Fraction(int(self._dnum[i, j]), self.scale)

    def dist_matrix(self) -> np.ndarray:
        """Float copy of the distance matrix."""
        return self._dnum / self.scale

    def dnum(self) -> np.ndarray:
        """Read-only integer numerators (divide by ``scale`` for distances)."""
        return self._dnum

    def radius_num(self, r, strict: bool = False) -> int:
        """Largest numerator ``k`` with ``k/scale <= r`` (``< r`` if strict)."""
        rr = _as_fraction(r) * self.scale
        if strict:
            return math.ceil(rr) - 1
        return math.floor(rr)

    def within(self, i: int, r, strict: bool = False) -> np.ndarray:
        return self._dnum[i] <= self.radius_num(r, strict)

    def interior(self, margin=None, geometric: bool = False) -> list[int]:
        """Ids whose edge distance is at least ``margin``."""
        margin = self.interior_margin if margin is None else margin
        edge = self.geometric_edge if geometric else self.edge
        return [i for i, e in enumerate(edge) if e >= margin]

    def diameter(self) -> Fraction:
        return Fraction(int(self._dnum.max()), self.scale)

    def subwindow(self, ids: Sequence[int]) -> "Window":
        """Restriction to the given ids (kept in window order)."""
        ids = sorted(set(ids))
        if not ids:
            raise EmptyWindow("empty subwindow")
        removed = np.setdiff1d(np.arange(self.n), ids)
        sub = self._dnum[np.ix_(ids, ids)]
        edge, gedge = [], []
        for i in ids:
            extra = INFINITE
            if removed.size:
                extra = Fraction(int(self._dnum[i, removed].min()), self.scale)
            edge.append(min(self.edge[i], extra))
            gedge.append(min(self.geometric_edge[i], extra))
        keep = set(self.labels[i] for i in ids)
        atoms = [a for a in self.atoms if all(lab in keep for lab in a)]
        w = Window(self.spec, self.extent, [self.labels[i] for i in ids], sub, self.scale,
                   edge, gedge, atoms, self.interior_margin)
        w.parent_ids = tuple(ids)
        return w

    def same_points(self, other: "Window") -> bool:
        return self is other or (self.labels == other.labels and self.spec == other.spec)

    # JSON -------------------------------------------------------------
    def to_json(self) -> dict:
        lower = [[str(self.d(i, j)) for j in range(i)] for i in range(self.n)]
        return {
            "spec": self.spec.to_json(),
            "extent": _extent_to_json(self.extent),
            "points": [label_to_json(lab) for lab in self.labels],
            "dist": lower,
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "Window":
        spec = SpaceSpec.from_json(obj["spec"])
        w = realize_window(spec, obj.get("extent", {}))
        pts = [label_from_json(x) for x in obj.get("points", [label_to_json(l) for l in w.labels])]
        if tuple(pts) != w.labels:
            raise BadParams("window points do not match the realized extent")
        if "dist" in obj:
            for i, row in enumerate(obj["dist"]):
                for j, v in enumerate(row):
                    if Fraction(v) != w.d(i, j):
                        raise BadParams(f"stored distance ({i},{j}) disagrees with spec")
        return w


def _extent_to_json(extent):
    return {k: (_extent_to_json(v) if isinstance(v, Mapping) else v) for k, v in extent.items()}


def realize_window(spec: SpaceSpec, extent: Mapping | None = None, interior_margin=0) -> Window:
    """Realize a finite window of ``spec``.

    ``extent`` keys by kind: IntegerLine / IntegerLattice ``n`` (or
    ``lo``/``hi``); ExponentialBlocks ``blocks`` (or ``kmin``/``kmax``);
    FiberedLine ``n`` and ``fibers`` (max fiber index); BoundedInfinite ``n``
    (point count); DisjointPower ``base``; SparseAugmented ``base`` and
    ``tail``.

    >>> w = realize_window(SpaceSpec.integer_line(), {"n": 2})
    >>> w.labels, w.d(0, 4)
    ((-2, -1, 0, 1, 2), Fraction(4, 1))
    """
    extent = dict(extent or {})
    impl = _kind(spec)
    try:
        labels = impl.labels(spec.params, extent)
    except (KeyError, TypeError, ValueError) as exc:
        raise BadParams(f"bad extent for {spec.kind}: {exc}") from None
    if not labels:
        raise EmptyWindow(f"extent {extent} selects no point")
    labels = sorted(labels)
    n = len(labels)
    if hasattr(impl, "matrix"):
        scale = 1
        dnum = np.asarray(impl.matrix(spec.params, labels), dtype=np.int64)
    else:
        raw = [[impl.dist(spec.params, a, b) for b in labels] for a in labels]
        denoms = {Fraction(x).denominator for row in raw for x in row}
        scale = reduce(math.lcm, denoms, 1)
        dnum = np.array([[int(Fraction(x) * scale) for x in row] for row in raw],
                        dtype=np.int64)
    edge = [_as_exact(impl.edge(spec.params, extent, a, False)) for a in labels]
    gedge = [_as_exact(impl.edge(spec.params, extent, a, True)) for a in labels]
    atoms = impl.atoms(spec.params, extent, labels)
    assert dnum.shape == (n, n)
    return Window(spec, extent, labels, dnum, scale, edge, gedge, atoms, interior_margin)


def _as_exact(x):
    return x if x == INFINITE else Fraction(x)


# ---------------------------------------------------------------------------
# queries

@dataclass(frozen=True)
class Ball:
    center: Any
    radius: Fraction
    labels: tuple          # ball intersected with the window (window order)
    cardinality: Any       # true cardinality: int or INFINITE

    @property
    def infinite(self) -> bool:
        return self.cardinality == INFINITE


def ball(space: Window | SpaceSpec, center, r) -> Ball:
    """Closed ball ``{y : d(center, y) <= r}``.

    With a :class:`Window` the labels are those of the window; the
    cardinality always comes from the symbolic oracle.
    """
    if r < 0:
        raise ValueError("radius must be >= 0")
    if isinstance(space, Window):
        i = space.ids([center])[0]
        mask = space.within(i, r)
        labels = tuple(space.labels[j] for j in np.flatnonzero(mask))
        spec = space.spec
    else:
        spec, labels = space, ()
    return Ball(center, _as_fraction(r), labels, ball_cardinality(spec, center, r))


BOUNDARY_MODES = ("inner", "closed", "strict")


def boundary_set(window: Window, Y: Iterable, R, mode: str = "inner") -> list:
    """Points near both ``Y`` and its complement, in window order.

    ``mode`` fixes how the two distance conditions are read:

    * ``"inner"`` (default): ``d(x, Y) < R`` and ``d(x, X \\ Y) <= R``;
    * ``"closed"``: both ``<= R``;
    * ``"strict"``: both ``< R``.

    The closed and strict readings are symmetric in ``Y`` and its
    complement; the inner one is not.

    Emits :class:`BoundaryClippedWarning` when a point of ``Y`` lies within
    ``R`` of the window edge, because then points outside the window could
    belong to the true boundary.

    >>> w = realize_window(SpaceSpec.integer_line(), {"n": 20})
    >>> boundary_set(w, range(10), 2)
    [-1, 0, 1, 8, 9, 10]
    """
    if mode not in BOUNDARY_MODES:
        raise ValueError(f"mode must be one of {BOUNDARY_MODES}")
    if R <= 0:
        raise ValueError("R must be positive")
    yid = np.zeros(window.n, dtype=bool)
    yid[window.ids(Y)] = True
    k_y = window.radius_num(R, strict=mode != "closed")
    k_c = window.radius_num(R, strict=mode == "strict")
    if any(window.edge[i] <= R for i in np.flatnonzero(yid)):
        warnings.warn("boundary_set: Y reaches the window edge; result may be clipped",
                      BoundaryClippedWarning, stacklevel=2)
    if not yid.any() or yid.all():
        return []
    D = window.dnum()
    near_y = D[:, yid].min(axis=1) <= k_y
    near_c = D[:, ~yid].min(axis=1) <= k_c
    return [window.labels[i] for i in np.flatnonzero(near_y & near_c)]


@dataclass(frozen=True)
class SparseCheck:
    sparse: bool
    witness: tuple | None = None   # (y, other point) violating B_r(y) = {y}

    def __bool__(self):
        return self.sparse


def is_r_sparse(spec: SpaceSpec, Y: Iterable, r, window: Window | None = None) -> SparseCheck:
    """True iff every ``y`` in ``Y`` has ``B_r(y) = {y}`` in the full space.

    Decided by the cardinality oracle; the window (if given) only supplies
    a concrete second point for the witness.
    """
    for y in Y:
        try:
            count = ball_cardinality(spec, y, r)
        except BadLabel as exc:
            raise OracleUnavailable(f"no oracle for {y!r}", witness=y) from exc
        if count != 1:
            other = None
            if window is not None and y in window.index:
                i = window.index[y]
                near = [j for j in np.flatnonzero(window.within(i, r)) if j != i]
                if near:
                    other = window.labels[near[0]]
            return SparseCheck(False, (y, other))
    return SparseCheck(True)


@dataclass
class MetricReport:
    ok: bool
    violations: list = field(default_factory=list)

    def __bool__(self):
        return self.ok


def validate_metric(window: Window, max_violations: int = 100) -> MetricReport:
    """Exhaustive check of the metric axioms on a window (O(n^3) triangles)."""
    D = window.dnum()
    n = window.n
    lab = window.labels
    out = []
    for i in np.flatnonzero(np.diag(D) != 0):
        out.append(("diagonal", lab[i]))
    asym = np.argwhere(D != D.T)
    for i, j in asym[asym[:, 0] < asym[:, 1]]:
        out.append(("symmetry", lab[i], lab[j]))
    off = ~np.eye(n, dtype=bool)
    for i, j in np.argwhere((D <= 0) & off):
        if i < j:
            out.append(("positivity", lab[i], lab[j]))
    for k in range(n):
        bad = np.argwhere(D > D[:, k, None] + D[None, k, :])
        for i, j in bad:
            if len(out) >= max_violations:
                break
            out.append(("triangle", lab[i], lab[k], lab[j]))
        if len(out) >= max_violations:
            break
    return MetricReport(not out, out)
