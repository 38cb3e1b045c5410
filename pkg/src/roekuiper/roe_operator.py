"""Finite-propagation operators on l^2 of a window.

:class:`SparseOperator` keeps its entries in a dense complex array (window
scale is at most a few thousand points) but treats the zero pattern as
the structure: propagation is the largest distance between a row and a
column joined by an exactly nonzero entry, and nothing is ever pruned
below a tolerance except through :func:`finitize_columns`.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.linalg

from .config import DEFAULT, Tolerances
from .errors import (
    LemmaViolated,
    PerturbationTooLarge,
    PropagationBoundViolated,
    Singular,
    WindowMismatch,
)
from .linalg import hermitian_power, power_norm
from .metric_space import Window, is_r_sparse, label_from_json, label_to_json
from .paths import Segment


class SparseOperator:
    """Immutable operator on ``l^2(window)``.

    Parameters
    ----------
    window : Window
    matrix : array_like, shape (n, n)
        Matrix in the standard base, rows and columns in window order.
    audit : tuple, optional
        Provenance record; :func:`compose` stores both sides of the
        propagation inequality here.
    """

    __array_priority__ = 100

    def __init__(self, window: Window, matrix, audit: tuple = ()):
        m = np.array(matrix, dtype=complex)
        if m.shape != (window.n, window.n):
            raise ValueError(f"matrix shape {m.shape} does not fit {window!r}")
        m.setflags(write=False)
        self.window = window
        self._m = m
        self.audit = tuple(audit)
        self._prop = None

    # construction
    @classmethod
    def identity(cls, window: Window) -> "SparseOperator":
        return cls(window, np.eye(window.n))

    @classmethod
    def zeros(cls, window: Window) -> "SparseOperator":
        return cls(window, np.zeros((window.n, window.n)))

    @classmethod
    def from_entries(cls, window: Window, entries: Iterable) -> "SparseOperator":
        """From ``(row_id, col_id, value)`` triples; repeated entries add up."""
        m = np.zeros((window.n, window.n), dtype=complex)
        for i, j, v in entries:
            m[i, j] += v
        return cls(window, m)

    @classmethod
    def from_label_map(cls, window: Window, entries: Mapping) -> "SparseOperator":
        """From ``{(row_label, col_label): value}``."""
        ix = window.index
        return cls.from_entries(window, ((ix[a], ix[b], v) for (a, b), v in entries.items()))

    # access
    @property
    def matrix(self) -> np.ndarray:
        return self._m

    @property
    def n(self) -> int:
        return self.window.n

    def entries(self):
        """Nonzero ``(row_id, col_id, value)`` in row-major order."""
        for i, j in np.argwhere(self._m != 0):
            yield int(i), int(j), complex(self._m[i, j])

    @property
    def nnz(self) -> int:
        return int(np.count_nonzero(self._m))

    @property
    def propagation(self) -> Fraction:
        if self._prop is None:
            self._prop = propagation(self)
        return self._prop

    def __getitem__(self, ij):
        return self._m[ij]

    def __repr__(self):
        return f"SparseOperator({self.window!r}, nnz={self.nnz}, P={self.propagation})"

    # algebra
    def __matmul__(self, other):
        return compose(self, other)

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return add(self, scale(-1, other))

    def __neg__(self):
        return scale(-1, self)

    def __mul__(self, lam):
        return scale(lam, self)

    __rmul__ = __mul__

    @property
    def H(self) -> "SparseOperator":
        return adjoint(self)

    def restrict(self, rows: Sequence[int], cols: Sequence[int] | None = None) -> np.ndarray:
        cols = rows if cols is None else cols
        return self._m[np.ix_(rows, cols)]

    # JSON
    def to_json(self, window_ref=None) -> dict:
        ref = window_ref if window_ref is not None else {
            "spec": self.window.spec.to_json(), "extent": self.window.extent}
        return {"window": ref,
                "entries": [[i, j, v.real, v.imag] for i, j, v in self.entries()]}

    @classmethod
    def from_json(cls, obj: Mapping, window: Window | None = None) -> "SparseOperator":
        if window is None:
            window = Window.from_json(obj["window"])
        return cls.from_entries(window, ((int(i), int(j), complex(re, im))
                                         for i, j, re, im in obj["entries"]))


def _same_window(F: SparseOperator, G: SparseOperator):
    if not F.window.same_points(G.window):
        raise WindowMismatch("operators live on different windows")


def propagation(F: SparseOperator) -> Fraction:
    """``max{d(x, z) : F_xz != 0}``; 0 for zero and diagonal operators."""
    mask = F.matrix != 0
    if not mask.any():
        return Fraction(0)
    return Fraction(int(F.window.dnum()[mask].max()), F.window.scale)


def compose(F: SparseOperator, G: SparseOperator) -> SparseOperator:
    """Matrix product ``F G``; checks ``P(FG) <= P(F) + P(G)``."""
    _same_window(F, G)
    out = SparseOperator(F.window, F.matrix @ G.matrix)
    lhs, rhs = out.propagation, F.propagation + G.propagation
    if lhs > rhs:
        raise PropagationBoundViolated(f"P(FG)={lhs} > P(F)+P(G)={rhs}", witness=(lhs, rhs))
    out.audit = ("compose", str(lhs), str(rhs))
    return out


def adjoint(F: SparseOperator) -> SparseOperator:
    return SparseOperator(F.window, F.matrix.conj().T)


def add(F: SparseOperator, G: SparseOperator) -> SparseOperator:
    _same_window(F, G)
    return SparseOperator(F.window, F.matrix + G.matrix)


def scale(lam: complex, F: SparseOperator) -> SparseOperator:
    return SparseOperator(F.window, lam * F.matrix)


def operator_norm(F, tol: Tolerances = DEFAULT, seed: int = 0) -> float:
    """Spectral norm by seeded power iteration on ``F* F``."""
    m = F.matrix if isinstance(F, SparseOperator) else np.asarray(F)
    return power_norm(m, tol, seed)


@dataclass(frozen=True)
class InvertibilityWitness:
    operator: SparseOperator
    sigma_min: float
    inverse: SparseOperator
    residual: float


def invert_matrix(m: np.ndarray, tol: Tolerances = DEFAULT):
    """Dense LU inverse; returns ``(inverse, sigma_min, residual)``."""
    n = m.shape[0]
    if n == 0:
        return m.copy(), float("inf"), 0.0
    with warnings.catch_warnings():
        # an exactly zero pivot is reported below as Singular
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(m, check_finite=True)
    pivots = np.abs(np.diag(lu))
    if pivots.min() < tol.pivot:
        raise Singular(f"LU pivot {pivots.min():.3e} below floor {tol.pivot:.0e}",
                       witness=int(pivots.argmin()))
    inv = scipy.linalg.lu_solve((lu, piv), np.eye(n, dtype=complex))
    norm = power_norm(m, tol)
    inv_norm = power_norm(inv, tol)
    sigma = 1.0 / inv_norm
    if sigma < tol.singular * norm:
        raise Singular(f"sigma_min {sigma:.3e} below {tol.singular:.0e} * ||F||",
                       witness=sigma)
    residual = float(np.abs(m @ inv - np.eye(n)).sum(axis=1).max())
    if residual > tol.residual * max(norm, 1.0):
        raise Singular(f"inverse residual {residual:.3e} too large", witness=residual)
    return inv, sigma, residual


def invert(F: SparseOperator, tol: Tolerances = DEFAULT) -> InvertibilityWitness:
    """Dense LU inverse with a verified residual.

    ``sigma_min`` is ``1/||F^-1||`` with the norm from power iteration on
    ``(F F*)^-1``.  Raises :class:`Singular` when a pivot falls below
    ``tol.pivot`` or ``sigma_min / ||F||`` below ``tol.singular``.
    """
    inv, sigma, res = invert_matrix(F.matrix, tol)
    return InvertibilityWitness(F, sigma, SparseOperator(F.window, inv), res)


def sigma_min(F, tol: Tolerances = DEFAULT) -> float:
    m = F.matrix if isinstance(F, SparseOperator) else np.asarray(F)
    return invert_matrix(m, tol)[1]


# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CornerSplit:
    F1: SparseOperator           # compression to X \ Y (on a subwindow)
    D: dict                      # label in Y -> diagonal entry
    rest_ids: tuple
    sparse_ids: tuple

    def reassemble(self) -> np.ndarray:
        n = len(self.rest_ids) + len(self.sparse_ids)
        m = np.zeros((n, n), dtype=complex)
        m[np.ix_(self.rest_ids, self.rest_ids)] = self.F1.matrix
        win = self.F1.window.parent_window
        for lab, v in self.D.items():
            i = win.index[lab]
            m[i, i] = v
        return m


def sparse_corner_decompose(F: SparseOperator, Y: Iterable, r) -> CornerSplit:
    """Split ``F = diag(F1, D)`` along ``l^2(X \\ Y) + l^2(Y)``.

    Requires ``P(F) < r`` and ``Y`` r-sparse; then every entry touching ``Y``
    off the diagonal must vanish.  Any that does not is reported through
    :class:`LemmaViolated` with the entry as witness.
    """
    win = F.window
    Y = list(Y)
    if not F.propagation < r:
        raise ValueError(f"propagation {F.propagation} is not < r={r}")
    check = is_r_sparse(win.spec, Y, r, win)
    if not check:
        raise ValueError(f"Y is not {r}-sparse; witness {check.witness}")
    yids = sorted(win.ids(Y))
    ymask = np.zeros(win.n, dtype=bool)
    ymask[yids] = True
    m = F.matrix
    cross = np.argwhere((m != 0) & (ymask[:, None] ^ ymask[None, :]))
    if cross.size:
        i, j = cross[0]
        raise LemmaViolated("cross entry between X\\Y and Y",
                            witness=(win.labels[i], win.labels[j], complex(m[i, j])))
    yy = m[np.ix_(yids, yids)]
    off = np.argwhere((yy != 0) & ~np.eye(len(yids), dtype=bool))
    if off.size:
        a, b = off[0]
        raise LemmaViolated("off-diagonal entry inside Y",
                            witness=(win.labels[yids[a]], win.labels[yids[b]]))
    rest = [i for i in range(win.n) if not ymask[i]]
    sub = win.subwindow(rest)
    sub.parent_window = win
    F1 = SparseOperator(sub, m[np.ix_(rest, rest)])
    D = {win.labels[i]: complex(m[i, i]) for i in yids}
    return CornerSplit(F1, D, tuple(rest), tuple(yids))


def unitary_retraction(F: SparseOperator, t: float, tol: Tolerances = DEFAULT) -> SparseOperator:
    """``((1 - t) Id + t (F F*)^{-1/2}) F``: ``t = 0`` gives ``F``, ``t = 1`` its
    unitary polar factor.  The inverse square root comes from Jacobi."""
    if not 0 <= t <= 1:
        raise ValueError("t must lie in [0, 1]")
    invert(F, tol)
    if t == 0:
        return F
    m = F.matrix
    root = hermitian_power(m @ m.conj().T, -0.5, tol)
    n = F.n
    return SparseOperator(F.window, ((1 - t) * np.eye(n) + t * root) @ m)


@dataclass
class FinitizeResult:
    F_fin: SparseOperator
    segment: Segment
    dropped_norm: float
    dropped: int = 0
    notes: dict = field(default_factory=dict)


def finitize_columns(F: SparseOperator, budget: int | None = None, drop_below: float = 0.0,
                     sigma: float | None = None, tol: Tolerances = DEFAULT) -> FinitizeResult:
    """Keep in each column the diagonal entry plus the ``budget`` largest
    off-diagonal entries (ties by row order), and drop entries of modulus
    ``<= drop_below``.

    Returns the truncated operator with the linear segment
    ``(1 - s) F + s F_fin``.  Raises :class:`PerturbationTooLarge` unless
    ``||F - F_fin|| < sigma_min(F)``, which keeps the segment invertible.
    """
    m = F.matrix
    keep = np.abs(m) > drop_below
    if budget is not None:
        n = F.n
        for j in range(n):
            rows = [i for i in np.flatnonzero(keep[:, j]) if i != j]
            if len(rows) > budget:
                rows.sort(key=lambda i: (-abs(m[i, j]), i))
                for i in rows[budget:]:
                    keep[i, j] = False
    fin = np.where(keep, m, 0)
    F_fin = SparseOperator(F.window, fin)
    diff = m - fin
    dropped = int(np.count_nonzero(diff))
    dnorm = power_norm(diff, tol) if dropped else 0.0
    if dropped:
        if sigma is None:
            try:
                sigma = sigma_min(F, tol)
            except Singular as exc:
                raise PerturbationTooLarge("F itself is not invertible") from exc
        if not dnorm < sigma:
            raise PerturbationTooLarge(f"||F - F_fin|| = {dnorm:.3e} >= sigma_min {sigma:.3e}",
                                       witness=dnorm)
    if F_fin.propagation > F.propagation:
        raise PropagationBoundViolated("finitization increased propagation")
    seg = Segment.linear("finitize", F, F_fin, bound=F.propagation)
    return FinitizeResult(F_fin, seg, dnorm, dropped)


# ---------------------------------------------------------------------------
# generators used by tests, the CLI and the demos

def shift_operator(window: Window, step=1, axis: int | None = None) -> SparseOperator:
    """Truncated shift ``delta_x -> delta_{x + step}`` on integer-labelled windows.

    For tuple labels the shift acts on coordinate ``axis`` (default 0).
    Columns whose image leaves the window are zero.
    """
    ents = []
    for j, lab in enumerate(window.labels):
        if isinstance(lab, tuple):
            a = 0 if axis is None else axis
            tgt = tuple(x + step if k == a else x for k, x in enumerate(lab))
        else:
            tgt = lab + step
        i = window.index.get(tgt)
        if i is not None:
            ents.append((i, j, 1.0))
    return SparseOperator.from_entries(window, ents)


def random_band(window: Window, p, rng: np.random.Generator, density: float = 0.5,
                diag_shift: float = 0.0) -> SparseOperator:
    """Random complex operator with entries only where ``d(x, z) <= p``."""
    n = window.n
    allowed = window.dnum() <= window.radius_num(p)
    keep = allowed & (rng.random((n, n)) < density)
    m = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) * keep
    if diag_shift:
        m = m + diag_shift * np.eye(n)
    return SparseOperator(window, m)


def random_block_unitary(window: Window, p, rng: np.random.Generator, layers: int = 1
                         ) -> SparseOperator:
    """Unitary of propagation ``<= p``.

    A product of ``layers`` layers, each a direct sum of random 2x2
    unitaries on greedily chosen disjoint pairs at distance ``<= p/layers``,
    times random phases.
    """
    n = window.n
    D = window.dnum()
    k = window.radius_num(Fraction(p) / layers)
    U = np.diag(np.exp(2j * np.pi * rng.random(n)))
    for _ in range(layers):
        order = rng.permutation(n)
        used = np.zeros(n, dtype=bool)
        L = np.eye(n, dtype=complex)
        for a in order:
            if used[a]:
                continue
            cand = np.flatnonzero((D[a] <= k) & ~used)
            cand = cand[cand != a]
            if cand.size == 0:
                continue
            b = int(cand[rng.integers(cand.size)])
            used[a] = used[b] = True
            q, _ = np.linalg.qr(rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2)))
            L[np.ix_([a, b], [a, b])] = q
        U = L @ U
    return SparseOperator(window, U)


def permutation_operator(window: Window, mapping: Mapping, phases: Mapping | None = None
                         ) -> SparseOperator:
    """``delta_x -> phase(x) delta_{mapping[x]}`` for labels in ``mapping``,
    identity elsewhere."""
    m = np.eye(window.n, dtype=complex)
    for x, y in mapping.items():
        j, i = window.index[x], window.index[y]
        m[:, j] = 0
        m[i, j] = 1 if phases is None else phases.get(x, 1)
    return SparseOperator(window, m)


def labels_json(window: Window) -> list:
    return [label_to_json(x) for x in window.labels]


def labels_from_json(obj) -> list:
    return [label_from_json(x) for x in obj]
