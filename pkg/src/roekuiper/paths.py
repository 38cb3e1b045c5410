"""Parametrized operator segments and their sampled certificates.

A :class:`Segment` is an evaluator ``t -> matrix`` over ``[t0, t1]`` with a
declared propagation bound.  A :class:`HomotopyPath` chains segments and
:meth:`HomotopyPath.certify` samples each one, recording the smallest
singular value, the observed propagation and the junction mismatch.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np

from .config import DEFAULT, Tolerances


def smallest_singular_value(m: np.ndarray) -> float:
    """``sigma_min`` of a dense matrix (LAPACK SVD)."""
    if m.size == 0:
        return float("inf")
    return float(np.linalg.svd(m, compute_uv=False)[-1])


def observed_propagation(window, m: np.ndarray) -> Fraction:
    mask = m != 0
    if not mask.any():
        return Fraction(0)
    return Fraction(int(window.dnum()[mask].max()), window.scale)


def _matrix(x) -> np.ndarray:
    return x.matrix if hasattr(x, "matrix") else np.asarray(x)


@dataclass
class Segment:
    """One piece of a homotopy.

    Parameters
    ----------
    stage : str
        Pipeline stage name (``"zero_out"``, ``"whirl_up"``, ...).
    kind : str
        One of ``linear``, ``rotation``, ``triangular``, ``whirl``.
    t0, t1 : float
        Parameter range; sampling runs from ``t0`` to ``t1``.
    evaluator : callable
        ``t -> ndarray`` of shape ``(n, n)``.
    bound : Fraction
        Declared propagation bound for every sample.
    """

    stage: str
    kind: str
    t0: float
    t1: float
    evaluator: Callable[[float], np.ndarray]
    bound: Fraction
    window: object
    meta: dict = field(default_factory=dict)

    def at(self, t: float) -> np.ndarray:
        return self.evaluator(t)

    @property
    def start(self) -> np.ndarray:
        return self.evaluator(self.t0)

    @property
    def end(self) -> np.ndarray:
        return self.evaluator(self.t1)

    def grid(self, samples: int) -> np.ndarray:
        return np.linspace(self.t0, self.t1, max(samples, 2))

    @classmethod
    def linear(cls, stage: str, A, B, bound=None, window=None) -> "Segment":
        """``s -> (1 - s) A + s B`` on ``[0, 1]``; zero where both are zero."""
        a, b = _matrix(A), _matrix(B)
        window = window if window is not None else A.window
        if bound is None:
            bound = max(observed_propagation(window, a), observed_propagation(window, b))

        def ev(s, a=a, b=b):
            if s == 0:
                return a.copy()
            if s == 1:
                return b.copy()
            return (1 - s) * a + s * b
        return cls(stage, "linear", 0.0, 1.0, ev, Fraction(bound), window)

    @classmethod
    def constant(cls, stage: str, A, window=None) -> "Segment":
        return cls.linear(stage, A, A, window=window)


@dataclass
class StageRecord:
    stage: str
    kind: str
    t0: float
    t1: float
    samples: int
    bound_declared: Fraction
    bound_observed: Fraction
    min_sigma: float
    worst_t: float
    endpoint_residual: float
    margin_variation: float
    meta: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.bound_observed <= self.bound_declared and self.min_sigma > 0

    def to_json(self) -> dict:
        out = {
            "stage": self.stage, "kind": self.kind, "t0": self.t0, "t1": self.t1,
            "samples": self.samples, "bound_declared": str(self.bound_declared),
            "bound_observed": str(self.bound_observed), "min_sigma": self.min_sigma,
            "worst_t": self.worst_t, "endpoint_residual": self.endpoint_residual,
            "margin_variation": self.margin_variation,
        }
        if self.meta:
            out["meta"] = self.meta
        return out


@dataclass
class Certificate:
    stages: list
    junction_tolerance: float
    sigma_floor: float

    @property
    def min_sigma(self) -> float:
        return min((s.min_sigma for s in self.stages), default=float("inf"))

    @property
    def max_junction(self) -> float:
        return max((s.endpoint_residual for s in self.stages), default=0.0)

    @property
    def ok(self) -> bool:
        return (all(s.ok for s in self.stages) and self.min_sigma > self.sigma_floor
                and self.max_junction <= self.junction_tolerance)

    def stage(self, name: str) -> list:
        return [s for s in self.stages if s.stage == name]

    def to_json(self) -> dict:
        return {"stages": [s.to_json() for s in self.stages], "min_sigma": self.min_sigma,
                "max_junction": self.max_junction, "ok": self.ok}


class HomotopyPath:
    """Ordered list of segments; consecutive segments must meet."""

    def __init__(self, segments=()):
        self.segments = list(segments)

    def __len__(self):
        return len(self.segments)

    def __iter__(self):
        return iter(self.segments)

    def append(self, seg: Segment):
        self.segments.append(seg)

    def extend(self, segs):
        self.segments.extend(segs)

    @property
    def start(self) -> np.ndarray:
        return self.segments[0].start

    @property
    def end(self) -> np.ndarray:
        return self.segments[-1].end

    def junctions(self) -> list[float]:
        """Max-entry mismatch at each junction (first entry is 0)."""
        out = [0.0]
        for a, b in zip(self.segments, self.segments[1:]):
            out.append(float(np.abs(a.end - b.start).max()))
        return out

    def sample_at(self, stage_index: int, t: float) -> np.ndarray:
        return self.segments[stage_index].at(t)

    def certify(self, samples: int = 11, tol: Tolerances = DEFAULT, refine: bool = False,
                sigma_floor: float = 0.0, max_depth: int = 3) -> Certificate:
        """Sample every segment; see :class:`StageRecord` for the fields.

        With ``refine`` a sub-interval is bisected (up to ``max_depth``
        times) when the margin changes by more than 20% across it.
        """
        records = []
        junction = self.junctions()
        for seg, jres in zip(self.segments, junction):
            ts, sig, prop = _sample_segment(seg, samples, refine, max_depth)
            k = int(np.argmin(sig))
            var = float((max(sig) - min(sig)) / max(max(sig), 1e-300))
            records.append(StageRecord(seg.stage, seg.kind, seg.t0, seg.t1, len(ts),
                                       seg.bound, prop, float(sig[k]), float(ts[k]), jres, var,
                                       dict(seg.meta)))
        return Certificate(records, tol.junction, sigma_floor)


def _sample_segment(seg: Segment, samples: int, refine: bool, max_depth: int):
    cache = {}

    def probe(t):
        if t not in cache:
            m = seg.at(t)
            cache[t] = (smallest_singular_value(m), observed_propagation(seg.window, m))
        return cache[t]

    ts = list(seg.grid(samples))
    for t in ts:
        probe(t)
    if refine:
        for _ in range(max_depth):
            new = []
            for a, b in zip(ts, ts[1:]):
                sa, sb = probe(a)[0], probe(b)[0]
                if abs(sa - sb) > 0.2 * max(sa, sb):
                    new.append((a + b) / 2)
            if not new:
                break
            for t in new:
                probe(t)
            ts = sorted(set(ts) | set(new), key=lambda t: (t - seg.t0) / ((seg.t1 - seg.t0) or 1))
    sig = [cache[t][0] for t in ts]
    prop = max(cache[t][1] for t in ts)
    return ts, sig, prop
