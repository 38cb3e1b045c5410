"""Numerical tolerances shared by every module.

All thresholds live here so a run can override them in one place
(the command line exposes them as ``--tol-<name>``).
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace


@dataclass(frozen=True)
class Tolerances:
    residual: float = 1e-8        # ||F F^-1 - Id|| relative to ||F||
    eigen: float = 1e-12          # Jacobi off-diagonal threshold
    norm: float = 1e-6            # relative accuracy of operator_norm
    pivot: float = 1e-12          # absolute LU pivot floor
    singular: float = 1e-9        # sigma_min / ||F|| below this counts as singular
    rank: float = 1e-8            # numerical rank threshold for index computations
    gray: float = 1e-4            # singular values in (rank, gray) are not Fredholm evidence
    unitary: float = 1e-10        # ||U U* - Id|| for explicit rotation blocks
    junction: float = 1e-10       # segment endpoint agreement
    endpoint: float = 1e-8        # whirl / rotation endpoint targets
    final: float = 1e-6           # contraction endpoint vs Id on the interior
    triangular: float = 1e-8      # block-triangularity after rotations
    max_sweeps: int = 30          # Jacobi sweeps
    power_min_iter: int = 200
    power_max_iter: int = 20000
    power_residual: float = 1e-12

    def override(self, **kw) -> "Tolerances":
        known = {f.name for f in fields(self)}
        bad = set(kw) - known
        if bad:
            raise KeyError(f"unknown tolerance(s): {sorted(bad)}")
        return replace(self, **kw)


DEFAULT = Tolerances()
