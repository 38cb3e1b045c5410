"""Dense kernels: cyclic Jacobi for Hermitian matrices and power iteration.

These work on plain ``numpy`` arrays; :mod:`roekuiper.roe_operator` wraps
them for windowed operators.
"""

from __future__ import annotations

import numpy as np

from .config import DEFAULT, Tolerances


def _round_robin(n: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Tournament ordering: ``n - 1`` rounds of disjoint pairs covering all pairs."""
    m = n + (n % 2)
    players = list(range(m))
    rounds = []
    for _ in range(m - 1):
        p = np.array(players[: m // 2])
        q = np.array(players[m // 2:][::-1])
        keep = (p < n) & (q < n)
        lo, hi = np.minimum(p, q)[keep], np.maximum(p, q)[keep]
        rounds.append((lo, hi))
        players = [players[0]] + [players[-1]] + players[1:-1]
    return rounds


def jacobi_eigh(A: np.ndarray, tol: Tolerances = DEFAULT) -> tuple[np.ndarray, np.ndarray, int]:
    """Eigen-decomposition of a Hermitian matrix by cyclic Jacobi rotations.

    Each sweep runs a round-robin schedule so the ``n/2`` rotations of one
    round act on disjoint index pairs and are applied together.  Stops when
    the off-diagonal Frobenius norm falls below ``tol.eigen * ||A||_F`` or
    after ``tol.max_sweeps`` sweeps.

    Returns ``(w, V, sweeps)`` with ``A = V diag(w) V*``, ``w`` ascending.
    """
    A = np.array(A, dtype=complex)
    n = A.shape[0]
    if A.shape != (n, n):
        raise ValueError("matrix must be square")
    if not np.allclose(A, A.conj().T, atol=1e-12 * max(1.0, np.abs(A).max())):
        raise ValueError("matrix must be Hermitian")
    A = (A + A.conj().T) / 2
    V = np.eye(n, dtype=complex)
    if n < 2:
        return A.diagonal().real.copy(), V, 0
    scale = np.linalg.norm(A)
    if scale == 0:
        return np.zeros(n), V, 0
    rounds = _round_robin(n)
    sweeps = 0
    for sweeps in range(1, tol.max_sweeps + 1):
        for p, q in rounds:
            g = A[p, q]
            mag = np.abs(g)
            act = mag > tol.eigen * scale * 1e-3
            if not act.any():
                continue
            p, q, g, mag = p[act], q[act], g[act], mag[act]
            phase = g / mag
            theta = 0.5 * np.arctan2(2 * mag, (A[q, q] - A[p, p]).real)
            c, s = np.cos(theta), np.sin(theta)
            # U = diag(1, conj(phase)) @ [[c, s], [-s, c]] on each (p, q)
            u00, u01 = c, s
            u10, u11 = -s * phase.conj(), c * phase.conj()
            Ap, Aq = A[:, p].copy(), A[:, q].copy()
            A[:, p] = Ap * u00 + Aq * u10
            A[:, q] = Ap * u01 + Aq * u11
            Ap, Aq = A[p, :].copy(), A[q, :].copy()
            A[p, :] = np.conj(u00)[:, None] * Ap + np.conj(u10)[:, None] * Aq
            A[q, :] = np.conj(u01)[:, None] * Ap + np.conj(u11)[:, None] * Aq
            A[p, q] = 0
            A[q, p] = 0
            Vp, Vq = V[:, p].copy(), V[:, q].copy()
            V[:, p] = Vp * u00 + Vq * u10
            V[:, q] = Vp * u01 + Vq * u11
        off = np.linalg.norm(A - np.diag(A.diagonal()))
        if off <= tol.eigen * scale:
            break
    w = A.diagonal().real
    order = np.argsort(w, kind="stable")
    return w[order], V[:, order], sweeps


def hermitian_power(A: np.ndarray, power: float, tol: Tolerances = DEFAULT) -> np.ndarray:
    """``A**power`` for Hermitian positive definite ``A`` via :func:`jacobi_eigh`."""
    w, V, _ = jacobi_eigh(A, tol)
    if w.min() <= 0:
        raise np.linalg.LinAlgError("matrix is not positive definite")
    return (V * w ** power) @ V.conj().T


def power_norm(F: np.ndarray, tol: Tolerances = DEFAULT, seed: int = 0) -> float:
    """Spectral norm of ``F`` by power iteration on ``F* F``.

    Runs until the eigen-residual ``||F*F v - lam v||`` drops below
    ``tol.power_residual * lam``; past ``tol.power_min_iter`` iterations it
    also stops once the Rayleigh quotient is stationary to machine
    precision.  The start vector is seeded, so results are reproducible.
    """
    F = np.asarray(F)
    if F.size == 0 or not np.any(F):
        return 0.0
    n = F.shape[1]
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    v /= np.linalg.norm(v)
    FH = F.conj().T
    lam = 0.0
    for k in range(1, tol.power_max_iter + 1):
        w = FH @ (F @ v)
        new = float(np.vdot(v, w).real)
        res = np.linalg.norm(w - new * v)
        nw = np.linalg.norm(w)
        if nw == 0:
            return 0.0
        stationary = abs(new - lam) <= 4 * np.finfo(float).eps * max(new, 1e-300)
        lam = new
        v = w / nw
        if res <= tol.power_residual * max(lam, 1e-300):
            break
        if k >= tol.power_min_iter and stationary:
            break
    return float(np.sqrt(max(lam, 0.0)))


def dense_singular_values(F: np.ndarray, tol: Tolerances = DEFAULT) -> np.ndarray:
    """Singular values (descending) from the Jacobi eigenvalues of ``F* F``."""
    F = np.asarray(F, dtype=complex)
    w, _, _ = jacobi_eigh(F.conj().T @ F, tol)
    return np.sqrt(np.clip(w, 0, None))[::-1]
