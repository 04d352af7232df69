"""Cyclic Jacobi eigensolver for symmetric matrices.

Rotations are applied in round-robin order: each round pairs every index
with exactly one other, so the n/2 rotations of a round touch disjoint
rows/columns and are applied together.
"""

from __future__ import annotations

import numpy as np


class EigenError(RuntimeError):
    pass


def _round_robin(n):
    """n - 1 rounds of n/2 disjoint index pairs covering every pair once (n even)."""
    players = list(range(n))
    rounds = []
    for _ in range(n - 1):
        p = np.array([players[i] for i in range(n // 2)])
        q = np.array([players[n - 1 - i] for i in range(n // 2)])
        rounds.append((np.minimum(p, q), np.maximum(p, q)))
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


def jacobi_eigh(matrix, tol=1e-10, max_sweeps=100):
    """Eigen-decompose a symmetric matrix.

    Returns ``(values, vectors)`` with eigenvalues in descending order and
    eigenvectors as columns.  Stops once the off-diagonal Frobenius norm is
    below ``tol * ||matrix||_F``.
    """
    a = np.array(matrix, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    n = a.shape[0]
    if n == 0:
        return np.zeros(0), np.zeros((0, 0))
    if not np.allclose(a, a.T, rtol=1e-10, atol=0):
        raise ValueError("matrix is not symmetric")
    a = 0.5 * (a + a.T)
    scale = np.linalg.norm(a)
    m = n + (n % 2)
    if m != n:
        # decoupled dummy index; its rotations are all identities
        a = np.pad(a, ((0, 1), (0, 1)))
    v = np.eye(m)
    rounds = _round_robin(m) if m > 1 else []
    threshold = tol * scale

    off_mask = ~np.eye(m, dtype=bool)

    def off_norm(x):
        return np.linalg.norm(x[off_mask])

    for _ in range(max_sweeps):
        if off_norm(a) <= threshold:
            break
        for p, q in rounds:
            apq = a[p, q]
            app = a[p, p]
            aqq = a[q, q]
            nz = apq != 0
            with np.errstate(over="ignore"):
                theta = np.where(nz, (aqq - app) / np.where(nz, 2.0 * apq, 1.0), 0.0)
            t = np.where(theta >= 0, 1.0, -1.0) / (np.abs(theta) + np.hypot(1.0, theta))
            t = np.where(nz, t, 0.0)
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = t * c
            # columns: A <- A J
            ap = a[:, p]
            aq = a[:, q]
            a[:, p] = c * ap - s * aq
            a[:, q] = s * ap + c * aq
            # rows: A <- J^T A
            ap = a[p, :]
            aq = a[q, :]
            a[p, :] = c[:, None] * ap - s[:, None] * aq
            a[q, :] = s[:, None] * ap + c[:, None] * aq
            a[p, q] = 0.0
            a[q, p] = 0.0
            vp = v[:, p]
            vq = v[:, q]
            v[:, p] = c * vp - s * vq
            v[:, q] = s * vp + c * vq
    else:
        if off_norm(a) > threshold:
            raise EigenError(f"Jacobi did not converge in {max_sweeps} sweeps")
    values = np.diag(a)[:n].copy()
    vectors = v[:n, :n].copy()
    order = np.argsort(-values, kind="stable")
    return values[order], vectors[:, order]
