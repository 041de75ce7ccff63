"""Dense linear-algebra kernels: Jacobi SVD, pivoted LU solves and vector norms.

Matrices are plain ``numpy.ndarray`` objects; nothing here mutates its inputs.
"""

from __future__ import annotations

import warnings
from functools import lru_cache
from typing import NamedTuple

import numpy as np
import scipy.linalg

from podhta.errors import SingularMatrixError, SVDConvergenceError

MAX_SWEEPS = 30
_EPS = np.finfo(float).eps
_NEGLIGIBLE = 1e-140


class SvdResult(NamedTuple):
    left: np.ndarray
    singular_values: np.ndarray
    right: np.ndarray


@lru_cache(maxsize=64)
def _round_robin(n):
    """Disjoint column pairings covering every pair once (circle method).

    ``n`` is padded to even; pairs touching the padding slot are dropped.
    """
    size = n + (n % 2)
    players = list(range(size))
    rounds = []
    for _ in range(size - 1):
        p, q = [], []
        for k in range(size // 2):
            a, b = players[k], players[size - 1 - k]
            if a < n and b < n:
                p.append(min(a, b))
                q.append(max(a, b))
        rounds.append((np.array(p, dtype=int), np.array(q, dtype=int)))
        players = [players[0]] + [players[-1]] + players[1:-1]
    return tuple(rounds)


def _jacobi_columns(a):
    """One-sided (Hestenes) Jacobi: orthogonalise the columns of ``a`` in place.

    Returns the accumulated right rotation ``v`` with ``a_in @ v = a_out``.
    """
    m, n = a.shape
    v = np.eye(n)
    tol = max(m, n) * _EPS
    # columns at round-off size relative to ||a||_F carry no direction; rotating them never converges
    floor = (_EPS * np.linalg.norm(a)) ** 2
    rounds = _round_robin(n)
    for sweep in range(MAX_SWEEPS):
        worst = 0.0
        for p, q in rounds:
            ap, aq = a[:, p], a[:, q]
            alpha = np.einsum("ij,ij->j", ap, ap)
            beta = np.einsum("ij,ij->j", aq, aq)
            gamma = np.einsum("ij,ij->j", ap, aq)
            denom = np.sqrt(alpha) * np.sqrt(beta)
            with np.errstate(divide="ignore", invalid="ignore"):
                cosine = np.where((alpha > floor) & (beta > floor), np.abs(gamma) / denom, 0.0)
            worst = max(worst, float(cosine.max(initial=0.0)))
            act = cosine > tol
            if not act.any():
                continue
            pa, qa = p[act], q[act]
            zeta = (beta[act] - alpha[act]) / (2.0 * gamma[act])
            t = np.where(zeta >= 0.0, 1.0, -1.0) / (np.abs(zeta) + np.hypot(1.0, zeta))
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = c * t
            for mat in (a, v):
                xp, xq = mat[:, pa], mat[:, qa]
                mat[:, pa] = c * xp - s * xq
                mat[:, qa] = s * xp + c * xq
        if worst <= tol:
            return v
    raise SVDConvergenceError(MAX_SWEEPS, worst)


def _complete_basis(u, keep):
    """Replace the columns of ``u`` not flagged in ``keep`` by an orthonormal completion."""
    m = u.shape[0]
    basis = [u[:, j] for j in range(u.shape[1]) if keep[j]]
    fill = []
    for e in range(m):
        if len(basis) + len(fill) == u.shape[1]:
            break
        x = np.zeros(m)
        x[e] = 1.0
        for _ in range(2):
            for b in basis + fill:
                x -= (b @ x) * b
        nrm = np.linalg.norm(x)
        if nrm > 0.5:
            fill.append(x / nrm)
    out = u.copy()
    out[:, ~keep] = np.column_stack(fill)
    return out


def _fix_signs(u, v):
    for j in range(u.shape[1]):
        col = u[:, j]
        scale = np.abs(col).max()
        if scale == 0.0:
            continue
        first = np.flatnonzero(np.abs(col) > 1e-10 * scale)[0]
        if col[first] < 0.0:
            u[:, j] = -col
            v[:, j] = -v[:, j]


def svd(m):
    """Thin SVD ``m = left @ diag(s) @ right.T`` via one-sided Jacobi.

    Singular values come out nonincreasing; each left vector has its first
    nonzero entry positive. Raises :class:`SVDConvergenceError` after
    ``MAX_SWEEPS`` sweeps without convergence.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise ValueError(f"svd needs a nonempty 2-D matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("svd input contains non-finite entries")
    if m.shape[1] > m.shape[0]:
        res = svd(m.T)
        return SvdResult(res.right, res.singular_values, res.left)

    scale = np.abs(m).max()
    if scale == 0.0:
        scale = 1.0
    # unit scaling keeps the Gram products away from under/overflow
    a = np.array(m / scale, dtype=float, order="F")
    v = _jacobi_columns(a)
    sigma = np.linalg.norm(a, axis=0)
    order = np.argsort(-sigma, kind="stable")
    sigma, a, v = sigma[order], a[:, order], v[:, order]
    # columns this small may have skipped rotations because alpha * beta underflowed
    keep = sigma > _NEGLIGIBLE * sigma[0]
    u = np.zeros_like(a)
    u[:, keep] = a[:, keep] / sigma[keep]
    # round-off sized columns were exempt from rotation; trust them only if they came out orthogonal
    floor = _EPS * np.linalg.norm(sigma)
    ortho_tol = 10 * max(a.shape) * _EPS
    for j in np.flatnonzero(keep & (sigma <= floor)):
        keep[j] = False
        if np.abs(u[:, keep].T @ u[:, j]).max(initial=0.0) <= ortho_tol:
            keep[j] = True
    if not keep.all():
        u = _complete_basis(u, keep)
        sigma = np.where(keep, sigma, 0.0)
    _fix_signs(u, v)
    return SvdResult(u, sigma * scale, v)


def numerical_rank(singular_values, rtol):
    """Count of singular values above ``rtol * s[0]``."""
    s = np.asarray(singular_values)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s > rtol * s[0]))


def solve_linear(a, b):
    """Solve ``a x = b`` by LU with partial pivoting.

    ``b`` may be a vector or a matrix of right-hand sides. A pivot below
    ``n * eps * max|a|`` raises :class:`SingularMatrixError` with its index.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    n = a.shape[0]
    if a.ndim != 2 or a.shape[1] != n:
        raise ValueError(f"solve_linear needs a square matrix, got {a.shape}")
    if b.shape[0] != n:
        raise ValueError(f"right-hand side length {b.shape[0]} does not match {n}")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(a, check_finite=False)
    diag = np.abs(np.diag(lu))
    threshold = n * _EPS * max(np.abs(a).max(), np.finfo(float).tiny)
    bad = np.flatnonzero(~(diag > threshold))
    if bad.size:
        k = int(bad[0])
        raise SingularMatrixError(k, float(diag[k]))
    return scipy.linalg.lu_solve((lu, piv), b, check_finite=False)


def norms(v):
    """Return ``(l2, linf)`` of a nonempty vector."""
    v = np.asarray(v, dtype=float).ravel()
    if v.size == 0:
        raise ValueError("norms of an empty vector")
    return float(np.linalg.norm(v)), float(np.abs(v).max())
