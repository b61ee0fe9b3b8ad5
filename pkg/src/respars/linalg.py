"""Dense symmetric eigensolver, Laplacian pseudo-inverse and a CG Laplacian solver."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components as _cc

from .errors import ConvergenceError, InconsistentRHSError, NotSymmetricError

ZERO_EIG_RTOL = 1e-9
JACOBI_MAX_N = 200


@dataclass(frozen=True)
class SymEig:
    values: np.ndarray  # ascending
    vectors: np.ndarray  # columns orthonormal


def check_symmetric(m, rtol=1e-12) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise NotSymmetricError(f"expected a square matrix, got shape {m.shape}")
    scale = np.abs(m).max() if m.size else 0.0
    if m.size and np.abs(m - m.T).max() > rtol * scale:
        raise NotSymmetricError("matrix is not symmetric")
    return m


def _round_robin(m):
    """Pairings of ``range(m)`` (m even) such that each round is a perfect matching
    and every pair appears exactly once over ``m - 1`` rounds (circle method)."""
    others = list(range(1, m))
    rounds = []
    for _ in range(m - 1):
        ring = [0] + others
        p = np.array(ring[: m // 2])
        q = np.array(ring[m // 2:][::-1])
        rounds.append((np.minimum(p, q), np.maximum(p, q)))
        others = others[-1:] + others[:-1]
    return rounds


def jacobi_eigh(m, tol=1e-14, max_sweeps=60) -> SymEig:
    """Cyclic Jacobi with round-robin ordering.

    Each round applies ``n/2`` disjoint plane rotations at once, so a sweep
    is ``n - 1`` vectorized rounds instead of ``n(n-1)/2`` scalar ones.
    """
    a = check_symmetric(m).copy()
    n = a.shape[0]
    v = np.eye(n)
    if n <= 1:
        return SymEig(np.diag(a).copy(), v)
    size = n + (n % 2)
    rounds = _round_robin(size)
    if size != n:
        # drop pairings against the padding index
        rounds = [(p[q < n], q[q < n]) for p, q in rounds]
    fro = np.linalg.norm(a)
    if fro == 0.0:
        return SymEig(np.zeros(n), v)
    for _ in range(max_sweeps):
        off = np.linalg.norm(a - np.diag(np.diag(a)))
        if off <= tol * fro:
            break
        for p, q in rounds:
            apq = a[p, q]
            app = a[p, p]
            aqq = a[q, q]
            active = np.abs(apq) > 1e-300
            c = np.ones_like(apq)
            s = np.zeros_like(apq)
            if np.any(active):
                theta = (aqq[active] - app[active]) / (2.0 * apq[active])
                t = np.where(theta >= 0, 1.0, -1.0) / (np.abs(theta) + np.hypot(theta, 1.0))
                c[active] = 1.0 / np.sqrt(t * t + 1.0)
                s[active] = t * c[active]
            else:
                continue
            # A <- J^T A J with J[p,p]=J[q,q]=c, J[p,q]=s, J[q,p]=-s
            cp, cq = a[:, p].copy(), a[:, q].copy()
            a[:, p] = c * cp - s * cq
            a[:, q] = s * cp + c * cq
            rp, rq = a[p, :].copy(), a[q, :].copy()
            a[p, :] = c[:, None] * rp - s[:, None] * rq
            a[q, :] = s[:, None] * rp + c[:, None] * rq
            a[p, q] = 0.0
            a[q, p] = 0.0
            vp, vq = v[:, p].copy(), v[:, q].copy()
            v[:, p] = c * vp - s * vq
            v[:, q] = s * vp + c * vq
    else:
        raise ConvergenceError("Jacobi eigensolver did not converge", residual=off / fro)
    w = np.diag(a).copy()
    order = np.argsort(w, kind="stable")
    return SymEig(w[order], v[:, order])


def sym_eig(m, method="auto") -> SymEig:
    """Eigen-decomposition of a symmetric matrix, eigenvalues ascending.

    ``method`` is ``"jacobi"``, ``"lapack"`` or ``"auto"`` (Jacobi up to
    ``JACOBI_MAX_N`` rows, LAPACK beyond).
    """
    m = check_symmetric(m)
    if method == "auto":
        method = "jacobi" if m.shape[0] <= JACOBI_MAX_N else "lapack"
    if method == "jacobi":
        return jacobi_eigh(m)
    if method == "lapack":
        w, v = np.linalg.eigh(m)
        return SymEig(w, v)
    raise ValueError(f"unknown eigensolver {method!r}")


def sym_eigvals(m, method="auto") -> np.ndarray:
    return sym_eig(m, method).values


def pinv_laplacian(lap, method="auto") -> np.ndarray:
    """Moore-Penrose pseudo-inverse via the spectral decomposition.

    Eigenvalues below ``1e-9 * lambda_max`` are treated as zero.
    """
    lap = check_symmetric(lap)
    eig = sym_eig(lap, method)
    lam_max = np.abs(eig.values).max() if lap.size else 0.0
    if lam_max == 0.0:
        return np.zeros_like(lap)
    keep = np.abs(eig.values) >= ZERO_EIG_RTOL * lam_max
    vk = eig.vectors[:, keep]
    out = (vk / eig.values[keep]) @ vk.T
    return 0.5 * (out + out.T)


def spectral_norm(m, method="auto") -> float:
    vals = sym_eigvals(m, method)
    return float(np.abs(vals).max()) if len(vals) else 0.0


def _components(lap):
    pattern = sp.csr_matrix(lap) if not sp.issparse(lap) else lap.tocsr()
    count, labels = _cc(pattern, directed=False)
    return labels, count


def _project_components(x, labels, count):
    """Remove the per-component mean from each column of ``x``."""
    sizes = np.bincount(labels, minlength=count).astype(float)
    for j in range(x.shape[1]):
        means = np.bincount(labels, weights=x[:, j], minlength=count) / sizes
        x[:, j] -= means[labels]
    return x


def cg_solve_laplacian(lap, b, tol=1e-8, max_iter=None):
    """Solve ``L x = b`` for a graph Laplacian with Jacobi-preconditioned CG.

    ``b`` may be a vector or an ``n x k`` block of independent right-hand
    sides; each column runs its own CG recurrence (vectorized).  Each column
    must sum to zero on every connected component.  The returned solution
    has zero mean on every component.
    """
    lap = lap if sp.issparse(lap) else np.asarray(lap, dtype=float)
    b = np.asarray(b, dtype=float)
    vec = b.ndim == 1
    bb = b[:, None] if vec else b
    n, k = bb.shape
    if max_iter is None:
        max_iter = 10 * n
    labels, count = _components(lap)
    bnorm = np.linalg.norm(bb, axis=0)
    for j in range(k):
        sums = np.bincount(labels, weights=bb[:, j], minlength=count)
        if np.abs(sums).max(initial=0.0) > 1e-8 * max(bnorm[j], 1e-300) and bnorm[j] > 0:
            raise InconsistentRHSError("inconsistent RHS: b is not orthogonal to the null space")

    diag = np.asarray(lap.diagonal(), dtype=float)
    inv_diag = np.where(diag > 0, 1.0 / np.where(diag > 0, diag, 1.0), 1.0)
    x = np.zeros((n, k))
    r = bb.copy()
    z = inv_diag[:, None] * r
    p = z.copy()
    rz = np.einsum("ij,ij->j", r, z)
    target = tol * bnorm
    done = bnorm == 0
    res = np.zeros(k)
    it = 0
    while not np.all(done):
        if it >= max_iter:
            worst = float(np.max(res[~done] / bnorm[~done]))
            raise ConvergenceError(f"CG did not converge in {max_iter} iterations "
                                   f"(relative residual {worst:.3e})", residual=worst)
        ap = lap @ p
        pap = np.einsum("ij,ij->j", p, ap)
        safe = (~done) & (pap > 0)
        alpha = np.where(safe, rz / np.where(safe, pap, 1.0), 0.0)
        x += alpha * p
        r -= alpha * ap
        res = np.linalg.norm(r, axis=0)
        done |= res <= target
        z = inv_diag[:, None] * r
        rz_new = np.einsum("ij,ij->j", r, z)
        beta = np.where(done | (rz == 0), 0.0, rz_new / np.where(rz == 0, 1.0, rz))
        p = z + beta * p
        rz = rz_new
        it += 1
    x = _project_components(x, labels, count)
    return x[:, 0] if vec else x
