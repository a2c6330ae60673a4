"""Minimal dense linear algebra: products, norms, symmetric eigendecomposition.

Everything operates on 2-D float64 ndarrays. The eigensolver is a cyclic
Jacobi iteration, chosen for its robustness and its accuracy on the small
positive-semidefinite Gram matrices this package decomposes: Jacobi resolves
near-zero eigenvalues of well-conditioned-plus-null-space spectra to machine
precision, which the null-space construction depends on.
"""

from __future__ import annotations

import numpy as np

from .exceptions import ConvergenceError, DomainError, ShapeError
from .validation import as_matrix, check_conformable

SYMMETRY_RTOL = 1e-10
OFFDIAG_STOP = 1e-12  # relative to the Frobenius norm of the input
MAX_SWEEPS = 100


def matmul(a, b) -> np.ndarray:
    """Matrix product with shape and finiteness checks."""
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    check_conformable(a, b, "a", "b")
    out = a @ b
    if not np.all(np.isfinite(out)):
        raise DomainError("matrix product overflowed to non-finite values")
    return out


def frobenius_norm(a) -> float:
    """Square root of the sum of squared entries."""
    a = as_matrix(a, "a")
    return float(np.sqrt(np.sum(a * a)))


def _off_norm(a: np.ndarray) -> float:
    return float(np.sqrt(2.0 * np.sum(np.tril(a, -1) ** 2)))


def sym_eigh(s, max_sweeps: int = MAX_SWEEPS) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns (eigvals, eigvecs) with eigenvalues sorted descending and
    eigenvector columns aligned, so s == eigvecs @ diag(eigvals) @ eigvecs.T
    up to roundoff. Each eigenvector's largest-magnitude entry is made
    nonnegative so the output is deterministic up to eigenvalue ties.
    """
    s = as_matrix(s, "s")
    n, m = s.shape
    if n != m:
        raise ShapeError(f"sym_eigh needs a square matrix, got shape {s.shape}")
    fro = float(np.linalg.norm(s))
    if float(np.linalg.norm(s - s.T)) > SYMMETRY_RTOL * max(1.0, fro):
        raise ShapeError("sym_eigh input is not symmetric within tolerance")

    a = 0.5 * (s + s.T)  # exact symmetry before iterating
    v = np.eye(n)
    if fro == 0.0 or n == 1:
        return _sorted(np.diag(a).copy(), v)

    thresh = OFFDIAG_STOP * fro
    skip = 0.01 * thresh / (n * n)
    for _ in range(max_sweeps):
        if _off_norm(a) <= thresh:
            return _sorted(np.diag(a).copy(), v)
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= skip:
                    continue
                diff = a[q, q] - a[p, p]
                if abs(apq) < 1e-36 * abs(diff):  # avoid overflow in theta**2
                    t = apq / diff
                else:
                    theta = diff / (2.0 * apq)
                    if theta >= 0.0:
                        t = 1.0 / (theta + np.sqrt(theta * theta + 1.0))
                    else:
                        t = -1.0 / (-theta + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                sn = t * c
                for mat in (a,):
                    col_p = mat[:, p].copy()
                    col_q = mat[:, q].copy()
                    mat[:, p] = c * col_p - sn * col_q
                    mat[:, q] = sn * col_p + c * col_q
                    row_p = mat[p, :].copy()
                    row_q = mat[q, :].copy()
                    mat[p, :] = c * row_p - sn * row_q
                    mat[q, :] = sn * row_p + c * row_q
                col_p = v[:, p].copy()
                col_q = v[:, q].copy()
                v[:, p] = c * col_p - sn * col_q
                v[:, q] = sn * col_p + c * col_q
    if _off_norm(a) <= thresh:
        return _sorted(np.diag(a).copy(), v)
    raise ConvergenceError(f"Jacobi iteration did not converge in {max_sweeps} sweeps")


def _sorted(w: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    order = np.argsort(-w, kind="stable")
    w = w[order]
    v = v[:, order]
    # sign convention: largest-magnitude entry of each column is nonnegative
    idx = np.argmax(np.abs(v), axis=0)
    signs = np.where(v[idx, np.arange(v.shape[1])] < 0.0, -1.0, 1.0)
    return w, v * signs
