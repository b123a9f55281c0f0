"""Symmetric eigenvalue solver: cyclic Jacobi rotations.

Small-matrix substrate for the spectral response-diversity score. Sweeps
annihilate every off-diagonal pair (p, q) in turn until the off-diagonal
Frobenius norm drops below OFF_DIAGONAL_TOL, then the diagonal holds the
eigenvalues.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import NumericalError, ValidationError

SYMMETRY_TOL = 1e-9
OFF_DIAGONAL_TOL = 1e-10
MAX_SWEEPS = 100


def _off_diagonal_norm(a: np.ndarray) -> float:
    off = a - np.diag(np.diag(a))
    return float(np.sqrt(np.sum(off * off)))


def symmetric_eigenvalues(matrix) -> list[float]:
    """Eigenvalues of a real symmetric matrix, sorted ascending."""
    a = np.array(matrix, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValidationError(f"expected a square matrix, got shape {a.shape}")
    n = a.shape[0]
    if n < 1:
        raise ValidationError("matrix must have at least one row")
    asym = float(np.max(np.abs(a - a.T))) if n > 1 else 0.0
    if asym > SYMMETRY_TOL:
        raise ValidationError(
            f"matrix is not symmetric: max |A - A^T| = {asym:.3e} > {SYMMETRY_TOL}"
        )
    if n == 1:
        return [float(a[0, 0])]

    a = 0.5 * (a + a.T)
    for _ in range(MAX_SWEEPS):
        if _off_diagonal_norm(a) < OFF_DIAGONAL_TOL:
            break
        _sweep(a, n)
    residual = _off_diagonal_norm(a)
    if residual >= OFF_DIAGONAL_TOL:
        raise NumericalError(
            f"Jacobi sweep limit ({MAX_SWEEPS}) reached, off-diagonal residual {residual:.3e}"
        )
    return sorted(float(v) for v in np.diag(a))


def _sweep(a: np.ndarray, n: int) -> None:
    for p in range(n - 1):
        for q in range(p + 1, n):
            apq = a[p, q]
            if apq == 0.0:
                continue
            tau = (a[q, q] - a[p, p]) / (2.0 * apq)
            if tau >= 0.0:
                t = 1.0 / (tau + math.sqrt(1.0 + tau * tau))
            else:
                t = -1.0 / (-tau + math.sqrt(1.0 + tau * tau))
            c = 1.0 / math.sqrt(1.0 + t * t)
            s = t * c

            row_p = a[p, :].copy()
            row_q = a[q, :].copy()
            a[p, :] = c * row_p - s * row_q
            a[q, :] = s * row_p + c * row_q
            col_p = a[:, p].copy()
            col_q = a[:, q].copy()
            a[:, p] = c * col_p - s * col_q
            a[:, q] = s * col_p + c * col_q
            # the rotation is chosen to zero this pair exactly
            a[p, q] = 0.0
            a[q, p] = 0.0
