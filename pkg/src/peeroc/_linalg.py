"""Small dense linear algebra that works on both float and Fraction arrays.

Rational matrices are numpy object arrays of :class:`fractions.Fraction`;
numpy's ``@`` handles them, but inversion needs Gauss-Jordan elimination.
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np


def is_exact(*arrays: np.ndarray) -> bool:
    return all(np.asarray(a).dtype == object for a in arrays)


def eye(n: int, exact: bool) -> np.ndarray:
    if not exact:
        return np.eye(n)
    out = np.full((n, n), Fraction(0), dtype=object)
    for i in range(n):
        out[i, i] = Fraction(1)
    return out


def zeros(shape, exact: bool) -> np.ndarray:
    if not exact:
        return np.zeros(shape)
    return np.full(shape, Fraction(0), dtype=object)


def ones(n: int, exact: bool) -> np.ndarray:
    if not exact:
        return np.ones(n)
    return np.full(n, Fraction(1), dtype=object)


def solve(M: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve ``M X = rhs``; exact when both operands are Fraction arrays."""
    if not is_exact(M, rhs):
        return np.linalg.solve(np.asarray(M, dtype=float), np.asarray(rhs, dtype=float))
    n = M.shape[0]
    vector = rhs.ndim == 1
    R = rhs.reshape(n, -1).copy()
    L = M.copy()
    for col in range(n):
        pivot = next((r for r in range(col, n) if L[r, col] != 0), None)
        if pivot is None:
            raise np.linalg.LinAlgError("singular matrix")
        if pivot != col:
            L[[col, pivot]] = L[[pivot, col]]
            R[[col, pivot]] = R[[pivot, col]]
        p = L[col, col]
        L[col] = L[col] / p
        R[col] = R[col] / p
        for r in range(n):
            if r != col and L[r, col] != 0:
                f = L[r, col]
                L[r] = L[r] - f * L[col]
                R[r] = R[r] - f * R[col]
    return R[:, 0] if vector else R


def inv(M: np.ndarray) -> np.ndarray:
    return solve(M, eye(M.shape[0], is_exact(M)))


def max_abs(x) -> float:
    x = np.asarray(x)
    if x.size == 0:
        return 0.0
    if x.dtype == object:
        return float(max(abs(v) for v in x.ravel()))
    return float(np.max(np.abs(x)))
