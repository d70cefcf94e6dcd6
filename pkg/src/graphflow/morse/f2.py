"""Linear algebra over F_2 by Gaussian elimination."""

import numpy as np


def row_reduce(M):
    """Return ``(R, pivots)``: reduced row echelon form of ``M mod 2``."""
    R = (np.asarray(M, dtype=np.int64) % 2).astype(np.uint8)
    if R.ndim != 2:
        raise ValueError("expected a matrix")
    rows, cols = R.shape
    pivots = []
    r = 0
    for c in range(cols):
        if r == rows:
            break
        nz = np.nonzero(R[r:, c])[0]
        if not len(nz):
            continue
        p = r + nz[0]
        if p != r:
            R[[r, p]] = R[[p, r]]
        hit = np.nonzero(R[:, c])[0]
        hit = hit[hit != r]
        R[hit] ^= R[r]
        pivots.append(c)
        r += 1
    return R, pivots


def rank(M):
    M = np.asarray(M)
    if M.size == 0:
        return 0
    return len(row_reduce(M)[1])


def solve(A, b):
    """One solution ``x`` of ``A x = b`` over F_2, or ``None``."""
    A = np.asarray(A, dtype=np.int64) % 2
    b = np.asarray(b, dtype=np.int64).reshape(-1, 1) % 2
    R, piv = row_reduce(np.hstack([A, b]))
    n = A.shape[1]
    if n in piv:
        return None
    x = np.zeros(n, dtype=np.uint8)
    for i, c in enumerate(piv):
        x[c] = R[i, n]
    return x
