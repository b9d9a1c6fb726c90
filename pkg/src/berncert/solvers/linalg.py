"""Dense least-squares kernels built on QR with column pivoting."""

import numpy as np
from scipy.linalg import qr, solve_triangular

RCOND = 1e-12


def lstsq(a, b, rcond=RCOND):
    """Minimum-norm least-squares solution of ``a x = b``.

    Rank is decided from the pivoted-QR diagonal at relative threshold
    ``rcond``; rank-deficient systems go through a complete orthogonal
    decomposition. Returns ``(x, rank)``.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    m, n = a.shape
    x = np.zeros(n)
    if m == 0 or n == 0 or not np.any(a):
        return x, 0
    q, r, perm = qr(a, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    rank = int(np.sum(diag > rcond * diag[0]))
    c = q[:, :rank].T @ b
    r1 = r[:rank, :]
    if rank == n:
        z = solve_triangular(r1, c)
    else:
        # r1 is rank x n with full row rank: z = q2 r2^-T c minimizes ||z||
        q2, r2 = np.linalg.qr(r1.T)
        z = q2 @ solve_triangular(r2, c, trans="T")
    x[perm] = z
    return x, rank
