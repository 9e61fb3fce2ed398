"""Batched symmetric eigensolvers for the small per-node curvature matrices.

Closed form for 2x2, cyclic Jacobi sweeps for n >= 3.  Eigenvalues are
returned in descending order with an orthonormal eigenvector matrix Q such
that a = Q diag(w) Q^T.  Repeated eigenvalues are fine: any orthonormal basis
of the eigenspace is acceptable downstream (only first derivatives of
spectral functions are ever needed).
"""

import numpy as np

JACOBI_TOL = 1e-13
JACOBI_MAX_SWEEPS = 40


def eigh_descending(a):
    """Eigendecomposition of a batch of symmetric matrices, eigenvalues descending.

    a: (..., n, n) symmetric.  Returns (w, Q) with w: (..., n), Q: (..., n, n).
    """
    a = np.asarray(a, dtype=float)
    n = a.shape[-1]
    if n == 2:
        return _eigh2(a)
    return _jacobi(a)


def _eigh2(a):
    p = a[..., 0, 0]
    q = a[..., 1, 1]
    b = a[..., 0, 1]
    half_tr = 0.5 * (p + q)
    d = np.hypot(0.5 * (p - q), b)
    w1 = half_tr + d
    w2 = half_tr - d
    # Eigenvector for w1: pick the algebraically larger of the two candidate
    # forms to avoid cancellation; fall back to the identity when a ~ multiple
    # of the identity.
    v1x = np.where(np.abs(w1 - q) >= np.abs(w1 - p), w1 - q, b)
    v1y = np.where(np.abs(w1 - q) >= np.abs(w1 - p), b, w1 - p)
    nrm = np.hypot(v1x, v1y)
    degenerate = nrm <= 1e-300 + 0.0 * nrm
    v1x = np.where(degenerate, 1.0, v1x / np.where(degenerate, 1.0, nrm))
    v1y = np.where(degenerate, 0.0, v1y / np.where(degenerate, 1.0, nrm))
    Q = np.empty(a.shape, dtype=float)
    Q[..., 0, 0] = v1x
    Q[..., 1, 0] = v1y
    Q[..., 0, 1] = -v1y
    Q[..., 1, 1] = v1x
    w = np.stack([w1, w2], axis=-1)
    return w, Q


def _jacobi(a):
    A = np.array(a, dtype=float, copy=True)
    batch = A.shape[:-2]
    n = A.shape[-1]
    A = A.reshape(-1, n, n)
    m = A.shape[0]
    Q = np.tile(np.eye(n), (m, 1, 1))
    scale = np.maximum(np.abs(A).max(axis=(1, 2)), 1e-300)
    for _ in range(JACOBI_MAX_SWEEPS):
        off = 0.0
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[:, p, q]
                active = np.abs(apq) > JACOBI_TOL * scale * 1e-3
                if not np.any(active):
                    continue
                app = A[:, p, p]
                aqq = A[:, q, q]
                theta = 0.5 * np.arctan2(2.0 * apq, aqq - app)
                c = np.cos(theta)
                s = np.sin(theta)
                c = np.where(active, c, 1.0)
                s = np.where(active, s, 0.0)
                # A <- J^T A J with the rotation acting on rows/cols p, q
                Ap = c[:, None] * A[:, p, :] - s[:, None] * A[:, q, :]
                Aq = s[:, None] * A[:, p, :] + c[:, None] * A[:, q, :]
                A[:, p, :] = Ap
                A[:, q, :] = Aq
                Ap = c[:, None] * A[:, :, p] - s[:, None] * A[:, :, q]
                Aq = s[:, None] * A[:, :, p] + c[:, None] * A[:, :, q]
                A[:, :, p] = Ap
                A[:, :, q] = Aq
                Qp = c[:, None] * Q[:, :, p] - s[:, None] * Q[:, :, q]
                Qq = s[:, None] * Q[:, :, p] + c[:, None] * Q[:, :, q]
                Q[:, :, p] = Qp
                Q[:, :, q] = Qq
        iu = np.triu_indices(n, 1)
        off = np.abs(A[:, iu[0], iu[1]]).max() if m else 0.0
        if off <= JACOBI_TOL * scale.max():
            break
    w = np.einsum("mii->mi", A).copy()
    order = np.argsort(-w, axis=1)
    w = np.take_along_axis(w, order, axis=1)
    Q = np.take_along_axis(Q, order[:, None, :], axis=2)
    return w.reshape(*batch, n), Q.reshape(*batch, n, n)
