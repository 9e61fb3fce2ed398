"""Elementary symmetric functions, Garding cones, and f = sigma_k^{1/k}.

All routines are batched over a leading axis of states; kappa arrays have
shape (..., n).  sigma_k is evaluated by the incremental-product recurrence
(coefficients of prod (x + kappa_i)), which is stable for the small n used
here and avoids subset enumeration.
"""

from dataclasses import dataclass

import numpy as np

from .errors import AdmissibilityError
from .symeig import eigh_descending

# when enabled, sigma_km1_drop re-derives its values by subset enumeration for
# n <= 6 and asserts agreement (cancellation guard for debugging)
DEBUG_SUBSET_CHECK = False


def all_sigmas(kappa):
    """sigma_0 .. sigma_n of kappa, shape (..., n+1), via e_j += kappa e_{j-1}."""
    kappa = np.asarray(kappa, dtype=float)
    n = kappa.shape[-1]
    e = np.zeros(kappa.shape[:-1] + (n + 1,))
    e[..., 0] = 1.0
    for i in range(n):
        ki = kappa[..., i]
        for j in range(min(i + 1, n), 0, -1):
            e[..., j] = e[..., j] + ki * e[..., j - 1]
    return e


def sigma_k(kappa, k):
    kappa = np.asarray(kappa, dtype=float)
    n = kappa.shape[-1]
    if not 1 <= k <= n:
        raise ValueError(f"order k={k} outside 1..{n}")
    return all_sigmas(kappa)[..., k]


def sigma_km1_drop(kappa, k):
    """sigma_{k-1}(kappa | i) for every i, shape (..., n).

    Synthetic division of the generating polynomial by (x + kappa_i).
    """
    kappa = np.asarray(kappa, dtype=float)
    n = kappa.shape[-1]
    e = all_sigmas(kappa)
    out = np.empty_like(kappa)
    for i in range(n):
        ki = kappa[..., i]
        # e_j(kappa|i) = e_j - ki * e_{j-1}(kappa|i), ascending j from e_0 = 1
        prev = np.ones(kappa.shape[:-1])
        for j in range(1, k):
            prev = e[..., j] - ki * prev
        out[..., i] = prev
    if DEBUG_SUBSET_CHECK and n <= 6:
        _assert_drop_by_enumeration(kappa, k, out)
    return out


def _assert_drop_by_enumeration(kappa, k, out):
    import itertools

    n = kappa.shape[-1]
    flat = kappa.reshape(-1, n)
    ref = np.empty_like(flat)
    for i in range(n):
        rest = np.delete(flat, i, axis=1)
        if k == 1:
            ref[:, i] = 1.0
        else:
            ref[:, i] = [
                sum(np.prod(c) for c in itertools.combinations(row, k - 1)) for row in rest
            ]
    scale = np.maximum(1.0, np.abs(ref))
    if np.max(np.abs(out.reshape(-1, n) - ref) / scale) > 1e-10:
        raise AssertionError("synthetic division disagrees with subset enumeration")


def in_gamma_k(kappa, k):
    """Strict Garding-cone membership: sigma_j > 0 for j = 1..k."""
    e = all_sigmas(kappa)
    ok = np.ones(e.shape[:-1], dtype=bool)
    for j in range(1, k + 1):
        ok &= e[..., j] > 0.0
    return ok


@dataclass
class ConeReport:
    k: int
    sigmas: np.ndarray            # sigma_1 .. sigma_k
    in_gamma_k: bool
    strictly_locally_convex: bool  # all kappa_i > 0
    margin: float                  # min kappa_i


def cone_check(kappa, k) -> ConeReport:
    kappa = np.asarray(kappa, dtype=float)
    e = all_sigmas(kappa)
    return ConeReport(
        k=k,
        sigmas=e[..., 1 : k + 1],
        in_gamma_k=bool(np.all(in_gamma_k(kappa, k))),
        strictly_locally_convex=bool(np.all(kappa > 0.0)),
        margin=float(np.min(kappa)),
    )


def f_and_derivatives(kappa, k):
    """f = sigma_k^{1/k} and its gradient f_i = (1/k) sigma_k^{1/k-1} sigma_{k-1}(kappa|i).

    Raises AdmissibilityError when any state leaves Gamma_k (a Newton step
    left the cone); callers catch this to trigger step damping.
    """
    kappa = np.asarray(kappa, dtype=float)
    if not np.all(in_gamma_k(kappa, k)):
        bad = np.argwhere(~in_gamma_k(kappa, k))
        raise AdmissibilityError(
            f"kappa outside Gamma_{k} at {bad.shape[0]} state(s); first index {bad[0] if bad.size else '?'}"
        )
    sk = sigma_k(kappa, k)
    f = sk ** (1.0 / k)
    fi = (1.0 / k) * sk[..., None] ** (1.0 / k - 1.0) * sigma_km1_drop(kappa, k)
    return f, fi


def F_matrix(a, k):
    """Derivative matrix F^{ij} of A -> sigma_k^{1/k}(lambda(A)) at symmetric a.

    Eigendecompose a = Q diag(kappa) Q^T and return Q diag(f_i) Q^T; positive
    definite on the cone.  Repeated eigenvalues are harmless here.
    """
    w, Q = eigh_descending(a)
    _, fi = f_and_derivatives(w, k)
    return np.einsum("...ik,...k,...jk->...ij", Q, fi, Q)
