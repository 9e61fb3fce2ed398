"""Analytic coefficients of the linearized curvature operator and assembly.

For the u-representation operator G(r, p, u) = f(kappa[a(r, p, u)]) the
derivative blocks are closed-form:

    G^{ij} = (-phi zeta'/w) F^{kl} gamma^{ik} gamma^{jl}
    G^s    = -2 zeta'^2 (w gamma^{is} u_q + phi gamma^{qs} u_i) / (w(phi+w)) F^{ij} a_{qj}
             - (zeta'^2 u_s / w^2) F^{ij} a_{ij}
    G_u    = -2 (phi phi' zeta' g^{iq} + zeta' zeta'' u_i u_q / w^2) F^{ij} a_{qj}
             + (phi' zeta'/phi - phi phi' zeta'/w^2 + phi^2 zeta''/(zeta' w^2)) F^{ij} a_{ij}
             - (phi zeta'/w) F^{ij} g^{ij}

with w = sqrt(phi^2 + zeta'^2 |Du|^2) and F^{ij} the spectral derivative of f.
The v-representation blocks follow by the pointwise chain rule u = eta(v),
except the zero-order one, which has its own closed form

    Gv = (K/(w_v eta')) sum f_i + (eta/eta') F^{ij} a_{ij},   w_v = sqrt(1+|Dv|^2).

All formulas are in orthonormal frame components; `to_coordinate` converts the
blocks for assembly against plain finite-difference stencils.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import grids
from .geometry import GeometryState
from .spaceform import SpaceFormParams, eta, eta_prime, eta_second
from .symfunc import f_and_derivatives


@dataclass
class LinearizedCoefficients:
    """Frame-level derivative blocks of the scalar operator at a batch of states."""

    Gij: np.ndarray   # (N, n, n) second-order block, positive definite when admissible
    Gs: np.ndarray    # (N, n) gradient block
    Gu: np.ndarray    # (N,) zero-order block
    value: np.ndarray  # (N,) operator value f(kappa)


def f_blocks(state: GeometryState, k):
    """f(kappa), F^{ij} matrix and trace contractions used by every block."""
    f, fi = f_and_derivatives(state.kappa, k)
    Q = state.eigvecs
    F = np.einsum("...ik,...k,...jk->...ij", Q, fi, Q)
    return f, fi, F


def coefficients_u(state: GeometryState, k) -> LinearizedCoefficients:
    """Closed-form blocks for the u-representation operator."""
    amb = state.ambient
    u, p = state.u, state.p
    phi, w = state.phi, state.w
    zp = amb.zeta_prime_u(u)
    zpp = amb.zeta_second_u(u)
    php = amb.phi_prime_u(u)
    gup, gmat_up, a = state.gamma_up, state.g_up, state.a
    f, fi, F = f_blocks(state, k)
    Fa = np.einsum("...ij,...qj->...iq", F, a)
    trFa = np.einsum("...ii->...", Fa)

    Gij = (-phi * zp / w)[..., None, None] * np.einsum("...ik,...kl,...jl->...ij", gup, F, gup)

    gFap = np.einsum("...is,...iq,...q->...s", gup, Fa, p)
    gaFp = np.einsum("...qs,...iq,...i->...s", gup, Fa, p)
    Gs = (
        -2.0 * (zp**2 / (w * (phi + w)))[..., None] * (w[..., None] * gFap + phi[..., None] * gaFp)
        - (zp**2 / w**2)[..., None] * trFa[..., None] * p
    )

    t1 = np.einsum("...iq,...iq->...", (phi * php * zp)[..., None, None] * gmat_up, Fa)
    t1 = t1 + (zp * zpp / w**2) * np.einsum("...i,...iq,...q->...", p, Fa, p)
    Gu = (
        -2.0 * t1
        + (php * zp / phi - phi * php * zp / w**2 + phi**2 * zpp / (zp * w**2)) * trFa
        - (phi * zp / w) * np.einsum("...ij,...ij->...", F, gmat_up)
    )
    return LinearizedCoefficients(Gij=Gij, Gs=Gs, Gu=Gu, value=f)


def coefficients_v(state: GeometryState, v, p_v, sf: SpaceFormParams, k,
                   lc_u: LinearizedCoefficients | None = None) -> LinearizedCoefficients:
    """v-representation blocks: chain rule for Gij/Gs, closed form for Gv.

    `state` must be the state of the same graph built through the u-route
    (u = eta(v)); `lc_u` may be passed to reuse the u-blocks.
    """
    if lc_u is None:
        lc_u = coefficients_u(state, k)
    ep = eta_prime(sf, v)
    epp = eta_second(sf, v)
    Gij = ep[..., None, None] * lc_u.Gij
    Gs = ep[..., None] * lc_u.Gs + 2.0 * epp[..., None] * np.einsum(
        "...ij,...j->...i", lc_u.Gij, p_v
    )
    Gv = gv_closed_form(state, v, p_v, sf, k)
    return LinearizedCoefficients(Gij=Gij, Gs=Gs, Gu=Gv, value=lc_u.value)


def gv_closed_form(state: GeometryState, v, p_v, sf: SpaceFormParams, k):
    """Gv = (K/(w_v eta')) sum f_i + (eta/eta') sum f_i kappa_i."""
    f, fi, F = f_blocks(state, k)
    ev = eta(sf, v)
    ep = eta_prime(sf, v)
    wv = np.sqrt(1.0 + np.einsum("...i,...i->...", p_v, p_v))
    sum_fi = np.einsum("...i->...", fi)
    sum_fk = np.einsum("...i,...i->...", fi, state.kappa)
    return sf.K / (wv * ep) * sum_fi + (ev / ep) * sum_fk


def gv_chain_rule(lc_u: LinearizedCoefficients, sf: SpaceFormParams, v, p_v, r_v):
    """Gv by the pointwise chain rule from the u-blocks (test fallback).

    d/dv of (eta' r + eta'' p p^T, eta' p, eta) uses eta'' = eta and
    eta''' = eta' on every branch.
    """
    ev = eta(sf, v)
    ep = eta_prime(sf, v)
    pp = p_v[..., :, None] * p_v[..., None, :]
    r_slot = ev[..., None, None] * r_v + ep[..., None, None] * pp
    return (
        np.einsum("...ij,...ij->...", lc_u.Gij, r_slot)
        + ev * np.einsum("...s,...s->...", lc_u.Gs, p_v)
        + lc_u.Gu * ep
    )


def exp_chain_blocks(lc_u: LinearizedCoefficients, u, p_v, r_v) -> LinearizedCoefficients:
    """Blocks of v -> G[e^v] from u-form blocks (deformed sphere path).

    With eta = exp every eta-derivative equals u = e^v itself.
    """
    pp = p_v[..., :, None] * p_v[..., None, :]
    Gij = u[..., None, None] * lc_u.Gij
    Gs = u[..., None] * lc_u.Gs + 2.0 * np.einsum("...ij,...j->...i", Gij, p_v)
    Gv = u * (
        np.einsum("...ij,...ij->...", lc_u.Gij, r_v + pp)
        + np.einsum("...s,...s->...", lc_u.Gs, p_v)
        + lc_u.Gu
    )
    return LinearizedCoefficients(Gij=Gij, Gs=Gs, Gu=Gv, value=lc_u.value)


def deformed_monotonicity_check(u, p, r, t_values, k, tol=1e-12, fd_step=1e-6):
    """Evaluate G^t on a t-lattice and report monotonicity in t.

    Returns dict with the value table, the worst decrease over consecutive
    lattice points, and the minimum finite-difference t-derivative.
    """
    from .geometry import state_deformed_slots

    t_values = np.sort(np.asarray(t_values, dtype=float))
    vals = []
    for t in t_values:
        st = state_deformed_slots(u, p, r, float(t))
        vals.append(f_and_derivatives(st.kappa, k)[0])
    vals = np.stack(vals, axis=0)  # (T, N)
    diffs = np.diff(vals, axis=0)
    worst = float(diffs.min()) if diffs.size else 0.0
    # centered t-derivative at interior lattice points
    min_deriv = np.inf
    for t in t_values:
        tl, tr = max(0.0, t - fd_step), min(1.0, t + fd_step)
        if tr - tl <= 0:
            continue
        gl = f_and_derivatives(state_deformed_slots(u, p, r, tl).kappa, k)[0]
        gr = f_and_derivatives(state_deformed_slots(u, p, r, tr).kappa, k)[0]
        min_deriv = min(min_deriv, float(((gr - gl) / (tr - tl)).min()))
    return {
        "t_values": t_values,
        "values": vals,
        "worst_decrease": worst,
        "monotone": bool(worst >= -tol),
        "min_t_derivative": float(min_deriv),
    }


# ---------------------------------------------------------------------------
# coordinate-level blocks and sparse assembly

def to_coordinate(lc: LinearizedCoefficients, grid) -> tuple:
    """Convert frame blocks to coefficients on plain coordinate stencils.

    Returns (A2, b1, c): residual sensitivity to second partials d_kl u, first
    partials d_m u, and the node value.  The Christoffel correction of the
    covariant Hessian is folded into b1.
    """
    _, _, _, gamma, B = grids.chart_quantities(grid)
    A2 = np.einsum("nki,nij,njl->nkl", B, lc.Gij, B)
    b1 = np.einsum("nmi,ni->nm", B, lc.Gs) - np.einsum("nij,nijm->nm", A2, gamma)
    return A2, b1, lc.Gu.copy()


def assemble_jacobian(grid, A2, b1, c) -> sp.csr_matrix:
    """Sparse Jacobian over interior unknowns from coordinate-level blocks.

    Dirichlet boundary nodes are eliminated: their columns never enter (the
    boundary values are fixed data, so the corresponding increments vanish).
    """
    W1, W2 = grids._jet_weights(grid)
    m = grid.box.shape[1]
    entries = np.einsum("nkl,klo->no", A2, W2) + np.einsum("nm,mo->no", b1, W1)
    entries[:, m // 2] += c
    n_int = grid.n_interior
    rows = np.repeat(np.arange(n_int), m)
    cols_nodes = grid.box.reshape(-1)
    interior_slot = np.full(grid.n_nodes, -1, dtype=int)
    interior_slot[grid.interior_ids] = np.arange(n_int)
    cols = interior_slot[cols_nodes]
    keep = cols >= 0
    J = sp.coo_matrix(
        (entries.reshape(-1)[keep], (rows[keep], cols[keep])), shape=(n_int, n_int)
    )
    return J.tocsr()


def assemble_system(grid, A2, b1, c, residual):
    """Newton system J delta = -residual; returns (J, rhs)."""
    J = assemble_jacobian(grid, A2, b1, c)
    return J, -np.asarray(residual, dtype=float)
