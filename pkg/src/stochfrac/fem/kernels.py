"""Hot quadrature-point and element kernels, numba and numpy twins.

The numpy versions are the reference; the numba versions compute the same
quantities point by point. ``stochfrac._accel.USE_NUMBA`` picks the default.
"""

from __future__ import annotations

import numpy as np

from .._accel import njit, select

_ONE = np.array([1.0, 1.0, 1.0, 0.0])
_PDEV = np.eye(4) - np.outer(_ONE, _ONE) / 3.0


# --------------------------------------------------------------------------
# quadrature-point mechanics
# --------------------------------------------------------------------------


def _qp_mech_np(eps, ep_n, c, gel, K, mu):
    """Stress, tangent and energies of the reduced elastic-plastic law.

    The plastic strain is ``ep_n + c N`` with ``N`` the unit deviatoric trial
    direction, so the deviatoric elastic strain is ``(|e| - c) N``.
    """
    tr = eps[:, 0] + eps[:, 1] + eps[:, 2]
    e = eps - ep_n
    e = e - (e[:, 0] + e[:, 1] + e[:, 2])[:, None] / 3.0 * _ONE
    ne = np.sqrt(np.einsum("pi,pi->p", e, e))
    safe = np.where(ne > 0.0, ne, 1.0)
    n = np.where((ne > 0.0)[:, None], e / safe[:, None], 0.0)
    pos = tr > 0.0
    gvol = np.where(pos, gel, 1.0)
    psi_vol = 0.5 * K * tr * tr
    psi_dev = mu * (ne - c) ** 2
    W = gvol * psi_vol + gel * psi_dev
    psi_plus = np.where(pos, psi_vol, 0.0) + psi_dev
    sig = (gvol * K * tr)[:, None] * _ONE + (2.0 * mu * gel * (ne - c))[:, None] * n
    ratio = np.where(ne > 0.0, c / safe, 0.0)
    two_mu = 2.0 * mu * gel
    C = (
        (gvol * K)[:, None, None] * np.outer(_ONE, _ONE)
        + (two_mu * (1.0 - ratio))[:, None, None] * _PDEV
        + (two_mu * ratio)[:, None, None] * np.einsum("pi,pj->pij", n, n)
    )
    return sig, C, W, psi_plus


@njit
def _qp_mech_nb(eps, ep_n, c, gel, K, mu):
    P = eps.shape[0]
    sig = np.zeros((P, 4))
    C = np.zeros((P, 4, 4))
    W = np.zeros(P)
    psi_plus = np.zeros(P)
    one = np.array([1.0, 1.0, 1.0, 0.0])
    e = np.zeros(4)
    n = np.zeros(4)
    for p in range(P):
        tr = eps[p, 0] + eps[p, 1] + eps[p, 2]
        for i in range(4):
            e[i] = eps[p, i] - ep_n[p, i]
        m = (e[0] + e[1] + e[2]) / 3.0
        for i in range(3):
            e[i] -= m
        ne = 0.0
        for i in range(4):
            ne += e[i] * e[i]
        ne = np.sqrt(ne)
        ratio = 0.0
        for i in range(4):
            n[i] = 0.0
        if ne > 0.0:
            for i in range(4):
                n[i] = e[i] / ne
            ratio = c[p] / ne
        gv = gel[p] if tr > 0.0 else 1.0
        psi_vol = 0.5 * K[p] * tr * tr
        psi_dev = mu[p] * (ne - c[p]) ** 2
        W[p] = gv * psi_vol + gel[p] * psi_dev
        psi_plus[p] = psi_dev + (psi_vol if tr > 0.0 else 0.0)
        two_mu = 2.0 * mu[p] * gel[p]
        for i in range(4):
            sig[p, i] = gv * K[p] * tr * one[i] + two_mu * (ne - c[p]) * n[i]
            for j in range(4):
                pd = (1.0 if i == j else 0.0) - one[i] * one[j] / 3.0
                C[p, i, j] = gv * K[p] * one[i] * one[j] + two_mu * ((1.0 - ratio) * pd + ratio * n[i] * n[j])
    return sig, C, W, psi_plus


qp_mech = select(_qp_mech_nb, _qp_mech_np)


# --------------------------------------------------------------------------
# element integration
# --------------------------------------------------------------------------


def _element_vector_np(B, wdet, C, sig):
    Ke = np.einsum("eqai,eqab,eqbj,eq->eij", B, C, B, wdet, optimize=True)
    fe = np.einsum("eqai,eqa,eq->ei", B, sig, wdet, optimize=True)
    return Ke, fe


@njit
def _element_vector_nb(B, wdet, C, sig):
    E, Q, S, n = B.shape
    Ke = np.zeros((E, n, n))
    fe = np.zeros((E, n))
    CB = np.zeros((S, n))
    for e in range(E):
        for q in range(Q):
            w = wdet[e, q]
            for a in range(S):
                for j in range(n):
                    acc = 0.0
                    for b in range(S):
                        acc += C[e, q, a, b] * B[e, q, b, j]
                    CB[a, j] = acc
            for i in range(n):
                fi = 0.0
                for a in range(S):
                    fi += B[e, q, a, i] * sig[e, q, a]
                fe[e, i] += w * fi
                for j in range(n):
                    acc = 0.0
                    for a in range(S):
                        acc += B[e, q, a, i] * CB[a, j]
                    Ke[e, i, j] += w * acc
    return Ke, fe


element_vector = select(_element_vector_nb, _element_vector_np)


def _element_scalar_np(N, grad, wdet, mass, stiff, src, flux):
    """Element matrices of ``int mass u v + stiff grad u . grad v`` and the
    load ``int src v + flux . grad v`` for a scalar P1/Q1 field."""
    Ae = np.einsum("qa,qb,eq->eab", N, N, wdet * mass, optimize=True) + np.einsum(
        "eqad,eqbd,eq->eab", grad, grad, wdet * stiff, optimize=True
    )
    fe = np.einsum("qa,eq->ea", N, wdet * src) + np.einsum("eqad,eqd,eq->ea", grad, flux, wdet, optimize=True)
    return Ae, fe


@njit
def _element_scalar_nb(N, grad, wdet, mass, stiff, src, flux):
    E, Q, n, dim = grad.shape
    Ae = np.zeros((E, n, n))
    fe = np.zeros((E, n))
    for e in range(E):
        for q in range(Q):
            wm = wdet[e, q] * mass[e, q]
            ws = wdet[e, q] * stiff[e, q]
            for a in range(n):
                fa = src[e, q] * N[q, a]
                for k in range(dim):
                    fa += flux[e, q, k] * grad[e, q, a, k]
                fe[e, a] += wdet[e, q] * fa
                for b in range(n):
                    gg = 0.0
                    for k in range(dim):
                        gg += grad[e, q, a, k] * grad[e, q, b, k]
                    Ae[e, a, b] += wm * N[q, a] * N[q, b] + ws * gg
    return Ae, fe


element_scalar = select(_element_scalar_nb, _element_scalar_np)

KERNELS = {
    "qp_mech": (_qp_mech_nb, _qp_mech_np),
    "element_vector": (_element_vector_nb, _element_vector_np),
    "element_scalar": (_element_scalar_nb, _element_scalar_np),
}
