"""Pure-NumPy element kernels.

Local dof layout on every element is ``[bulk_0 .. bulk_k, hyb_left, hyb_right]``;
blocks are indexed ``[element, test, trial]``.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from numpy.polynomial import legendre


@lru_cache(maxsize=None)
def reference_tables(k: int):
    """Reference integrals for the orthonormal Legendre basis on [-1, 1].

    Returns ``(conv, stiff, pr, pl, dr, dl)`` where, with s_j = sqrt(2j+1),
    conv[i, j] = s_i s_j int P_j P_i', stiff[i, j] = 2 s_i s_j int P_i' P_j',
    and pr/pl, dr/dl are s_j P_j(+-1), s_j P_j'(+-1).
    """
    nq = k + 2
    xg, wg = legendre.leggauss(nq)
    vals = np.empty((k + 1, nq))
    ders = np.empty((k + 1, nq))
    pr, pl, dr, dl = (np.empty(k + 1) for _ in range(4))
    for j in range(k + 1):
        c = np.zeros(j + 1)
        c[j] = 1.0
        dc = legendre.legder(c) if j else np.zeros(1)
        vals[j] = legendre.legval(xg, c)
        ders[j] = legendre.legval(xg, dc)
        pr[j], pl[j] = legendre.legval(1.0, c), legendre.legval(-1.0, c)
        dr[j], dl[j] = legendre.legval(1.0, dc), legendre.legval(-1.0, dc)
    s = np.sqrt(2 * np.arange(k + 1) + 1.0)
    conv = np.einsum("q,jq,iq->ij", wg, vals, ders) * np.outer(s, s)
    stiff = 2.0 * np.einsum("q,iq,jq->ij", wg, ders, ders) * np.outer(s, s)
    return conv, stiff, s * pr, s * pl, s * dr, s * dl


def local_blocks(k: int, h: np.ndarray, b: np.ndarray, alpha: float):
    """Convection and diffusion element blocks, each of shape (nel, k+3, k+3)."""
    conv, stiff, pr, pl, dr, dl = reference_tables(k)
    nel = h.size
    nb = k + 1
    nl = k + 3
    rs = 1.0 / np.sqrt(h)[:, None]
    B = np.zeros((nel, nl, nl))
    D = np.zeros((nel, nl, nl))
    B[:, :nb, :nb] = -(b / h)[:, None, None] * conv
    D[:, :nb, :nb] = (1.0 / h**2)[:, None, None] * stiff
    pen = alpha / h
    for n, pv, dv, slot in ((-1.0, pl, dl, nb), (1.0, pr, dr, nb + 1)):
        v = pv[None, :] * rs
        d = dv[None, :] * rs * (2.0 / h)[:, None]
        J = np.zeros((nel, nl))
        J[:, :nb] = v
        J[:, slot] = -1.0
        G = np.zeros((nel, nl))
        G[:, :nb] = d
        D += (-n) * J[:, :, None] * G[:, None, :]
        D += n * G[:, :, None] * J[:, None, :]
        D += pen[:, None, None] * J[:, :, None] * J[:, None, :]
        U = np.zeros((nel, nl))
        if n > 0:
            U[:, :nb] = (n * b)[:, None] * v
        else:
            U[:, slot] = n * b
        B += J[:, :, None] * U[:, None, :]
    return B, D
