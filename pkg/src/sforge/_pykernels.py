"""Pure numpy versions of the routines in ``_ckernels``.

Signatures and layouts match the compiled module exactly so the two can be
swapped at import time.
"""
import numpy as np


def sqdist_cols(XT, cols):
    Y = XT[cols].T
    sq_norm = np.einsum("ij,ij->i", Y, Y)
    out = sq_norm[:, None] + sq_norm[None, :] - 2.0 * (Y @ Y.T)
    np.maximum(out, 0.0, out=out)
    np.fill_diagonal(out, 0.0)
    return out


def sqdist_remove(sq, XT, cols):
    out = sq - sqdist_cols(XT, cols)
    np.maximum(out, 0.0, out=out)
    np.fill_diagonal(out, 0.0)
    return out


def stein_phi(sq, XT, ST, cols, h, family):
    m = sq.shape[0]
    if family == 0:
        K = np.exp(-sq / (2.0 * h))
        G = K / h
    else:
        K = 1.0 / np.sqrt(1.0 + sq / (2.0 * h))
        G = K ** 3 / (2.0 * h)
    X = XT[cols].T
    S = ST[cols].T
    return (K.T @ S + G.sum(axis=0)[:, None] * X - G.T @ X) / m


def median_pairwise(sq):
    m = sq.shape[0]
    if m < 2:
        return 0.0
    iu = np.triu_indices(m, k=1)
    return float(np.median(np.sqrt(sq[iu])))


def batch_phi(full_sq, XT, ST, kcols, klen, kmode, ucols, ulen, h_fixed, family, fallback_h):
    rows = kcols.shape[0]
    m = XT.shape[1]
    out = np.zeros((rows, m, ucols.shape[1]))
    hs = np.empty(rows)
    for row in range(rows):
        cols = kcols[row, :klen[row]]
        if kmode[row] == 2:
            sq = full_sq
        elif kmode[row] == 0:
            sq = sqdist_remove(full_sq, XT, cols)
        else:
            sq = sqdist_cols(XT, cols)
        if h_fixed > 0:
            h = h_fixed
        else:
            med = median_pairwise(sq)
            h = med * med / np.log(max(m, 2)) if med > 0 else fallback_h
        hs[row] = h
        u = ucols[row, :ulen[row]]
        out[row, :, :u.size] = stein_phi(sq, XT, ST, u, h, family)
    return out, hs
