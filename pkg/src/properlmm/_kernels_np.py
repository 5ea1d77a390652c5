"""Pure-numpy reference implementations of the oracle's hot kernels.

The compiled extension (``properlmm._ckernels``) implements the same three
contracts; ``properlmm.kernels`` picks a backend at import time. Summation
order differs between backends (vectorized axis sums here, sequential
loops there), so results agree to rounding, not bitwise. Within one
backend, evaluation order is fixed and results are bit-stable.
"""

import numpy as np
from scipy.special import ndtr

BACKEND_NAME = "numpy"


def _table_lookup(c, oct_lo, per_oct, table):
    """Piecewise-linear lookup on a dyadic-octave table.

    Table node t of octave e holds the value at c = (0.5 + t/(2K)) * 2^e,
    K = per_oct; indexing uses frexp so no logarithms are taken. Values
    below the table range clamp to the first entry (the integrand is flat
    there by construction); values above clamp to the last.
    """
    mant, expo = np.frexp(c)
    pos = (expo - oct_lo) * per_oct + (mant - 0.5) * (2 * per_oct)
    pos = np.clip(pos, 0.0, table.size - 1.0 - 1e-9)
    idx = pos.astype(np.int64)
    frac = pos - idx
    return table[idx] * (1.0 - frac) + table[idx + 1] * frac


def mix_table_accumulate(Sa, Sb, ca, cb, c0, wg, oct_lo, per_oct, table):
    """G[i] = sum_g wg[g] * I(Sa[i]*ca[g] + Sb[i]*cb[g] + c0[g]).

    ``I`` is the tabulated scale integral; (Sa, Sb) are the sign-split
    sums of squares of a factor's components on the quadrature subgrid and
    g runs over shape-parameter nodes.
    """
    Sa = np.asarray(Sa, dtype=float)
    Sb = np.asarray(Sb, dtype=float)
    out = np.zeros_like(Sa)
    for g in range(len(wg)):
        c = Sa * ca[g] + Sb * cb[g] + c0[g]
        out += wg[g] * _table_lookup(c, oct_lo, per_oct, table)
    return out


def box_clip_correction(Gw, Q, bhat, B, s0, w0):
    """Numeric part of the residual-scale integral caused by the beta box.

    The full residual-scale integral is taken analytically per u point
    (through the tabulated scale integral in c = Q + 2 b0); this kernel
    returns the amount to subtract because the fixed-effects box clips:

    corr = sum_s w0[s] * sum_u Gw[u] * exp(-Q[u] / (2 s0[s]^2)) * (1 - J)
    J = prod_j [ndtr((B - bhat[j,u])/s0[s]) - ndtr((-B - bhat[j,u])/s0[s])]

    Both backends use the same cutoffs: J is exactly 1 (the point
    contributes nothing) when every projected mean clears the box edge by
    more than 8 s0, the normal CDF difference is exactly 0 when the mean
    sits outside by that margin, and the exponential is dropped past its
    underflow point.
    """
    Gw = np.asarray(Gw, dtype=float)
    Q = np.asarray(Q, dtype=float)
    bhat = np.atleast_2d(np.asarray(bhat, dtype=float))
    total = 0.0
    for s in range(len(s0)):
        sig = s0[s]
        qmax = 1490.0 * sig * sig
        J = np.ones(Gw.shape)
        touched = np.zeros(Gw.shape, dtype=bool)
        for j in range(bhat.shape[0]):
            bh = bhat[j]
            dist = B - np.abs(bh)
            outside = dist < -8.0 * sig
            band = np.abs(dist) <= 8.0 * sig
            if np.any(band):
                bb = bh[band]
                J[band] = J[band] * (ndtr((B - bb) / sig)
                                     - ndtr((-B - bb) / sig))
            J[outside] = 0.0
            touched |= band | outside
        touched &= Q <= qmax
        if not np.any(touched):
            continue
        qt = Q[touched]
        inner = Gw[touched] * np.exp(qt * (-0.5 / (sig * sig))) \
            * (1.0 - J[touched])
        total += w0[s] * float(np.sum(inner))
    return total


def factor_product_reduce(F_list, w_sl):
    """G[i1,..,iq] = sum_s w_sl[s] * prod_d F_list[d][i_d, s], flattened.

    Used for component-coupled families where the per-component factor is
    a function of (node, scale, shape) with no two-statistic reduction.
    """
    w_sl = np.asarray(w_sl, dtype=float)
    q = len(F_list)
    shape = tuple(F.shape[0] for F in F_list)
    out = np.zeros(shape, dtype=float)
    if q == 1:
        out = F_list[0] @ w_sl
        return out.ravel()
    for s in range(w_sl.size):
        term = w_sl[s] * F_list[0][:, s]
        if q == 2:
            out += term[:, None] * F_list[1][:, s][None, :]
        else:
            out += (term[:, None, None]
                    * F_list[1][:, s][None, :, None]
                    * F_list[2][:, s][None, None, :])
    return out.ravel()
