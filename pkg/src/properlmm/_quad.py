"""Composite Gauss-Legendre panel quadrature helpers.

All grids are deterministic functions of their arguments; no adaptivity
happens at evaluation time, so repeated calls are bit-identical.
"""

from functools import lru_cache

import numpy as np


@lru_cache(maxsize=64)
def _leggauss(order):
    x, w = np.polynomial.legendre.leggauss(int(order))
    return x, w


def panel_nodes(edges, order):
    """Gauss-Legendre nodes/weights on consecutive panels [e_i, e_{i+1}]."""
    edges = np.asarray(edges, dtype=float)
    if edges.ndim != 1 or edges.size < 2:
        raise ValueError("need at least two panel edges")
    x, w = _leggauss(order)
    lo, hi = edges[:-1], edges[1:]
    mid = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def log_panel_nodes(lo, hi, panels_per_octave, order):
    """Panels geometric on [lo, hi] (uniform in log), GL rule per panel.

    Integrates f(s) ds directly: weights carry the log substitution, so
    callers evaluate the raw integrand at the returned nodes.
    """
    if not (0.0 < lo < hi):
        raise ValueError("need 0 < lo < hi")
    n_oct = np.log2(hi / lo)
    n_pan = max(1, int(np.ceil(n_oct * panels_per_octave)))
    t_edges = np.linspace(np.log(lo), np.log(hi), n_pan + 1)
    t_nodes, t_weights = panel_nodes(t_edges, order)
    nodes = np.exp(t_nodes)
    return nodes, t_weights * nodes  # ds = s dt


def symmetric_u_edges(r_min, half_width):
    """Panel edges on [-U, U], dyadic toward the origin down to r_min.

    Edges sit at absolute powers of two (clipped at the box edge), so
    grids built for nested boxes share every interior edge and their
    quadrature error largely cancels in differences. The innermost panels
    are [-r, 0] and [0, r] with r = 2^floor(log2(r_min)), so a spike of
    any scale >= r_min at the origin is resolved by some panel.
    """
    if not (0.0 < r_min < half_width):
        raise ValueError("need 0 < r_min < half_width")
    j = int(np.floor(np.log2(r_min)))
    pos = [2.0 ** j]
    while pos[-1] < half_width:
        pos.append(min(2.0 * pos[-1], half_width))
    pos = np.asarray(pos)
    return np.concatenate([-pos[::-1], [0.0], pos])


def inward_edges(lo, hi, min_frac):
    """Panel edges on (lo, hi) halving geometrically toward both endpoints.

    Endpoints themselves are excluded (open domains): the closest edge sits
    a fraction ``min_frac`` of the width from each end. Used for bounded
    shape-parameter domains where densities degenerate at the boundary.
    """
    w = hi - lo
    if w <= 0:
        raise ValueError("empty interval")
    fr = [0.5]
    while fr[-1] * 0.5 >= min_frac:
        fr.append(fr[-1] * 0.5)
    fr = np.asarray(fr)
    return np.unique(np.concatenate([lo + w * fr, hi - w * fr]))
