"""Brute-force truncated marginal-likelihood oracle.

Evaluates, by deterministic composite quadrature on a truncated box, the
marginal density of the data under the full hierarchy: Gaussian likelihood
times the random-effects density times the scale and shape priors. The
value either stabilizes (posterior proper) or keeps growing (improper) as
the box expands, which is what :func:`propriety_probe` classifies. Runs
only at desk scale (n <= 6, p <= 2, q <= 3, r <= 2).

Constant conventions (fixed so bound/identity tests are exact):

* likelihood and random-effects densities fully normalized;
* power-exp scale priors taken literally as sigma^-(2a+1) exp(-b/sigma^2)
  (improper: no normalizer); half-Cauchy priors normalized;
* shape priors normalized;
* beta is integrated over the cube [-B, B]^p expressed in the orthonormal
  basis of col(X) (X = W diag(s) V^T); the Jacobian prod_j 1/s_j keeps the
  value in beta-Lebesgue measure, and the box integral becomes a product
  of 1-D normal CDF differences.

Integration layout: the scale and shape parameters of each random factor
are integrated per u-grid-point through precomputed octave tables (see
``kernels``), the fixed effects analytically against the box, and the
residual scale by composite panels in log space. Everything reduces to
fixed-order sums, so a given (instance, truncation, grid) is bit-stable.
"""

import csv
import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.special import gammainc, gammaincc, gammaln

from . import kernels
from ._quad import (inward_edges, log_panel_nodes, panel_nodes,
                    symmetric_u_edges)
from .errors import (ConfigurationError, DomainError, NumericalError,
                     ScaleLimitError)
from .model import (FsnEffects, ModelSpec, NormalEffects, SmnEffects,
                    TpnEffects, sse, x_basis)

_LOG_2PI = math.log(2.0 * math.pi)

DESK_LIMITS = {"n": 6, "p": 2, "q": 3, "r": 2}


# ---------------------------------------------------------------------------
# Records
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Truncation:
    """Integration box: sigma in [sigma_lo, sigma_hi] for every scale,
    |beta_j| <= beta_halfwidth (orthonormalized basis), |u_k| <= u_halfwidth."""

    sigma_lo: float
    sigma_hi: float
    beta_halfwidth: float
    u_halfwidth: float
    level: Optional[int] = None

    def __post_init__(self):
        if not (0.0 < self.sigma_lo < self.sigma_hi):
            raise DomainError("need 0 < sigma_lo < sigma_hi")
        if self.beta_halfwidth <= 0 or self.u_halfwidth <= 0:
            raise DomainError("box half-widths must be positive")


@dataclass(frozen=True)
class GridSpec:
    """Quadrature resolution knobs.

    ``refined()`` halves every step (panel splits, scale panels, table
    density); converged values should move by < 0.1% under one refinement.
    """

    u_order: int = 6
    u_outer_order: int = 4
    panel_split: int = 1
    sigma_panels_per_octave: float = 1.0
    sigma_order: int = 4
    shape_min_frac: float = 1e-3
    shape_order: int = 4
    lambda_panels: int = 3
    table_per_octave: int = 64

    def refined(self):
        return replace(self,
                       panel_split=self.panel_split * 2,
                       sigma_panels_per_octave=self.sigma_panels_per_octave * 2,
                       table_per_octave=self.table_per_octave * 2)


@dataclass(frozen=True)
class MarginalEstimate:
    value: float
    truncation: Truncation
    rel_increment: float
    grid_spec: GridSpec


@dataclass(frozen=True)
class ProbeVerdict:
    outcome: str  # CONVERGES | DIVERGES | INCONCLUSIVE
    increment_trace: tuple  # ((level, value), ...)
    rel_increments: tuple
    tol: float

    def to_csv(self):
        lines = ["k,value,rel_increment"]
        rels = (float("nan"),) + tuple(self.rel_increments)
        for (k, v), r in zip(self.increment_trace, rels):
            lines.append(f"{k},{v!r},{r!r}")
        return "\n".join(lines) + "\n"


def write_probe_trace(verdict, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(verdict.to_csv())


# ---------------------------------------------------------------------------
# Scale-integral tables
# ---------------------------------------------------------------------------

def _octave_grid(cmin, cmax, per_oct):
    """Node values of the dyadic table covering [cmin, cmax] with margin."""
    cmin = max(cmin, 1e-290)
    cmax = max(cmax, 2.0 * cmin)
    oct_lo = int(np.floor(np.log2(cmin))) - 1
    oct_hi = int(np.ceil(np.log2(cmax))) + 1
    n_oct = oct_hi - oct_lo
    j = np.arange(n_oct * per_oct + 1)
    e = oct_lo + j // per_oct
    mant = 0.5 + (j % per_oct) / (2.0 * per_oct)
    c_nodes = mant * np.exp2(e)
    return c_nodes, oct_lo


def _power_scale_table(nu, sigma_lo, sigma_hi, c_nodes):
    """I(c) = int_{lo}^{hi} s^-(nu+1) exp(-c/(2 s^2)) ds at the table nodes.

    For nu away from 0 the substitution w = c/(2 s^2) turns this into a
    regularized incomplete-gamma difference; otherwise (or for nu <= 0)
    dense log-panel quadrature is used.
    """
    c = np.asarray(c_nodes, dtype=float)
    if nu > 0.05:
        s = 0.5 * nu
        w_hi = c / (2.0 * sigma_hi * sigma_hi)   # lower w endpoint
        w_lo = c / (2.0 * sigma_lo * sigma_lo)   # upper w endpoint
        # difference of regularized gammas on whichever side cancels less
        upper_side = w_hi > s
        dP = np.where(upper_side,
                      gammaincc(s, w_hi) - gammaincc(s, w_lo),
                      gammainc(s, w_lo) - gammainc(s, w_hi))
        dP = np.maximum(dP, 0.0)
        logpref = gammaln(s) + s * (math.log(2.0) - np.log(c)) - math.log(2.0)
        with np.errstate(over="ignore"):
            out = np.exp(logpref) * dP
        return out
    nodes, weights = log_panel_nodes(sigma_lo, sigma_hi, 2.0, 8)
    expo = np.exp(-0.5 * np.outer(c, 1.0 / np.square(nodes)))
    return expo @ (weights * nodes ** (-(nu + 1.0)))


def _generic_scale_table(weight_fn, sigma_lo, sigma_hi, c_nodes):
    """I(c) = int weight_fn(s) exp(-c/(2 s^2)) ds by dense log panels."""
    nodes, weights = log_panel_nodes(sigma_lo, sigma_hi, 2.0, 8)
    c = np.asarray(c_nodes, dtype=float)
    expo = np.exp(-0.5 * np.outer(c, 1.0 / np.square(nodes)))
    return expo @ (weights * weight_fn(nodes))


def _half_cauchy_pdf(s_scale):
    c = 2.0 / (math.pi * s_scale)
    return lambda s: c / (1.0 + np.square(s / s_scale))


# ---------------------------------------------------------------------------
# Shape-parameter quadrature
# ---------------------------------------------------------------------------

def _shape_nodes(shape_prior, domain, trunc, grid):
    """Nodes/weights integrating a proper shape prior over its support.

    Bounded supports get panels halving toward both endpoints (down to
    min(shape_min_frac, sigma_lo/2) of the width, tracking the truncation
    level so boundary structure stays resolved); unbounded supports get
    log-space panels between extreme prior quantiles.
    """
    if shape_prior.is_point_mass:
        return np.array([shape_prior.point]), np.array([1.0])
    lo, hi = shape_prior.support
    if np.isfinite(lo) and np.isfinite(hi):
        min_frac = min(grid.shape_min_frac, 0.5 * trunc.sigma_lo)
        edges = inward_edges(lo, hi, min_frac)
    else:
        eps = 1e-9
        q_lo = max(shape_prior.ppf(eps), domain[0] + 1e-300)
        q_hi = shape_prior.ppf(1.0 - eps)
        if q_lo <= 0:  # shift strictly inside a (0, inf)-type domain
            q_lo = min(1e-12, 0.5 * q_hi)
        n_oct = max(1.0, np.log2(q_hi / q_lo))
        edges = np.exp2(np.linspace(np.log2(q_lo), np.log2(q_hi),
                                    int(np.ceil(n_oct)) + 1))
    edges = _split_edges(edges, grid.panel_split)
    nodes, weights = panel_nodes(edges, grid.shape_order)
    return nodes, weights * shape_prior.pdf(nodes)


def _split_edges(edges, k):
    if k <= 1:
        return edges
    lo, hi = edges[:-1], edges[1:]
    frac = np.arange(k) / k
    fine = (lo[:, None] + (hi - lo)[:, None] * frac[None, :]).ravel()
    return np.append(fine, edges[-1])


# ---------------------------------------------------------------------------
# Per-factor G builders
# ---------------------------------------------------------------------------

def _factor_g_tpn(param, shape_prior, q_i, a_i, b_i, hc_scale, Sa, Sb,
                  trunc, grid, variant):
    """Scale-and-shape-integrated random-effects factor on the subgrid.

    ``variant``: 'exact' uses the two-piece kernel; 'lower'/'upper' swap in
    the bounding normal kernels at scales sigma*min(a,b) and sigma*(a+b)
    (with the b-term relaxed through the parameterisation's m/M constants),
    keeping the exact 2/(sigma(a+b)) prefactor. Pointwise these bracket the
    two-piece density, so the resulting integrals bracket the marginal.
    """
    g, wq = _shape_nodes(shape_prior, param.gamma_domain, trunc, grid)
    a = np.asarray(param.a(g), dtype=float)
    b = np.asarray(param.b(g), dtype=float)
    H = a + b
    if variant == "exact":
        ca, cb = 1.0 / (a * a), 1.0 / (b * b)
        c_extra = np.full_like(a, 2.0 * b_i)
    elif variant == "lower":
        h = np.minimum(a, b)
        ca = cb = 1.0 / (h * h)
        c_extra = 2.0 * b_i * param.m ** 2 / (h * h)
    elif variant == "upper":
        ca = cb = 1.0 / (H * H)
        c_extra = 2.0 * b_i * param.M ** 2 / (H * H)
    else:
        raise ValueError(f"unknown variant {variant!r}")
    wg = wq * (2.0 / H) ** q_i * (2.0 * math.pi) ** (-0.5 * q_i)

    S = Sa + Sb
    s_min, s_max = float(S.min()), float(S.max())
    lo_cand = c_extra + np.minimum(ca, cb) * s_min
    hi_cand = c_extra + np.maximum(ca, cb) * s_max
    c_nodes, oct_lo = _octave_grid(float(lo_cand.min()), float(hi_cand.max()),
                                   grid.table_per_octave)
    if hc_scale is not None:
        weight_fn = _make_power_weight(q_i, _half_cauchy_pdf(hc_scale))
        table = _generic_scale_table(weight_fn, trunc.sigma_lo,
                                     trunc.sigma_hi, c_nodes)
    else:
        nu = q_i + 2.0 * a_i
        table = _power_scale_table(nu, trunc.sigma_lo, trunc.sigma_hi,
                                   c_nodes)
    return kernels.mix_table_accumulate(
        np.ascontiguousarray(Sa.ravel()), np.ascontiguousarray(Sb.ravel()),
        ca, cb, c_extra, wg, oct_lo, grid.table_per_octave, table)


def _make_power_weight(q_i, prior_fn):
    return lambda s: s ** (-float(q_i)) * prior_fn(s)


def _factor_g_smn(mixing, shape_prior, q_i, a_i, b_i, hc_scale, S, trunc,
                  grid):
    """Scale mixture factor: depends on the subvector through |u_i|^2 only."""
    d_nodes, d_weights = _shape_nodes(shape_prior, mixing.delta_domain,
                                      trunc, grid)
    c_nodes, oct_lo = _octave_grid(float(S.min()), float(S.max()),
                                   grid.table_per_octave)
    s_nodes, s_weights = log_panel_nodes(trunc.sigma_lo, trunc.sigma_hi,
                                         2.0, 8)
    if hc_scale is not None:
        prior_vals = _half_cauchy_pdf(hc_scale)(s_nodes)
    else:
        prior_vals = (s_nodes ** (-(2.0 * a_i + 1.0))
                      * np.exp(-b_i / np.square(s_nodes)))
    norm = (2.0 * math.pi * np.square(s_nodes)) ** (-0.5 * q_i)
    table = np.zeros_like(c_nodes)
    half_inv_sq = 0.5 / np.square(s_nodes)
    for dv, dw in zip(d_nodes, d_weights):
        em = mixing.exp_moment(0.5 * q_i,
                               np.outer(c_nodes, half_inv_sq), dv)
        table += dw * (em @ (s_weights * prior_vals * norm))
    ones = np.ones(1)
    return kernels.mix_table_accumulate(
        np.ascontiguousarray(S.ravel()),
        np.zeros(S.size), ones, ones, np.zeros(1), ones,
        oct_lo, grid.table_per_octave, table)


def _factor_g_fsn(family, shape_prior, q_i, a_i, b_i, hc_scale, x_nodes,
                  trunc, grid):
    """Transformed-normal factor via per-component (node, scale, shape) tables."""
    lam, wlam = _shape_nodes(shape_prior, family.lambda_domain, trunc, grid)
    s_nodes, s_weights = log_panel_nodes(
        trunc.sigma_lo, trunc.sigma_hi,
        grid.sigma_panels_per_octave, grid.sigma_order)
    if hc_scale is not None:
        prior_vals = _half_cauchy_pdf(hc_scale)(s_nodes)
    else:
        prior_vals = (s_nodes ** (-(2.0 * a_i + 1.0))
                      * np.exp(-b_i / np.square(s_nodes)))
    n_x, n_s, n_l = x_nodes.size, s_nodes.size, lam.size
    z = x_nodes[:, None] / s_nodes[None, :]
    phi = np.exp(-0.5 * np.square(z)) / math.sqrt(2.0 * math.pi)
    F = np.empty((n_x, n_s * n_l))
    for il in range(n_l):
        block = family.eval_at_normal(z, lam[il]) * phi / s_nodes[None, :]
        F[:, il * n_s:(il + 1) * n_s] = block
    w_sl = (wlam[:, None] * (s_weights * prior_vals)[None, :]).ravel()
    F = np.ascontiguousarray(F)
    return F, w_sl


# ---------------------------------------------------------------------------
# Main evaluation
# ---------------------------------------------------------------------------

def _check_desk_scale(spec):
    if (spec.n > DESK_LIMITS["n"] or spec.p > DESK_LIMITS["p"]
            or spec.q > DESK_LIMITS["q"] or spec.r > DESK_LIMITS["r"]):
        raise ScaleLimitError(
            f"oracle refuses n={spec.n}, p={spec.p}, q={spec.q}, r={spec.r}; "
            f"limits are {DESK_LIMITS}")


def _u_axis(trunc, grid, data_scale):
    """Per-dimension quadrature nodes on [-U, U].

    Panels double away from the origin down to half the sigma floor, so
    any density spike the scale box can produce is resolved. Full order
    is spent only on panels near the data scale, where the likelihood has
    Gaussian-shaped structure; the remaining panels see smooth power-law
    behavior and get the cheaper outer order.
    """
    r_min = min(0.5 * trunc.sigma_lo, 0.125 * trunc.u_halfwidth)
    edges = symmetric_u_edges(r_min, trunc.u_halfwidth)
    edges = _split_edges(edges, grid.panel_split)
    fine_hi = 16.0 * data_scale
    fine_lo = 0.003 * data_scale
    nodes, weights = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        top = max(abs(lo), abs(hi))
        core = fine_lo <= top <= fine_hi
        x, w = panel_nodes(np.array([lo, hi]),
                           grid.u_order if core else grid.u_outer_order)
        nodes.append(x)
        weights.append(w)
    return np.concatenate(nodes), np.concatenate(weights)


def _factor_params(spec, i):
    prior = spec.prior
    if prior.variant == "power-exp":
        return float(prior.a_i(i + 1)), float(prior.b_i(i + 1)), None
    return 0.0, 0.0, prior.s[i]


def _marginal_value(spec, y, trunc, grid, variant="exact"):
    _check_desk_scale(spec)
    fam = spec.re_family
    if variant != "exact" and not isinstance(fam, TpnEffects):
        raise ConfigurationError(
            "bounds are defined for the two-piece family only")
    y = np.asarray(y, dtype=float).ravel()
    if y.size != spec.n:
        raise DomainError(f"y has {y.size} entries, expected {spec.n}")
    n, p, q, r = spec.n, spec.p, spec.q, spec.r
    W, sv = x_basis(spec.X)
    b0 = W.T @ y
    Mz = W.T @ spec.Z
    qc = float(y @ y - b0 @ b0)
    ql = spec.Z.T @ y - Mz.T @ b0
    Qm = spec.Z.T @ spec.Z - Mz.T @ Mz

    # grid axes live in the eigenbasis of the projected design Gram matrix
    # so the likelihood's quadratic form is axis-separable (its flat and
    # steep directions would otherwise run diagonally through a tensor
    # grid and defeat it). The transformed-normal family needs per-axis
    # component separability instead and keeps the plain basis.
    if isinstance(fam, FsnEffects):
        R = np.eye(q)
    else:
        _, R = np.linalg.eigh(Qm)
    ql_v = R.T @ ql
    Qm_v = R.T @ Qm @ R
    Mz_v = Mz @ R

    data_scale = max(1.0, float(np.max(np.abs(y))),
                     math.sqrt(max(qc, 0.0) / max(n - p, 1)))
    nodes, nw = _u_axis(trunc, grid, data_scale)
    grids = np.meshgrid(*([nodes] * q), indexing="ij", sparse=True)
    full_shape = [nodes.size] * q

    # per-factor scale/shape-integrated density, combined across factors
    G = np.ones([1] * q)
    for i, (q_i, sl) in enumerate(zip(spec.factor_sizes,
                                      spec.factor_slices())):
        a_i, b_i, hc_scale = _factor_params(spec, i)
        if isinstance(fam, FsnEffects):
            F, w_sl = _factor_g_fsn(fam.family, fam.shape_prior, q_i, a_i,
                                    b_i, hc_scale, nodes, trunc, grid)
            sub = kernels.factor_product_reduce([F] * q_i, w_sl)
            shape = [1] * q
            for d in range(sl.start, sl.stop):
                shape[d] = nodes.size
            G = G * sub.reshape(shape)
            continue
        comps = [sum(R[k, d] * grids[d] for d in range(q))
                 for k in range(sl.start, sl.stop)]
        if isinstance(fam, (TpnEffects, NormalEffects)):
            Sa = np.zeros(full_shape)
            Sb = np.zeros(full_shape)
            for ck in comps:
                sq = np.square(ck)
                Sa = Sa + np.where(ck >= 0, sq, 0.0)
                Sb = Sb + np.where(ck < 0, sq, 0.0)
            if isinstance(fam, NormalEffects):
                from .distributions import EPSILON_SKEW
                from .model import ShapePrior
                param, sp = EPSILON_SKEW, ShapePrior.point_mass(0.0)
            else:
                param, sp = fam.param, fam.shape_prior
            sub = _factor_g_tpn(param, sp, q_i, a_i, b_i, hc_scale, Sa, Sb,
                                trunc, grid, variant)
        elif isinstance(fam, SmnEffects):
            S = np.zeros(full_shape)
            for ck in comps:
                S = S + np.square(ck)
            sub = _factor_g_smn(fam.mixing, fam.shape_prior, q_i, a_i, b_i,
                                hc_scale, S, trunc, grid)
        else:
            raise ConfigurationError(f"unsupported family {fam!r}")
        del comps
        G = G * sub.reshape(full_shape)

    # u-panel weights
    for d in range(q):
        shape = [1] * q
        shape[d] = nodes.size
        G = G * nw.reshape(shape)

    # residual quadratic form and projected fixed-effect means on the grid
    Q = np.full([1] * q, qc)
    for d in range(q):
        Q = Q - 2.0 * ql_v[d] * grids[d]
        for e in range(q):
            if abs(Qm_v[d, e]) > 1e-14 * max(1.0, abs(Qm_v[d, d])):
                Q = Q + Qm_v[d, e] * grids[d] * grids[e]
    Q = np.maximum(np.broadcast_to(Q, full_shape), 0.0)

    bhat = np.empty((p, nodes.size ** q))
    for j in range(p):
        bj = np.full([1] * q, b0[j])
        for d in range(q):
            bj = bj - Mz_v[j, d] * grids[d]
        bhat[j] = np.broadcast_to(bj, full_shape).ravel()

    # residual scale integrated exactly per u point (table in Q + 2 b0),
    # then the beta-box clipping subtracted numerically over the scales
    # where the box can bind
    a0 = float(spec.prior.a0)
    b0_prior = float(spec.prior.b[0]) if spec.prior.variant == "power-exp" \
        else 0.0
    const = math.exp(-0.5 * (n - p) * _LOG_2PI - float(np.sum(np.log(sv))))
    nu0 = n - p + 2.0 * a0
    Gw = np.ascontiguousarray(G.ravel())
    Qf = np.ascontiguousarray(Q.ravel())
    c_shift = 2.0 * b0_prior
    c_lo = max(float(Qf.min()) + c_shift, 1e-280)
    c_hi = max(float(Qf.max()) + c_shift, 2.0 * c_lo)
    c_nodes, oct_lo = _octave_grid(c_lo, c_hi, grid.table_per_octave)
    table0 = _power_scale_table(nu0, trunc.sigma_lo, trunc.sigma_hi, c_nodes)
    ones = np.ones(1)
    scale_int = kernels.mix_table_accumulate(
        Qf, np.zeros_like(Qf), ones, np.zeros(1), np.array([c_shift]),
        ones, oct_lo, grid.table_per_octave, table0)
    value = const * float(Gw @ scale_int)

    B = trunc.beta_halfwidth
    bmax = float(np.max(np.abs(bhat))) if bhat.size else 0.0
    sig_floor = trunc.sigma_lo if bmax >= B else \
        max(trunc.sigma_lo, 0.125 * (B - bmax))
    if sig_floor < trunc.sigma_hi:
        s0, w0 = log_panel_nodes(sig_floor, trunc.sigma_hi,
                                 grid.sigma_panels_per_octave,
                                 grid.sigma_order)
        w0 = w0 * s0 ** (-(nu0 + 1.0)) * const
        if b0_prior:
            w0 = w0 * np.exp(-b0_prior / np.square(s0))
        value -= kernels.box_clip_correction(
            Gw, Qf, np.ascontiguousarray(bhat), B, s0, w0)

    if not np.isfinite(value):
        raise NumericalError(f"non-finite truncated marginal ({value})",
                             partial=value)
    return float(value)


def marginal_truncated(spec, y, truncation, grid=None):
    """Truncated-box marginal density of the data. See module docstring."""
    grid = grid or GridSpec()
    value = _marginal_value(spec, y, truncation, grid)
    return MarginalEstimate(value, truncation, 0.0, grid)


def bounding_integrals(spec, y, truncation, grid=None):
    """Lower/upper bounding integrals for the two-piece hierarchy.

    Replaces each two-piece factor with its pointwise normal bounds (scale
    sigma*min(a,b) below, sigma*(a+b) above, both keeping the exact
    prefactor; exp(-b/sigma^2) relaxed through m and M). Same truncated
    box, all constants baked in, so lower <= marginal <= upper holds
    integral-by-integral.
    """
    if not isinstance(spec.re_family, TpnEffects):
        raise ConfigurationError("bounding integrals require the two-piece "
                                 "random-effects family")
    grid = grid or GridSpec()
    lower = _marginal_value(spec, y, truncation, grid, variant="lower")
    upper = _marginal_value(spec, y, truncation, grid, variant="upper")
    return lower, upper


# ---------------------------------------------------------------------------
# Normal-effects closed forms
# ---------------------------------------------------------------------------

def normal_profile_marginal(spec, y, sigmas):
    """Flat-beta Gaussian marginal at fixed scales (normal random effects).

    With V = sigma_0^2 I + Z D Z^T, D = diag of sigma_i^2 blocks:
    (2 pi)^(-(n-p)/2) |V|^(-1/2) |X^T V^-1 X|^(-1/2) exp(-Q/2) where Q is
    the V-metric residual quadratic form. beta and u are integrated over
    all of R^p x R^q.
    """
    y = np.asarray(y, dtype=float).ravel()
    sigmas = np.asarray(sigmas, dtype=float).ravel()
    if sigmas.size != spec.r + 1:
        raise DomainError(f"need {spec.r + 1} scales, got {sigmas.size}")
    if np.any(sigmas <= 0):
        raise DomainError("scales must be positive")
    n, p = spec.n, spec.p
    d = np.concatenate([np.full(q_i, s * s) for q_i, s in
                        zip(spec.factor_sizes, sigmas[1:])])
    V = sigmas[0] ** 2 * np.eye(n) + (spec.Z * d) @ spec.Z.T
    try:
        cf = cho_factor(V)
        Vi_y = cho_solve(cf, y)
        Vi_X = cho_solve(cf, spec.X)
        logdet_V = 2.0 * float(np.sum(np.log(np.diag(cf[0]))))
        XtViX = spec.X.T @ Vi_X
        cfx = cho_factor(XtViX)
        logdet_X = 2.0 * float(np.sum(np.log(np.diag(cfx[0]))))
        XtVi_y = spec.X.T @ Vi_y
        quad = float(y @ Vi_y - XtVi_y @ cho_solve(cfx, XtVi_y))
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"singular system in profile marginal: {exc}") \
            from None
    return math.exp(-0.5 * (n - p) * _LOG_2PI - 0.5 * logdet_V
                    - 0.5 * logdet_X - 0.5 * quad)


def normal_marginal_by_scale_quadrature(spec, y, truncation, grid=None):
    """Scale-prior quadrature of :func:`normal_profile_marginal`.

    Independent route to the normal-effects marginal over the same sigma
    box (beta and u integrated over full space); used to cross-check the
    gridded oracle and as the normal-model side of ratio identities.
    """
    grid = grid or GridSpec()
    prior = spec.prior
    s_nodes, s_weights = log_panel_nodes(
        truncation.sigma_lo, truncation.sigma_hi,
        grid.sigma_panels_per_octave, grid.sigma_order)
    axes_nodes = [s_nodes] * (spec.r + 1)
    axes_weights = []
    a0 = float(prior.a0)
    w0 = s_weights * s_nodes ** (-(2.0 * a0 + 1.0))
    if prior.variant == "power-exp" and float(prior.b[0]):
        w0 = w0 * np.exp(-float(prior.b[0]) / np.square(s_nodes))
    axes_weights.append(w0)
    for i in range(1, spec.r + 1):
        if prior.variant == "power-exp":
            wi = s_weights * s_nodes ** (-(2.0 * float(prior.a_i(i)) + 1.0))
            if float(prior.b_i(i)):
                wi = wi * np.exp(-float(prior.b_i(i)) / np.square(s_nodes))
        else:
            wi = s_weights * _half_cauchy_pdf(prior.s[i - 1])(s_nodes)
        axes_weights.append(wi)
    total = 0.0
    for idx in np.ndindex(*[a.size for a in axes_nodes]):
        sig = [axes_nodes[d][idx[d]] for d in range(spec.r + 1)]
        w = math.prod(axes_weights[d][idx[d]] for d in range(spec.r + 1))
        total += w * normal_profile_marginal(spec, y, sig)
    return total


# ---------------------------------------------------------------------------
# Propriety probe
# ---------------------------------------------------------------------------

def default_schedule(spec, y, levels=8):
    """Expanding truncations: sigma in [e^-k, e^k] at level k, with the
    beta and u box edges doubling per level from a data-magnitude base."""
    y = np.asarray(y, dtype=float).ravel()
    W, _ = x_basis(spec.X)
    b0 = W.T @ y
    resid2 = sse(y, spec.X)
    shat = math.sqrt(resid2 / max(spec.n - spec.p, 1)) if resid2 > 0 else 1.0
    beta0 = max(1.0, float(np.max(np.abs(b0))) + 2.0 * shat)
    u0 = max(1.0, float(np.max(np.abs(y - y.mean()))), 2.0 * shat)
    # box bases rounded up to powers of two: nested grids then share every
    # panel edge and systematic quadrature error cancels level-to-level
    beta0 = 2.0 ** math.ceil(math.log2(beta0))
    u0 = 2.0 ** math.ceil(math.log2(u0))
    return [Truncation(math.exp(-k), math.exp(k), beta0 * 2.0 ** k,
                       u0 * 2.0 ** k, level=k)
            for k in range(1, levels + 1)]


#: relative slack when testing increments for the non-decreasing pattern
_DIVERGE_SLACK = 0.02


def propriety_probe(spec, y, schedule=None, grid=None, tol=1e-3):
    """Classify finiteness of the marginal from its truncation trace.

    CONVERGES: last two relative increments below ``tol``. DIVERGES: the
    last three increments are non-decreasing (within a small relative
    slack for quadrature noise) while the value is still moving. Anything
    else is INCONCLUSIVE.
    """
    y = np.asarray(y, dtype=float).ravel()
    if sse(y, spec.X) <= 0.0:
        raise DomainError("probe requires a sample with positive residual "
                          "sum of squares")
    schedule = schedule if schedule is not None else default_schedule(spec, y)
    grid = grid or GridSpec()
    values = []
    trace = []
    for trunc in schedule:
        val = _marginal_value(spec, y, trunc, grid)
        values.append(val)
        trace.append((trunc.level, val))
    values = np.asarray(values)
    incs = np.maximum(np.diff(values), 0.0)
    rel = incs / np.maximum(values[1:], np.finfo(float).tiny)
    outcome = "INCONCLUSIVE"
    if rel.size >= 2 and rel[-1] < tol and rel[-2] < tol:
        outcome = "CONVERGES"
    elif incs.size >= 3:
        nondecreasing = (incs[-1] >= incs[-2] * (1.0 - _DIVERGE_SLACK)
                         and incs[-2] >= incs[-3] * (1.0 - _DIVERGE_SLACK))
        if nondecreasing and incs[-1] > 0.0:
            outcome = "DIVERGES"
    return ProbeVerdict(outcome, tuple(trace), tuple(float(x) for x in rel),
                        tol)
