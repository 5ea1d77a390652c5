"""Metropolis-within-Gibbs posterior sampling.

Exact conditional draws wherever the hierarchy allows them (fixed effects,
residual scale, two-piece random effects and their scales, half-Cauchy
scales through an inverse-gamma auxiliary), random-walk Metropolis on
unconstrained transforms for everything else (transformed-normal
components, shape parameters). Proposal scales adapt by Robbins-Monro
during burn-in only and are frozen afterwards.

Chains refuse to run unless the instance passed a PROPER verdict (or the
caller explicitly overrides). RNG streams derive from (seed, chain_index),
so multi-chain runs reproduce regardless of scheduling.
"""

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import log_ndtr
from scipy.stats import truncnorm

from .errors import (ConfigurationError, ProprietyGateError, SamplerError)
from .model import FsnEffects, NormalEffects, SmnEffects, TpnEffects
from .propriety import PROPER, check_model

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)

TARGET_ACCEPT = 0.44  # scalar random-walk target


@dataclass
class ChainOutput:
    """Posterior draws plus bookkeeping.

    ``draws`` maps block names to arrays with one row per kept iteration:
    ``beta`` (N, p), ``u`` (N, q), ``sigma0`` (N,), ``sigma`` (N, r), and
    ``shape`` (N, r) for families with a shape parameter.
    """

    draws: dict
    seed: int
    chain_index: int
    iterations: int
    burn_in: int
    acceptance_rates: dict
    shape_name: Optional[str]
    diagnostics: Optional[dict] = None

    def __len__(self):
        return self.draws["sigma0"].shape[0]

    def column_names(self):
        names = [f"beta_{j}" for j in range(self.draws["beta"].shape[1])]
        names += [f"u_{k}" for k in range(self.draws["u"].shape[1])]
        names += ["sigma_0"]
        names += [f"sigma_{i + 1}" for i in
                  range(self.draws["sigma"].shape[1])]
        if self.shape_name:
            names += [f"{self.shape_name}_{i + 1}" for i in
                      range(self.draws["shape"].shape[1])]
        return names

    def flat(self):
        cols = [self.draws["beta"], self.draws["u"],
                self.draws["sigma0"][:, None], self.draws["sigma"]]
        if self.shape_name:
            cols.append(self.draws["shape"])
        return np.hstack(cols)

    def to_csv(self, path):
        mat = self.flat()
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(",".join(self.column_names()) + "\n")
            for row in mat:
                fh.write(",".join(repr(v) for v in row) + "\n")


class _RwBlock:
    """Scalar random-walk proposal with burn-in-only scale adaptation."""

    def __init__(self, scale=0.5):
        self.log_scale = math.log(scale)
        self.tries = 0
        self.accepts = 0
        self.kept_tries = 0
        self.kept_accepts = 0

    @property
    def scale(self):
        return math.exp(self.log_scale)

    def record(self, accepted, adapting):
        self.tries += 1
        if adapting:
            step = (self.tries + 10.0) ** -0.6
            self.log_scale += step * ((1.0 if accepted else 0.0)
                                      - TARGET_ACCEPT)
            self.log_scale = min(max(self.log_scale, -12.0), 12.0)
        else:
            self.kept_tries += 1
            self.kept_accepts += int(accepted)
        if accepted:
            self.accepts += 1

    @property
    def kept_rate(self):
        if self.kept_tries == 0:
            return float("nan")
        return self.kept_accepts / self.kept_tries


def _transform_for(support):
    """(to_unconstrained, to_constrained, log_jacobian(constrained))."""
    lo, hi = support
    if math.isfinite(lo) and math.isfinite(hi):
        mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)

        def fwd(x):
            return math.atanh(min(max((x - mid) / half, -1 + 1e-15),
                                  1 - 1e-15))

        def inv(z):
            return mid + half * math.tanh(z)

        def logj(x):
            t = (x - mid) / half
            return math.log(half * max(1.0 - t * t, 1e-300))

        return fwd, inv, logj
    if math.isfinite(lo) and lo == 0.0:
        return (lambda x: math.log(x), lambda z: math.exp(z),
                lambda x: math.log(x))
    return (lambda x: x, lambda z: z, lambda x: 0.0)


def _draw_invgamma(rng, shape, scale):
    """sigma^2 ~ InvGamma(shape, scale); returns sigma."""
    if shape <= 0 or scale <= 0:
        raise SamplerError(
            f"inverse-gamma conditional undefined (shape={shape}, "
            f"scale={scale}); the instance is not proper enough to sample")
    g = rng.gamma(shape, 1.0)
    return math.sqrt(scale / g)


def _draw_trunc_normal(rng, mean, sd, lo, hi):
    a, b = (lo - mean) / sd, (hi - mean) / sd
    return float(truncnorm.rvs(a, b, loc=mean, scale=sd, random_state=rng))


def _tpn_u_draw(rng, m, lam, sig_i, a_sc, b_sc):
    """Exact draw from Gaussian-likelihood x two-piece-prior conditional.

    The conditional is a two-component mixture: a Gaussian truncated to
    (-inf, 0) at prior scale sigma*b and one on [0, inf) at sigma*a.
    ``lam`` is the likelihood precision, ``m`` its mean; lam = 0 means no
    likelihood information (prior draw).
    """
    tau_m = sig_i * b_sc
    tau_p = sig_i * a_sc
    logw = np.empty(2)
    mom = []
    for idx, (tau, sign) in enumerate(((tau_m, -1.0), (tau_p, 1.0))):
        prec = lam + 1.0 / (tau * tau)
        mu = lam * m / prec
        z = mu * math.sqrt(prec)
        logw[idx] = 0.5 * mu * mu * prec - 0.5 * math.log(prec) \
            + log_ndtr(-z if sign < 0 else z)
        mom.append((mu, 1.0 / math.sqrt(prec)))
    logw -= logw.max()
    w = np.exp(logw)
    w /= w.sum()
    if rng.random() < w[0]:
        mu, sd = mom[0]
        return _draw_trunc_normal(rng, mu, sd, -np.inf, 0.0)
    mu, sd = mom[1]
    return _draw_trunc_normal(rng, mu, sd, 0.0, np.inf)


def _fsn_log_kernel(family, u, sig_i, lam):
    z = u / sig_i
    if family.log_p_at_normal is not None:
        lp = float(family.log_p_at_normal(z, lam))
    else:
        val = float(family.eval_at_normal(z, lam))
        lp = math.log(val) if val > 0 else -math.inf
    return lp - 0.5 * z * z - _LOG_SQRT_2PI - math.log(sig_i)


def _tpn_log_kernel(param, u, sig_i, gam):
    a = float(param.a(gam))
    b = float(param.b(gam))
    c = b if u < 0 else a
    z = u / (sig_i * c)
    return math.log(2.0) - math.log(sig_i * (a + b)) \
        - 0.5 * z * z - _LOG_SQRT_2PI


def mwg_sample(spec, y, iterations, burn_in, seed, tuning=None, *,
               allow_improper=False, chain_index=0, fixed=None):
    """Run one Metropolis-within-Gibbs chain. Deterministic given seed.

    ``fixed`` optionally freezes blocks (keys ``sigma0``, ``sigma``,
    ``shape``) at given values, which turns the normal sub-case fully
    conjugate; meant for validation runs, not routine use.
    """
    fam = spec.re_family
    if isinstance(fam, SmnEffects):
        raise ConfigurationError(
            "sampler covers the normal, two-piece, and transformed-normal "
            "hierarchies; scale mixtures are analysis-only")
    if not allow_improper:
        verdict = check_model(spec, y)
        if verdict.overall != PROPER:
            raise ProprietyGateError(
                f"instance is {verdict.overall}, not PROPER; pass "
                "allow_improper=True to sample anyway")
    y = np.asarray(y, dtype=float).ravel()
    n, p, q, r = spec.n, spec.p, spec.q, spec.r
    X, Z = spec.X, spec.Z
    prior = spec.prior
    fixed = fixed or {}
    rng = np.random.default_rng([int(seed), int(chain_index)])

    XtX = X.T @ X
    Lx = np.linalg.cholesky(XtX)
    z_norm2 = np.sum(Z * Z, axis=0)
    slices = spec.factor_slices()
    factor_of = np.concatenate([np.full(q_i, i) for i, q_i in
                                enumerate(spec.factor_sizes)])

    a0 = float(prior.a0)
    power = prior.variant == "power-exp"
    b_prior = [float(b) for b in prior.b] if power else [0.0] * (r + 1)
    a_prior = [float(a) for a in prior.a] if power else [a0] + [0.0] * r

    has_shape = isinstance(fam, (TpnEffects, FsnEffects))
    if isinstance(fam, TpnEffects):
        shape_name = "gamma"
        shape_prior = fam.shape_prior
        shape_domain = fam.param.gamma_domain
    elif isinstance(fam, FsnEffects):
        shape_name = "lambda"
        shape_prior = fam.shape_prior
        shape_domain = fam.family.lambda_domain
    else:
        shape_name = None

    # initial state: least squares, zero effects, residual-scale sigmas
    beta = np.linalg.lstsq(X, y, rcond=None)[0]
    resid0 = y - X @ beta
    shat = float(np.sqrt(max(resid0 @ resid0, 1e-12) / max(n - p, 1)))
    u = np.zeros(q)
    sig0 = fixed.get("sigma0", shat)
    sig = np.asarray(fixed.get("sigma", np.full(r, max(shat, 1e-3))),
                     dtype=float).copy()
    xi = np.ones(r)
    if has_shape:
        if "shape" in fixed:
            shp = np.asarray(fixed["shape"], dtype=float).copy()
        elif shape_prior.is_point_mass:
            shp = np.full(r, shape_prior.point)
        else:
            lo, hi = shape_prior.support
            start = fam.param.symmetric_point \
                if isinstance(fam, TpnEffects) else 0.0
            if start is None or not (lo < start < hi):
                start = 0.5 * (max(lo, -1e3) + min(hi, 1e3))
            shp = np.full(r, float(start))
    else:
        shp = np.zeros(0)

    fix_sigma0 = "sigma0" in fixed
    fix_sigma = "sigma" in fixed
    fix_shape = "shape" in fixed or not has_shape or \
        (has_shape and shape_prior.is_point_mass)

    u_blocks = [_RwBlock(0.5) for _ in range(q)]
    shape_blocks = [_RwBlock(0.3) for _ in range(r)]
    sig_blocks = [_RwBlock(0.4) for _ in range(r)]
    if has_shape and not fix_shape:
        s_fwd, s_inv, s_logj = _transform_for(shape_prior.support)

    keep = iterations - burn_in
    if keep <= 0:
        raise ConfigurationError("iterations must exceed burn_in")
    out = {
        "beta": np.empty((keep, p)),
        "u": np.empty((keep, q)),
        "sigma0": np.empty(keep),
        "sigma": np.empty((keep, r)),
    }
    if has_shape:
        out["shape"] = np.empty((keep, r))

    def state_dump():
        return {"beta": beta.tolist(), "u": u.tolist(), "sigma0": sig0,
                "sigma": sig.tolist(), "shape": shp.tolist()}

    resid = y - X @ beta - Z @ u
    for it in range(iterations):
        adapting = it < burn_in

        # fixed effects: exact Gaussian draw
        resid_b = resid + X @ beta
        rhs = X.T @ resid_b
        bhat = np.linalg.solve(XtX, rhs)
        noise = np.linalg.solve(Lx.T, rng.standard_normal(p))
        beta = bhat + sig0 * noise
        resid = resid_b - X @ beta

        # residual scale: exact inverse-gamma draw
        if not fix_sigma0:
            rss = float(resid @ resid)
            sig0 = _draw_invgamma(rng, 0.5 * (n + 2.0 * a0),
                                  b_prior[0] + 0.5 * rss)

        # random effects, one component at a time
        for k in range(q):
            i = factor_of[k]
            zk = Z[:, k]
            resid_k = resid + zk * u[k]
            if z_norm2[k] > 0:
                lam = z_norm2[k] / (sig0 * sig0)
                m_k = float(zk @ resid_k) / z_norm2[k]
            else:
                lam, m_k = 0.0, 0.0
            if isinstance(fam, NormalEffects):
                prec = lam + 1.0 / (sig[i] * sig[i])
                mu = lam * m_k / prec
                u[k] = mu + rng.standard_normal() / math.sqrt(prec)
            elif isinstance(fam, TpnEffects):
                u[k] = _tpn_u_draw(rng, m_k, lam, sig[i],
                                   float(fam.param.a(shp[i])),
                                   float(fam.param.b(shp[i])))
            else:
                blk = u_blocks[k]
                prop = u[k] + blk.scale * rng.standard_normal()
                cur = _fsn_log_kernel(fam.family, u[k], sig[i], shp[i]) \
                    - 0.5 * lam * (u[k] - m_k) ** 2
                new = _fsn_log_kernel(fam.family, prop, sig[i], shp[i]) \
                    - 0.5 * lam * (prop - m_k) ** 2
                accept = math.log(rng.random() + 1e-300) < new - cur
                if accept:
                    u[k] = prop
                blk.record(accept, adapting)
            resid = resid_k - zk * u[k]

        # factor scales
        if not fix_sigma:
            for i, sl in enumerate(slices):
                ui = u[sl]
                if isinstance(fam, (NormalEffects, TpnEffects)):
                    if isinstance(fam, TpnEffects):
                        a_sc = float(fam.param.a(shp[i]))
                        b_sc = float(fam.param.b(shp[i]))
                        c = np.where(ui < 0, b_sc, a_sc)
                        s_sum = float(np.sum((ui / c) ** 2))
                    else:
                        s_sum = float(ui @ ui)
                    if power:
                        sig[i] = _draw_invgamma(
                            rng,
                            0.5 * (len(ui) + 2.0 * a_prior[i + 1]),
                            b_prior[i + 1] + 0.5 * s_sum)
                    else:
                        sig[i] = _draw_invgamma(
                            rng, 0.5 * (len(ui) + 1.0),
                            0.5 * s_sum + 1.0 / xi[i])
                        # xi | sigma ~ InvGamma(1, 1/sigma^2 + 1/s^2)
                        g = max(rng.gamma(1.0, 1.0), 1e-300)
                        xi[i] = (1.0 / (sig[i] * sig[i])
                                 + 1.0 / prior.s[i] ** 2) / g
                else:
                    # transformed-normal scale: random walk on log sigma
                    blk = sig_blocks[i]
                    cur_s = sig[i]
                    prop_s = cur_s * math.exp(blk.scale
                                              * rng.standard_normal())

                    def log_target(s):
                        val = sum(_fsn_log_kernel(fam.family, uk, s, shp[i])
                                  for uk in ui)
                        if power:
                            val += -(2.0 * a_prior[i + 1] + 1.0) \
                                * math.log(s) - b_prior[i + 1] / (s * s)
                        else:
                            val += -math.log(1.0 + (s / prior.s[i]) ** 2)
                        return val + math.log(s)  # log-scale jacobian

                    accept = math.log(rng.random() + 1e-300) < \
                        log_target(prop_s) - log_target(cur_s)
                    if accept:
                        sig[i] = prop_s
                    blk.record(accept, adapting)

        # shape parameters on unconstrained transforms
        if not fix_shape:
            for i, sl in enumerate(slices):
                ui = u[sl]
                blk = shape_blocks[i]
                z_cur = s_fwd(shp[i])
                z_prop = z_cur + blk.scale * rng.standard_normal()
                prop = s_inv(z_prop)

                def log_target(val):
                    if isinstance(fam, TpnEffects):
                        if not fam.param.contains(val):
                            return -math.inf
                        core = sum(_tpn_log_kernel(fam.param, uk, sig[i], val)
                                   for uk in ui)
                    else:
                        core = sum(_fsn_log_kernel(fam.family, uk, sig[i],
                                                   val) for uk in ui)
                    dens = shape_prior.pdf(val)
                    if not dens > 0:
                        return -math.inf
                    return core + math.log(dens) + s_logj(val)

                accept = math.log(rng.random() + 1e-300) < \
                    log_target(prop) - log_target(shp[i])
                if accept:
                    shp[i] = prop
                blk.record(accept, adapting)

        if not (np.all(np.isfinite(beta)) and np.all(np.isfinite(u))
                and math.isfinite(sig0) and np.all(np.isfinite(sig))):
            raise SamplerError(f"non-finite state at iteration {it}",
                               state=state_dump())

        if it >= burn_in:
            j = it - burn_in
            out["beta"][j] = beta
            out["u"][j] = u
            out["sigma0"][j] = sig0
            out["sigma"][j] = sig
            if has_shape:
                out["shape"][j] = shp

    acc = {}
    for k, blk in enumerate(u_blocks):
        if blk.tries:
            acc[f"u_{k}"] = blk.kept_rate
    for i, blk in enumerate(sig_blocks):
        if blk.tries:
            acc[f"sigma_{i + 1}"] = blk.kept_rate
    for i, blk in enumerate(shape_blocks):
        if blk.tries:
            acc[f"{shape_name}_{i + 1}"] = blk.kept_rate
    return ChainOutput(out, seed, chain_index, iterations, burn_in, acc,
                       shape_name)


# ---------------------------------------------------------------------------
# Diagnostics
# ---------------------------------------------------------------------------

def effective_sample_size(x):
    """ESS from the initial positive-pair autocorrelation sum (Geyer)."""
    x = np.asarray(x, dtype=float).ravel()
    n = x.size
    if n < 4:
        return float("nan")
    x = x - x.mean()
    var0 = float(x @ x) / n
    if var0 == 0.0:
        return float("nan")
    nfft = int(2 ** np.ceil(np.log2(2 * n)))
    f = np.fft.rfft(x, nfft)
    acov = np.fft.irfft(f * np.conj(f))[:n].real / n
    rho = acov / acov[0]
    tau = 1.0
    m = 1
    while m + 1 < n:
        pair = rho[m] + rho[m + 1]
        if pair <= 0:
            break
        tau += 2.0 * pair
        m += 2
    return float(n / tau)


def split_rhat(per_chain):
    """Split-chain potential scale reduction for one scalar parameter."""
    halves = []
    for x in per_chain:
        x = np.asarray(x, dtype=float).ravel()
        mid = x.size // 2
        halves.extend([x[:mid], x[mid:2 * mid]])
    n2 = min(h.size for h in halves)
    if n2 < 2:
        return float("nan")
    halves = np.stack([h[:n2] for h in halves])
    W = float(np.mean(np.var(halves, axis=1, ddof=1)))
    B = n2 * float(np.var(np.mean(halves, axis=1), ddof=1))
    if W == 0.0:
        return float("nan")
    var_plus = (n2 - 1.0) / n2 * W + B / n2
    return float(math.sqrt(var_plus / W))


def diagnostics(chains):
    """Per-parameter ESS and split scale-reduction report.

    One chain gives a degraded report (ESS only) with a warning; chains
    must share lengths and column layouts. Constant parameters are
    flagged rather than scored.
    """
    if isinstance(chains, ChainOutput):
        chains = [chains]
    if not chains:
        raise ConfigurationError("need at least one chain")
    names = chains[0].column_names()
    mats = [c.flat() for c in chains]
    if any(m.shape != mats[0].shape for m in mats):
        raise ConfigurationError("chains must have equal lengths and layout")
    degraded = len(chains) < 2
    if degraded:
        warnings.warn("single chain: scale-reduction unavailable, "
                      "ESS only", stacklevel=2)
    report = {"n_chains": len(chains), "n_draws": mats[0].shape[0],
              "degraded": degraded, "parameters": {}}
    for j, name in enumerate(names):
        cols = [m[:, j] for m in mats]
        ess = float(np.nansum([effective_sample_size(c) for c in cols]))
        entry = {"ess": ess}
        constant = all(np.ptp(c) == 0.0 for c in cols)
        if constant:
            entry["flag"] = "constant chain: diagnostics undefined"
            entry["ess"] = float("nan")
            entry["rhat"] = float("nan")
        elif not degraded:
            entry["rhat"] = split_rhat(cols)
        report["parameters"][name] = entry
    return report


def diagnostics_json(report, indent=2):
    def _clean(v):
        if isinstance(v, float) and not math.isfinite(v):
            return None
        return v

    def walk(obj):
        if isinstance(obj, dict):
            return {k: walk(v) for k, v in obj.items()}
        return _clean(obj)

    return json.dumps(walk(report), indent=indent, sort_keys=True)
