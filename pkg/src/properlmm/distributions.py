"""Flexible random-effects distributions.

Three families built around the standard normal:

* two-piece normal: two differently scaled normal halves joined at the
  mode, with skewness driven by a pair of positive scale maps
  ``{a(gamma), b(gamma)}``;
* transformed normal ("FSN"): a density ``p`` on [0, 1] composed with the
  normal CDF, which skews or reshapes the normal while keeping its tails;
* scale mixtures of normals: a random precision multiplier ``tau`` drawn
  from a mixing distribution.

Everything here is immutable after construction; samplers take an explicit
``numpy.random.Generator`` owned by the caller.
"""

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import quad
from scipy.special import gammaln, log_ndtr, ndtr, ndtri

from .errors import DomainError, NumericalError

_SQRT_2PI = math.sqrt(2.0 * math.pi)


def _npdf(x):
    return np.exp(-0.5 * np.square(x)) / _SQRT_2PI


# ---------------------------------------------------------------------------
# Skew parameterisations {a(gamma), b(gamma)}
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SkewParameterisation:
    """A pair of positive scale maps on an open skewness domain.

    ``m`` bounds min{a, b} from above and ``M`` bounds a + b from below;
    both are needed by the propriety bounds. ``symmetric_point`` is the
    gamma at which a = b (the distribution reduces to the normal there).
    """

    name: str
    a: Callable
    b: Callable
    gamma_domain: tuple
    m: float
    M: float
    symmetric_point: Optional[float] = None

    def contains(self, gamma):
        lo, hi = self.gamma_domain
        return lo < gamma < hi

    def require(self, gamma):
        if not np.isfinite(gamma) or not self.contains(gamma):
            raise DomainError(
                f"gamma={gamma!r} outside open domain {self.gamma_domain} "
                f"of parameterisation '{self.name}'")

    def validation_grid(self, n=10_000):
        """Grid spanning the domain, approaching endpoints geometrically."""
        lo, hi = self.gamma_domain
        n_end = n // 4
        if np.isfinite(lo) and np.isfinite(hi):
            w = hi - lo
            interior = lo + w * np.linspace(0.02, 0.98, n - 2 * n_end)
            near_lo = lo + w * np.logspace(-12, -2, n_end)
            near_hi = hi - w * np.logspace(-12, -2, n_end)
            return np.unique(np.concatenate([near_lo, interior, near_hi]))
        lo_eff = lo if np.isfinite(lo) else -1e6
        if lo == 0.0:
            near_lo = np.logspace(-12, 0, 2 * n_end)
        else:
            near_lo = np.array([])
        hi_eff = min(hi, 1e6)
        interior = np.linspace(max(lo_eff, 1e-2), hi_eff, n - near_lo.size)
        return np.unique(np.concatenate([near_lo, interior]))


def validate_parameterisation(param, n_grid=10_000):
    """Check positivity and the m/M bounds on a dense domain grid.

    The bounds are checked non-strictly: the canonical parameterisations
    attain min{a,b} = m and a + b = M at isolated points, which does not
    affect any integral built from them.
    """
    g = param.validation_grid(n_grid)
    a = np.asarray(param.a(g), dtype=float)
    b = np.asarray(param.b(g), dtype=float)
    if not (np.all(a > 0) and np.all(b > 0)):
        raise DomainError(f"'{param.name}': a, b must be positive on the domain")
    if param.m <= 0 or param.M <= 0:
        raise DomainError(f"'{param.name}': bound constants must be positive")
    if np.any(np.minimum(a, b) > param.m * (1 + 1e-12)):
        raise DomainError(f"'{param.name}': min(a, b) exceeds m={param.m}")
    if np.any(a + b < param.M * (1 - 1e-12)):
        raise DomainError(f"'{param.name}': a + b drops below M={param.M}")
    return True


_PARAMETERISATIONS = {}


def register_parameterisation(param, n_grid=10_000):
    validate_parameterisation(param, n_grid)
    _PARAMETERISATIONS[param.name] = param
    return param


def get_parameterisation(name):
    try:
        return _PARAMETERISATIONS[name]
    except KeyError:
        raise DomainError(f"unknown parameterisation '{name}'; "
                          f"registered: {sorted(_PARAMETERISATIONS)}") from None


EPSILON_SKEW = register_parameterisation(SkewParameterisation(
    name="epsilon-skew",
    a=lambda g: 1.0 - np.asarray(g, dtype=float),
    b=lambda g: 1.0 + np.asarray(g, dtype=float),
    gamma_domain=(-1.0, 1.0),
    m=1.0,
    M=2.0,
    symmetric_point=0.0,
))

INVERSE_SCALE_FACTORS = register_parameterisation(SkewParameterisation(
    name="inverse-scale-factors",
    a=lambda g: np.asarray(g, dtype=float),
    b=lambda g: 1.0 / np.asarray(g, dtype=float),
    gamma_domain=(0.0, math.inf),
    m=1.0,
    M=2.0,
    symmetric_point=1.0,
))


def h_gamma(gamma, param):
    """min{a(gamma), b(gamma)}."""
    param.require(gamma)
    return float(min(param.a(gamma), param.b(gamma)))


def H_gamma(gamma, param):
    """a(gamma) + b(gamma)."""
    param.require(gamma)
    return float(param.a(gamma) + param.b(gamma))


# ---------------------------------------------------------------------------
# Two-piece normal
# ---------------------------------------------------------------------------

def tpn_pdf(u, mu, sigma, gamma, param):
    """Two-piece normal density at ``u`` (vectorized over ``u``).

    Density 2 / (sigma (a+b)) * phi((u-mu)/(sigma b)) left of the mode and
    the same with ``a`` on the right; reduces to N(mu, sigma^2) at a = b.
    """
    if sigma <= 0:
        raise DomainError(f"sigma must be positive, got {sigma}")
    param.require(gamma)
    a = float(param.a(gamma))
    b = float(param.b(gamma))
    u = np.asarray(u, dtype=float)
    z = (u - mu) / sigma
    scale = np.where(z < 0, b, a)
    out = 2.0 / (sigma * (a + b)) * _npdf(z / scale)
    return out if out.ndim else float(out)


def tpn_sample(rng, mu, sigma, gamma, param, size=None):
    """Exact draw(s): pick a side with mass b/(a+b) below the mode, then a
    half-normal at that side's scale. Deterministic given ``rng``."""
    if sigma <= 0:
        raise DomainError(f"sigma must be positive, got {sigma}")
    param.require(gamma)
    a = float(param.a(gamma))
    b = float(param.b(gamma))
    shape = () if size is None else size
    left = rng.random(shape) < b / (a + b)
    mag = np.abs(rng.standard_normal(shape))
    out = np.where(left, mu - sigma * b * mag, mu + sigma * a * mag)
    return out if np.ndim(out) else float(out)


# ---------------------------------------------------------------------------
# Transformed-normal (FSN) families
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FsnFamily:
    """A density ``p(t | lam)`` on [0, 1] used to reshape the normal.

    ``p_at_normal(x, lam)`` evaluates p(Phi(x) | lam) without the
    Phi/Phi^-1 round trip; families should supply it when a stable closed
    form exists (the generic path loses precision in the far tails).
    ``sup_bound`` is a finite supremum of p over [0,1] x Lambda when one
    exists; propriety results for this family require it.
    """

    name: str
    p: Callable
    lambda_domain: tuple
    sup_bound: Optional[float] = None
    p_at_normal: Optional[Callable] = None
    log_p_at_normal: Optional[Callable] = None

    def contains(self, lam):
        lo, hi = self.lambda_domain
        return lo <= lam <= hi

    def require(self, lam):
        if not np.isfinite(lam) or not self.contains(lam):
            raise DomainError(
                f"lambda={lam!r} outside domain {self.lambda_domain} "
                f"of family '{self.name}'")

    def eval_at_normal(self, x, lam):
        if self.p_at_normal is not None:
            return self.p_at_normal(x, lam)
        return self.p(ndtr(np.asarray(x, dtype=float)), lam)


UNIFORM_FSN = FsnFamily(
    name="uniform",
    p=lambda t, lam: np.ones_like(np.asarray(t, dtype=float)),
    lambda_domain=(-math.inf, math.inf),
    sup_bound=1.0,
    p_at_normal=lambda x, lam: np.ones_like(np.asarray(x, dtype=float)),
    log_p_at_normal=lambda x, lam: np.zeros_like(np.asarray(x, dtype=float)),
)

SKEW_NORMAL_FSN = FsnFamily(
    name="skew-normal",
    p=lambda t, lam: 2.0 * ndtr(lam * ndtri(np.asarray(t, dtype=float))),
    lambda_domain=(-math.inf, math.inf),
    sup_bound=2.0,
    p_at_normal=lambda x, lam: 2.0 * ndtr(lam * np.asarray(x, dtype=float)),
    log_p_at_normal=lambda x, lam: math.log(2.0)
    + log_ndtr(lam * np.asarray(x, dtype=float)),
)

FSN_FAMILIES = {f.name: f for f in (UNIFORM_FSN, SKEW_NORMAL_FSN)}


def fsn_pdf(u, mu, sigma, lam, family):
    """Transformed-normal density (1/sigma) p(Phi(z)|lam) phi(z), z=(u-mu)/sigma."""
    if sigma <= 0:
        raise DomainError(f"sigma must be positive, got {sigma}")
    family.require(lam)
    z = (np.asarray(u, dtype=float) - mu) / sigma
    out = family.eval_at_normal(z, lam) * _npdf(z) / sigma
    return out if np.ndim(out) else float(out)


def fsn_sample(rng, mu, sigma, lam, family, size=None):
    """Rejection sampler against the normal envelope (needs sup_bound)."""
    family.require(lam)
    if family.sup_bound is None:
        raise DomainError(f"family '{family.name}' has no finite sup bound; "
                          "rejection sampling unavailable")
    n = 1 if size is None else int(np.prod(size))
    out = np.empty(n)
    filled = 0
    while filled < n:
        z = rng.standard_normal(n - filled)
        accept = rng.random(n - filled) * family.sup_bound <= \
            family.eval_at_normal(z, lam)
        z = z[accept]
        out[filled:filled + z.size] = z
        filled += z.size
    out = mu + sigma * out
    if size is None:
        return float(out[0])
    return out.reshape(size)


# ---------------------------------------------------------------------------
# Scale mixtures of normals
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MixingDistribution:
    """Mixing law H(tau | delta) for the precision multiplier tau > 0.

    ``moment(s, delta)`` returns E[tau^s] (inf when it diverges) and
    ``exp_moment(s, c, delta)`` returns E[tau^s exp(-c tau)]; both are
    analytic for the built-ins. ``pdf`` enables a quadrature fallback for
    families without closed forms.
    """

    name: str
    delta_domain: tuple
    sample: Callable
    moment: Callable
    exp_moment: Optional[Callable] = None
    pdf: Optional[Callable] = None

    def require(self, delta):
        lo, hi = self.delta_domain
        if not (lo <= delta <= hi):
            raise DomainError(
                f"delta={delta!r} outside domain {self.delta_domain} "
                f"of mixing '{self.name}'")


POINT_MASS_MIXING = MixingDistribution(
    name="point-mass",
    delta_domain=(-math.inf, math.inf),
    sample=lambda rng, delta, size=None: np.ones(size) if size else 1.0,
    moment=lambda s, delta: 1.0,
    exp_moment=lambda s, c, delta: np.exp(-np.asarray(c, dtype=float)),
)


def _gamma_moment(s, delta):
    k = 0.5 * delta
    if k + s <= 0:
        return math.inf
    return math.exp(gammaln(k + s) - gammaln(k) - s * math.log(k))


def _gamma_exp_moment(s, c, delta):
    # E[tau^s e^{-c tau}], tau ~ Gamma(shape k, rate k), k = delta/2
    k = 0.5 * delta
    if k + s <= 0:
        return math.inf
    c = np.asarray(c, dtype=float)
    out = np.exp(k * math.log(k) + gammaln(k + s) - gammaln(k)
                 - (k + s) * np.log(k + c))
    return out if out.ndim else float(out)


GAMMA_MIXING = MixingDistribution(
    name="gamma",
    delta_domain=(0.0, math.inf),
    sample=lambda rng, delta, size=None: rng.gamma(0.5 * delta,
                                                   2.0 / delta, size),
    moment=_gamma_moment,
    exp_moment=_gamma_exp_moment,
    pdf=lambda tau, delta: np.exp(
        0.5 * delta * math.log(0.5 * delta) - gammaln(0.5 * delta)
        + (0.5 * delta - 1.0) * np.log(tau) - 0.5 * delta * tau),
)

MIXING_DISTRIBUTIONS = {m.name: m for m in (POINT_MASS_MIXING, GAMMA_MIXING)}


def smn_pdf(x, sigma, mixing, delta):
    """Density of a scale mixture of normals with covariance sigma^2 I.

    ``x`` is the whole (possibly multivariate) point; components share one
    precision multiplier, so the density depends on x through |x|^2 only.
    """
    if sigma <= 0:
        raise DomainError(f"sigma must be positive, got {sigma}")
    mixing.require(delta)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    q = x.size
    c = float(x @ x) / (2.0 * sigma * sigma)
    norm = (2.0 * math.pi * sigma * sigma) ** (-0.5 * q)
    if mixing.exp_moment is not None:
        return float(norm * mixing.exp_moment(0.5 * q, c, delta))
    if mixing.pdf is None:
        raise DomainError(f"mixing '{mixing.name}' provides neither "
                          "exp_moment nor pdf")

    def integrand(t):
        return t ** (0.5 * q) * math.exp(-c * t) * mixing.pdf(t, delta)

    val, err = quad(integrand, 0.0, np.inf, epsabs=1e-10, epsrel=1e-8,
                    limit=200)
    if not np.isfinite(val) or err > max(1e-8, 1e-6 * abs(val)):
        raise NumericalError(
            f"mixing quadrature did not converge (err={err:g})",
            partial=norm * val)
    return float(norm * val)


def smn_sample(rng, q, sigma, mixing, delta, size=None):
    """Draw q-vectors: tau from the mixing law, then N(0, sigma^2/tau I)."""
    mixing.require(delta)
    n = 1 if size is None else int(size)
    tau = np.asarray(mixing.sample(rng, delta, n), dtype=float).reshape(n, 1)
    z = rng.standard_normal((n, q))
    out = sigma * z / np.sqrt(tau)
    return out[0] if size is None else out
