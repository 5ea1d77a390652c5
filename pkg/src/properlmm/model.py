"""Model specification: design matrices, factor structure, priors.

Hyperparameters of the scale priors are held as exact rationals
(``fractions.Fraction``); floats are converted through their decimal string
so conditions stated as sharp inequalities can be evaluated with zero
tolerance.
"""

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence, Union

import numpy as np
from scipy import stats
from scipy.integrate import quad

from .distributions import (FsnFamily, MixingDistribution,
                            SkewParameterisation)
from .errors import ConstructionError, DimensionError, DomainError

RationalLike = Union[int, float, str, Fraction]


def as_fraction(x) -> Fraction:
    """Exact rational from an int, Fraction, or decimal string/float."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, float):
        return Fraction(repr(x))
    if isinstance(x, str):
        return Fraction(x)
    raise ConstructionError(f"cannot interpret {x!r} as a rational")


# ---------------------------------------------------------------------------
# Shape priors
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ShapePrior:
    """Proper prior for a shape parameter (gamma, lambda, or delta).

    Kinds: ``uniform`` (lo, hi), ``truncated-normal`` (loc, scale, lo, hi),
    ``gamma`` (shape, rate), ``point-mass`` (value).
    """

    kind: str
    params: tuple

    @classmethod
    def uniform(cls, lo, hi):
        if not lo < hi:
            raise ConstructionError("uniform prior needs lo < hi")
        return cls("uniform", (float(lo), float(hi)))

    @classmethod
    def truncated_normal(cls, loc, scale, lo, hi):
        if scale <= 0 or not lo < hi:
            raise ConstructionError("need scale > 0 and lo < hi")
        return cls("truncated-normal", (float(loc), float(scale),
                                        float(lo), float(hi)))

    @classmethod
    def gamma(cls, shape, rate):
        if shape <= 0 or rate <= 0:
            raise ConstructionError("gamma prior needs shape, rate > 0")
        return cls("gamma", (float(shape), float(rate)))

    @classmethod
    def point_mass(cls, value):
        return cls("point-mass", (float(value),))

    @property
    def is_point_mass(self):
        return self.kind == "point-mass"

    @property
    def point(self):
        if not self.is_point_mass:
            raise DomainError("not a point-mass prior")
        return self.params[0]

    @property
    def support(self):
        if self.kind == "uniform":
            return self.params
        if self.kind == "truncated-normal":
            return self.params[2:]
        if self.kind == "gamma":
            return (0.0, math.inf)
        return (self.params[0], self.params[0])

    def _frozen(self):
        if self.kind == "uniform":
            lo, hi = self.params
            return stats.uniform(lo, hi - lo)
        if self.kind == "truncated-normal":
            loc, scale, lo, hi = self.params
            return stats.truncnorm((lo - loc) / scale, (hi - loc) / scale,
                                   loc=loc, scale=scale)
        if self.kind == "gamma":
            shape, rate = self.params
            return stats.gamma(shape, scale=1.0 / rate)
        raise DomainError("point-mass prior has no continuous distribution")

    def pdf(self, x):
        if self.is_point_mass:
            raise DomainError("point-mass prior has no density")
        return self._frozen().pdf(x)

    def ppf(self, q):
        if self.is_point_mass:
            return self.point
        return self._frozen().ppf(q)

    def sample(self, rng, size=None):
        if self.is_point_mass:
            return np.full(size, self.point) if size else self.point
        return self._frozen().rvs(size=size, random_state=rng)

    def validate_proper(self, tol=1e-8):
        """Total mass within ``tol`` of one (trivial for point masses)."""
        if self.is_point_mass:
            return True
        lo, hi = self.support
        mass, _ = quad(self.pdf, lo, hi, epsabs=1e-10, epsrel=1e-10,
                       limit=200)
        if abs(mass - 1.0) > tol:
            raise ConstructionError(
                f"{self.kind} prior integrates to {mass}, not 1")
        return True


# ---------------------------------------------------------------------------
# Random-effects family declarations
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NormalEffects:
    kind = "normal"


@dataclass(frozen=True)
class TpnEffects:
    param: SkewParameterisation
    shape_prior: ShapePrior
    kind = "tpn"

    def __post_init__(self):
        lo, hi = self.shape_prior.support
        dlo, dhi = self.param.gamma_domain
        if self.shape_prior.is_point_mass:
            # domain endpoints are rejected: the density degenerates there
            inside = dlo < lo < dhi
        else:
            inside = dlo <= lo and hi <= dhi
        if not inside:
            raise DomainError(
                f"shape prior support {self.shape_prior.support} not inside "
                f"gamma domain {self.param.gamma_domain}")


@dataclass(frozen=True)
class FsnEffects:
    family: FsnFamily
    shape_prior: ShapePrior
    kind = "fsn"

    def __post_init__(self):
        lo, hi = self.shape_prior.support
        dlo, dhi = self.family.lambda_domain
        if not (dlo <= lo and hi <= dhi):
            raise DomainError(
                f"shape prior support {self.shape_prior.support} not inside "
                f"lambda domain {self.family.lambda_domain}")


@dataclass(frozen=True)
class SmnEffects:
    mixing: MixingDistribution
    shape_prior: ShapePrior
    kind = "smn"

    def __post_init__(self):
        lo, hi = self.shape_prior.support
        dlo, dhi = self.mixing.delta_domain
        if not (dlo <= lo and hi <= dhi):
            raise DomainError(
                f"shape prior support {self.shape_prior.support} not inside "
                f"delta domain {self.mixing.delta_domain}")


# ---------------------------------------------------------------------------
# Prior structure on the scales
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PriorStructure:
    """Improper prior block for (sigma_0, ..., sigma_r).

    ``power-exp``: each sigma_i gets sigma^-(2 a_i + 1) exp(-b_i / sigma^2),
    b_i >= 0 (b = 0 recovers the pure power law).
    ``half-cauchy``: sigma_0 keeps a power law with exponent a_0 while each
    sigma_i (i >= 1) gets a proper half-Cauchy with scale s_i.
    """

    variant: str
    a: tuple
    b: Optional[tuple] = None
    s: Optional[tuple] = None

    def __post_init__(self):
        if self.variant not in ("power-exp", "half-cauchy"):
            raise ConstructionError(f"unknown prior variant {self.variant!r}")
        object.__setattr__(self, "a", tuple(as_fraction(x) for x in self.a))
        if self.variant == "power-exp":
            if self.s is not None:
                raise ConstructionError("power-exp prior takes no s entries")
            b = self.b if self.b is not None else (0,) * len(self.a)
            b = tuple(as_fraction(x) for x in b)
            if len(b) != len(self.a):
                raise ConstructionError("need one b per a")
            if any(x < 0 for x in b):
                raise ConstructionError("b entries must be nonnegative")
            object.__setattr__(self, "b", b)
        else:
            if self.b is not None:
                raise ConstructionError("half-cauchy prior takes no b entries")
            if len(self.a) != 1:
                raise ConstructionError(
                    "half-cauchy prior takes a single a entry (for sigma_0)")
            if self.s is None or len(self.s) == 0:
                raise ConstructionError("half-cauchy prior needs s_1..s_r")
            s = tuple(float(x) for x in self.s)
            if any(x <= 0 for x in s):
                raise ConstructionError("s entries must be positive")
            object.__setattr__(self, "s", s)

    @classmethod
    def standard_diffuse(cls, r):
        """a_0 = 0, a_1..a_r = -1/2, all b = 0."""
        return cls("power-exp", (0,) + (Fraction(-1, 2),) * r)

    @property
    def n_factors(self):
        if self.variant == "power-exp":
            return len(self.a) - 1
        return len(self.s)

    @property
    def a0(self):
        return self.a[0]

    def a_i(self, i):
        """a for factor i in 1..r (power-exp only)."""
        if self.variant != "power-exp":
            raise ConstructionError("a_i entries exist only for power-exp")
        return self.a[i]

    def b_i(self, i):
        if self.variant != "power-exp":
            raise ConstructionError("b_i entries exist only for power-exp")
        return self.b[i]


# ---------------------------------------------------------------------------
# Model spec
# ---------------------------------------------------------------------------

def _check_full_rank(X):
    n, p = X.shape
    sv = np.linalg.svd(X, compute_uv=False)
    tol = max(n, p) * np.finfo(float).eps * (sv[0] if sv.size else 0.0)
    return int(np.sum(sv > tol)) == p


@dataclass(frozen=True)
class ModelSpec:
    """y = X beta + Z u + eps with factor-partitioned random effects."""

    X: np.ndarray
    Z: np.ndarray
    factor_sizes: tuple
    re_family: object
    prior: PriorStructure

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        Z = np.atleast_2d(np.asarray(self.Z, dtype=float))
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Z", Z)
        object.__setattr__(self, "factor_sizes",
                           tuple(int(q) for q in self.factor_sizes))
        n, p = X.shape
        if Z.shape[0] != n:
            raise DimensionError(f"X has {n} rows but Z has {Z.shape[0]}")
        if n <= p:
            raise ConstructionError(f"need n > p, got n={n}, p={p}")
        if not _check_full_rank(X):
            raise ConstructionError("X is numerically rank deficient")
        if len(self.factor_sizes) < 1 or any(q < 1 for q in self.factor_sizes):
            raise ConstructionError("need r >= 1 factors, each with q_i >= 1")
        if sum(self.factor_sizes) != Z.shape[1]:
            raise ConstructionError(
                f"factor sizes {self.factor_sizes} do not sum to Z's "
                f"{Z.shape[1]} columns")
        if self.prior.n_factors != len(self.factor_sizes):
            raise ConstructionError(
                f"prior covers {self.prior.n_factors} factors but the model "
                f"has {len(self.factor_sizes)}")

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def p(self):
        return self.X.shape[1]

    @property
    def q(self):
        return self.Z.shape[1]

    @property
    def r(self):
        return len(self.factor_sizes)

    def factor_slices(self):
        out = []
        start = 0
        for qi in self.factor_sizes:
            out.append(slice(start, start + qi))
            start += qi
        return out


@dataclass(frozen=True)
class ProbitSpec:
    """One-way random-effect probit model: per-group (successes, failures)."""

    group_counts: tuple
    a1: Fraction
    re_family: object

    def __post_init__(self):
        counts = tuple((int(s), int(f)) for s, f in self.group_counts)
        if any(s < 0 or f < 0 for s, f in counts):
            raise ConstructionError("group counts must be nonnegative")
        object.__setattr__(self, "group_counts", counts)
        object.__setattr__(self, "a1", as_fraction(self.a1))
        if not isinstance(self.re_family, (TpnEffects, FsnEffects)):
            raise ConstructionError(
                "probit checks cover TPN and FSN random effects only")

    @property
    def r(self):
        return len(self.group_counts)

    @property
    def mixed_groups(self):
        """Count of groups with at least one success and one failure."""
        return sum(1 for s, f in self.group_counts if s >= 1 and f >= 1)


# ---------------------------------------------------------------------------
# Linear algebra
# ---------------------------------------------------------------------------

def x_basis(X):
    """Orthonormal basis of col(X) plus the singular values (SVD)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    W, sv, _ = np.linalg.svd(X, full_matrices=False)
    return W, sv


def effective_rank_t(X, Z, rank_tol=None):
    """Rank of Z after projecting out the column space of X.

    Threshold: max matrix dimension times machine epsilon times the largest
    singular value (overridable via ``rank_tol``).
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    if X.shape[0] != Z.shape[0]:
        raise DimensionError(
            f"X has {X.shape[0]} rows but Z has {Z.shape[0]}")
    if not _check_full_rank(X):
        raise ConstructionError("X is numerically rank deficient")
    W, _ = x_basis(X)
    M = Z - W @ (W.T @ Z)
    sv = np.linalg.svd(M, compute_uv=False)
    if sv.size == 0 or sv[0] == 0.0:
        return 0
    # threshold on the scale of Z itself, not the projected residual:
    # columns annihilated by the projection must count as exact zeros
    z_scale = float(np.linalg.svd(Z, compute_uv=False)[0])
    tol = rank_tol if rank_tol is not None else \
        max(M.shape) * np.finfo(float).eps * max(sv[0], z_scale)
    return int(np.sum(sv > tol))


def sse(y, X):
    """Residual sum of squares of y regressed on X."""
    y = np.asarray(y, dtype=float).ravel()
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[0] != y.size:
        raise DimensionError(f"y has {y.size} entries but X has "
                             f"{X.shape[0]} rows")
    W, _ = x_basis(X)
    resid = y - W @ (W.T @ y)
    return float(resid @ resid)


# ---------------------------------------------------------------------------
# CSV ingestion (headerless, comma-separated decimals)
# ---------------------------------------------------------------------------

def load_matrix(path):
    rows = []
    width = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            cells = line.split(",")
            if width is None:
                width = len(cells)
            elif len(cells) != width:
                raise ConstructionError(
                    f"{path}: row {lineno} has {len(cells)} columns, "
                    f"expected {width}")
            parsed = []
            for col, cell in enumerate(cells, start=1):
                try:
                    parsed.append(float(cell))
                except ValueError:
                    raise ConstructionError(
                        f"{path}: row {lineno}, column {col}: "
                        f"cannot parse {cell.strip()!r} as a number") from None
            rows.append(parsed)
    if not rows:
        raise ConstructionError(f"{path}: no data rows")
    return np.asarray(rows, dtype=float)


def load_vector(path):
    mat = load_matrix(path)
    if mat.shape[1] != 1:
        raise ConstructionError(
            f"{path}: expected a single column, found {mat.shape[1]}")
    return mat[:, 0]
