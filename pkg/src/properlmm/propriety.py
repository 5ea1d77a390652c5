"""Analytic posterior-propriety checks.

Covers the linear mixed model with two-piece-normal random effects
(necessary and sufficient condition sets, split into two cases by the
effective rank t), the bounded transformed-normal extension (sufficient
only), the half-Cauchy/proper-random-effects prior structure (sufficient
only), and the two probit-model remarks (sufficient only).

Sharp inequalities are evaluated on exact rationals with zero tolerance;
the two shape-parameter integrals are classified finite/infinite by an
expanding-truncation rule. UNDETERMINED is a first-class outcome: the
checker never guesses between the necessary and sufficient sets.
"""

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np
from scipy.integrate import quad

from .errors import (ConfigurationError, DomainError,
                     TheoremInapplicableError)
from .model import (FsnEffects, ModelSpec, NormalEffects, ProbitSpec,
                    SmnEffects, TpnEffects, effective_rank_t, sse, x_basis)

PROPER = "PROPER"
IMPROPER = "IMPROPER"
UNDETERMINED = "UNDETERMINED"

CONDITION_LABELS = ("a", "b1", "b2", "c1", "c2", "d", "e",
                    "hc_a", "hc_b", "probit_i", "probit_ii", "probit_iii")

HOLDS = "holds"
FAILS = "fails"
NA = "not-applicable"


@dataclass(frozen=True)
class ConditionResult:
    status: str
    evidence: dict = field(default_factory=dict)

    @property
    def holds(self):
        return self.status == HOLDS


@dataclass(frozen=True)
class ProprietyVerdict:
    theorem_case: str
    conditions: dict
    overall: str
    sample_guard: Optional[bool] = None

    def to_dict(self):
        return {
            "theorem_case": self.theorem_case,
            "overall": self.overall,
            "sample_guard": self.sample_guard,
            "conditions": {
                label: {"status": res.status, "evidence": res.evidence}
                for label, res in self.conditions.items()
            },
        }

    def to_json(self, indent=2):
        return json.dumps(self.to_dict(), indent=indent, sort_keys=True)


def _full_condition_map(partial):
    out = {label: ConditionResult(NA) for label in CONDITION_LABELS}
    out.update(partial)
    return out


def _fr(x):
    """Float view of a Fraction for evidence dicts."""
    return float(x)


# ---------------------------------------------------------------------------
# Expanding-truncation integrals over the shape domain
# ---------------------------------------------------------------------------

#: growth factor across the last three doublings that declares an integral
#: infinite
GROWTH_FACTOR = 1.01

_QUAD_KW = dict(epsabs=1e-10, epsrel=1e-8, limit=400)


def _expanding_integral(fn, lo, hi, max_doublings=40):
    """Integrate a nonnegative fn over an open interval, or detect that it
    is infinite.

    Classification runs truncated integrals whose endpoints approach the
    boundary geometrically (finite ends halve the gap, an infinite end
    doubles outward): the integral is declared infinite when, at the end
    of the doubling budget, the total still grew by more than
    GROWTH_FACTOR across each of the last three doublings. Early
    transients grow too, so only the final doublings decide. Once
    classified finite, the value comes from one adaptive pass over the
    whole interval (QUADPACK handles integrable endpoint behavior).
    """
    inf_hi = math.isinf(hi)
    width = (hi - lo) if not inf_hi else 1.0
    gap0 = 0.25 * width
    t0 = max(1.0, 2.0 * abs(lo))

    def edges(j):
        lo_j = lo + gap0 * 0.5 ** j
        hi_j = (hi - gap0 * 0.5 ** j) if not inf_hi else t0 * 2.0 ** j
        return lo_j, hi_j

    lo_j, hi_j = edges(0)
    total, _ = quad(fn, lo_j, hi_j, **_QUAD_KW)
    totals = [total]
    stalled = 0
    finite = False
    for j in range(1, max_doublings):
        lo_next, hi_next = edges(j)
        shell, _ = quad(fn, lo_next, lo_j, **_QUAD_KW)
        if hi_next > hi_j:
            upper, _ = quad(fn, hi_j, hi_next, **_QUAD_KW)
            shell += upper
        total += max(shell, 0.0)
        totals.append(total)
        lo_j, hi_j = lo_next, hi_next
        rel_inc = (totals[-1] - totals[-2]) / max(totals[-1], 1e-300)
        stalled = stalled + 1 if rel_inc < 1e-10 else 0
        if stalled >= 2:
            finite = True
            break
    if not finite:
        ratios = [totals[-k] / max(totals[-k - 1], 1e-300) for k in (1, 2, 3)]
        if all(r > GROWTH_FACTOR for r in ratios):
            return math.inf
    with np.errstate(over="ignore"):
        value, _ = quad(fn, lo, hi if not inf_hi else np.inf,
                        epsabs=1e-12, epsrel=1e-10, limit=400)
    if not math.isfinite(value) or value < 0:
        return total
    return float(value)


def condition_d_integral(q_i, a_i, param, shape_prior):
    """integral of min(a,b)^(q_i + 2 a_i) / (a+b)^q_i against the shape prior.

    Finite for every factor is necessary for propriety of the two-piece
    hierarchy. Returns math.inf when divergence is detected.
    """
    _require_support_inside(shape_prior, param.gamma_domain)
    nu = float(q_i + 2 * Fraction(a_i))
    q_i = float(q_i)

    def integrand_core(g):
        a = np.asarray(param.a(g), dtype=float)
        b = np.asarray(param.b(g), dtype=float)
        return np.minimum(a, b) ** nu / (a + b) ** q_i

    if shape_prior.is_point_mass:
        return float(integrand_core(shape_prior.point))
    lo, hi = shape_prior.support
    return _expanding_integral(
        lambda g: integrand_core(g) * shape_prior.pdf(g), lo, hi)


def condition_e_integral(a_i, param, shape_prior, use_max=False):
    """integral of (a+b)^(2 a_i) against the shape prior.

    ``use_max=True`` substitutes max(a, b), the admissible replacement
    that can be easier to bound; finiteness must agree either way.
    """
    _require_support_inside(shape_prior, param.gamma_domain)
    two_a = 2.0 * float(Fraction(a_i))

    def integrand_core(g):
        a = np.asarray(param.a(g), dtype=float)
        b = np.asarray(param.b(g), dtype=float)
        H = np.maximum(a, b) if use_max else a + b
        return H ** two_a

    if shape_prior.is_point_mass:
        return float(integrand_core(shape_prior.point))
    lo, hi = shape_prior.support
    return _expanding_integral(
        lambda g: integrand_core(g) * shape_prior.pdf(g), lo, hi)


def _require_support_inside(shape_prior, domain):
    lo, hi = shape_prior.support
    dlo, dhi = domain
    if shape_prior.is_point_mass:
        ok = dlo < lo < dhi
    else:
        ok = dlo <= lo and hi <= dhi
    if not ok:
        raise DomainError(f"shape prior support {shape_prior.support} lies "
                          f"outside the domain {domain}")


# ---------------------------------------------------------------------------
# Shared inequality conditions (exact rational arithmetic)
# ---------------------------------------------------------------------------

def _cond_a(prior, r):
    per = []
    ok = True
    for i in range(1, r + 1):
        a_i, b_i = prior.a_i(i), prior.b_i(i)
        ok_i = (a_i < 0 and b_i == 0) or b_i > 0
        per.append({"factor": i, "a": _fr(a_i), "b": _fr(b_i),
                    "holds": ok_i})
        ok = ok and ok_i
    return ConditionResult(HOLDS if ok else FAILS, {"per_factor": per})


def _cond_b1(prior, factor_sizes):
    per = []
    ok = True
    for i, q_i in enumerate(factor_sizes, start=1):
        lhs = q_i + 2 * prior.a_i(i)
        ok_i = lhs > 0
        per.append({"factor": i, "q_plus_2a": _fr(lhs), "holds": ok_i})
        ok = ok and ok_i
    return ConditionResult(HOLDS if ok else FAILS, {"per_factor": per})


def _cond_b2(prior, factor_sizes, q, t):
    rhs = Fraction(q - t)
    per = []
    ok = True
    for i, q_i in enumerate(factor_sizes, start=1):
        lhs = q_i + 2 * prior.a_i(i)
        ok_i = lhs > rhs
        per.append({"factor": i, "q_plus_2a": _fr(lhs), "holds": ok_i})
        ok = ok and ok_i
    return ConditionResult(HOLDS if ok else FAILS,
                           {"per_factor": per, "q_minus_t": _fr(rhs)})


def _cond_c1(prior, n, p, r):
    lhs = Fraction(n - p) + 2 * sum((prior.a[i] for i in range(r + 1)),
                                    Fraction(0))
    ok = lhs > 0
    return ConditionResult(HOLDS if ok else FAILS, {"margin": _fr(lhs)})


def _cond_c2(prior, n, p, r):
    lhs = Fraction(n - p) + 2 * prior.a0 \
        + 2 * sum((min(Fraction(0), prior.a_i(i)) for i in range(1, r + 1)),
                  Fraction(0))
    ok = lhs > 0
    return ConditionResult(HOLDS if ok else FAILS, {"margin": _fr(lhs)})


def _integral_condition(values):
    finite = all(math.isfinite(v) for v in values)
    return ConditionResult(
        HOLDS if finite else FAILS,
        {"per_factor": [v if math.isfinite(v) else "inf" for v in values]})


# ---------------------------------------------------------------------------
# Checkers
# ---------------------------------------------------------------------------

def _overall(conditions, necessary, sufficient):
    if any(conditions[c].status == FAILS for c in necessary):
        return IMPROPER
    if all(conditions[c].holds for c in sufficient):
        return PROPER
    return UNDETERMINED


def _sample_guard(spec, y):
    if y is None:
        return None
    b0 = spec.prior.b[0] if spec.prior.variant == "power-exp" else \
        Fraction(0)
    return bool(2.0 * float(b0) + sse(y, spec.X) > 0.0)


def check_theorem1(spec, y=None):
    """Necessary/sufficient propriety check for the two-piece hierarchy.

    Case 1 (t = q or r = 1): {a, b2, c1, d} necessary, {a, b2, c2, e}
    sufficient. Case 2 (t < q, r > 1): b1 replaces b2 on the necessary
    side. Normal random effects are accepted as the symmetric point-mass
    special case. If ``y`` is given, ``sample_guard`` records whether
    2 b_0 + SSE > 0 (the almost-any-sample condition).
    """
    fam = spec.re_family
    if not isinstance(fam, (TpnEffects, NormalEffects)):
        raise ConfigurationError(
            "theorem-1 check covers two-piece (or normal) random effects")
    if spec.prior.variant != "power-exp":
        raise ConfigurationError("theorem-1 check needs the power-exp prior")
    n, p, q, r = spec.n, spec.p, spec.q, spec.r
    t = effective_rank_t(spec.X, spec.Z)
    case1 = (t == q) or (r == 1)
    if isinstance(fam, TpnEffects):
        d_vals = [condition_d_integral(q_i, spec.prior.a_i(i + 1),
                                       fam.param, fam.shape_prior)
                  for i, q_i in enumerate(spec.factor_sizes)]
        e_vals = [condition_e_integral(spec.prior.a_i(i + 1), fam.param,
                                       fam.shape_prior)
                  for i in range(r)]
    else:
        d_vals = [2.0 ** (-q_i) for q_i in spec.factor_sizes]
        e_vals = [2.0 ** (2.0 * float(spec.prior.a_i(i + 1)))
                  for i in range(r)]
    conditions = _full_condition_map({
        "a": _cond_a(spec.prior, r),
        "b1": _cond_b1(spec.prior, spec.factor_sizes),
        "b2": _cond_b2(spec.prior, spec.factor_sizes, q, t),
        "c1": _cond_c1(spec.prior, n, p, r),
        "c2": _cond_c2(spec.prior, n, p, r),
        "d": _integral_condition(d_vals),
        "e": _integral_condition(e_vals),
    })
    necessary = ("a", "b2", "c1", "d") if case1 else ("a", "b1", "c1", "d")
    sufficient = ("a", "b2", "c2", "e")
    return ProprietyVerdict(
        theorem_case="Case1" if case1 else "Case2",
        conditions=conditions,
        overall=_overall(conditions, necessary, sufficient),
        sample_guard=_sample_guard(spec, y),
    )


def check_theorem2(spec, y=None):
    """Sufficient-only check for bounded transformed-normal random effects."""
    fam = spec.re_family
    if not isinstance(fam, FsnEffects):
        raise ConfigurationError(
            "theorem-2 check covers transformed-normal random effects")
    if fam.family.sup_bound is None:
        raise TheoremInapplicableError(
            f"family '{fam.family.name}' has no finite sup bound; the "
            "bounded-density result does not apply")
    if spec.prior.variant != "power-exp":
        raise ConfigurationError("theorem-2 check needs the power-exp prior")
    n, p, q, r = spec.n, spec.p, spec.q, spec.r
    t = effective_rank_t(spec.X, spec.Z)
    conditions = _full_condition_map({
        "a": _cond_a(spec.prior, r),
        "b2": _cond_b2(spec.prior, spec.factor_sizes, q, t),
        "c2": _cond_c2(spec.prior, n, p, r),
    })
    sufficient = ("a", "b2", "c2")
    overall = PROPER if all(conditions[c].holds for c in sufficient) \
        else UNDETERMINED
    return ProprietyVerdict("Theorem2", conditions, overall,
                            _sample_guard(spec, y))


def check_corollary1(spec, y=None):
    """Sufficient-only check for the half-Cauchy prior structure.

    Also covers the proper-random-effects generalization: any family whose
    shape and scale parameters all carry proper priors passes through the
    same two conditions, so every supported family is accepted here.
    """
    if spec.prior.variant != "half-cauchy":
        raise ConfigurationError(
            "corollary-1 check needs the half-cauchy prior variant")
    n = spec.n
    a0 = spec.prior.a0
    XZ = np.hstack([spec.X, spec.Z])
    sv = np.linalg.svd(XZ, compute_uv=False)
    tol = max(XZ.shape) * np.finfo(float).eps * (sv[0] if sv.size else 0.0)
    rank_xz = int(np.sum(sv > tol))
    conditions = _full_condition_map({
        "hc_a": ConditionResult(HOLDS if a0 >= 0 else FAILS,
                                {"a0": _fr(a0)}),
        "hc_b": ConditionResult(HOLDS if rank_xz < n else FAILS,
                                {"rank_xz": rank_xz, "n": n}),
    })
    overall = PROPER if conditions["hc_a"].holds and conditions["hc_b"].holds \
        else UNDETERMINED
    return ProprietyVerdict("Corollary1", conditions, overall,
                            _sample_guard(spec, y))


def check_probit(pspec):
    """Sufficient-only checks for the one-way random-effect probit model.

    r_1 is the (maximal) count of groups with both a success and a
    failure. Two-piece effects need the scale-sum integral finite on top
    of the count and sign conditions; bounded transformed-normal effects
    need only the first two.
    """
    r1 = pspec.mixed_groups
    a1 = pspec.a1
    is_tpn = isinstance(pspec.re_family, TpnEffects)
    if not is_tpn and pspec.re_family.family.sup_bound is None:
        raise TheoremInapplicableError(
            "probit extension needs a bounded transformed-normal density")
    cond_i = ConditionResult(
        HOLDS if r1 >= 2 else FAILS,
        {"r1": r1, "note": None if r1 >= 2 else
         "fewer than two groups with both outcomes; sufficiency unusable"})
    lo = -Fraction(r1 - 1, 2) if r1 >= 1 else Fraction(0)
    ok_ii = lo < a1 < 0
    cond_ii = ConditionResult(HOLDS if ok_ii else FAILS,
                              {"a1": _fr(a1), "lower": _fr(lo)})
    partial = {"probit_i": cond_i, "probit_ii": cond_ii}
    applicable = ["probit_i", "probit_ii"]
    if is_tpn:
        val = condition_e_integral(a1, pspec.re_family.param,
                                   pspec.re_family.shape_prior)
        partial["probit_iii"] = ConditionResult(
            HOLDS if math.isfinite(val) else FAILS,
            {"integral": val if math.isfinite(val) else "inf"})
        applicable.append("probit_iii")
    conditions = _full_condition_map(partial)
    overall = PROPER if all(conditions[c].holds for c in applicable) \
        else UNDETERMINED
    return ProprietyVerdict("ProbitRemark", conditions, overall, None)


def check_model(spec, y=None):
    """Dispatch to the applicable checker for this family/prior pairing."""
    if spec.prior.variant == "half-cauchy":
        return check_corollary1(spec, y)
    if isinstance(spec.re_family, (TpnEffects, NormalEffects)):
        return check_theorem1(spec, y)
    if isinstance(spec.re_family, FsnEffects):
        return check_theorem2(spec, y)
    raise ConfigurationError(
        f"no propriety result covers family {spec.re_family!r} with the "
        f"{spec.prior.variant} prior")
