import json
import math

import numpy as np
import pytest
from scipy.integrate import quad

import properlmm as pl
from properlmm.errors import (ConfigurationError, DomainError,
                              TheoremInapplicableError)


def oneway(groups, per_group):
    return np.kron(np.eye(groups), np.ones((per_group, 1)))


X6 = np.ones((6, 1))
Z6 = oneway(3, 2)
Y6 = np.array([1.3, 0.8, 2.1, 2.6, -0.4, 0.2])
UNIF = pl.ShapePrior.uniform(-1, 1)


def tpn_eps(shape_prior=UNIF):
    return pl.TpnEffects(pl.EPSILON_SKEW, shape_prior)


# ---------------------------------------------------------------------------
# condition integrals
# ---------------------------------------------------------------------------

def test_condition_e_eps_skew_exact_half():
    # a + b = 2 identically, so the integral is 2^(2 a) = 1/2 exactly
    val = pl.condition_e_integral("-1/2", pl.EPSILON_SKEW, UNIF)
    assert abs(val - 0.5) < 1e-12


def test_condition_d_worked_case():
    # q=2, a=-1/2: (1-|g|)/(a+b)^2 * 1/2 integrates to 1/8
    val = pl.condition_d_integral(2, "-1/2", pl.EPSILON_SKEW, UNIF)
    assert val == pytest.approx(0.125, abs=1e-8)


def test_condition_d_trivial_exponent():
    # q + 2a = 0: integrand is 1/(a+b) = 1/2 against a proper prior
    val = pl.condition_d_integral(1, "-1/2", pl.EPSILON_SKEW, UNIF)
    assert val == pytest.approx(0.5, abs=1e-10)


def test_condition_d_point_mass():
    val = pl.condition_d_integral(3, "-1/2", pl.EPSILON_SKEW,
                                  pl.ShapePrior.point_mass(0.0))
    assert val == pytest.approx(0.125, abs=1e-14)


def test_condition_e_point_mass_inverse_scale():
    # H = 2 + 1/2 = 2.5 at gamma = 2; a_i = 1 gives H^2 = 6.25
    val = pl.condition_e_integral(1, pl.INVERSE_SCALE_FACTORS,
                                  pl.ShapePrior.point_mass(2.0))
    assert val == pytest.approx(6.25, abs=1e-12)


def test_condition_e_inverse_scale_gamma_prior_vs_quadrature():
    prior = pl.ShapePrior.gamma(2.0, 1.0)
    val = pl.condition_e_integral("-1/2", pl.INVERSE_SCALE_FACTORS, prior)
    # brute-force oracle on the same integrand
    expected, _ = quad(lambda g: (g + 1.0 / g) ** -1.0 * prior.pdf(g),
                       0, np.inf, limit=400)
    assert val == pytest.approx(expected, rel=1e-7)


def test_condition_d_divergence_detected():
    # q + 2a <= -1 makes the endpoint factor non-integrable
    assert math.isinf(pl.condition_d_integral(3, "-2.2", pl.EPSILON_SKEW,
                                              UNIF))
    assert math.isinf(pl.condition_d_integral(3, "-2", pl.EPSILON_SKEW,
                                              UNIF))


def test_condition_integral_support_mismatch():
    wide = pl.ShapePrior.gamma(2.0, 1.0)  # support (0, inf)
    with pytest.raises(DomainError):
        pl.condition_d_integral(2, "-1/2", pl.EPSILON_SKEW, wide)


def test_condition_e_max_variant_agrees_on_finiteness():
    cases = [
        (pl.EPSILON_SKEW, UNIF, "-1/2"),
        (pl.EPSILON_SKEW, UNIF, "1"),
        (pl.EPSILON_SKEW, pl.ShapePrior.truncated_normal(0, 0.5, -1, 1),
         "-1/2"),
        (pl.INVERSE_SCALE_FACTORS, pl.ShapePrior.gamma(2.0, 1.0), "-1/2"),
        (pl.INVERSE_SCALE_FACTORS, pl.ShapePrior.gamma(2.0, 1.0), "-2"),
    ]
    for param, prior, a_i in cases:
        v_sum = pl.condition_e_integral(a_i, param, prior)
        v_max = pl.condition_e_integral(a_i, param, prior, use_max=True)
        assert math.isfinite(v_sum) == math.isfinite(v_max)


# ---------------------------------------------------------------------------
# theorem-1 checker
# ---------------------------------------------------------------------------

def test_theorem1_standard_diffuse_proper():
    spec = pl.ModelSpec(X6, Z6, (3,), tpn_eps(),
                        pl.PriorStructure.standard_diffuse(1))
    v = pl.check_theorem1(spec, Y6)
    assert v.overall == pl.PROPER
    assert v.theorem_case == "Case1"
    assert v.sample_guard is True
    for label in ("a", "b2", "c2", "e"):
        assert v.conditions[label].holds


def test_theorem1_condition_a_violation_improper():
    spec = pl.ModelSpec(X6, Z6, (3,), tpn_eps(),
                        pl.PriorStructure("power-exp", ("0", "0")))
    v = pl.check_theorem1(spec, Y6)
    assert v.overall == pl.IMPROPER
    assert v.conditions["a"].status == "fails"


def test_theorem1_c1_violation_improper():
    spec = pl.ModelSpec(X6, Z6, (3,), tpn_eps(),
                        pl.PriorStructure("power-exp", ("-3", "-1/2")))
    v = pl.check_theorem1(spec, Y6)
    assert v.overall == pl.IMPROPER
    assert v.conditions["c1"].status == "fails"


def test_theorem1_case2_undetermined_gap():
    # r=2, t<q; necessary set holds but c2 fails -> UNDETERMINED
    X = np.column_stack([np.ones(6), np.array([0.4, -1.0, 0.3, 1.2, -0.7,
                                               0.9])])
    Z1 = X[:, 1:2]          # inside col(X): contributes nothing to t
    Z2 = oneway(3, 2)[:, :2]
    Z = np.hstack([Z1, Z2])
    prior = pl.PriorStructure("power-exp", ("-1.6", "-0.45", "1"),
                              b=("0", "0", "1"))
    spec = pl.ModelSpec(X, Z, (1, 2), tpn_eps(), prior)
    assert pl.effective_rank_t(X, Z) == 2
    v = pl.check_theorem1(spec)
    assert v.theorem_case == "Case2"
    assert v.overall == pl.UNDETERMINED
    for label in ("a", "b1", "c1", "d"):
        assert v.conditions[label].holds, label
    assert v.conditions["c2"].status == "fails"


def test_theorem1_exact_boundary_arithmetic():
    # q_i + 2 a_i == q - t exactly: strict inequality must fail
    spec = pl.ModelSpec(X6, Z6, (3,), tpn_eps(),
                        pl.PriorStructure("power-exp", ("0", "-1")))
    v = pl.check_theorem1(spec)
    # q + 2a = 1 = q - t -> b2 fails with zero tolerance
    assert v.conditions["b2"].status == "fails"


def test_theorem1_normal_family_special_case():
    spec = pl.ModelSpec(X6, Z6, (3,), pl.NormalEffects(),
                        pl.PriorStructure.standard_diffuse(1))
    v = pl.check_theorem1(spec, Y6)
    assert v.overall == pl.PROPER


def test_theorem1_wrong_configuration():
    spec = pl.ModelSpec(X6, Z6, (3,), tpn_eps(),
                        pl.PriorStructure("half-cauchy", ("0",), s=(1.0,)))
    with pytest.raises(ConfigurationError):
        pl.check_theorem1(spec)
    fsn = pl.FsnEffects(pl.SKEW_NORMAL_FSN,
                        pl.ShapePrior.truncated_normal(0, 2, -6, 6))
    spec2 = pl.ModelSpec(X6, Z6, (3,), fsn,
                         pl.PriorStructure.standard_diffuse(1))
    with pytest.raises(ConfigurationError):
        pl.check_theorem1(spec2)


# ---------------------------------------------------------------------------
# theorem-2 checker
# ---------------------------------------------------------------------------

def fsn_family(prior=None):
    return pl.FsnEffects(pl.SKEW_NORMAL_FSN,
                         prior or pl.ShapePrior.truncated_normal(0, 2, -6, 6))


def test_theorem2_skew_normal_proper():
    spec = pl.ModelSpec(X6, Z6, (3,), fsn_family(),
                        pl.PriorStructure.standard_diffuse(1))
    v = pl.check_theorem2(spec, Y6)
    assert v.overall == pl.PROPER
    assert v.theorem_case == "Theorem2"


def test_theorem2_uniform_p_matches_theorem1_at_overlap():
    # uniform p reduces to the normal density: both results must agree
    spec_fsn = pl.ModelSpec(X6, Z6, (3,),
                            pl.FsnEffects(pl.UNIFORM_FSN,
                                          pl.ShapePrior.point_mass(0.0)),
                            pl.PriorStructure.standard_diffuse(1))
    spec_norm = pl.ModelSpec(X6, Z6, (3,), pl.NormalEffects(),
                             pl.PriorStructure.standard_diffuse(1))
    v2 = pl.check_theorem2(spec_fsn)
    v1 = pl.check_theorem1(spec_norm)
    assert v1.overall == pl.PROPER and v2.overall == pl.PROPER


def test_theorem2_sufficient_only():
    spec = pl.ModelSpec(X6, Z6, (3,), fsn_family(),
                        pl.PriorStructure("power-exp", ("-3", "-1/2")))
    v = pl.check_theorem2(spec)
    assert v.overall == pl.UNDETERMINED  # c2 fails, but no necessary side
    assert v.conditions["c2"].status == "fails"


def test_theorem2_requires_bounded_density():
    unbounded = pl.FsnFamily(name="unbounded",
                             p=lambda t, lam: np.full_like(
                                 np.asarray(t, dtype=float), 1.0),
                             lambda_domain=(-math.inf, math.inf),
                             sup_bound=None)
    spec = pl.ModelSpec(X6, Z6, (3,),
                        pl.FsnEffects(unbounded,
                                      pl.ShapePrior.point_mass(0.0)),
                        pl.PriorStructure.standard_diffuse(1))
    with pytest.raises(TheoremInapplicableError):
        pl.check_theorem2(spec)


# ---------------------------------------------------------------------------
# corollary-1 checker
# ---------------------------------------------------------------------------

def hc_prior(r=1):
    return pl.PriorStructure("half-cauchy", ("0",), s=(1.0,) * r)


def test_corollary1_proper():
    spec = pl.ModelSpec(X6, Z6, (3,), tpn_eps(), hc_prior())
    v = pl.check_corollary1(spec, Y6)
    assert v.overall == pl.PROPER
    assert v.conditions["hc_b"].evidence["rank_xz"] == 3


def test_corollary1_identity_Z_undetermined():
    spec = pl.ModelSpec(X6, np.eye(6), (6,), tpn_eps(),
                        pl.PriorStructure("half-cauchy", ("0",),
                                          s=(1.0,)))
    v = pl.check_corollary1(spec)
    assert v.overall == pl.UNDETERMINED
    assert v.conditions["hc_b"].status == "fails"


def test_corollary1_negative_a0_undetermined():
    spec = pl.ModelSpec(X6, Z6, (3,), tpn_eps(),
                        pl.PriorStructure("half-cauchy", ("-0.1",),
                                          s=(1.0,)))
    v = pl.check_corollary1(spec)
    assert v.overall == pl.UNDETERMINED
    assert v.conditions["hc_a"].status == "fails"


def test_corollary1_arbitrary_family_passes_through():
    smn = pl.SmnEffects(pl.GAMMA_MIXING, pl.ShapePrior.point_mass(4.0))
    spec = pl.ModelSpec(X6, Z6, (3,), smn, hc_prior())
    assert pl.check_corollary1(spec).overall == pl.PROPER


def test_corollary1_needs_half_cauchy():
    spec = pl.ModelSpec(X6, Z6, (3,), tpn_eps(),
                        pl.PriorStructure.standard_diffuse(1))
    with pytest.raises(ConfigurationError):
        pl.check_corollary1(spec)


# ---------------------------------------------------------------------------
# probit remarks
# ---------------------------------------------------------------------------

def test_probit_remark_worked_example():
    groups = tuple((2, 3) for _ in range(5))
    ps = pl.ProbitSpec(groups, "-1", tpn_eps())
    v = pl.check_probit(ps)
    assert v.overall == pl.PROPER
    assert v.conditions["probit_iii"].evidence["integral"] == \
        pytest.approx(0.25, abs=1e-10)


def test_probit_positive_a1_undetermined():
    groups = tuple((2, 3) for _ in range(5))
    v = pl.check_probit(pl.ProbitSpec(groups, "0.5", tpn_eps()))
    assert v.overall == pl.UNDETERMINED
    assert v.conditions["probit_ii"].status == "fails"


def test_probit_two_groups_quarter():
    ps = pl.ProbitSpec(((2, 3), (1, 4)), "-0.25", tpn_eps())
    assert pl.check_probit(ps).overall == pl.PROPER


def test_probit_too_few_mixed_groups():
    ps = pl.ProbitSpec(((2, 3), (5, 0), (0, 4)), "-0.25", tpn_eps())
    v = pl.check_probit(ps)
    assert v.overall == pl.UNDETERMINED
    assert v.conditions["probit_i"].status == "fails"
    assert "note" in v.conditions["probit_i"].evidence


def test_probit_fsn_two_conditions_only():
    ps = pl.ProbitSpec(((2, 3), (1, 4), (2, 2)), "-0.5", fsn_family())
    v = pl.check_probit(ps)
    assert v.overall == pl.PROPER
    assert v.conditions["probit_iii"].status == "not-applicable"


def test_probit_r1_is_maximal_count():
    ps = pl.ProbitSpec(((1, 1), (2, 0), (3, 3), (0, 2), (4, 1)), "-1",
                       tpn_eps())
    assert ps.mixed_groups == 3
    v = pl.check_probit(ps)
    assert v.conditions["probit_i"].evidence["r1"] == 3


# ---------------------------------------------------------------------------
# verdict serialization
# ---------------------------------------------------------------------------

def test_verdict_json_roundtrip():
    spec = pl.ModelSpec(X6, Z6, (3,), tpn_eps(),
                        pl.PriorStructure.standard_diffuse(1))
    v = pl.check_theorem1(spec, Y6)
    parsed = json.loads(v.to_json())
    assert parsed["overall"] == "PROPER"
    assert parsed["theorem_case"] == "Case1"
    assert set(parsed["conditions"]) == set(
        ("a", "b1", "b2", "c1", "c2", "d", "e", "hc_a", "hc_b",
         "probit_i", "probit_ii", "probit_iii"))
    for entry in parsed["conditions"].values():
        assert entry["status"] in ("holds", "fails", "not-applicable")


def test_monotonicity_in_replication():
    # replicating rows can only help: a PROPER verdict stays PROPER
    spec1 = pl.ModelSpec(X6, Z6, (3,), tpn_eps(),
                         pl.PriorStructure.standard_diffuse(1))
    assert pl.check_theorem1(spec1).overall == pl.PROPER
    X2 = np.vstack([X6, X6])
    Z2 = np.vstack([Z6, Z6])
    spec2 = pl.ModelSpec(X2, Z2, (3,), tpn_eps(),
                         pl.PriorStructure.standard_diffuse(1))
    assert pl.check_theorem1(spec2).overall == pl.PROPER
