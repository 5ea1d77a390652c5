import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.stats import kstest, norm, t as student_t

import properlmm as pl
from properlmm.distributions import validate_parameterisation
from properlmm.errors import DomainError

PHI0 = 1.0 / math.sqrt(2.0 * math.pi)


# ---------------------------------------------------------------------------
# two-piece normal
# ---------------------------------------------------------------------------

def test_tpn_symmetric_is_standard_normal():
    assert pl.tpn_pdf(0.0, 0.0, 1.0, 0.0, pl.EPSILON_SKEW) == \
        pytest.approx(PHI0, abs=1e-15)


def test_tpn_mode_density_constant_in_gamma_for_eps_skew():
    # mode density is 2 phi(0) / (sigma (a+b)) and a+b = 2 identically
    assert pl.tpn_pdf(0.0, 0.0, 1.0, 0.5, pl.EPSILON_SKEW) == \
        pytest.approx(PHI0, abs=1e-15)


def test_tpn_inverse_scale_factors_piecewise_value():
    # oracle: direct piecewise evaluation, u >= mode uses scale sigma*a
    a, b = 2.0, 0.5
    expected = 2.0 / (a + b) * norm.pdf(1.0 / a)
    got = pl.tpn_pdf(1.0, 0.0, 1.0, 2.0, pl.INVERSE_SCALE_FACTORS)
    assert got == pytest.approx(expected, rel=1e-12)
    # and on the left side, scale sigma*b
    expected_left = 2.0 / (a + b) * norm.pdf(-0.4 / b)
    got_left = pl.tpn_pdf(-0.4, 0.0, 1.0, 2.0, pl.INVERSE_SCALE_FACTORS)
    assert got_left == pytest.approx(expected_left, rel=1e-12)


@pytest.mark.parametrize("param,gammas", [
    (pl.EPSILON_SKEW, (-0.9, -0.5, 0.0, 0.3, 0.8)),
    (pl.INVERSE_SCALE_FACTORS, (0.25, 0.5, 1.0, 2.0, 4.0)),
])
def test_tpn_normalizes(param, gammas):
    for g in gammas:
        val, _ = quad(pl.tpn_pdf, -np.inf, np.inf,
                      args=(0.3, 1.7, g, param), limit=200)
        assert val == pytest.approx(1.0, abs=1e-8)


@pytest.mark.parametrize("param,gammas", [
    (pl.EPSILON_SKEW, (-0.7, 0.0, 0.5)),
    (pl.INVERSE_SCALE_FACTORS, (0.5, 1.0, 3.0)),
])
def test_tpn_piece_mass_identity(param, gammas):
    # mass below the mode is b / (a + b)
    for g in gammas:
        mass, _ = quad(pl.tpn_pdf, -np.inf, 0.4, args=(0.4, 0.9, g, param),
                       limit=200)
        a, b = float(param.a(g)), float(param.b(g))
        assert mass == pytest.approx(b / (a + b), abs=1e-8)


@pytest.mark.parametrize("param,gammas", [
    (pl.EPSILON_SKEW, (-0.8, 0.2, 0.6)),
    (pl.INVERSE_SCALE_FACTORS, (0.4, 1.5)),
])
def test_tpn_mode_at_mu(param, gammas):
    u = np.linspace(-6, 6, 4001)
    for g in gammas:
        dens = pl.tpn_pdf(u, 1.25, 0.8, g, param)
        assert abs(u[np.argmax(dens)] - 1.25) < 0.005


def test_tpn_reduces_to_normal_pointwise():
    u = np.linspace(-8, 8, 1001)
    dens = pl.tpn_pdf(u, 0.7, 1.3, 0.0, pl.EPSILON_SKEW)
    assert np.max(np.abs(dens - norm.pdf(u, 0.7, 1.3))) < 1e-12


def test_tpn_sample_symmetric_ks():
    rng = np.random.default_rng(1)
    draws = pl.tpn_sample(rng, 0.4, 1.2, 0.0, pl.EPSILON_SKEW, size=100_000)
    stat = kstest(draws, norm(loc=0.4, scale=1.2).cdf).statistic
    assert stat < 0.01


def test_tpn_sample_piece_fraction():
    rng = np.random.default_rng(2)
    n = 100_000
    draws = pl.tpn_sample(rng, 0.0, 1.0, 0.5, pl.EPSILON_SKEW, size=n)
    frac = np.mean(draws < 0.0)
    se = math.sqrt(0.75 * 0.25 / n)
    assert abs(frac - 0.75) < 3 * se


def test_tpn_sample_histogram_matches_pdf():
    rng = np.random.default_rng(3)
    draws = pl.tpn_sample(rng, 0.0, 1.0, 0.4, pl.EPSILON_SKEW,
                          size=1_000_000)
    hist, edges = np.histogram(draws, bins=60, range=(-4, 4), density=True)
    centers = 0.5 * (edges[:-1] + edges[1:])
    dens = pl.tpn_pdf(centers, 0.0, 1.0, 0.4, pl.EPSILON_SKEW)
    # binning + MC error at 1e6 draws
    assert np.max(np.abs(hist - dens)) < 0.01


def test_tpn_domain_errors():
    with pytest.raises(DomainError):
        pl.tpn_pdf(0.0, 0.0, -1.0, 0.0, pl.EPSILON_SKEW)
    with pytest.raises(DomainError):
        pl.tpn_pdf(0.0, 0.0, 1.0, 1.0, pl.EPSILON_SKEW)  # endpoint rejected
    with pytest.raises(DomainError):
        pl.tpn_pdf(0.0, 0.0, 1.0, -2.0, pl.INVERSE_SCALE_FACTORS)
    with pytest.raises(DomainError):
        pl.tpn_sample(np.random.default_rng(0), 0.0, 0.0, 0.0,
                      pl.EPSILON_SKEW)


def test_h_and_H():
    assert pl.h_gamma(0.5, pl.EPSILON_SKEW) == pytest.approx(0.5)
    assert pl.H_gamma(0.5, pl.EPSILON_SKEW) == pytest.approx(2.0)
    assert pl.h_gamma(2.0, pl.INVERSE_SCALE_FACTORS) == pytest.approx(0.5)
    assert pl.H_gamma(2.0, pl.INVERSE_SCALE_FACTORS) == pytest.approx(2.5)
    assert pl.h_gamma(0.0, pl.EPSILON_SKEW) == pytest.approx(1.0)
    assert pl.H_gamma(0.0, pl.EPSILON_SKEW) == pytest.approx(2.0)


def test_parameterisation_registry_rejects_bad_bounds():
    bad = pl.SkewParameterisation(
        name="bad", a=lambda g: 1.0 + 0.0 * np.asarray(g),
        b=lambda g: 1.0 + 0.0 * np.asarray(g),
        gamma_domain=(-1.0, 1.0), m=0.5, M=2.0)
    with pytest.raises(DomainError):
        validate_parameterisation(bad)
    neg = pl.SkewParameterisation(
        name="neg", a=lambda g: np.asarray(g, dtype=float),
        b=lambda g: 1.0 + 0.0 * np.asarray(g),
        gamma_domain=(-1.0, 1.0), m=1.0, M=2.0)
    with pytest.raises(DomainError):
        validate_parameterisation(neg)


# ---------------------------------------------------------------------------
# transformed normal (FSN)
# ---------------------------------------------------------------------------

def test_fsn_uniform_is_normal():
    u = np.linspace(-8, 8, 1001)
    dens = pl.fsn_pdf(u, 0.3, 2.1, 0.7, pl.UNIFORM_FSN)
    assert np.max(np.abs(dens - norm.pdf(u, 0.3, 2.1))) < 1e-12


def test_fsn_skew_normal_values():
    assert pl.fsn_pdf(0.0, 0.0, 1.0, 0.0, pl.SKEW_NORMAL_FSN) == \
        pytest.approx(PHI0, rel=1e-12)
    # closed form 2 phi(u) Phi(lambda u)
    for u, lam in [(0.0, 1.0), (0.8, 2.0), (-1.2, 0.5)]:
        expected = 2.0 * norm.pdf(u) * norm.cdf(lam * u)
        assert pl.fsn_pdf(u, 0.0, 1.0, lam, pl.SKEW_NORMAL_FSN) == \
            pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize("lam", [-3.0, -1.0, 0.0, 0.5, 2.0])
def test_fsn_normalizes(lam):
    val, _ = quad(pl.fsn_pdf, -np.inf, np.inf,
                  args=(0.1, 0.9, lam, pl.SKEW_NORMAL_FSN), limit=200)
    assert val == pytest.approx(1.0, abs=1e-8)


@pytest.mark.parametrize("lam", [-2.0, 0.0, 1.5])
def test_fsn_p_density_on_unit_interval(lam):
    val, _ = quad(lambda tt: pl.SKEW_NORMAL_FSN.p(tt, lam), 0.0, 1.0,
                  limit=200)
    assert val == pytest.approx(1.0, abs=1e-8)


def test_fsn_sup_bound_holds_on_grid():
    tt = np.linspace(1e-9, 1 - 1e-9, 2001)
    for lam in (-5.0, -1.0, 0.0, 2.0, 5.0):
        assert np.max(pl.SKEW_NORMAL_FSN.p(tt, lam)) <= 2.0 + 1e-12
    assert np.max(pl.UNIFORM_FSN.p(tt, 0.0)) <= 1.0


def test_fsn_sampler_matches_density():
    rng = np.random.default_rng(4)
    draws = pl.fsn_sample(rng, 0.0, 1.0, 1.0, pl.SKEW_NORMAL_FSN,
                          size=100_000)
    # closed-form skew-normal CDF via scipy's skewnorm
    from scipy.stats import skewnorm
    stat = kstest(draws, skewnorm(1.0).cdf).statistic
    assert stat < 0.01


def test_fsn_domain_error():
    with pytest.raises(DomainError):
        pl.fsn_pdf(0.0, 0.0, -0.5, 0.0, pl.SKEW_NORMAL_FSN)
    with pytest.raises(DomainError):
        pl.fsn_pdf(0.0, 0.0, 1.0, math.nan, pl.SKEW_NORMAL_FSN)


# ---------------------------------------------------------------------------
# scale mixtures of normals
# ---------------------------------------------------------------------------

def test_smn_point_mass_is_normal():
    assert pl.smn_pdf([0.0], 1.0, pl.POINT_MASS_MIXING, 0.0) == \
        pytest.approx(PHI0, rel=1e-12)
    u = np.linspace(-8, 8, 1001)
    dens = np.array([pl.smn_pdf([x], 1.4, pl.POINT_MASS_MIXING, 0.0)
                     for x in u])
    assert np.max(np.abs(dens - norm.pdf(u, 0.0, 1.4))) < 1e-12


def test_smn_gamma_mixing_is_student_t():
    # delta = 1: Cauchy
    assert pl.smn_pdf([0.0], 1.0, pl.GAMMA_MIXING, 1.0) == \
        pytest.approx(1.0 / math.pi, rel=1e-12)
    # delta = 4 at x = 1.5
    assert pl.smn_pdf([1.5], 1.0, pl.GAMMA_MIXING, 4.0) == \
        pytest.approx(student_t(4).pdf(1.5), rel=1e-12)


@pytest.mark.parametrize("delta", [1.0, 3.0, 10.0])
def test_smn_normalizes(delta):
    val, _ = quad(lambda x: pl.smn_pdf([x], 1.1, pl.GAMMA_MIXING, delta),
                  -np.inf, np.inf, limit=200)
    assert val == pytest.approx(1.0, abs=1e-8)


def test_smn_multivariate_value_matches_mixture_quadrature():
    # independent scalar quadrature over the mixing law as oracle
    x = np.array([0.4, -0.7])
    sigma, delta = 1.3, 5.0
    q = 2

    def integrand(tau):
        dens = pl.GAMMA_MIXING.pdf(tau, delta)
        return (tau ** (q / 2)
                * np.exp(-0.5 * tau * float(x @ x) / sigma ** 2) * dens)

    val, _ = quad(integrand, 0, np.inf, limit=200)
    expected = val * (2 * math.pi * sigma ** 2) ** (-q / 2)
    assert pl.smn_pdf(x, sigma, pl.GAMMA_MIXING, delta) == \
        pytest.approx(expected, rel=1e-9)


def test_point_mass_moments_are_one():
    for s in (-1.5, -0.5, 0.0, 0.5, 2.0):
        assert pl.POINT_MASS_MIXING.moment(s, 0.0) == 1.0


def test_gamma_mixing_moments_vs_monte_carlo():
    rng = np.random.default_rng(5)
    n = 200_000
    for delta, s in [(3.0, 0.5), (5.0, -0.5), (2.0, 0.5)]:
        draws = pl.GAMMA_MIXING.sample(rng, delta, n)
        vals = draws ** s
        mc, se = float(np.mean(vals)), float(np.std(vals) / math.sqrt(n))
        assert abs(pl.GAMMA_MIXING.moment(s, delta) - mc) < 3 * se


def test_gamma_mixing_divergent_moment():
    # E[tau^s] with s <= -delta/2 diverges
    assert math.isinf(pl.GAMMA_MIXING.moment(-1.0, 2.0))


def test_smn_domain_errors():
    with pytest.raises(DomainError):
        pl.smn_pdf([0.0], -1.0, pl.GAMMA_MIXING, 2.0)
    with pytest.raises(DomainError):
        pl.smn_pdf([0.0], 1.0, pl.GAMMA_MIXING, -2.0)
