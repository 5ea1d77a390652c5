import numpy as np
import pytest

import properlmm as pl
from properlmm.errors import ConstructionError, DimensionError
from properlmm.model import as_fraction


def gram_schmidt_rank(M, tol=1e-10):
    """Brute-force rank oracle: count surviving Gram-Schmidt directions."""
    basis = []
    for col in M.T:
        v = col.astype(float).copy()
        for b in basis:
            v -= (v @ b) * b
        norm = np.linalg.norm(v)
        if norm > tol * max(1.0, np.linalg.norm(col)):
            basis.append(v / norm)
    return len(basis)


def oneway(n_groups, per_group):
    return np.kron(np.eye(n_groups), np.ones((per_group, 1)))


# ---------------------------------------------------------------------------
# effective rank t
# ---------------------------------------------------------------------------

def test_t_zero_when_Z_in_colspace_of_X():
    X = np.column_stack([np.ones(6), np.arange(6.0)])
    Z = X @ np.array([[1.0, 2.0], [0.5, -1.0]])
    assert pl.effective_rank_t(X, Z) == 0


def test_t_oneway_design():
    X = np.ones((6, 1))
    Z = oneway(3, 2)
    # oracle: rank of the projected columns via Gram-Schmidt
    P = X @ np.linalg.solve(X.T @ X, X.T)
    expected = gram_schmidt_rank((np.eye(6) - P) @ Z)
    assert expected == 2
    assert pl.effective_rank_t(X, Z) == 2


def test_t_identity_Z_is_n_minus_p():
    rng = np.random.default_rng(10)
    for n, p in [(5, 1), (6, 2), (4, 2)]:
        X = rng.standard_normal((n, p))
        assert pl.effective_rank_t(X, np.eye(n)) == n - p


def test_t_random_instances_vs_oracle_and_bound():
    rng = np.random.default_rng(11)
    for _ in range(100):
        n = rng.integers(3, 9)
        p = rng.integers(1, min(n, 3) + 1)
        q = rng.integers(1, 5)
        X = rng.standard_normal((n, p))
        Z = rng.standard_normal((n, q))
        if rng.random() < 0.3:  # make some columns X-dependent
            Z[:, 0] = X @ rng.standard_normal(p)
        t = pl.effective_rank_t(X, Z)
        P = X @ np.linalg.solve(X.T @ X, X.T)
        assert t == gram_schmidt_rank((np.eye(n) - P) @ Z)
        assert t <= min(q, n - p)


def test_t_invariant_under_right_multiplication_of_X():
    rng = np.random.default_rng(12)
    X = rng.standard_normal((6, 2))
    Z = rng.standard_normal((6, 3))
    t0 = pl.effective_rank_t(X, Z)
    for _ in range(20):
        A = rng.standard_normal((2, 2))
        if abs(np.linalg.det(A)) < 1e-3:
            continue
        assert pl.effective_rank_t(X @ A, Z) == t0


def test_t_dimension_error():
    with pytest.raises(DimensionError):
        pl.effective_rank_t(np.ones((4, 1)), np.ones((5, 2)))


# ---------------------------------------------------------------------------
# sse
# ---------------------------------------------------------------------------

def test_sse_zero_for_perfect_fit():
    X = np.column_stack([np.ones(5), np.arange(5.0)])
    y = X @ np.array([2.0, -1.0])
    assert pl.sse(y, X) == pytest.approx(0.0, abs=1e-20)


def test_sse_intercept_hand_value():
    # residuals around the mean of (1,2,3): (-1,0,1) -> 2
    assert pl.sse(np.array([1.0, 2.0, 3.0]), np.ones((3, 1))) == \
        pytest.approx(2.0, rel=1e-12)


def test_sse_invariance_under_colspace_shift():
    rng = np.random.default_rng(13)
    X = rng.standard_normal((7, 2))
    y = rng.standard_normal(7)
    base = pl.sse(y, X)
    for _ in range(20):
        c = rng.standard_normal(2)
        assert pl.sse(y + X @ c, X) == pytest.approx(base, abs=1e-10)


def test_sse_nonnegative_and_positive_for_random_y():
    rng = np.random.default_rng(14)
    X = rng.standard_normal((6, 2))
    for _ in range(100):
        val = pl.sse(rng.standard_normal(6), X)
        assert val > 0.0


# ---------------------------------------------------------------------------
# spec construction
# ---------------------------------------------------------------------------

def _family():
    return pl.TpnEffects(pl.EPSILON_SKEW, pl.ShapePrior.uniform(-1, 1))


def test_model_spec_validates():
    X, Z = np.ones((6, 1)), oneway(3, 2)
    spec = pl.ModelSpec(X, Z, (3,), _family(),
                        pl.PriorStructure.standard_diffuse(1))
    assert (spec.n, spec.p, spec.q, spec.r) == (6, 1, 3, 1)


def test_model_spec_rejects_rank_deficient_X():
    X = np.ones((6, 2))  # duplicated column
    with pytest.raises(ConstructionError):
        pl.ModelSpec(X, oneway(3, 2), (3,), _family(),
                     pl.PriorStructure("power-exp", (0, "-1/2")))


def test_model_spec_rejects_bad_factor_sizes():
    X, Z = np.ones((6, 1)), oneway(3, 2)
    with pytest.raises(ConstructionError):
        pl.ModelSpec(X, Z, (2,), _family(),
                     pl.PriorStructure.standard_diffuse(1))
    with pytest.raises(ConstructionError):
        pl.ModelSpec(X, Z, (2, 1), _family(),
                     pl.PriorStructure.standard_diffuse(1))


def test_model_spec_rejects_n_not_greater_than_p():
    with pytest.raises(ConstructionError):
        pl.ModelSpec(np.eye(3), np.ones((3, 1)), (1,), _family(),
                     pl.PriorStructure.standard_diffuse(1))


def test_prior_structure_exact_fractions():
    pr = pl.PriorStructure("power-exp", ("0", "-1/2", 0.25), b=(0, "1/3", 1))
    assert pr.a_i(1) * 2 == -1
    assert pr.a_i(2) == as_fraction("1/4")
    assert pr.b_i(1) == as_fraction("1/3")
    assert float(pr.b_i(2)) == 1.0


def test_prior_structure_standard_diffuse():
    pr = pl.PriorStructure.standard_diffuse(2)
    assert pr.a0 == 0 and pr.a_i(1) == pr.a_i(2) == as_fraction("-1/2")
    assert all(b == 0 for b in pr.b)


def test_prior_structure_rejects_negative_b():
    with pytest.raises(ConstructionError):
        pl.PriorStructure("power-exp", (0, 0), b=(0, -1))


def test_prior_structure_half_cauchy_shape():
    pr = pl.PriorStructure("half-cauchy", ("0",), s=(1.0, 2.0))
    assert pr.n_factors == 2
    with pytest.raises(ConstructionError):
        pl.PriorStructure("half-cauchy", ("0", "-1/2"), s=(1.0,))
    with pytest.raises(ConstructionError):
        pl.PriorStructure("half-cauchy", ("0",), b=(0,), s=(1.0,))
    with pytest.raises(ConstructionError):
        pl.PriorStructure("half-cauchy", ("0",), s=(-1.0,))


def test_shape_priors_are_proper():
    priors = [pl.ShapePrior.uniform(-1, 1),
              pl.ShapePrior.truncated_normal(0, 2, -6, 6),
              pl.ShapePrior.gamma(2.0, 1.0),
              pl.ShapePrior.point_mass(0.3)]
    for sp in priors:
        assert sp.validate_proper()


def test_shape_prior_outside_domain_rejected():
    with pytest.raises(pl.errors.DomainError):
        pl.TpnEffects(pl.EPSILON_SKEW, pl.ShapePrior.uniform(-2, 1))
    with pytest.raises(pl.errors.DomainError):
        pl.TpnEffects(pl.EPSILON_SKEW, pl.ShapePrior.point_mass(1.0))


def test_probit_spec_counts():
    ps = pl.ProbitSpec(((3, 2), (1, 4), (5, 0), (0, 2)), "-1/2", _family())
    assert ps.r == 4
    assert ps.mixed_groups == 2
    with pytest.raises(ConstructionError):
        pl.ProbitSpec(((1, -1),), "-1/2", _family())


# ---------------------------------------------------------------------------
# CSV ingestion
# ---------------------------------------------------------------------------

def test_load_matrix_roundtrip(tmp_path):
    p = tmp_path / "m.csv"
    p.write_text("1.5,2\n-0.25,1e-3\n")
    mat = pl.load_matrix(p)
    assert mat.shape == (2, 2)
    assert mat[1, 1] == pytest.approx(1e-3)


def test_load_matrix_ragged_reports_row(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("1,2\n3\n")
    with pytest.raises(ConstructionError, match="row 2"):
        pl.load_matrix(p)


def test_load_matrix_bad_cell_reports_position(tmp_path):
    p = tmp_path / "bad2.csv"
    p.write_text("1,2\n3,zzz\n")
    with pytest.raises(ConstructionError, match="row 2, column 2"):
        pl.load_matrix(p)


def test_load_vector_rejects_wide(tmp_path):
    p = tmp_path / "wide.csv"
    p.write_text("1,2\n")
    with pytest.raises(ConstructionError, match="single column"):
        pl.load_vector(p)
