import mpmath
import numpy as np
import pytest
from cases import CASE_I, CASE_II, CASE_III, gaussian, random_theta
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats
from scipy.special import roots_legendre

from gmcopula.exceptions import ConstraintViolation, DimensionError, DomainError
from gmcopula.model import (
    MixtureParameters,
    copula_cdf,
    copula_joint_survivor,
    copula_log_density,
    joint_cdf,
    joint_log_pdf,
    joint_survivor,
    marginal_cdf,
    marginal_pdf,
    marginal_quantile,
    marginal_survivor,
    simulate,
)
from gmcopula.numerics import CovarianceFactor, mvn_log_pdf


def _gauss_legendre(a, b, n):
    x, w = roots_legendre(n)
    return 0.5 * (b - a) * x + 0.5 * (a + b), 0.5 * (b - a) * w


class TestParameters:
    def test_cases_are_valid(self):
        for theta in (CASE_I, CASE_II, CASE_III):
            assert theta.violation() is None

    def test_dimensions(self):
        assert (CASE_I.k, CASE_I.d) == (2, 2)
        assert (CASE_III.k, CASE_III.d) == (2, 5)

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            MixtureParameters([1.0], [[0.0, 0.0]], [[1.0, 1.0]], [[0.1, 0.2]])

    @pytest.mark.parametrize(
        "change, name",
        [
            (dict(weights=[0.5, 0.6]), "simplex"),
            (dict(weights=[0.0, 1.0]), "first_weight"),
            (dict(means=[[0.1, 0.0], [2.0, 4.0]]), "reference_mean"),
            (dict(scales=[[1.1, 0.61], [0.43, 0.72]]), "reference_scale"),
            (dict(means=[[0.0, 0.0], [-1.0, 4.0]]), "ordering"),
            (dict(scales=[[1.0, -0.61], [0.43, 0.72]]), "positive_scale"),
            (dict(correlations=[[1.5], [0.57]]), "correlation_range"),
        ],
    )
    def test_violations(self, change, name):
        fields = CASE_I.to_dict()
        fields.update(change)
        theta = MixtureParameters(**fields)
        assert theta.violation().name == name
        with pytest.raises(ConstraintViolation):
            theta.validate()

    def test_dict_round_trip(self):
        again = MixtureParameters.from_dict(CASE_III.to_dict())
        np.testing.assert_array_equal(again.correlations, CASE_III.correlations)
        np.testing.assert_array_equal(again.scales, CASE_III.scales)


class TestMargins:
    def test_single_component_median(self):
        assert marginal_cdf(gaussian(0.3), 1, 0.0) == 0.5

    def test_case_i_margin_against_high_precision(self):
        # margin 2 at y = 0: 0.2 * Phi(0 / 0.61) + 0.8 * Phi((0 - 4) / 0.72)
        ref = 0.2 * mpmath.ncdf(0) + mpmath.mpf("0.8") * mpmath.ncdf(mpmath.mpf(-4) / mpmath.mpf("0.72"))
        assert marginal_cdf(CASE_I, 1, 0.0) == pytest.approx(float(ref), abs=1e-10)

    def test_saturation(self):
        assert marginal_cdf(CASE_I, 0, 50.0) == pytest.approx(1.0, abs=1e-12)

    def test_pdf_values(self):
        assert marginal_pdf(gaussian(0.2), 0, 0.0) == pytest.approx(0.3989423, abs=1e-7)
        ref = 0.2 * stats.norm.pdf(2.0) + 0.8 * stats.norm.pdf(0.0, scale=0.43)
        assert marginal_pdf(CASE_I, 0, 2.0) == pytest.approx(ref, abs=1e-12)

    def test_pdf_is_cdf_derivative(self):
        h = 1e-5
        for y in np.random.default_rng(0).uniform(-3, 6, size=20):
            fd = (marginal_cdf(CASE_I, 1, y + h) - marginal_cdf(CASE_I, 1, y - h)) / (2 * h)
            assert fd == pytest.approx(marginal_pdf(CASE_I, 1, y), abs=1e-6)

    def test_pdf_integrates_to_one(self):
        x, w = _gauss_legendre(-15, 20, 400)
        assert np.sum(w * marginal_pdf(CASE_II, 1, x)) == pytest.approx(1.0, abs=1e-10)

    @given(st.floats(-30, 30))
    def test_cdf_plus_survivor(self, y):
        total = marginal_cdf(CASE_I, 1, y) + marginal_survivor(CASE_I, 1, y)
        assert total == pytest.approx(1.0, abs=1e-14)

    def test_bad_index(self):
        with pytest.raises(DimensionError):
            marginal_cdf(CASE_I, 2, 0.0)


class TestQuantile:
    def test_single_component_median(self):
        assert marginal_quantile(gaussian(0.5), 0, 0.5) == pytest.approx(0.0, abs=1e-9)

    @pytest.mark.parametrize("i", [0, 1])
    def test_round_trip_from_y(self, i):
        # y in [-6, 12] wherever F(y) still resolves y to 1e-8 in double precision
        y = np.linspace(-6, 12, 2001)
        cond = np.finfo(float).eps / marginal_pdf(CASE_I, i, y)
        y = y[cond <= 1e-9]
        back = marginal_quantile(CASE_I, i, marginal_cdf(CASE_I, i, y))
        assert np.max(np.abs(back - y)) <= 1e-8

    @pytest.mark.parametrize("theta", [CASE_I, CASE_II, CASE_III])
    def test_round_trip_from_u(self, theta):
        u = np.concatenate([np.logspace(-12, -1, 200), np.linspace(0.1, 0.9, 600), 1 - np.logspace(-1, -12, 200)])
        for i in range(theta.d):
            q = marginal_quantile(theta, i, u)
            upper = u > 0.5
            err = np.where(upper, np.abs(marginal_survivor(theta, i, q) - (1 - u)), np.abs(marginal_cdf(theta, i, q) - u))
            assert np.max(err) <= 1e-10

    def test_upper_quantile_in_second_component(self):
        theta = MixtureParameters([0.5, 0.5], [[0, 0], [10.0, 12.0]], [[1, 1], [1, 2]], [[0.0], [0.0]])
        # dense tabulation oracle
        grid = np.linspace(-10, 30, 400001)
        tab = grid[np.searchsorted(marginal_cdf(theta, 1, grid), 0.999)]
        q = marginal_quantile(theta, 1, 0.999)
        assert q == pytest.approx(tab, abs=1e-3)
        assert q > 12.0 - 3 * 2.0

    def test_extreme_tail(self):
        q = marginal_quantile(CASE_I, 0, 1e-300)
        assert np.isfinite(q)
        assert marginal_cdf(CASE_I, 0, q) == pytest.approx(1e-300, rel=1e-8)

    @pytest.mark.parametrize("u", [0.0, 1.0, -0.5, np.nan])
    def test_domain(self, u):
        with pytest.raises(DomainError):
            marginal_quantile(CASE_I, 0, u)


class TestJoint:
    def test_log_pdf_independent(self):
        theta = gaussian(0.0, d=3)
        assert joint_log_pdf(theta, np.zeros(3)) == pytest.approx(3 * -0.9189385, abs=1e-7)

    def test_degenerate_weight(self):
        theta = MixtureParameters([1.0, 0.0], [[0, 0], [1, 1]], [[1, 2], [1, 1]], [[0.4], [0.1]])
        f = CovarianceFactor.from_scales_and_corr([1.0, 2.0], theta.correlation_matrices[0])
        y = np.array([0.3, -1.2])
        assert joint_log_pdf(theta, y) == mvn_log_pdf(y, np.zeros(2), f)

    def test_log_pdf_integrates_to_one(self):
        x, w = _gauss_legendre(-12, 18, 300)
        xx, yy = np.meshgrid(x, x, indexing="ij")
        dens = np.exp(joint_log_pdf(CASE_I, np.stack([xx.ravel(), yy.ravel()], axis=1)))
        assert np.sum(np.outer(w, w).ravel() * dens) == pytest.approx(1.0, abs=1e-4)

    @pytest.mark.parametrize("d", [2, 3, 4])
    def test_survivor_orthant(self, d):
        theta = gaussian(0.0, d=d)
        assert joint_survivor(theta, np.zeros(d)).value == pytest.approx(0.5**d, abs=1e-5)
        assert joint_cdf(theta, np.zeros(d)).value == pytest.approx(0.5**d, abs=1e-5)

    def test_marginalization(self):
        y = np.array([-50.0, 0.4, 1.3])
        theta = CASE_III
        full = joint_survivor(MixtureParameters(
            theta.weights, theta.means[:, :3], theta.scales[:, :3],
            theta.correlation_matrices[0].submatrix([0, 1, 2]).offdiag[None, :].repeat(2, 0)
        ), y, 1e-8).value
        sub = MixtureParameters(
            theta.weights, theta.means[:, 1:3], theta.scales[:, 1:3],
            np.array([[theta.correlation_matrices[0].matrix[1, 2]]] * 2),
        )
        assert full == pytest.approx(joint_survivor(sub, y[1:], 1e-8).value, abs=1e-6)

    def test_linearity(self):
        c1 = MixtureParameters([1.0], [[0, 0]], [[1, 1.5]], [[0.3]])
        c2 = MixtureParameters([1.0], [[0, 0]], [[0.8, 0.6]], [[-0.2]])
        both = MixtureParameters([0.5, 0.5], [[0, 0], [1.0, -1.0]], [[1, 1.5], [0.8, 0.6]], [[0.3], [-0.2]])
        y = np.array([0.2, 0.1])
        expected = 0.5 * joint_survivor(c1, y).value + 0.5 * joint_survivor(c2, y - [1.0, -1.0]).value
        assert joint_survivor(both, y).value == pytest.approx(expected, abs=1e-6)

    def test_saturation(self):
        assert joint_cdf(CASE_I, [50.0, 50.0]).value == pytest.approx(1.0, abs=1e-6)

    def test_single_margin_survivor(self):
        y = np.array([-np.inf, 3.1])
        assert joint_survivor(CASE_I, y).value == pytest.approx(marginal_survivor(CASE_I, 1, 3.1), abs=1e-12)

    @settings(max_examples=20, deadline=None)
    @given(st.floats(-3, 6), st.floats(-3, 6))
    def test_inclusion_exclusion(self, a, b):
        y = np.array([a, b])
        lhs = joint_cdf(CASE_I, y).value + joint_survivor(CASE_I, y).value
        # the two mixed rectangles: F(a) - C(a, b) and F(b) - C(a, b)
        rhs = 1.0 - (marginal_cdf(CASE_I, 0, a) - joint_cdf(CASE_I, y).value) - (
            marginal_cdf(CASE_I, 1, b) - joint_cdf(CASE_I, y).value
        )
        assert lhs == pytest.approx(rhs, abs=1e-5)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            joint_log_pdf(CASE_I, np.zeros(3))


class TestCopula:
    def test_independence_density(self):
        u = np.random.default_rng(0).uniform(size=(50, 3))
        np.testing.assert_allclose(copula_log_density(gaussian(0.0, 3), u), 0.0, atol=1e-10)

    @pytest.mark.parametrize("rho", [-0.7, 0.2, 0.9])
    def test_gaussian_at_median(self, rho):
        val = copula_log_density(gaussian(rho), np.array([0.5, 0.5]))
        assert val == pytest.approx(-0.5 * np.log(1 - rho**2), abs=1e-8)

    def test_gaussian_against_scipy(self):
        u = np.random.default_rng(1).uniform(0.01, 0.99, size=(40, 2))
        z = stats.norm.ppf(u)
        ref = stats.multivariate_normal([0, 0], [[1, 0.6], [0.6, 1]]).logpdf(z) - stats.norm.logpdf(z).sum(axis=1)
        np.testing.assert_allclose(copula_log_density(gaussian(0.6), u), ref, atol=1e-8)

    def test_density_integrates_to_one(self):
        # substitute u = Phi(z) so the integrand is smooth on a finite box
        z, w = _gauss_legendre(-9, 9, 400)
        zz1, zz2 = np.meshgrid(z, z, indexing="ij")
        u = stats.norm.cdf(np.stack([zz1.ravel(), zz2.ravel()], axis=1))
        ok = np.all((u > 0) & (u < 1), axis=1)
        jac = stats.norm.pdf(zz1.ravel()) * stats.norm.pdf(zz2.ravel())
        vals = np.zeros(u.shape[0])
        vals[ok] = np.exp(copula_log_density(CASE_I, u[ok])) * jac[ok]
        assert np.sum(np.outer(w, w).ravel() * vals) == pytest.approx(1.0, abs=1e-3)

    def test_density_matches_mixed_partial_of_cdf(self):
        # the bivariate CDF is exact, so a small step costs no integration noise;
        # near u2 = 0.2 the density bends sharply where the first component ends
        h = 1e-4
        for u1, u2 in [(0.3, 0.4), (0.7, 0.8), (0.5, 0.2)]:
            c = lambda a, b: copula_cdf(CASE_I, [a, b]).value  # noqa: E731
            fd = (c(u1 + h, u2 + h) - c(u1 + h, u2 - h) - c(u1 - h, u2 + h) + c(u1 - h, u2 - h)) / (4 * h * h)
            assert fd == pytest.approx(np.exp(copula_log_density(CASE_I, np.array([u1, u2]))), abs=1e-3)

    def test_exchangeable_permutation(self):
        theta = MixtureParameters(
            [0.4, 0.6],
            [[0, 0, 0], [1.5, 1.5, 1.5]],
            [[1, 1, 1], [0.7, 0.7, 0.7]],
            [[0.2, 0.5, -0.1], [0.3, 0.1, 0.6]],
        )
        # swapping coordinates 0 and 2 maps pairs (0,1),(0,2),(1,2) to (1,2),(0,2),(0,1)
        swapped = MixtureParameters(
            theta.weights, theta.means, theta.scales, theta.correlations[:, [2, 1, 0]]
        )
        u = np.random.default_rng(2).uniform(0.02, 0.98, size=(30, 3))
        np.testing.assert_allclose(
            copula_log_density(theta, u), copula_log_density(swapped, u[:, [2, 1, 0]]), atol=1e-10
        )

    def test_domain(self):
        with pytest.raises(DomainError):
            copula_log_density(CASE_I, np.array([0.0, 0.5]))
        with pytest.raises(DimensionError):
            copula_log_density(CASE_I, np.array([0.2, 0.5, 0.5]))

    def test_joint_survivor_independence(self):
        theta = gaussian(0.0, 3)
        for r in (0.2, 0.6, 0.9):
            assert copula_joint_survivor(theta, np.full(3, r)).value == pytest.approx((1 - r) ** 3, abs=1e-5)

    def test_joint_survivor_limits(self):
        assert copula_joint_survivor(CASE_I, [1e-12, 1e-12]).value == pytest.approx(1.0, abs=1e-6)
        assert copula_joint_survivor(CASE_I, [0.0, 0.0]).value == 1.0

    def test_joint_survivor_rho_half_median(self):
        assert copula_joint_survivor(gaussian(0.5), [0.5, 0.5]).value == pytest.approx(1 / 3, abs=1e-5)


class TestSimulate:
    def test_uniform_margins(self):
        u = simulate(CASE_I, 50000, seed=4)
        assert np.all((u > 0) & (u < 1))
        for col in u.T:
            assert stats.kstest(col, "uniform").statistic <= 0.01

    def test_gaussian_dependence(self):
        u = simulate(gaussian(0.8), 50000, seed=5)
        assert stats.spearmanr(u[:, 0], u[:, 1]).statistic > 0.5

    def test_seeded(self):
        a = simulate(CASE_II, 1000, seed=9)
        np.testing.assert_array_equal(a, simulate(CASE_II, 1000, seed=9))
        assert not np.array_equal(a, simulate(CASE_II, 1000, seed=10))

    def test_rank_invariance(self):
        u = simulate(CASE_I, 500, seed=1)
        ranks = stats.rankdata(u, axis=0)
        np.testing.assert_array_equal(ranks, stats.rankdata(np.log(u) ** 3, axis=0))

    def test_count(self):
        with pytest.raises(DomainError):
            simulate(CASE_I, 0, seed=0)

    def test_random_thetas_valid(self):
        rng = np.random.default_rng(0)
        for _ in range(5):
            theta = random_theta(rng, 3, 2)
            u = simulate(theta, 200, seed=1)
            assert np.all(np.isfinite(copula_log_density(theta, u)))
