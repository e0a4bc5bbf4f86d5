import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mombayes.errors import DomainError, EmptyData, NonDifferentiablePoint, NonFiniteInput
from mombayes.models import (
    Dataset,
    GaussianLocation,
    LaplaceLocation,
    LinearRegression,
    ParamBox,
    PoissonRate,
    Prior,
    closed_form_mle,
    default_location_domain,
    family_from_kind,
    fisher_information,
    grad_log_prior,
    grad_nll,
    log_prior,
    nll_increments,
)

GAUSS = GaussianLocation(sigma=1.0, domain=ParamBox([-100.0], [100.0]))
LAPL = LaplaceLocation(scale=1.0, domain=ParamBox([-100.0], [100.0]))
POIS = PoissonRate(domain=ParamBox([1e-3], [1e3]))


def regression_family(p=3):
    lo = np.concatenate([np.full(p, -20.0), [1e-2]])
    hi = np.concatenate([np.full(p, 20.0), [10.0]])
    return LinearRegression(n_coefficients=p, domain=ParamBox(lo, hi))


class TestIncrements:
    def test_zero_at_reference(self):
        data = Dataset(y=np.array([0.3, -2.0, 17.0]))
        inc = nll_increments(GAUSS, [1.2], [1.2], data)
        assert np.all(inc == 0.0)

    def test_gaussian_closed_form(self):
        data = Dataset(y=np.array([2.0]))
        inc = nll_increments(GAUSS, [1.0], [0.0], data)
        assert inc[0] == pytest.approx(-1.5, abs=0)

    def test_laplace_closed_form(self):
        data = Dataset(y=np.array([0.5]))
        inc = nll_increments(LAPL, [1.0], [0.0], data)
        assert inc[0] == pytest.approx(0.0, abs=0)

    def test_poisson_closed_form(self):
        data = Dataset(y=np.array([3.0]))
        inc = nll_increments(POIS, [2.0], [1.0], data)
        assert inc[0] == pytest.approx((2.0 - 1.0) - 3.0 * np.log(2.0), abs=1e-14)

    def test_outside_box_raises(self):
        data = Dataset(y=np.array([0.0]))
        with pytest.raises(DomainError):
            nll_increments(GAUSS, [101.0], [0.0], data)

    @given(
        st.floats(min_value=-5, max_value=5),
        st.floats(min_value=-5, max_value=5),
        st.floats(min_value=-5, max_value=5),
    )
    @settings(max_examples=200, deadline=None)
    def test_cocycle(self, a, b, c):
        data = Dataset(y=np.array([0.7, -1.1, 2.9, 0.0]))
        for fam in (GAUSS, LAPL):
            lhs = nll_increments(fam, [a], [b], data) + nll_increments(fam, [b], [c], data)
            rhs = nll_increments(fam, [a], [c], data)
            assert lhs == pytest.approx(rhs, abs=1e-12)

    def test_cocycle_regression(self):
        rng = np.random.default_rng(5)
        fam = regression_family()
        data = fam.sample(np.array([1.0, -0.5, 0.25, 0.8]), 50, rng)
        t1 = np.array([0.5, 0.1, -0.2, 0.6])
        t2 = np.array([-0.4, 0.9, 0.3, 1.2])
        t3 = np.array([0.0, 0.0, 0.0, 0.9])
        lhs = nll_increments(fam, t1, t2, data) + nll_increments(fam, t2, t3, data)
        rhs = nll_increments(fam, t1, t3, data)
        assert lhs == pytest.approx(rhs, abs=1e-12)


class TestGradients:
    def test_gaussian_grad(self):
        data = Dataset(y=np.array([3.0]))
        g = grad_nll(GAUSS, [0.0], data)
        assert g[0, 0] == pytest.approx(-3.0, abs=0)

    def test_poisson_stationarity(self):
        data = Dataset(y=np.array([2.0]))
        g = grad_nll(POIS, [2.0], data)
        assert g[0, 0] == 0.0

    def test_laplace_kink_midpoint_and_strict(self):
        data = Dataset(y=np.array([1.0]))
        assert grad_nll(LAPL, [1.0], data)[0, 0] == 0.0
        with pytest.raises(NonDifferentiablePoint):
            grad_nll(LAPL, [1.0], data, strict=True)

    @pytest.mark.parametrize("seed", [0, 1, 2, 3, 4])
    def test_regression_grad_matches_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        fam = regression_family()
        theta0 = np.array([0.5, -1.0, 2.0, 1.3])
        data = fam.sample(theta0, 40, rng)
        theta = theta0 + 0.1 * rng.standard_normal(4)
        theta[-1] = abs(theta[-1]) + 0.5
        g = grad_nll(fam, theta, data).sum(axis=0)
        h = 1e-6
        for j in range(4):
            tp = theta.copy()
            tm = theta.copy()
            tp[j] += h
            tm[j] -= h
            fd = (
                nll_increments(fam, tp, theta0, data).sum()
                - nll_increments(fam, tm, theta0, data).sum()
            ) / (2 * h)
            assert g[j] == pytest.approx(fd, rel=1e-6, abs=1e-6)

    def test_increment_gradient_independent_of_reference(self):
        rng = np.random.default_rng(11)
        data = Dataset(y=rng.normal(size=30))
        h = 1e-6
        for ref in ([0.0], [2.5]):
            fd = (
                nll_increments(GAUSS, [1.0 + h], ref, data).sum()
                - nll_increments(GAUSS, [1.0 - h], ref, data).sum()
            ) / (2 * h)
            assert fd == pytest.approx(grad_nll(GAUSS, [1.0], data).sum(), rel=1e-8)


class TestFisher:
    def test_gaussian_unit(self):
        assert fisher_information(GAUSS, [0.0]) == pytest.approx(np.array([[1.0]]))

    def test_poisson_quarter(self):
        assert fisher_information(POIS, [4.0]) == pytest.approx(np.array([[0.25]]))

    def test_laplace_unit(self):
        assert fisher_information(LAPL, [0.0]) == pytest.approx(np.array([[1.0]]))

    @pytest.mark.parametrize(
        "fam,theta0",
        [
            (GAUSS, np.array([0.7])),
            (LAPL, np.array([-0.3])),
            (POIS, np.array([3.5])),
        ],
    )
    def test_monte_carlo_score_covariance(self, fam, theta0):
        rng = np.random.default_rng(99)
        data = fam.sample(theta0, 100_000, rng)
        g = grad_nll(fam, theta0, data)
        cov = np.atleast_2d(np.cov(g.T))
        info = fisher_information(fam, theta0)
        assert cov == pytest.approx(info, rel=0.05)
        assert np.abs(g.mean(axis=0)) <= 5 * np.sqrt(np.diag(info) / data.n)

    def test_monte_carlo_score_covariance_regression(self):
        rng = np.random.default_rng(7)
        fam = regression_family(p=2)
        theta0 = np.array([1.0, -2.0, 0.8])
        data = fam.sample(theta0, 100_000, rng)
        fam = fam.with_second_moment(data)
        g = grad_nll(fam, theta0, data)
        cov = np.cov(g.T)
        info = fisher_information(fam, theta0)
        assert np.diag(cov) == pytest.approx(np.diag(info), rel=0.05)
        # structurally near-zero cross terms: bounded by 5% of the diagonal scale
        off = ~np.eye(info.shape[0], dtype=bool)
        assert np.all(np.abs(cov[off] - info[off]) <= 0.05 * np.max(np.diag(info)))


class TestMle:
    def test_gaussian_mean(self):
        data = Dataset(y=np.array([1.0, 2.0, 3.0]))
        assert closed_form_mle(GAUSS, data)[0] == 2.0

    def test_laplace_median(self):
        data = Dataset(y=np.array([0.0, 0.0, 5.0]))
        assert closed_form_mle(LAPL, data)[0] == 0.0

    def test_regression_noiseless(self):
        z = np.linspace(-2, 2, 25)
        x = np.column_stack([np.ones_like(z), z])
        data = Dataset(y=2.0 * z, x=x)
        fam = regression_family(p=2)
        est = closed_form_mle(fam, data)
        # normal-equations oracle
        beta_oracle = np.linalg.solve(x.T @ x, x.T @ data.y)
        assert est[:2] == pytest.approx(beta_oracle, abs=1e-10)
        assert est[:2] == pytest.approx([0.0, 2.0], abs=1e-10)
        assert est[-1] == fam.domain.lower[-1]

    def test_empty_raises(self):
        with pytest.raises(EmptyData):
            closed_form_mle(GAUSS, Dataset(y=np.array([])))


class TestPrior:
    def test_uniform_box_flat(self):
        box = ParamBox([-1.0], [1.0])
        prior = Prior.uniform_box(box)
        assert log_prior(prior, [0.0]) == log_prior(prior, [0.5])
        assert grad_log_prior(prior, [0.0]) == pytest.approx([0.0])

    def test_gaussian_grad_at_mode(self):
        prior = Prior.gaussian_diagonal([-29.5], [1.0])
        assert grad_log_prior(prior, [-29.5]) == pytest.approx([0.0])

    def test_gaussian_grad_off_mode(self):
        prior = Prior.gaussian_diagonal([0.0], [10.0])
        assert grad_log_prior(prior, [5.0]) == pytest.approx([-0.05])

    def test_uniform_outside_support_raises(self):
        prior = Prior.uniform_box(ParamBox([-1.0], [1.0]))
        with pytest.raises(DomainError):
            log_prior(prior, [2.0])

    def test_mixed_prior_kind(self):
        prior = Prior((("normal", 0.0, 10.0), ("uniform", 0.0, 1.0)))
        assert prior.kind == "mixed"
        assert prior.mean == pytest.approx([0.0, 0.5])

    def test_prior_sampling_deterministic(self):
        prior = Prior((("normal", 1.0, 2.0), ("uniform", -1.0, 1.0)))
        a = prior.sample(np.random.default_rng(3), 5)
        b = prior.sample(np.random.default_rng(3), 5)
        assert np.array_equal(a, b)


class TestDatasetsAndDomains:
    def test_nonfinite_rejected(self):
        with pytest.raises(NonFiniteInput):
            Dataset(y=np.array([1.0, np.nan]))

    def test_replace_y_copy_on_write(self):
        data = Dataset(y=np.array([1.0, 2.0, 3.0]))
        out = data.replace_y(np.array([1]), np.array([9.0]))
        assert data.y[1] == 2.0 and out.y[1] == 9.0

    def test_default_domain_centered_on_median(self):
        data = Dataset(y=np.array([-30.0] * 96 + [1e4] * 4))
        box = default_location_domain("gaussian_location", data)
        assert box.lower[0] < -30.0 < box.upper[0]
        assert not box.contains_one([1e4])

    def test_family_from_kind(self):
        fam = family_from_kind("gaussian-location", sigma=2.0, domain=ParamBox([-1.0], [1.0]))
        assert isinstance(fam, GaussianLocation) and fam.sigma == 2.0
        with pytest.raises(ValueError):
            family_from_kind("weibull")

    def test_box_validation(self):
        with pytest.raises(ValueError):
            ParamBox([0.0], [0.0])
        with pytest.raises(ValueError):
            ParamBox([0.0, 1.0], [1.0])


class TestExactRisk:
    def test_gaussian_exact_risk_matches_monte_carlo(self):
        rng = np.random.default_rng(21)
        data = GAUSS.sample(np.array([0.3]), 400_000, rng)
        mc = nll_increments(GAUSS, [1.0], [0.0], data).mean()
        exact = GAUSS.risk_increment_exact([1.0], [0.0], [0.3])
        assert mc == pytest.approx(exact, abs=0.02)

    def test_laplace_exact_risk_matches_monte_carlo(self):
        rng = np.random.default_rng(22)
        data = LAPL.sample(np.array([0.0]), 400_000, rng)
        mc = nll_increments(LAPL, [0.8], [-0.2], data).mean()
        exact = LAPL.risk_increment_exact([0.8], [-0.2], [0.0])
        assert mc == pytest.approx(exact, abs=0.02)

    def test_poisson_exact_risk_matches_monte_carlo(self):
        rng = np.random.default_rng(23)
        data = POIS.sample(np.array([4.0]), 400_000, rng)
        mc = nll_increments(POIS, [5.0], [3.0], data).mean()
        exact = POIS.risk_increment_exact([5.0], [3.0], [4.0])
        assert mc == pytest.approx(exact, abs=0.02)
