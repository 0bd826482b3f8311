import numpy as np
from django.test import SimpleTestCase
from scipy import special

from django_medqte import EstimationError
from django_medqte.glm import (
    IDENTITY, LOGIT, PROBIT, DesignMatrix, GlmFit, LinkFunction, constant_fit, fit_lasso, fit_learner, fit_mle,
    fit_post_lasso, penalty_level, predict_prob, refit_on_columns,
)


def probit_sample(n=2000, p=10, seed=0, beta=(0.3, 1.0, -0.8)):
    """Intercept plus the first two of p covariates carry signal."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, p))
    eta = beta[0] + beta[1] * x[:, 0] + beta[2] * x[:, 1]
    labels = (rng.uniform(size=n) < special.ndtr(eta)).astype(float)
    return DesignMatrix.build(x), labels


class TestLinkFunction(SimpleTestCase):

    def test_inverse_round_trip(self):
        p = np.array([0.1, 0.5, 0.9])
        for kind in (LOGIT, PROBIT, IDENTITY):
            link = LinkFunction(kind)
            np.testing.assert_allclose(link.cdf(link.inverse(p)), p)

    def test_probit_terms_are_stable_in_the_tails(self):
        nll, score, weight = LinkFunction(PROBIT).working_terms(np.array([-40.0, 40.0]), np.array([1.0, 0.0]))

        self.assertTrue(np.all(np.isfinite(nll)))
        self.assertTrue(np.all(np.isfinite(score)))
        self.assertTrue(np.all(weight >= 0))

    def test_unknown_link(self):
        with self.assertRaises(EstimationError):
            LinkFunction('cloglog')


class TestDesignMatrix(SimpleTestCase):

    def test_layout(self):
        x = np.arange(6.0).reshape(3, 2)
        design = DesignMatrix.build(x, np.ones((3, 1)), ('d',))

        self.assertEqual(design.names, ('intercept', 'd', 'x1', 'x2'))
        np.testing.assert_array_equal(design.penalty_loadings, [0, 0, 1, 1])
        self.assertEqual(design.covariate_offset, 2)
        self.assertEqual(design.unpenalized_columns(), (0, 1))
        self.assertEqual(design.covariate_columns([1]), (3,))

    def test_restrict(self):
        design = DesignMatrix.build(np.arange(6.0).reshape(3, 2))

        self.assertEqual(design.restrict([0, 2]).names, ('intercept', 'x2'))


class TestPenaltyLevel(SimpleTestCase):

    def test_closed_form(self):
        n, p = 1000, 20
        expected = 1.1 * np.sqrt(n) * special.ndtri(1 - 0.1 / (2 * p * np.log(n)))

        self.assertAlmostEqual(penalty_level(n, p), expected)

    def test_increases_with_dimension(self):
        self.assertLess(penalty_level(1000, 5), penalty_level(1000, 50))

    def test_invalid_arguments(self):
        with self.assertRaises(EstimationError):
            penalty_level(1, 5)


class TestFitMle(SimpleTestCase):

    def test_probit_recovers_coefficients(self):
        design, labels = probit_sample(n=5000, p=2, seed=1)
        fit = fit_mle(design, labels, LinkFunction(PROBIT))

        self.assertTrue(fit.converged)
        np.testing.assert_allclose(fit.beta, [0.3, 1.0, -0.8], atol=0.1)

    def test_objective_path_is_monotone(self):
        design, labels = probit_sample(n=1000, p=3, seed=2)
        fit = fit_mle(design, labels, LinkFunction(LOGIT))

        self.assertTrue(np.all(np.diff(fit.objective_path) <= 1e-9))

    def test_identity_link_is_least_squares(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((200, 2))
        y = 1.0 + x @ np.array([0.5, -2.0]) + 0.1 * rng.standard_normal(200)
        design = DesignMatrix.build(x)
        fit = fit_mle(design, y, LinkFunction(IDENTITY))
        expected = np.linalg.lstsq(design.rows, y, rcond=None)[0]

        np.testing.assert_allclose(fit.beta, expected, atol=1e-8)

    def test_separation_is_capped(self):
        x = np.array([-2.0, -1.0, -0.5, 0.5, 1.0, 2.0])
        labels = (x > 0).astype(float)
        with self.assertLogs('django_medqte.glm', level='WARNING'):
            fit = fit_mle(DesignMatrix.build(x), labels, LinkFunction(LOGIT))

        self.assertFalse(fit.converged)
        self.assertTrue(np.all(np.isfinite(fit.beta)))


class TestFitLasso(SimpleTestCase):

    def test_selects_relevant_covariates(self):
        design, labels = probit_sample(n=3000, p=20, seed=3)
        link = LinkFunction(PROBIT)
        fit = fit_lasso(design, labels, link, penalty_level(design.n, 20))

        self.assertTrue(fit.converged)
        self.assertTrue({1, 2} <= fit.support)
        self.assertLessEqual(len(fit.support - {0, 1, 2}), 2)

    def test_zero_penalty_matches_mle(self):
        design, labels = probit_sample(n=1000, p=3, seed=4)
        link = LinkFunction(PROBIT)

        np.testing.assert_allclose(fit_lasso(design, labels, link, 0.0).beta, fit_mle(design, labels, link).beta,
                                   atol=1e-4)

    def test_large_penalty_keeps_intercept_only(self):
        design, labels = probit_sample(n=500, p=5, seed=5)
        fit = fit_lasso(design, labels, LinkFunction(PROBIT), 1e6)

        self.assertEqual(fit.support, frozenset({0}))
        self.assertAlmostEqual(float(special.ndtr(fit.beta[0])), labels.mean(), places=4)

    def test_penalized_objective_never_increases(self):
        design, labels = probit_sample(n=800, p=15, seed=6)
        fit = fit_lasso(design, labels, LinkFunction(LOGIT), penalty_level(800, 15))

        self.assertTrue(np.all(np.diff(fit.objective_path) <= 1e-12))

    def test_negative_penalty(self):
        design, labels = probit_sample(n=100, p=2)
        with self.assertRaises(EstimationError):
            fit_lasso(design, labels, LinkFunction(PROBIT), -1.0)


class TestPostLasso(SimpleTestCase):

    def test_refit_on_support_plus_extras(self):
        design, labels = probit_sample(n=2000, p=10, seed=7)
        link = LinkFunction(PROBIT)
        lasso = fit_lasso(design, labels, link, penalty_level(2000, 10))
        fit = fit_post_lasso(design, labels, link, 0.0, extra_support=[9], lasso_fit=lasso)

        self.assertEqual(fit.support, lasso.support | {9})
        expected = refit_on_columns(design, labels, link, lasso.support | {9})
        np.testing.assert_allclose(fit.beta, expected.beta)

    def test_extra_support_out_of_range(self):
        design, labels = probit_sample(n=200, p=2)
        with self.assertRaises(EstimationError):
            fit_post_lasso(design, labels, LinkFunction(PROBIT), 1.0, extra_support=[10])

    def test_fit_learner_dispatch(self):
        design, labels = probit_sample(n=500, p=3, seed=8)
        link = LinkFunction(PROBIT)

        self.assertEqual(fit_learner('mle', design, labels, link, 0.0).support, frozenset(range(4)))
        with self.assertRaises(EstimationError):
            fit_learner('forest', design, labels, link, 0.0)


class TestPredictProb(SimpleTestCase):

    def test_trimming(self):
        fit = GlmFit(np.array([5.0, 0.0]), LinkFunction(PROBIT), True, 0.0)

        self.assertAlmostEqual(predict_prob(fit, np.array([1.0, 0.0]), trim=0.01), 0.99)
        self.assertAlmostEqual(predict_prob(fit, np.array([1.0, 0.0])), float(special.ndtr(5.0)))

    def test_batch(self):
        fit = constant_fit(3, 0.25)
        values = predict_prob(fit, np.ones((4, 3)))

        np.testing.assert_allclose(values, 0.25)

    def test_dimension_mismatch(self):
        with self.assertRaises(EstimationError):
            predict_prob(constant_fit(3, 0.5), np.ones(2))

    def test_invalid_trim(self):
        with self.assertRaises(EstimationError):
            predict_prob(constant_fit(2, 0.5), np.ones(2), trim=0.5)
