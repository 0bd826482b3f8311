import numpy as np
from django.test import SimpleTestCase

from django_medqte import EstimationError
from django_medqte.data import OutcomeGrid, build_outcome_grid, kfold_split
from django_medqte.glm import MLE
from django_medqte.nuisances import NuisanceSpec, crossfit_nuisances
from django_medqte.scores import (
    PAIRS, THETA, THETA_PRIME, crossfit_theta, evaluate_scores, fold_weights, pair_index, psi_components,
    psi_dd_value, psi_prime_value, psi_value, theta_from_inputs,
)
from django_medqte.toy import random_bayes_consistent_inputs

from .factories import DatasetFactory


class TestScoreFunctions(SimpleTestCase):

    def setUp(self):
        self.inputs = random_bayes_consistent_inputs(500, 4, np.random.default_rng(0))

    def test_psi_equals_psi_prime_under_bayes_rule(self):
        for d, d_prime in PAIRS:
            np.testing.assert_allclose(psi_value(self.inputs, d, d_prime), psi_prime_value(self.inputs, d, d_prime),
                                       atol=1e-10)

    def test_psi_reduces_to_doubly_robust_score(self):
        for d in (0, 1):
            np.testing.assert_allclose(psi_value(self.inputs, d, d), psi_dd_value(self.inputs, d), atol=1e-10)

    def test_components_sum_to_score(self):
        residual, bridge, base = psi_components(self.inputs, 1, 0)

        np.testing.assert_allclose(residual + bridge + base, psi_value(self.inputs, 1, 0))

    def test_residual_vanishes_off_arm(self):
        residual, bridge, _ = psi_components(self.inputs, 1, 0)
        control = self.inputs.treatment == 0

        self.assertTrue(np.all(residual[control] == 0))
        self.assertTrue(np.all(bridge[~control] == 0))

    def test_evaluate_scores_shape(self):
        self.assertEqual(evaluate_scores(self.inputs).shape, (500, 4, 4))

    def test_psi_prime_requires_binary_mediator(self):
        inputs = random_bayes_consistent_inputs(10, 2, np.random.default_rng(1))
        inputs = type(inputs)(**dict(vars(inputs), p_mediator_one=None))
        with self.assertRaises(EstimationError):
            psi_prime_value(inputs, 1, 0)

    def test_unknown_variant(self):
        with self.assertRaises(EstimationError):
            evaluate_scores(self.inputs, 'theta_second')


class TestAggregation(SimpleTestCase):

    def test_fold_weights_balance_folds(self):
        folds = kfold_split(10, 3, seed=0)
        weights = fold_weights(folds)

        for k in (1, 2, 3):
            self.assertAlmostEqual(weights[folds.indices(k)].sum(), 10 / 3)
        self.assertAlmostEqual(weights.mean(), 1.0)

    def test_theta_is_mean_of_fold_means(self):
        inputs = random_bayes_consistent_inputs(301, 3, np.random.default_rng(2))
        folds = kfold_split(301, 3, seed=4)
        estimate = theta_from_inputs(inputs, folds, OutcomeGrid(np.arange(3.0)))
        scores = evaluate_scores(inputs)
        expected = np.mean([scores[folds.indices(k)].mean(axis=0) for k in (1, 2, 3)], axis=0)

        np.testing.assert_allclose(estimate.theta, expected)
        np.testing.assert_allclose(np.mean(estimate.weights[:, None, None] * (scores - estimate.theta), axis=0), 0.0,
                                   atol=1e-12)

    def test_score_blocks_without_retained_scores(self):
        inputs = random_bayes_consistent_inputs(90, 2, np.random.default_rng(3))
        folds = kfold_split(90, 3, seed=0)
        estimate = theta_from_inputs(inputs, folds, OutcomeGrid(np.arange(2.0)), retain_scores=False)
        scores = evaluate_scores(inputs)

        self.assertIsNone(estimate.scores)
        for rows, block in estimate.iter_score_blocks():
            np.testing.assert_allclose(block, scores[rows])


class TestCrossfitTheta(SimpleTestCase):

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.data = DatasetFactory(n=400, p=3, seed=21)
        cls.grid = build_outcome_grid(cls.data, 9)
        cls.folds = kfold_split(cls.data.n, 3, seed=1)
        cls.nuisances = crossfit_nuisances(cls.data, cls.folds, cls.grid, NuisanceSpec.uniform(MLE))

    def test_both_variants(self):
        theta = crossfit_theta(self.data, self.folds, self.nuisances, self.grid, THETA)
        theta_prime = crossfit_theta(self.data, self.folds, self.nuisances, self.grid, THETA_PRIME)

        self.assertEqual(theta.theta.shape, (4, 9))
        self.assertEqual(theta.fold_theta.shape, (3, 4, 9))
        self.assertIn('trim_hits', theta.diagnostics)
        # both estimate the same CDFs, so they agree up to sampling noise
        self.assertLess(np.max(np.abs(theta.theta - theta_prime.theta)), 0.2)

    def test_value_accessor(self):
        theta = crossfit_theta(self.data, self.folds, self.nuisances, self.grid)

        np.testing.assert_array_equal(theta.value(1, 0), theta.theta[pair_index(1, 0)])

    def test_fold_count_mismatch(self):
        with self.assertRaises(EstimationError):
            crossfit_theta(self.data, self.folds, self.nuisances[:2], self.grid)

    def test_theta_prime_requires_binary_mediator(self):
        data = DatasetFactory(n=400, p=3, seed=21, mediator_kind='continuous')
        with self.assertRaises(EstimationError):
            crossfit_theta(data, self.folds, self.nuisances, self.grid, THETA_PRIME)
