import os
import tempfile

import numpy as np
from django.test import SimpleTestCase

from django_medqte import DataValidationError
from django_medqte.config import RunConfig
from django_medqte.quantiles import NDQTE, NIQTE, TQTE
from django_medqte.services.estimation import EstimationService

from ..factories import DatasetFactory


def estimate_config(**flags):
    return RunConfig.resolve('estimate', dict(
        {'input': 'unused.csv', 'grid_size': 15, 'tau': '0.2:0.8:0.1', 'learner': 'mle', 'bootstrap_reps': 0},
        **flags))


class TestEstimationService(SimpleTestCase):

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.data = DatasetFactory(n=600, seed=2)
        cls.outcome = EstimationService(estimate_config(), cls.data).process()

    def test_profile_is_a_distribution(self):
        processed = self.outcome.profile.processed

        self.assertTrue(np.all(np.diff(processed, axis=1) >= 0))
        self.assertTrue(np.all((processed >= 0) & (processed <= 1)))

    def test_decomposition(self):
        curve = self.outcome.curve

        np.testing.assert_allclose(curve.effect(TQTE), curve.effect(NDQTE) + curve.effect(NIQTE), atol=1e-12)

    def test_positive_total_effect(self):
        # every path from treatment to the outcome is positive in the sampling design
        self.assertGreater(np.median(self.outcome.curve.effect(TQTE)), 0)

    def test_no_bootstrap(self):
        self.assertIsNone(self.outcome.bootstrap)

    def test_bootstrap_bands(self):
        outcome = EstimationService(estimate_config(bootstrap_reps=30, grid_size=9), self.data).process()

        self.assertEqual(outcome.bootstrap.B, 30)
        self.assertTrue(np.all(outcome.bootstrap.ci[0] <= outcome.bootstrap.ci[1]))

    def test_too_few_rows_for_folds(self):
        with self.assertRaises(DataValidationError):
            EstimationService(estimate_config(folds=5), DatasetFactory(n=8)).process()

    def test_write(self):
        with tempfile.TemporaryDirectory() as tmp:
            service = EstimationService(estimate_config(out=tmp), self.data)
            service.write(self.outcome)

            self.assertTrue(os.path.exists(os.path.join(tmp, 'effects.csv')))
