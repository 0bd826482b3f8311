#!/usr/bin/env python

"""
test_django_medqte
------------

Tests for `django_medqte` models module.
"""

from django.test import TestCase

from django_medqte import models

from .factories import EstimationRunFactory


class TestEstimationRun(TestCase):

    def test_start(self):
        run = models.EstimationRun.objects.start('simulate', 'a' * 64, 'out')

        self.assertEqual(run.status, models.EstimationRun.STATUS.running)
        self.assertEqual(run.warnings, [])

    def test_succeed(self):
        run = EstimationRunFactory()
        run.succeed(['2 propensity predictions clamped'])
        run.refresh_from_db()

        self.assertEqual(run.status, models.EstimationRun.STATUS.succeeded)
        self.assertEqual(run.warnings, ['2 propensity predictions clamped'])

    def test_fail(self):
        run = EstimationRunFactory()
        run.fail(ValueError('boom'))
        run.refresh_from_db()

        self.assertEqual(run.status, models.EstimationRun.STATUS.failed)
        self.assertEqual(run.message, 'boom')

    def test_for_config(self):
        first = EstimationRunFactory(config_hash='f' * 64)
        EstimationRunFactory(config_hash='f' * 64)
        EstimationRunFactory()

        self.assertEqual(models.EstimationRun.objects.for_config('f' * 64).count(), 2)
        self.assertIn(first, models.EstimationRun.objects.for_config('f' * 64))

    def test_str(self):
        run = EstimationRunFactory(command='estimate', config_hash='0123456789abcdef' * 4)

        self.assertEqual(str(run), 'estimate 0123456789ab (running)')


class TestEstimationRunAdmin(TestCase):

    def test_registered(self):
        from django.contrib import admin

        from django_medqte.admin import EstimationRunAdmin

        self.assertIsInstance(admin.site._registry[models.EstimationRun], EstimationRunAdmin)
        self.assertIn('config_hash', EstimationRunAdmin.search_fields)
