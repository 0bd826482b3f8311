import logging
from dataclasses import dataclass

import numpy as np

from ..bootstrap import perturb_theta
from ..data import OutcomeGrid, RankGrid, kfold_split
from ..quantiles import (
    NDQTE, NDQTE_PRIME, NIQTE, NIQTE_PRIME, TQTE, CdfProfile, clip_unit, compute_effects, invert_quantile, rearrange,
)
from ..scores import PAIRS, psi_dd_value, psi_prime_value, psi_value, theta_from_inputs
from ..toy import ToyModel, orthogonality_directions, perturbation_slope, random_bayes_consistent_inputs

logger = logging.getLogger(__name__)

IDENTIFICATION_TOL = 1e-10
EXACT_TOL = 1e-12
SLOPE_TARGET, SLOPE_TOL = 2.0, 0.2
PLUGIN_SLOPE_TARGET = 1.0


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str

    def to_dict(self):
        return {'name': self.name, 'passed': self.passed, 'detail': self.detail}


class SelftestService:
    """
    Fast numerical checks of the estimator's invariants on the enumerable toy model and random profiles.

    `psi` replaces the production score so a deliberately broken score can be shown to fail.
    """

    def __init__(self, psi=None, seed=20240601):
        self.psi = psi or psi_value
        self.seed = seed

    def process(self):
        checks = [
            self.oracle_identification,
            self.psi_prime_identity,
            self.doubly_robust_reduction,
            self.neyman_orthogonality,
            self.rearrangement,
            self.quantile_monotonicity,
            self.adding_up,
            self.bootstrap_linearity,
        ]
        results = []
        for check in checks:
            try:
                passed, detail = check()
            except Exception as e:  # a crashing check is a failing check
                passed, detail = False, 'raised %s: %s' % (type(e).__name__, e)
            results.append(CheckResult(check.__name__, bool(passed), detail))
            logger.info('Selftest %s: %s', check.__name__, 'pass' if passed else 'FAIL')
        return results

    def _rng(self):
        return np.random.default_rng(self.seed)

    def oracle_identification(self):
        model = ToyModel()
        truth = model.truth()
        nuisances = model.true_nuisances()
        worst = 0.0
        for index, (d, d_prime) in enumerate(PAIRS):
            for score in (self.psi, psi_prime_value):
                worst = max(worst, np.max(np.abs(model.population_mean(nuisances, d, d_prime, score) - truth[index])))
            worst = max(worst, np.max(np.abs(model.plugin_mean(nuisances, d, d_prime) - truth[index])))
        return worst <= IDENTIFICATION_TOL, 'max deviation from enumeration %.3g' % worst

    def psi_prime_identity(self):
        inputs = random_bayes_consistent_inputs(10000, 5, self._rng())
        worst = max(
            float(np.max(np.abs(self.psi(inputs, d, d_prime) - psi_prime_value(inputs, d, d_prime))))
            for d, d_prime in PAIRS
        )
        return worst <= IDENTIFICATION_TOL, 'max |psi - psi_prime| %.3g' % worst

    def doubly_robust_reduction(self):
        inputs = random_bayes_consistent_inputs(1000, 5, self._rng())
        worst = max(float(np.max(np.abs(self.psi(inputs, d, d) - psi_dd_value(inputs, d)))) for d in (0, 1))
        return worst <= IDENTIFICATION_TOL, 'max |psi(d, d) - psi_dd| %.3g' % worst

    def neyman_orthogonality(self):
        model = ToyModel()
        slopes = {
            name: perturbation_slope(model, direction, score=self.psi)
            for name, direction in orthogonality_directions(model).items()
        }
        h4 = orthogonality_directions(model)['imputation']
        plugin_slope = perturbation_slope(model, {'imputation': h4['imputation']},
                                          score=lambda inputs, d, d_prime: inputs.g4[d, d_prime])
        passed = all(abs(s - SLOPE_TARGET) <= SLOPE_TOL for s in slopes.values())
        passed = passed and abs(plugin_slope - PLUGIN_SLOPE_TARGET) <= SLOPE_TOL
        detail = ', '.join('%s %.2f' % item for item in slopes.items()) + ', plug-in %.2f' % plugin_slope
        return passed, detail

    def rearrangement(self):
        rng = self._rng()
        for _ in range(1000):
            raw = rng.uniform(-0.2, 1.2, 20)
            processed = rearrange(clip_unit(raw))
            if processed.min() < 0 or processed.max() > 1 or np.any(np.diff(processed) < 0):
                return False, 'invalid processed profile'
            if not np.array_equal(rearrange(processed), processed):
                return False, 'rearrangement is not idempotent'
            if not np.array_equal(np.sort(clip_unit(raw)), processed):
                return False, 'rearrangement is not a permutation'
            if not np.array_equal(rearrange(clip_unit(rng.permutation(raw))), processed):
                return False, 'result depends on input order'
        return True, '1000 random profiles'

    def _random_profile(self, rng, L=25):
        grid = OutcomeGrid(np.sort(rng.normal(size=L)))
        return CdfProfile.from_theta(grid, rng.uniform(-0.1, 1.1, (len(PAIRS), L)))

    def quantile_monotonicity(self):
        rng = self._rng()
        tau = np.linspace(0.01, 0.99, 99)
        for _ in range(1000):
            profile = self._random_profile(rng)
            for d, d_prime in PAIRS:
                for kind in ('continuous', 'discrete'):
                    if np.any(np.diff(invert_quantile(profile, d, d_prime, tau, kind)) < 0):
                        return False, 'quantiles decrease in tau (%s)' % kind
        return True, '1000 random profiles'

    def adding_up(self):
        rng = self._rng()
        tau_grid = RankGrid.from_spec('0.05:0.95:0.01')
        worst = 0.0
        for _ in range(1000):
            curve = compute_effects(self._random_profile(rng), tau_grid)
            total = curve.effect(TQTE)
            worst = max(worst,
                        np.max(np.abs(total - curve.effect(NDQTE) - curve.effect(NIQTE))),
                        np.max(np.abs(total - curve.effect(NDQTE_PRIME) - curve.effect(NIQTE_PRIME))))
        return worst <= EXACT_TOL, 'max adding-up gap %.3g' % worst

    def bootstrap_linearity(self):
        rng = self._rng()
        n, L = 301, 5
        inputs = random_bayes_consistent_inputs(n, L, rng)
        folds = kfold_split(n, 3, self.seed)
        theta = theta_from_inputs(inputs, folds, OutcomeGrid(np.arange(float(L))))
        xi = rng.standard_normal(n)
        shift = perturb_theta(theta, xi)[0] - theta.theta
        scaled = perturb_theta(theta, 2.5 * xi)[0] - theta.theta
        gaps = [
            np.max(np.abs(scaled - 2.5 * shift)),
            np.max(np.abs(perturb_theta(theta, np.zeros(n))[0] - theta.theta)),
            np.max(np.abs(perturb_theta(theta, np.full(n, 3.0))[0] - theta.theta)),
        ]
        worst = float(max(gaps))
        return worst <= IDENTIFICATION_TOL, 'max linearity gap %.3g' % worst
