"""
Multiplier bootstrap: perturb the centered cross-fitted scores with i.i.d. multipliers and push every
draw through the same post-processing pipeline as the point estimate.
"""
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from joblib import Parallel, delayed
from scipy import stats

from . import ConfigError
from .data import RankGrid
from .quantiles import CONTINUOUS, EFFECTS, estimate_effects
from .scores import ThetaEstimate

logger = logging.getLogger(__name__)

STANDARD_NORMAL = 'standard_normal'
RADEMACHER = 'rademacher'
MULTIPLIERS = (STANDARD_NORMAL, RADEMACHER)

PERCENTILE = 'percentile'
NORMAL = 'normal'
CI_METHODS = (PERCENTILE, NORMAL)

BATCH_SIZE = 50


def replication_generator(seed, replication):
    """Counter-based stream for one replication, independent of how replications are scheduled."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(replication)])))


@dataclass(frozen=True, eq=False)
class MultiplierDraw:
    xi: np.ndarray
    distribution: str = STANDARD_NORMAL
    seed: Optional[int] = None

    @classmethod
    def generate(cls, n, seed, replication=0, distribution=STANDARD_NORMAL):
        if distribution not in MULTIPLIERS:
            raise ConfigError('unknown multiplier law %r' % (distribution,))
        rng = replication_generator(seed, replication)
        if distribution == RADEMACHER:
            xi = rng.choice(np.array([-1.0, 1.0]), size=n)
        else:
            xi = rng.standard_normal(n)
        return cls(xi, distribution, seed)


def _draw_matrix(n, seed, replications, distribution):
    return np.stack([MultiplierDraw.generate(n, seed, b, distribution).xi for b in replications])


def perturb_theta(theta: ThetaEstimate, xi):
    """
    theta* = theta + n^-1 sum_i xi_i w_i (psi_i - theta) for each row of `xi` (shape B x n).

    The fold weights w_i make the centered scores sum to zero, so a constant multiplier leaves theta unchanged.
    """
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    n = theta.n
    if xi.shape[1] != n:
        raise ConfigError('expected %d multipliers per draw, got %d' % (n, xi.shape[1]))
    shape = theta.theta.shape
    total = np.zeros((xi.shape[0], shape[0] * shape[1]))
    for rows, scores in theta.iter_score_blocks():
        centered = (scores - theta.theta).reshape(len(rows), -1)
        total += (xi[:, rows] * theta.weights[rows]) @ centered
    return theta.theta + total.reshape((xi.shape[0],) + shape) / n


def bootstrap_theta(theta: ThetaEstimate, draw: MultiplierDraw):
    return perturb_theta(theta, draw.xi[None, :])[0]


@dataclass(frozen=True, eq=False)
class BootstrapResult:
    B: int
    alpha: float
    ci_method: str
    multiplier: str
    seed: int
    theta_star: np.ndarray
    quantile_star: np.ndarray
    effect_star: np.ndarray
    effect_point: np.ndarray
    quantile_point: np.ndarray
    se: np.ndarray
    ci: np.ndarray
    quantile_se: np.ndarray
    quantile_ci: np.ndarray

    def effect_interval(self, name):
        index = EFFECTS.index(name)
        return self.ci[0, index], self.ci[1, index]


def _intervals(point, draws, alpha, ci_method):
    se = np.std(draws, axis=0, ddof=1)
    if ci_method == NORMAL:
        z = stats.norm.ppf(1.0 - alpha / 2.0)
        return se, np.stack([point - z * se, point + z * se])
    return se, np.quantile(draws, [alpha / 2.0, 1.0 - alpha / 2.0], axis=0, method='inverted_cdf')


def _run_batch(theta, tau_grid, seed, replications, distribution, outcome_kind):
    xi = _draw_matrix(theta.n, seed, replications, distribution)
    theta_star = perturb_theta(theta, xi)
    quantiles, effects = [], []
    for draw in theta_star:
        _, curve = estimate_effects(theta.grid, draw, tau_grid, outcome_kind)
        quantiles.append(curve.quantiles)
        effects.append(curve.estimates)
    return theta_star, np.stack(quantiles), np.stack(effects)


def bootstrap_effects(theta: ThetaEstimate, tau_grid: RankGrid, B=999, alpha=0.05, seed=0,
                      multiplier=STANDARD_NORMAL, outcome_kind=CONTINUOUS, ci_method=PERCENTILE,
                      n_jobs=1) -> BootstrapResult:
    """
    Pointwise bootstrap inference for every effect and quantile over `tau_grid`.

    Replication b draws its multipliers from its own (seed, b) stream, so results do not depend on `n_jobs`.
    """
    if B < 2:
        raise ConfigError('the bootstrap needs at least two replications')
    if not 0.0 < alpha < 1.0:
        raise ConfigError('alpha must lie in (0, 1)')
    if ci_method not in CI_METHODS:
        raise ConfigError('unknown confidence interval method %r' % (ci_method,))
    if multiplier not in MULTIPLIERS:
        raise ConfigError('unknown multiplier law %r' % (multiplier,))

    _, curve = estimate_effects(theta.grid, theta.theta, tau_grid, outcome_kind)
    logger.info('Running %d multiplier bootstrap replications (%s multipliers)', B, multiplier)
    batches = [range(start, min(start + BATCH_SIZE, B)) for start in range(0, B, BATCH_SIZE)]
    results = Parallel(n_jobs=n_jobs, backend='threading')(
        delayed(_run_batch)(theta, tau_grid, seed, batch, multiplier, outcome_kind) for batch in batches
    )
    theta_star = np.concatenate([r[0] for r in results])
    quantile_star = np.concatenate([r[1] for r in results])
    effect_star = np.concatenate([r[2] for r in results])

    se, ci = _intervals(curve.estimates, effect_star, alpha, ci_method)
    quantile_se, quantile_ci = _intervals(curve.quantiles, quantile_star, alpha, ci_method)
    return BootstrapResult(
        B=B, alpha=alpha, ci_method=ci_method, multiplier=multiplier, seed=seed,
        theta_star=theta_star, quantile_star=quantile_star, effect_star=effect_star,
        effect_point=curve.estimates, quantile_point=curve.quantiles,
        se=se, ci=ci, quantile_se=quantile_se, quantile_ci=quantile_ci,
    )


def score_standard_errors(theta: ThetaEstimate):
    """Influence-function standard errors sd(w_i psi_i) / sqrt(n) per (pair, grid point)."""
    total = np.zeros(theta.theta.shape)
    for rows, scores in theta.iter_score_blocks():
        centered = theta.weights[rows][:, None, None] * (scores - theta.theta)
        total += np.sum(centered ** 2, axis=0)
    return np.sqrt(total / (theta.n - 1)) / np.sqrt(theta.n)

