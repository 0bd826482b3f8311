"""
Monte Carlo study harness: data generating process, simulated ground truth, accuracy metrics and the
replication loop.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Sequence

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from scipy import special

from . import ConfigError, MedqteError
from .data import BINARY, Dataset, OutcomeGrid, RankGrid, build_outcome_grid, indicator, kfold_split
from .nuisances import NuisanceSpec, ScoreInputs, crossfit_nuisances, mix_over_mediator
from .quantiles import EFFECTS, CdfProfile, effects_from_quantiles, estimate_effects
from .scores import PAIRS, THETA, THETA_PRIME, crossfit_theta, pair_index

logger = logging.getLogger(__name__)

MIXING = np.array([
    [0.75, 0.10, 0.15],
    [0.15, 0.70, 0.15],
    [0.14, 0.08, 0.78],
])
TREATMENT_INTERCEPT = 0.371
TREATMENT_COEF = np.array([0.198, 0.125, -0.323])
MEDIATOR_INTERCEPT = -0.070
MEDIATOR_TREATMENT = 0.710
MEDIATOR_COEF = np.array([-0.054, -0.482, 0.299])
OUTCOME_INTERCEPT = 0.766
OUTCOME_TREATMENT = 0.458
OUTCOME_INTERACTION = 0.836
OUTCOME_MEDIATOR = 0.383
OUTCOME_COEF = np.array([0.640, 0.260, 0.474])
AR_COEF = 0.5

TRUTH_STREAM = 7919
GRID_STREAM = 104729
CHUNK = 500000
WEIGHT_FLOOR = 1e-6


@dataclass(frozen=True)
class DgpConfig:
    n: int
    J: int = 50
    seed: int = 0
    mc_truth_size: int = 2000000
    replication: int = 0

    def __post_init__(self):
        if self.n < 100:
            raise ConfigError('simulated samples need n >= 100')
        if self.J < 0:
            raise ConfigError('the auxiliary covariate count must be nonnegative')

    def generator(self):
        return np.random.default_rng(np.random.SeedSequence([self.seed, self.replication, self.n]))


def outcome_index(d, m, x):
    """h(d, m, x); positive because the covariates are nonnegative."""
    return (OUTCOME_INTERCEPT + OUTCOME_TREATMENT * d + OUTCOME_INTERACTION * d * m
            + OUTCOME_MEDIATOR * m + x @ OUTCOME_COEF)


def treatment_probability(x):
    return special.ndtr(TREATMENT_INTERCEPT + x @ TREATMENT_COEF)


def mediator_probability(d, x):
    return special.ndtr(MEDIATOR_INTERCEPT + MEDIATOR_TREATMENT * d + x @ MEDIATOR_COEF)


def outcome_cdf(a, d, m, x):
    """F(a | d, m, x) = Phi(a * h(d, m, x)); broadcasts a against the rows of x."""
    return special.ndtr(np.multiply.outer(outcome_index(d, m, x), np.asarray(a)))


def _latent(rng, size):
    v = rng.standard_normal((size, 3)) ** 2
    return v, v @ MIXING.T


def _auxiliary(rng, v, J):
    n = len(v)
    u1 = rng.uniform(0.0, 0.2, J)
    u2 = rng.uniform(0.8, 1.0, J)
    eta = rng.standard_normal((n, J))
    z = np.empty((n, J))
    if J:
        z[:, 0] = eta[:, 0]
        for j in range(1, J):
            z[:, j] = AR_COEF * z[:, j - 1] + np.sqrt(1.0 - AR_COEF ** 2) * eta[:, j]
    return v.sum(axis=1)[:, None] * u1[None, :] + u2[None, :] * z ** 2


def generate_dgp(cfg: DgpConfig) -> Dataset:
    rng = cfg.generator()
    v, x = _latent(rng, cfg.n)
    eps_d, eps_m, eps_y = rng.standard_normal((3, cfg.n))
    d = (TREATMENT_INTERCEPT + x @ TREATMENT_COEF + eps_d > 0).astype(float)
    m = (MEDIATOR_INTERCEPT + MEDIATOR_TREATMENT * d + x @ MEDIATOR_COEF + eps_m > 0).astype(float)
    y = eps_y / outcome_index(d, m, x)
    covariates = np.hstack([x, _auxiliary(rng, v, cfg.J)])
    names = ('x1', 'x2', 'x3') + tuple('aux%d' % (j + 1) for j in range(cfg.J))
    return Dataset(y, d, m, covariates, mediator_kind=BINARY, covariate_names=names)


@dataclass(frozen=True, eq=False)
class TruthProfiles:
    grid: OutcomeGrid
    tau: RankGrid
    cdf: np.ndarray
    quantiles: np.ndarray
    mc_truth_size: int

    @property
    def effects(self):
        return effects_from_quantiles(self.quantiles)

    def values(self, d, d_prime):
        return self.cdf[pair_index(d, d_prime)]


def _potential_outcomes(rng, size, d, d_prime):
    _, x = _latent(rng, size)
    eps_m, eps_y = rng.standard_normal((2, size))
    m = (MEDIATOR_INTERCEPT + MEDIATOR_TREATMENT * d_prime + x @ MEDIATOR_COEF + eps_m > 0).astype(float)
    return eps_y / outcome_index(d, m, x)


def approximate_truth(cfg: DgpConfig, grid: OutcomeGrid, tau_grid: RankGrid, chunk=CHUNK) -> TruthProfiles:
    """
    Simulate Y(d, M(d')) for `mc_truth_size` draws per pair and return empirical CDFs and quantiles.

    Every pair regenerates the same latent draws chunk by chunk, so the four profiles share random numbers.
    """
    size = cfg.mc_truth_size
    cdf = np.empty((len(PAIRS), len(grid)))
    quantiles = np.empty((len(PAIRS), len(tau_grid)))
    for index, (d, d_prime) in enumerate(PAIRS):
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, TRUTH_STREAM]))
        draws = np.concatenate([
            _potential_outcomes(rng, min(chunk, size - start), d, d_prime) for start in range(0, size, chunk)
        ])
        draws.sort()
        cdf[index] = np.searchsorted(draws, grid.a, side='right') / size
        quantiles[index] = np.quantile(draws, tau_grid.tau, method='inverted_cdf')
    logger.info('Approximated potential-outcome truth from %d draws per pair', size)
    return TruthProfiles(grid, tau_grid, cdf, quantiles, size)


def true_mediated_cdf(x, grid: OutcomeGrid, d, d_prime):
    """g_{d,d',a}(x) = sum_m P(M=m | d', x) F(a | d, m, x), shape (n, L)."""
    p_one = mediator_probability(d_prime, x)[:, None]
    return mix_over_mediator(outcome_cdf(grid.a, d, 0.0, x), outcome_cdf(grid.a, d, 1.0, x), p_one)


def integrated_truth(grid: OutcomeGrid, size=1000000, seed=0, chunk=CHUNK):
    """Covariate average of the true mediated CDFs; smoother than simulating outcomes."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, TRUTH_STREAM, 1]))
    total = np.zeros((len(PAIRS), len(grid)))
    for start in range(0, size, chunk):
        _, x = _latent(rng, min(chunk, size - start))
        for index, (d, d_prime) in enumerate(PAIRS):
            total[index] += true_mediated_cdf(x, grid, d, d_prime).sum(axis=0)
    return total / size


CORRUPTIBLE = ('treatment', 'treatment_mediator', 'mediator', 'outcome')


def oracle_score_inputs(data: Dataset, grid: OutcomeGrid, corrupt: Sequence[str] = ()) -> ScoreInputs:
    """
    Score inputs at the true nuisances of the simulation design, optionally with named nuisances replaced:
    propensities and the mediator model by 0.5, the outcome CDF by F + 0.1 m (clipped).

    The mediator integral is recomputed from the (possibly corrupted) outcome and mediator models.
    """
    unknown = set(corrupt) - set(CORRUPTIBLE)
    if unknown:
        raise ConfigError('cannot corrupt %s' % ', '.join(sorted(unknown)))
    x = data.x[:, :3]
    n, L = data.n, len(grid)
    e = np.full(n, 0.5) if 'treatment' in corrupt else treatment_probability(x)
    mediator_one = np.column_stack([mediator_probability(0.0, x), mediator_probability(1.0, x)])
    true_density = np.where(data.m[:, None] == 1, mediator_one, 1 - mediator_one)
    joint = true_density * np.column_stack([1 - treatment_probability(x), treatment_probability(x)])
    q = joint[:, 1] / joint.sum(axis=1)
    if 'treatment_mediator' in corrupt:
        q = np.full(n, 0.5)
    if 'mediator' in corrupt:
        mediator_one = np.full((n, 2), 0.5)

    def g3_at(d, m):
        values = outcome_cdf(grid.a, d, m, x)
        if 'outcome' in corrupt:
            values = np.clip(values + 0.1 * np.asarray(m, dtype=float)[..., None], 0.0, 1.0)
        return values

    g3 = np.stack([g3_at(d, data.m) for d in (0, 1)])
    g4 = np.empty((2, 2, n, L))
    for d in (0, 1):
        at_zero, at_one = g3_at(d, np.zeros(n)), g3_at(d, np.ones(n))
        for d_prime in (0, 1):
            g4[d, d_prime] = mix_over_mediator(at_zero, at_one, mediator_one[:, d_prime][:, None])
    return ScoreInputs(
        y_a=indicator(data.y[:, None], grid.a[None, :]), treatment=data.d.astype(int), mediator=data.m,
        p_treat_x=np.column_stack([1 - e, e]), p_treat_mx=np.column_stack([1 - q, q]),
        g3=g3, g4=g4, p_mediator_one=mediator_one, rows=np.arange(n),
    )


def study_grid(size=99, seed=0, pilot=100000) -> OutcomeGrid:
    """Empirical-quantile grid from one large pilot draw, shared by every replication of a study."""
    data = generate_dgp(DgpConfig(n=pilot, J=0, seed=seed, replication=GRID_STREAM))
    return build_outcome_grid(data, size)


def _riemann(estimate, truth, weights):
    increments = np.diff(np.concatenate([[0.0], truth]))
    return float(np.sum(weights * (estimate - truth) ** 2 * increments))


def imse(estimate: CdfProfile, truth: TruthProfiles, d, d_prime) -> float:
    """Sum_l (F_hat - F)^2 dF(a_l) with left-endpoint increments of the true CDF."""
    return integrated_squared_error(estimate.values(d, d_prime), truth.values(d, d_prime))


def iwmse(estimate: CdfProfile, truth: TruthProfiles, d, d_prime) -> float:
    return integrated_weighted_squared_error(estimate.values(d, d_prime), truth.values(d, d_prime))


def integrated_squared_error(estimate, truth):
    return _riemann(np.asarray(estimate), np.asarray(truth), 1.0)


def integrated_weighted_squared_error(estimate, truth):
    """Anderson-Darling weights 1 / (F (1 - F)); points with F outside (1e-6, 1 - 1e-6) are skipped."""
    truth = np.asarray(truth)
    inside = (truth > WEIGHT_FLOOR) & (truth < 1 - WEIGHT_FLOOR)
    weights = np.zeros_like(truth)
    weights[inside] = 1.0 / (truth[inside] * (1 - truth[inside]))
    return _riemann(np.asarray(estimate), truth, weights)


def iae(estimate_q, truth_q) -> float:
    """Mean absolute quantile error over the rank grid."""
    estimate_q, truth_q = np.asarray(estimate_q), np.asarray(truth_q)
    if estimate_q.shape != truth_q.shape:
        raise MedqteError('quantile curves must share the rank grid')
    return float(np.mean(np.abs(estimate_q - truth_q)))


@dataclass(frozen=True, eq=False)
class SimReport:
    metrics: pd.DataFrame
    effects: pd.DataFrame
    failures: List[Dict] = field(default_factory=list)
    attempted: int = 0

    @property
    def failure_rate(self):
        return len(self.failures) / self.attempted if self.attempted else 0.0

    def table(self, metric, scale=1000.0):
        """Mean of `metric` by (variant, pair) across sample sizes, multiplied by `scale`."""
        source = self.effects if metric == 'effect_iae' else self.metrics
        value = 'iae' if metric == 'effect_iae' else metric
        index = ['variant', 'effect'] if metric == 'effect_iae' else ['variant', 'pair']
        if source.empty:
            return pd.DataFrame()
        return source.pivot_table(index=index, columns='n', values=value, aggfunc='mean') * scale

    def summary(self):
        tables = {}
        for metric in ('imse', 'iwmse', 'iae', 'effect_iae'):
            table = self.table(metric)
            tables[metric] = {
                '%s/%s' % key: {str(n): float(v) for n, v in row.items()}
                for key, row in table.iterrows()
            }
        return {
            'scale': 1000,
            'replications_attempted': self.attempted,
            'replications_failed': len(self.failures),
            'failures': self.failures,
            'tables': tables,
        }


def run_replication(n, replication, grid, tau_grid, truth, variants, seed, J, folds, spec):
    data = generate_dgp(DgpConfig(n=n, J=J, seed=seed, replication=replication))
    fold_seed = int(np.random.SeedSequence([seed, replication, n, 1]).generate_state(1)[0])
    assignment = kfold_split(n, folds, fold_seed)
    nuisances = crossfit_nuisances(data, assignment, grid, spec)
    metrics, effects = [], []
    for variant in variants:
        theta = crossfit_theta(data, assignment, nuisances, grid, variant, retain_scores=False)
        profile, curve = estimate_effects(grid, theta.theta, tau_grid)
        for d, d_prime in PAIRS:
            metrics.append({
                'n': n, 'replication': replication, 'variant': variant, 'pair': '%d%d' % (d, d_prime),
                'imse': imse(profile, truth, d, d_prime),
                'iwmse': iwmse(profile, truth, d, d_prime),
                'iae': iae(curve.quantile(d, d_prime), truth.quantiles[pair_index(d, d_prime)]),
            })
        for index, effect in enumerate(EFFECTS):
            effects.append({
                'n': n, 'replication': replication, 'variant': variant, 'effect': effect,
                'iae': iae(curve.estimates[index], truth.effects[index]),
            })
    return metrics, effects


def _guarded_replication(*args):
    n, replication = args[0], args[1]
    try:
        return run_replication(*args), None
    except MedqteError as e:
        logger.warning('Replication %d at n=%d failed: %s', replication, n, e)
        return ([], []), {'n': n, 'replication': replication, 'error': str(e)}


def run_study(reps: int, sizes: Sequence[int], variants=(THETA, THETA_PRIME), seed=0, J=50,
              truth_size=2000000, folds=3, grid_size=99, tau_grid: RankGrid = None,
              spec: NuisanceSpec = None, n_jobs=1) -> SimReport:
    """
    Replicate the full estimation pipeline `reps` times per sample size against one shared truth.

    Each replication owns the random stream keyed by (seed, replication, n); failed replications are
    recorded in the report and excluded from the metrics.
    """
    if reps < 1:
        raise ConfigError('a study needs at least one replication')
    sizes = tuple(int(n) for n in sizes)
    tau_grid = tau_grid or RankGrid.from_spec('0.05:0.95:0.01')
    spec = spec or NuisanceSpec()
    grid = study_grid(grid_size, seed)
    truth = approximate_truth(DgpConfig(n=max(sizes), J=J, seed=seed, mc_truth_size=truth_size), grid, tau_grid)

    tasks = [(n, r) for n in sizes for r in range(reps)]
    logger.info('Running %d replications over sizes %s', len(tasks), sizes)
    results = Parallel(n_jobs=n_jobs)(
        delayed(_guarded_replication)(n, r, grid, tau_grid, truth, variants, seed, J, folds, spec)
        for n, r in tasks
    )
    metrics = [row for (rows, _), _ in results for row in rows]
    effects = [row for (_, rows), _ in results for row in rows]
    failures = [failure for _, failure in results if failure is not None]
    metric_columns = ['n', 'replication', 'variant', 'pair', 'imse', 'iwmse', 'iae']
    effect_columns = ['n', 'replication', 'variant', 'effect', 'iae']
    return SimReport(pd.DataFrame(metrics, columns=metric_columns), pd.DataFrame(effects, columns=effect_columns),
                     failures, len(tasks))
