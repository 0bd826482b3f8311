"""
Efficient scores for the potential-outcome CDFs F_{Y(d, M(d'))}(a) and their cross-fitted averages.
"""
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterator, List, Optional, Tuple

import numpy as np

from . import EstimationError
from .data import Dataset, FoldAssignment, OutcomeGrid
from .nuisances import IMPUTATION, MIXTURE, FoldNuisances, ScoreInputs, build_score_inputs

logger = logging.getLogger(__name__)

THETA = 'theta'
THETA_PRIME = 'theta_prime'
VARIANTS = (THETA, THETA_PRIME)

# (d, d') in output order
PAIRS = ((1, 1), (1, 0), (0, 1), (0, 0))


def pair_index(d, d_prime):
    return PAIRS.index((d, d_prime))


def _arm(inputs: ScoreInputs, d):
    return (np.asarray(inputs.treatment) == d).astype(float)[:, None]


def psi_components(inputs: ScoreInputs, d, d_prime):
    """Weighted residual, bridge and regression terms of psi; their sum is the score."""
    f_dx = inputs.p_treat_x[:, d_prime][:, None]
    ratio = inputs.p_treat_mx[:, d_prime] / (inputs.p_treat_x[:, d_prime] * inputs.p_treat_mx[:, d])
    g3, g4 = inputs.g3[d], inputs.g4[d, d_prime]
    residual = _arm(inputs, d) * ratio[:, None] * (inputs.y_a - g3)
    bridge = _arm(inputs, d_prime) / f_dx * (g3 - g4)
    return residual, bridge, g4


def psi_value(inputs: ScoreInputs, d, d_prime):
    """Score built on f(D | M, X); returns an (n, L) array."""
    residual, bridge, base = psi_components(inputs, d, d_prime)
    return residual + bridge + base


def psi_prime_value(inputs: ScoreInputs, d, d_prime):
    """Score built on the mediator density f(M | D, X); binary mediators only."""
    if inputs.p_mediator_one is None:
        raise EstimationError('theta_prime requires a binary mediator')
    density = inputs.mediator_density()
    ratio = density[:, d_prime] / (inputs.p_treat_x[:, d] * density[:, d])
    g3, g4 = inputs.g3[d], inputs.g4[d, d_prime]
    residual = _arm(inputs, d) * ratio[:, None] * (inputs.y_a - g3)
    bridge = _arm(inputs, d_prime) / inputs.p_treat_x[:, d_prime][:, None] * (g3 - g4)
    return residual + bridge + g4


def psi_dd_value(inputs: ScoreInputs, d):
    """Doubly robust score for F_{Y(d, M(d))}; g4[d, d] plays the role of F(a | d, X)."""
    g4 = inputs.g4[d, d]
    return _arm(inputs, d) / inputs.p_treat_x[:, d][:, None] * (inputs.y_a - g4) + g4


def plugin_value(inputs: ScoreInputs, d, d_prime):
    """Regression-imputation plug-in: the per-observation value of g4."""
    return inputs.g4[d, d_prime]


SCORE_FUNCTIONS = {THETA: psi_value, THETA_PRIME: psi_prime_value}
G4_METHODS = {THETA: IMPUTATION, THETA_PRIME: MIXTURE}


def evaluate_scores(inputs: ScoreInputs, variant=THETA, score: Optional[Callable] = None):
    """Stack the four pair scores into an (n, 4, L) array."""
    if variant not in VARIANTS:
        raise EstimationError('unknown variant %r' % (variant,))
    score = score or SCORE_FUNCTIONS[variant]
    return np.stack([score(inputs, d, d_prime) for d, d_prime in PAIRS], axis=1)


def fold_weights(folds: FoldAssignment):
    """w_i = n / (K n_k), so the weighted score mean is the average of fold means."""
    sizes = folds.sizes()
    return folds.n / (folds.K * sizes[folds.fold_of - 1])


@dataclass(frozen=True, eq=False)
class ThetaEstimate:
    """
    Cross-fitted CDF estimates, theta[pair, l] for the pairs in `PAIRS`.

    Either `scores` (n x 4 x L) is retained or `score_source` is kept to recompute fold blocks on demand.
    """
    theta: np.ndarray
    fold_theta: np.ndarray
    variant: str
    grid: OutcomeGrid
    folds: FoldAssignment
    weights: np.ndarray
    scores: Optional[np.ndarray] = None
    score_source: Optional[ScoreInputs] = None
    diagnostics: Dict = field(default_factory=dict)

    @property
    def n(self):
        return len(self.weights)

    def value(self, d, d_prime):
        return self.theta[pair_index(d, d_prime)]

    def iter_score_blocks(self) -> Iterator[Tuple[np.ndarray, np.ndarray]]:
        """Yield (row indices, scores) blocks covering every observation once."""
        if self.scores is not None:
            yield np.arange(self.n), self.scores
            return
        if self.score_source is None:
            raise EstimationError('neither retained scores nor a score source are available')
        for k in range(1, self.folds.K + 1):
            rows = self.folds.indices(k)
            yield rows, evaluate_scores(self.score_source.take(rows), self.variant)


def aggregate_theta(scores, folds: FoldAssignment):
    """Fold means of the (n, 4, L) score array, returned as (theta, fold_theta)."""
    fold_theta = np.stack([scores[folds.indices(k)].mean(axis=0) for k in range(1, folds.K + 1)])
    return fold_theta.mean(axis=0), fold_theta


def theta_from_inputs(inputs: ScoreInputs, folds: FoldAssignment, grid: OutcomeGrid, variant=THETA,
                      retain_scores=True, diagnostics=None) -> ThetaEstimate:
    scores = evaluate_scores(inputs, variant)
    theta, fold_theta = aggregate_theta(scores, folds)
    return ThetaEstimate(
        theta=theta, fold_theta=fold_theta, variant=variant, grid=grid, folds=folds,
        weights=fold_weights(folds), scores=scores if retain_scores else None,
        score_source=None if retain_scores else inputs, diagnostics=diagnostics or {},
    )


def crossfit_theta(data: Dataset, folds: FoldAssignment, nuisances: List[FoldNuisances], grid: OutcomeGrid,
                   variant=THETA, retain_scores=True) -> ThetaEstimate:
    """
    theta = K^-1 sum_k (mean of the fold-k scores), for all four (d, d') pairs and every grid point.
    """
    if len(nuisances) != folds.K:
        raise EstimationError('expected nuisances for %d folds, got %d' % (folds.K, len(nuisances)))
    if variant == THETA_PRIME and data.mediator_kind != 'binary':
        raise EstimationError('theta_prime requires a binary mediator')
    inputs = build_score_inputs(data, folds, nuisances, grid, G4_METHODS[variant])
    diagnostics = {
        'trim_hits': inputs.trim_hits,
        'nonconverged': [name for fold in nuisances for name in fold.nonconverged],
    }
    estimate = theta_from_inputs(inputs, folds, grid, variant, retain_scores, diagnostics)
    logger.info('Cross-fitted %s over %d folds and %d grid points', variant, folds.K, len(grid))
    return estimate


def crossfit_plugin(inputs: ScoreInputs, folds: FoldAssignment):
    """Fold-averaged plug-in estimate, shaped like `ThetaEstimate.theta`."""
    values = np.stack([plugin_value(inputs, d, d_prime) for d, d_prime in PAIRS], axis=1)
    return aggregate_theta(values, folds)[0]
