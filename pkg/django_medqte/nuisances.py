"""
Cross-fitted nuisance models.

For every fold k the learners below are trained on the complement of k only:

* treatment            f(D=1 | X)
* treatment_mediator   f(D=1 | M, X)
* mediator             f(M=1 | D, X)   (binary mediator only)
* outcome              F(a | D, M, X)  one distribution-regression fit per grid point
* imputation           E[F(a | d, M, X) | D, X], a linear regression of clamped outcome predictions
"""
import logging
from dataclasses import dataclass, field, replace
from typing import Dict, FrozenSet, List, Mapping, Optional, Tuple

import numpy as np
from joblib import Parallel, delayed

from . import EstimationError
from .data import BINARY, Dataset, FoldAssignment, OutcomeGrid, indicator
from .glm import (
    IDENTITY, LASSO, LEARNERS, MLE, POST_LASSO, PROBIT, DesignMatrix, GlmFit, LinkFunction,
    constant_fit, fit_lasso, fit_mle, fit_post_lasso, penalty_level, predict_prob,
)

logger = logging.getLogger(__name__)

TREATMENT = 'treatment'
TREATMENT_MEDIATOR = 'treatment_mediator'
MEDIATOR = 'mediator'
OUTCOME = 'outcome'
NUISANCES = (TREATMENT, TREATMENT_MEDIATOR, MEDIATOR, OUTCOME)

IMPUTATION = 'imputation'
MIXTURE = 'mixture'

MAX_TRIM = 0.1


@dataclass(frozen=True)
class NuisanceSpec:
    learners: Mapping[str, str] = field(default_factory=lambda: dict.fromkeys(NUISANCES, POST_LASSO))
    links: Mapping[str, str] = field(default_factory=lambda: dict.fromkeys(NUISANCES, PROBIT))
    trim: float = 0.01
    include_interactions: bool = True
    penalty: Optional[float] = None

    def __post_init__(self):
        if not 0.0 <= self.trim <= MAX_TRIM:
            raise EstimationError('trim must lie in [0, %g]' % MAX_TRIM)
        for name in NUISANCES:
            if self.learners.get(name) not in LEARNERS:
                raise EstimationError('unknown learner %r for %s' % (self.learners.get(name), name))
            LinkFunction(self.links.get(name))
        if self.penalty is not None and self.penalty < 0:
            raise EstimationError('penalty level must be nonnegative')

    @classmethod
    def uniform(cls, learner=POST_LASSO, link=PROBIT, **kwargs):
        return cls(learners=dict.fromkeys(NUISANCES, learner), links=dict.fromkeys(NUISANCES, link), **kwargs)

    def link(self, name) -> LinkFunction:
        return LinkFunction(self.links[name])

    def penalty_for(self, n, p):
        return self.penalty if self.penalty is not None else penalty_level(n, p)


def treatment_design(x) -> DesignMatrix:
    return DesignMatrix.build(x)


def treatment_mediator_design(m, x) -> DesignMatrix:
    return DesignMatrix.build(x, np.asarray(m, dtype=float)[:, None], ('m',))


def mediator_design(d, x) -> DesignMatrix:
    d = np.broadcast_to(np.asarray(d, dtype=float), (len(x),))
    return DesignMatrix.build(x, d[:, None], ('d',))


def outcome_design(d, m, x, include_interactions=True) -> DesignMatrix:
    d = np.broadcast_to(np.asarray(d, dtype=float), (len(x),))
    m = np.broadcast_to(np.asarray(m, dtype=float), (len(x),))
    if include_interactions:
        return DesignMatrix.build(x, np.column_stack([d, m, d * m]), ('d', 'm', 'dm'))
    return DesignMatrix.build(x, np.column_stack([d, m]), ('d', 'm'))


def imputation_design(d, x, columns) -> DesignMatrix:
    d = np.broadcast_to(np.asarray(d, dtype=float), (len(x),))
    return DesignMatrix.build(np.asarray(x)[:, list(columns)], d[:, None], ('d',))


@dataclass(frozen=True, eq=False)
class FoldNuisances:
    fold: int
    train_rows: np.ndarray
    trim: float
    include_interactions: bool
    treatment: GlmFit
    treatment_mediator: GlmFit
    mediator: Optional[GlmFit]
    outcome: Tuple[GlmFit, ...]
    selected_support: Tuple[FrozenSet[int], ...]
    imputation: Dict[Tuple[int, int], GlmFit] = field(default_factory=dict)
    nonconverged: Tuple[str, ...] = ()

    def imputation_columns(self, l):
        return tuple(sorted(self.selected_support[l]))

    def __repr__(self):
        return '<FoldNuisances fold=%d grid=%d>' % (self.fold, len(self.outcome))


@dataclass(frozen=True, eq=False)
class _Selection:
    fit: GlmFit
    support: FrozenSet[int]


def _select(learner, design, labels, link, lam) -> _Selection:
    """First-stage fit whose covariate support feeds the pooled selection."""
    if learner == MLE:
        fit = fit_mle(design, labels, link)
        return _Selection(fit, frozenset(range(design.width - design.covariate_offset)))
    fit = fit_lasso(design, labels, link, lam)
    return _Selection(fit, design.covariate_support(fit))


def _finalize(learner, design, labels, link, lam, selection: _Selection, support) -> GlmFit:
    if learner == POST_LASSO:
        return fit_post_lasso(design, labels, link, lam, design.covariate_columns(support),
                              lasso_fit=selection.fit)
    return selection.fit


def fit_fold_nuisances(data: Dataset, folds: FoldAssignment, k: int, grid: OutcomeGrid,
                       spec: NuisanceSpec) -> FoldNuisances:
    """
    Fit all nuisance learners on the rows outside fold `k`.

    Lasso supports of the treatment model, the mediator model (or the treatment-on-mediator model for a
    continuous mediator) and the outcome model at each grid point are pooled before the post-lasso refits.
    """
    if folds.K < 2:
        raise EstimationError('cross-fitting requires at least two folds')
    train = folds.complement(k)
    d, m, x, y = data.d[train].astype(float), data.m[train], data.x[train], data.y[train]
    if d.min() == d.max():
        raise EstimationError('fold too small: the complement of fold %d lacks a treatment arm' % k)
    binary = data.mediator_kind == BINARY
    lam = spec.penalty_for(len(train), data.p)
    logger.info('Fitting nuisances for fold %d on %d rows (lambda=%.4g)', k, len(train), lam)

    designs = {
        TREATMENT: (treatment_design(x), d),
        TREATMENT_MEDIATOR: (treatment_mediator_design(m, x), d),
    }
    if binary:
        designs[MEDIATOR] = (mediator_design(d, x), m)
    first = {
        name: _select(spec.learners[name], design, labels, spec.link(name), lam)
        for name, (design, labels) in designs.items()
    }
    pooled_first = first[TREATMENT].support | first[MEDIATOR if binary else TREATMENT_MEDIATOR].support

    y_design = outcome_design(d, m, x, spec.include_interactions)
    y_link = spec.link(OUTCOME)
    outcome, supports, nonconverged = [], [], []
    for l, a in enumerate(grid.a):
        labels = indicator(y, a).astype(float)
        if labels.min() == labels.max():
            logger.debug('Fold %d grid point %d is degenerate; using constant %d', k, l, labels[0])
            outcome.append(constant_fit(y_design.width, float(labels[0])))
            supports.append(pooled_first)
            continue
        selection = _select(spec.learners[OUTCOME], y_design, labels, y_link, lam)
        support = pooled_first | selection.support
        fit = _finalize(spec.learners[OUTCOME], y_design, labels, y_link, lam, selection, support)
        if not fit.converged:
            nonconverged.append('fold %d outcome a[%d]' % (k, l))
        outcome.append(fit)
        supports.append(support)

    pooled_all = frozenset().union(pooled_first, *supports)
    final = {}
    for name, (design, labels) in designs.items():
        fit = _finalize(spec.learners[name], design, labels, spec.link(name), lam, first[name], pooled_all)
        if not fit.converged:
            nonconverged.append('fold %d %s' % (k, name))
        final[name] = fit

    fold = FoldNuisances(
        fold=k, train_rows=train, trim=spec.trim, include_interactions=spec.include_interactions,
        treatment=final[TREATMENT], treatment_mediator=final[TREATMENT_MEDIATOR],
        mediator=final.get(MEDIATOR), outcome=tuple(outcome), selected_support=tuple(supports),
    )
    imputation = {}
    for l in range(len(grid)):
        for d_value in (0, 1):
            fit = g4_regression_imputation(fold, data, d_value, l)
            if not fit.converged:
                nonconverged.append('fold %d imputation a[%d] d=%d' % (k, l, d_value))
            imputation[(l, d_value)] = fit
    for name in nonconverged:
        logger.warning('Nuisance fit did not converge: %s', name)
    return replace(fold, imputation=imputation, nonconverged=tuple(nonconverged))


def predict_outcome(fold: FoldNuisances, l, d, m, x):
    design = outcome_design(d, m, x, fold.include_interactions)
    return predict_prob(fold.outcome[l], design.rows, 0.0)


def g4_regression_imputation(fold: FoldNuisances, data: Dataset, d: int, l: int) -> GlmFit:
    """
    Regress clamped F(a_l | d, M_i, X_i) over the fold complement on (1, D, selected X) by least squares.
    """
    rows = fold.train_rows
    x = data.x[rows]
    values = predict_outcome(fold, l, d, data.m[rows], x)
    design = imputation_design(data.d[rows].astype(float), x, fold.imputation_columns(l))
    return fit_mle(design, values, LinkFunction(IDENTITY))


def mix_over_mediator(g3_m0, g3_m1, p_one):
    """Two-point integral of F(a | d, m, x) against a binary mediator law P(M=1) = p_one."""
    return g3_m0 * (1.0 - p_one) + g3_m1 * p_one


def g4_binary_mediator(fold: FoldNuisances, d: int, d_prime: int, l: int, x):
    if fold.mediator is None:
        raise EstimationError('the mediator integral needs a binary mediator model')
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    p_one = predict_prob(fold.mediator, mediator_design(d_prime, x).rows, fold.trim)
    value = mix_over_mediator(predict_outcome(fold, l, d, 0.0, x), predict_outcome(fold, l, d, 1.0, x), p_one)
    return float(value[0]) if single else value


def crossfit_nuisances(data: Dataset, folds: FoldAssignment, grid: OutcomeGrid, spec: NuisanceSpec,
                       n_jobs=1) -> List[FoldNuisances]:
    data.check_folds(folds.K)
    return Parallel(n_jobs=n_jobs, backend='threading')(
        delayed(fit_fold_nuisances)(data, folds, k, grid, spec) for k in range(1, folds.K + 1)
    )


@dataclass(frozen=True, eq=False)
class ScoreInputs:
    """
    Per-observation nuisance values consumed by the score functions.

    Column index d of `p_treat_x`, `p_treat_mx` and `p_mediator_one` holds the value at treatment d;
    `g3[d]` is F(a | d, M_i, X_i) and `g4[d, d']` is E[F(a | d, M, X) | D=d', X_i].
    """
    y_a: np.ndarray
    treatment: np.ndarray
    mediator: np.ndarray
    p_treat_x: np.ndarray
    p_treat_mx: np.ndarray
    g3: np.ndarray
    g4: np.ndarray
    p_mediator_one: Optional[np.ndarray] = None
    trim: float = 0.0
    rows: Optional[np.ndarray] = None
    trim_hits: int = 0

    def __post_init__(self):
        n, L = np.shape(self.y_a)
        if self.g3.shape != (2, n, L) or self.g4.shape != (2, 2, n, L):
            raise EstimationError('outcome nuisance arrays do not match %d rows and %d grid points' % (n, L))
        for name in ('p_treat_x', 'p_treat_mx', 'p_mediator_one'):
            values = getattr(self, name)
            if values is None:
                continue
            if values.shape != (n, 2):
                raise EstimationError('%s must have shape (%d, 2)' % (name, n))
            if name != 'p_mediator_one' and np.any(values <= 0):
                raise EstimationError('%s must be strictly positive' % name)
            if np.any(values < self.trim - 1e-12) or np.any(values > 1 - self.trim + 1e-12):
                raise EstimationError('%s violates the trimming bounds' % name)

    @property
    def n(self):
        return self.y_a.shape[0]

    @property
    def L(self):
        return self.y_a.shape[1]

    def mediator_density(self):
        """f(M_i | D=d, X_i) for d = 0, 1."""
        if self.p_mediator_one is None:
            raise EstimationError('mediator density needs a binary mediator model')
        m = np.asarray(self.mediator, dtype=float)[:, None]
        return np.where(m == 1, self.p_mediator_one, 1.0 - self.p_mediator_one)

    def take(self, index) -> 'ScoreInputs':
        return ScoreInputs(
            y_a=self.y_a[index], treatment=self.treatment[index], mediator=self.mediator[index],
            p_treat_x=self.p_treat_x[index], p_treat_mx=self.p_treat_mx[index],
            g3=self.g3[:, index], g4=self.g4[:, :, index],
            p_mediator_one=None if self.p_mediator_one is None else self.p_mediator_one[index],
            trim=self.trim, rows=None if self.rows is None else self.rows[index],
        )


def _trimmed_pair(fit, rows, trim):
    raw = fit.link.cdf(fit.linear_predictor(rows))
    hits = int(np.sum((raw < trim) | (raw > 1 - trim)))
    one = np.clip(raw, trim, 1 - trim)
    return np.column_stack([1.0 - one, one]), hits


def build_score_inputs(data: Dataset, folds: FoldAssignment, nuisances: List[FoldNuisances],
                       grid: OutcomeGrid, g4_method=IMPUTATION) -> ScoreInputs:
    """Cross-fitted predictions: each row is evaluated with the nuisances of its own fold."""
    if g4_method not in (IMPUTATION, MIXTURE):
        raise EstimationError('unknown g4 method %r' % (g4_method,))
    binary = data.mediator_kind == BINARY
    if g4_method == MIXTURE and not binary:
        raise EstimationError('the mediator integral requires a binary mediator')
    n, L = data.n, len(grid)
    trim = nuisances[0].trim
    p_treat_x = np.empty((n, 2))
    p_treat_mx = np.empty((n, 2))
    p_mediator_one = np.empty((n, 2)) if binary else None
    g3 = np.empty((2, n, L))
    g4 = np.empty((2, 2, n, L))
    hits = 0

    for fold in nuisances:
        rows = folds.indices(fold.fold)
        x, m = data.x[rows], data.m[rows]
        p_treat_x[rows], h1 = _trimmed_pair(fold.treatment, treatment_design(x).rows, trim)
        p_treat_mx[rows], h2 = _trimmed_pair(fold.treatment_mediator, treatment_mediator_design(m, x).rows, trim)
        hits += h1 + h2
        if binary:
            for d in (0, 1):
                pair, h = _trimmed_pair(fold.mediator, mediator_design(d, x).rows, trim)
                p_mediator_one[rows, d] = pair[:, 1]
                hits += h
        for l in range(L):
            for d in (0, 1):
                g3[d, rows, l] = predict_outcome(fold, l, d, m, x)
                if g4_method == MIXTURE:
                    at_zero = predict_outcome(fold, l, d, 0.0, x)
                    at_one = predict_outcome(fold, l, d, 1.0, x)
                    for d_prime in (0, 1):
                        g4[d, d_prime, rows, l] = mix_over_mediator(at_zero, at_one, p_mediator_one[rows, d_prime])
                else:
                    fit = fold.imputation[(l, d)]
                    columns = fold.imputation_columns(l)
                    for d_prime in (0, 1):
                        g4[d, d_prime, rows, l] = predict_prob(fit, imputation_design(d_prime, x, columns).rows, 0.0)

    if hits:
        logger.info('%d propensity predictions were clamped to [%g, %g]', hits, trim, 1 - trim)
    y_a = indicator(data.y[:, None], np.asarray(grid.a)[None, :])
    return ScoreInputs(
        y_a=y_a, treatment=np.asarray(data.d, dtype=int), mediator=np.asarray(data.m),
        p_treat_x=p_treat_x, p_treat_mx=p_treat_mx, g3=g3, g4=g4, p_mediator_one=p_mediator_one,
        trim=trim, rows=np.arange(n), trim_hits=hits,
    )
