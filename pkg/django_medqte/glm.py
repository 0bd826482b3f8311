"""
Binary-response GLM learners: maximum likelihood, lasso and post-lasso fits for identity, logit and probit links.

Penalized columns are standardized before fitting and coefficients are mapped back to the raw scale, so a
fitted `GlmFit` can always be applied to raw design rows.
"""
import logging
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg, special, stats

from . import EstimationError, GlmFitError

logger = logging.getLogger(__name__)

IDENTITY = 'identity'
LOGIT = 'logit'
PROBIT = 'probit'

MLE = 'mle'
LASSO = 'lasso'
POST_LASSO = 'post_lasso'
LEARNERS = (MLE, LASSO, POST_LASSO)

MAX_ITER = 200
MAX_HALVINGS = 30
GRADIENT_TOL = 1e-8
KKT_TOL = 1e-6
BETA_CAP = 30.0
CD_TOL = 1e-12
CD_MAX_SWEEPS = 5000


class LinkFunction:
    """A link G mapping the linear predictor to a mean, with stable log-likelihood terms."""

    KINDS = (IDENTITY, LOGIT, PROBIT)

    def __init__(self, kind):
        if kind not in self.KINDS:
            raise EstimationError('unknown link %r' % (kind,))
        self.kind = kind

    def cdf(self, eta):
        eta = np.asarray(eta, dtype=float)
        if self.kind == LOGIT:
            return special.expit(eta)
        if self.kind == PROBIT:
            return special.ndtr(eta)
        return eta

    def inverse(self, p):
        p = np.asarray(p, dtype=float)
        if self.kind == LOGIT:
            return special.logit(p)
        if self.kind == PROBIT:
            return special.ndtri(p)
        return p

    def derivative(self, eta):
        eta = np.asarray(eta, dtype=float)
        if self.kind == LOGIT:
            g = special.expit(eta)
            return g * (1.0 - g)
        if self.kind == PROBIT:
            return stats.norm.pdf(eta)
        return np.ones_like(eta)

    def working_terms(self, eta, labels):
        """
        Per-observation negative log-likelihood, log-likelihood score in eta, and Fisher weight.

        The identity link uses the least-squares criterion 0.5 * (y - eta)^2.
        """
        if self.kind == IDENTITY:
            residual = labels - eta
            return 0.5 * residual ** 2, residual, np.ones_like(eta)
        if self.kind == LOGIT:
            log_cdf = -np.logaddexp(0.0, -eta)
            log_sf = -np.logaddexp(0.0, eta)
            g = special.expit(eta)
            nll = -(labels * log_cdf + (1.0 - labels) * log_sf)
            return nll, labels - g, g * (1.0 - g)
        log_cdf = special.log_ndtr(eta)
        log_sf = special.log_ndtr(-eta)
        log_pdf = stats.norm.logpdf(eta)
        nll = -(labels * log_cdf + (1.0 - labels) * log_sf)
        score = labels * np.exp(log_pdf - log_cdf) - (1.0 - labels) * np.exp(log_pdf - log_sf)
        weight = np.exp(2.0 * log_pdf - log_cdf - log_sf)
        return nll, score, weight

    def __eq__(self, other):
        return isinstance(other, LinkFunction) and other.kind == self.kind

    def __hash__(self):
        return hash(self.kind)

    def __repr__(self):
        return 'LinkFunction(%r)' % self.kind


@dataclass(frozen=True, eq=False)
class DesignMatrix:
    """
    Feature rows with the intercept in column 0, then unpenalized columns, then penalized covariates.
    """
    rows: np.ndarray
    penalty_loadings: np.ndarray
    names: Tuple[str, ...] = ()

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=float)
        loadings = np.asarray(self.penalty_loadings, dtype=float)
        if rows.ndim != 2 or loadings.shape != (rows.shape[1],):
            raise EstimationError('penalty loadings must match the design width')
        if np.any(loadings < 0):
            raise EstimationError('penalty loadings must be nonnegative')
        object.__setattr__(self, 'rows', rows)
        object.__setattr__(self, 'penalty_loadings', loadings)
        if not self.names:
            object.__setattr__(self, 'names', tuple('c%d' % j for j in range(rows.shape[1])))

    @classmethod
    def build(cls, covariates, unpenalized=None, unpenalized_names=(), covariate_names=None):
        covariates = np.asarray(covariates, dtype=float)
        if covariates.ndim == 1:
            covariates = covariates[:, None]
        n = covariates.shape[0]
        if unpenalized is None:
            unpenalized = np.empty((n, 0))
        unpenalized = np.asarray(unpenalized, dtype=float).reshape(n, -1)
        rows = np.hstack([np.ones((n, 1)), unpenalized, covariates])
        loadings = np.concatenate([
            np.zeros(1 + unpenalized.shape[1]), np.ones(covariates.shape[1]),
        ])
        if covariate_names is None:
            covariate_names = tuple('x%d' % (j + 1) for j in range(covariates.shape[1]))
        names = ('intercept',) + tuple(unpenalized_names or
                                       ('u%d' % (j + 1) for j in range(unpenalized.shape[1])))
        return cls(rows, loadings, names + tuple(covariate_names))

    @property
    def n(self):
        return self.rows.shape[0]

    @property
    def width(self):
        return self.rows.shape[1]

    @property
    def covariate_offset(self):
        """Index of the first penalized column."""
        penalized = np.flatnonzero(self.penalty_loadings > 0)
        return int(penalized[0]) if len(penalized) else self.width

    def unpenalized_columns(self):
        return tuple(int(j) for j in np.flatnonzero(self.penalty_loadings == 0))

    def covariate_columns(self, covariates: Iterable[int]):
        offset = self.covariate_offset
        return tuple(offset + int(j) for j in covariates)

    def covariate_support(self, fit: 'GlmFit'):
        """Penalized covariates (0-based covariate indices) with a nonzero coefficient."""
        offset = self.covariate_offset
        return frozenset(j - offset for j in fit.support if self.penalty_loadings[j] > 0)

    def restrict(self, columns: Sequence[int]) -> 'DesignMatrix':
        columns = list(columns)
        return DesignMatrix(self.rows[:, columns], self.penalty_loadings[columns],
                            tuple(self.names[j] for j in columns))

    def take(self, index) -> 'DesignMatrix':
        return DesignMatrix(self.rows[index], self.penalty_loadings, self.names)


@dataclass(frozen=True, eq=False)
class GlmFit:
    beta: np.ndarray
    link: LinkFunction
    converged: bool
    objective: float
    n_iter: int = 0
    objective_path: Tuple[float, ...] = field(default=())

    @property
    def support(self):
        return frozenset(int(j) for j in np.flatnonzero(self.beta))

    def linear_predictor(self, features):
        features = np.asarray(features, dtype=float)
        if features.shape[-1] != len(self.beta):
            raise EstimationError('feature dimension %d does not match %d coefficients' % (
                features.shape[-1], len(self.beta)))
        return features @ self.beta


class _Standardizer:
    """Centers and scales penalized columns; intercept and unpenalized columns pass through."""

    def __init__(self, design: DesignMatrix):
        self.penalized = design.penalty_loadings > 0
        rows = design.rows
        self.center = np.where(self.penalized, rows.mean(axis=0), 0.0)
        scale = np.where(self.penalized, rows.std(axis=0), 1.0)
        self.scale = np.where(scale > 0, scale, 1.0)
        self.z = (rows - self.center) / self.scale

    def to_raw(self, b):
        beta = b / self.scale
        beta[0] -= np.dot(self.center, beta)
        return beta

    def from_raw(self, beta):
        b = beta * self.scale
        b[0] += np.dot(self.center, beta)
        return b


def penalty_level(n: int, p: int) -> float:
    """Closed-form lasso penalty 1.1 * sqrt(n) * Phi^-1(1 - 0.1 / (2 p log n))."""
    if n < 2 or p < 1:
        raise EstimationError('penalty level needs n >= 2 and p >= 1')
    gamma = 0.1 / (2.0 * p * np.log(n))
    return float(1.1 * np.sqrt(n) * special.ndtri(1.0 - gamma))


def constant_fit(width: int, value: float) -> GlmFit:
    """Identity-link fit predicting `value` everywhere; used for degenerate labels."""
    beta = np.zeros(width)
    beta[0] = value
    return GlmFit(beta, LinkFunction(IDENTITY), True, 0.0)


def _initial_coefficients(z, labels, link):
    b = np.zeros(z.shape[1])
    mean = float(np.mean(labels))
    if link.kind == IDENTITY:
        b[0] = mean
    else:
        b[0] = float(link.inverse(np.clip(mean, 1e-3, 1 - 1e-3)))
    return b


def _solve(gram, rhs):
    try:
        return linalg.solve(gram, rhs, assume_a='pos')
    except (linalg.LinAlgError, ValueError):
        pass
    jitter = 1e-8 * max(1.0, float(np.trace(gram)) / len(gram))
    logger.debug('Weighted Gram matrix not positive definite; retrying with ridge %g', jitter)
    try:
        return linalg.solve(gram + jitter * np.eye(len(gram)), rhs, assume_a='pos')
    except (linalg.LinAlgError, ValueError) as e:
        raise GlmFitError('singular weighted Gram matrix') from e


def _cap(b):
    if np.max(np.abs(b)) > BETA_CAP:
        logger.warning('Coefficient norm exceeded %g (separation); capping and flagging the fit', BETA_CAP)
        return np.clip(b, -BETA_CAP, BETA_CAP), True
    return b, False


def fit_mle(design: DesignMatrix, labels, link: LinkFunction, beta0=None) -> GlmFit:
    """
    Unpenalized fit by damped Fisher scoring (IRLS).

    Steps are halved until the negative log-likelihood does not increase. The fit is converged when the
    sup-norm of the mean log-likelihood gradient falls below `GRADIENT_TOL`.
    """
    labels = np.asarray(labels, dtype=float)
    n = design.n
    std = _Standardizer(design)
    z = std.z
    b = std.from_raw(np.asarray(beta0, dtype=float)) if beta0 is not None else _initial_coefficients(z, labels, link)

    eta = z @ b
    nll, score, weight = link.working_terms(eta, labels)
    objective = float(nll.sum())
    path = [objective]
    converged = capped = False
    iteration = 0
    for iteration in range(1, MAX_ITER + 1):
        gradient = z.T @ score / n
        if np.max(np.abs(gradient)) <= GRADIENT_TOL:
            converged = True
            break
        gram = (z * weight[:, None]).T @ z / n
        step = _solve(gram, gradient)
        t = 1.0
        for _ in range(MAX_HALVINGS + 1):
            candidate = b + t * step
            cand_eta = z @ candidate
            cand_terms = link.working_terms(cand_eta, labels)
            cand_objective = float(cand_terms[0].sum())
            if cand_objective <= objective:
                break
            t /= 2.0
        else:
            logger.debug('Step halving exhausted after %d iterations', iteration)
            converged = bool(np.max(np.abs(gradient)) <= GRADIENT_TOL)
            break
        b, eta, objective = candidate, cand_eta, cand_objective
        nll, score, weight = cand_terms
        path.append(objective)
        b, capped = _cap(b)
        if capped:
            eta = z @ b
            objective = float(link.working_terms(eta, labels)[0].sum())
            break

    if not converged and not capped:
        logger.warning('MLE did not converge after %d iterations (link=%s)', iteration, link.kind)
    return GlmFit(std.to_raw(b), link, converged and not capped, objective, iteration, tuple(path))


def _coordinate_descent(gram, gradient, b, penalties):
    """
    Minimize 0.5 delta' H delta - g' delta + sum_j pen_j |b_j + delta_j| by cyclic coordinate descent,
    updating H delta incrementally. Returns the new coefficient vector b + delta.
    """
    q = len(b)
    diag = np.diag(gram)
    c = b.copy()
    h_delta = np.zeros(q)
    active = np.arange(q)
    for sweep in range(CD_MAX_SWEEPS):
        largest = 0.0
        for j in active:
            if diag[j] <= 1e-14:
                continue
            u = gradient[j] - h_delta[j] + diag[j] * c[j]
            new = np.sign(u) * max(abs(u) - penalties[j], 0.0) / diag[j]
            change = new - c[j]
            if change != 0.0:
                h_delta += gram[:, j] * change
                c[j] = new
                largest = max(largest, abs(change) * np.sqrt(diag[j]))
        if largest <= CD_TOL:
            if len(active) == q:
                break
            active = np.arange(q)
        else:
            active = np.flatnonzero((c != 0) | (penalties == 0))
    return c


def _kkt_violation(gradient, b, penalties):
    nonzero = b != 0
    violation = np.where(
        nonzero,
        np.abs(gradient - penalties * np.sign(b)),
        np.maximum(np.abs(gradient) - penalties, 0.0),
    )
    return float(np.max(violation))


def fit_lasso(design: DesignMatrix, labels, link: LinkFunction, lam: float, beta0=None) -> GlmFit:
    """
    Minimize NLL / n + (lam / n) * sum_j loading_j |b_j| on standardized penalized columns.

    Proximal Newton: each outer step solves the penalized IRLS quadratic by coordinate descent and
    line-searches on the penalized objective. Converged means the subgradient KKT conditions hold
    within `KKT_TOL` on the mean scale.
    """
    if lam < 0:
        raise EstimationError('penalty level must be nonnegative')
    labels = np.asarray(labels, dtype=float)
    n = design.n
    std = _Standardizer(design)
    z = std.z
    penalties = lam * design.penalty_loadings / n
    if beta0 is not None:
        b = std.from_raw(np.asarray(beta0, dtype=float))
    else:
        b = _initial_coefficients(z, labels, link)

    def penalized(nll_sum, coefficients):
        return nll_sum / n + float(np.sum(penalties * np.abs(coefficients)))

    eta = z @ b
    nll, score, weight = link.working_terms(eta, labels)
    objective = penalized(nll.sum(), b)
    path = [objective]
    converged = capped = False
    iteration = 0
    for iteration in range(1, MAX_ITER + 1):
        gradient = z.T @ score / n
        if _kkt_violation(gradient, b, penalties) <= KKT_TOL:
            converged = True
            break
        gram = (z * weight[:, None]).T @ z / n
        direction = _coordinate_descent(gram, gradient, b, penalties) - b
        t = 1.0
        for _ in range(MAX_HALVINGS + 1):
            candidate = b + t * direction
            cand_eta = z @ candidate
            cand_terms = link.working_terms(cand_eta, labels)
            cand_objective = penalized(cand_terms[0].sum(), candidate)
            if cand_objective <= objective:
                break
            t /= 2.0
        else:
            break
        b, eta, objective = candidate, cand_eta, cand_objective
        nll, score, weight = cand_terms
        path.append(objective)
        b, capped = _cap(b)
        if capped:
            eta = z @ b
            nll = link.working_terms(eta, labels)[0]
            break

    if not converged and not capped:
        logger.warning('Lasso did not meet KKT tolerance after %d iterations (link=%s, lambda=%g)',
                       iteration, link.kind, lam)
    return GlmFit(std.to_raw(b), link, converged and not capped, float(np.sum(nll)), iteration, tuple(path))


def refit_on_columns(design: DesignMatrix, labels, link: LinkFunction, columns: Iterable[int]) -> GlmFit:
    """Unpenalized MLE on a column subset; coefficients outside the subset are exactly zero."""
    columns = sorted(set(int(j) for j in columns) | {0})
    restricted = fit_mle(design.restrict(columns), labels, link)
    beta = np.zeros(design.width)
    beta[columns] = restricted.beta
    return GlmFit(beta, link, restricted.converged, restricted.objective,
                  restricted.n_iter, restricted.objective_path)


def fit_post_lasso(design: DesignMatrix, labels, link: LinkFunction, lam: float,
                   extra_support: Iterable[int] = (), lasso_fit: Optional[GlmFit] = None) -> GlmFit:
    """
    Refit by MLE on the lasso support, the extra columns and all unpenalized columns.

    A previously computed `lasso_fit` on the same design may be passed to skip the lasso step.
    """
    if lasso_fit is None:
        lasso_fit = fit_lasso(design, labels, link, lam)
    extra_support = set(int(j) for j in extra_support)
    if any(j < 0 or j >= design.width for j in extra_support):
        raise EstimationError('extra support refers to columns outside the design')
    columns = set(lasso_fit.support) | extra_support | set(design.unpenalized_columns())
    return refit_on_columns(design, labels, link, columns)


def fit_learner(learner: str, design: DesignMatrix, labels, link: LinkFunction, lam: float,
                extra_support: Iterable[int] = ()) -> GlmFit:
    if learner == MLE:
        return fit_mle(design, labels, link)
    if learner == LASSO:
        return fit_lasso(design, labels, link, lam)
    if learner == POST_LASSO:
        return fit_post_lasso(design, labels, link, lam, extra_support)
    raise EstimationError('unknown learner %r' % (learner,))


def predict_prob(fit: GlmFit, features, trim: float = 0.0):
    """clamp(G(x'beta), trim, 1 - trim); returns a float for a single feature vector."""
    if not 0.0 <= trim < 0.5:
        raise EstimationError('trim must lie in [0, 0.5)')
    features = np.asarray(features, dtype=float)
    values = np.clip(fit.link.cdf(fit.linear_predictor(features)), trim, 1.0 - trim)
    return float(values) if features.ndim == 1 else values
