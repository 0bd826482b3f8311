import logging
from dataclasses import dataclass, field
from typing import List, Optional

from django_medqte import __version__

from ..bootstrap import BootstrapResult, bootstrap_effects
from ..config import RunConfig
from ..data import Dataset, build_outcome_grid, expand_covariates, kfold_split, read_csv
from ..nuisances import NuisanceSpec, crossfit_nuisances
from ..quantiles import CdfProfile, EffectCurve, estimate_effects
from ..scores import ThetaEstimate, crossfit_theta
from .output import ResultWriter, cdf_frame, effect_frame, quantile_frame

logger = logging.getLogger(__name__)


@dataclass
class EstimationOutcome:
    data: Dataset
    theta: ThetaEstimate
    profile: CdfProfile
    curve: EffectCurve
    bootstrap: Optional[BootstrapResult]
    warnings: List[str] = field(default_factory=list)


class EstimationService:
    """
    Service running the full pipeline on a CSV file: grid, folds, cross-fitted nuisances, scores,
    post-processing, effects and (optionally) the multiplier bootstrap.
    """

    def __init__(self, config: RunConfig, data: Optional[Dataset] = None):
        self.config = config
        self.data = data

    def process(self) -> EstimationOutcome:
        config = self.config
        data = self.data or read_csv(config.input, config.mediator_kind)
        data = expand_covariates(data, config.covariate_expansion)
        data.check_folds(config.folds)
        grid = build_outcome_grid(data, config.grid_size, config.grid_strategy, config.grid_bounds)
        folds = kfold_split(data.n, config.folds, config.seed)
        spec = NuisanceSpec.uniform(config.learner, trim=config.trim, penalty=config.penalty_level)
        logger.info('Estimating %s on %d rows, %d covariates, %d grid points', config.variant, data.n, data.p,
                    len(grid))

        nuisances = crossfit_nuisances(data, folds, grid, spec, n_jobs=config.threads)
        theta = crossfit_theta(data, folds, nuisances, grid, config.variant)
        tau_grid = config.rank_grid()
        profile, curve = estimate_effects(grid, theta.theta, tau_grid, config.outcome_kind)

        bootstrap = None
        if config.bootstrap_reps:
            bootstrap = bootstrap_effects(
                theta, tau_grid, B=config.bootstrap_reps, alpha=config.alpha, seed=config.seed,
                multiplier=config.multiplier, outcome_kind=config.outcome_kind, ci_method=config.ci_method,
                n_jobs=config.threads,
            )

        warnings = list(curve.warnings)
        if theta.diagnostics.get('trim_hits'):
            warnings.append('%d propensity predictions clamped to [%g, %g]' % (
                theta.diagnostics['trim_hits'], config.trim, 1 - config.trim))
        warnings.extend('nonconverged fit: %s' % name for name in theta.diagnostics.get('nonconverged', []))
        for message in warnings:
            logger.warning(message)
        return EstimationOutcome(data, theta, profile, curve, bootstrap, warnings)

    def write(self, outcome: EstimationOutcome):
        config = self.config
        with ResultWriter(config.out, config.config_hash) as writer:
            writer.csv('cdf.csv', cdf_frame(outcome.profile))
            writer.csv('quantiles.csv', quantile_frame(outcome.curve, outcome.bootstrap))
            writer.csv('effects.csv', effect_frame(outcome.curve, outcome.bootstrap))
            writer.json('run.json', {
                'version': __version__,
                'config': {key: value for key, value in config.to_dict().items() if key != 'threads'},
                'n': outcome.data.n,
                'p': outcome.data.p,
                'grid': outcome.profile.grid.a,
                'ci_method': outcome.bootstrap.ci_method if outcome.bootstrap else None,
                'bootstrap_reps': outcome.bootstrap.B if outcome.bootstrap else 0,
                'warnings': outcome.warnings,
            })
