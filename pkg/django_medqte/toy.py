"""
A fully enumerable mediation model with binary X, D, M and a five-point outcome grid.

Population means of the scores are exact finite sums over (x, d, m, y_a) cells, which makes the model
an oracle for identification, Bayes-rule and orthogonality checks.
"""
from dataclasses import dataclass, replace

import numpy as np

from .nuisances import ScoreInputs, mix_over_mediator
from .scores import PAIRS, plugin_value, psi_value

P_X1 = 0.5
PROPENSITY = np.array([0.45, 0.6])                  # P(D=1 | x)
MEDIATOR_ONE = np.array([[0.4, 0.55], [0.5, 0.65]])  # P(M=1 | d, x), indexed [d, x]
BASE_CDF = np.array([0.15, 0.3, 0.5, 0.7, 0.85])
GRID = np.arange(1.0, 6.0)


def _outcome_cdf():
    d, m, x = np.meshgrid([0, 1], [0, 1], [0, 1], indexing='ij')
    shift = -0.05 * d - 0.04 * m + 0.03 * x - 0.02 * d * m
    return BASE_CDF[None, None, None, :] + shift[..., None]  # [d, m, x, l]


def _cells():
    """(x, d, m, y) for all sixteen cells."""
    return np.array([(x, d, m, y) for x in (0, 1) for d in (0, 1) for m in (0, 1) for y in (0, 1)])


@dataclass(frozen=True, eq=False)
class ToyNuisances:
    """Nuisance tables: propensity [x], treatment_mediator P(D=1|m,x) [m, x], mediator [d, x],
    outcome [d, m, x, l] and imputation [d, d', x, l]."""
    propensity: np.ndarray
    treatment_mediator: np.ndarray
    mediator: np.ndarray
    outcome: np.ndarray
    imputation: np.ndarray

    def shifted(self, t, **directions):
        return replace(self, **{name: getattr(self, name) + t * h for name, h in directions.items()})


class ToyModel:
    def __init__(self):
        self.p_x = np.array([1 - P_X1, P_X1])
        self.propensity = PROPENSITY
        self.mediator = MEDIATOR_ONE
        self.outcome = _outcome_cdf()
        self.grid = GRID

    def mediator_law(self, d):
        """P(M=m | d, x) indexed [m, x]."""
        return np.stack([1 - self.mediator[d], self.mediator[d]])

    def truth(self):
        """F_{Y(d, M(d'))}(a_l) by enumeration, rows ordered as `PAIRS`."""
        rows = []
        for d, d_prime in PAIRS:
            law = self.mediator_law(d_prime)
            rows.append(np.einsum('x,mx,mxl->l', self.p_x, law, self.outcome[d]))
        return np.array(rows)

    def true_nuisances(self) -> ToyNuisances:
        joint = np.stack([self.mediator_law(d) * np.array([1 - self.propensity, self.propensity])[d]
                          for d in (0, 1)])  # [d, m, x]
        treatment_mediator = joint[1] / joint.sum(axis=0)
        imputation = np.empty((2, 2, 2, len(self.grid)))
        for d in (0, 1):
            for d_prime in (0, 1):
                imputation[d, d_prime] = mix_over_mediator(
                    self.outcome[d, 0], self.outcome[d, 1], self.mediator[d_prime][:, None])
        return ToyNuisances(self.propensity.copy(), treatment_mediator, self.mediator.copy(),
                            self.outcome.copy(), imputation)

    def cell_weights(self):
        """Population probability of each cell, per grid point: shape (16, L)."""
        cells = _cells()
        x, d, m, y = cells.T
        p_d = np.where(d == 1, self.propensity[x], 1 - self.propensity[x])
        p_m = np.where(m == 1, self.mediator[d, x], 1 - self.mediator[d, x])
        f = self.outcome[d, m, x]
        p_y = np.where(y[:, None] == 1, f, 1 - f)
        return (self.p_x[x] * p_d * p_m)[:, None] * p_y

    def score_inputs(self, nuisances: ToyNuisances) -> ScoreInputs:
        cells = _cells()
        x, d, m, y = cells.T
        L = len(self.grid)
        e = nuisances.propensity[x]
        q = nuisances.treatment_mediator[m, x]
        return ScoreInputs(
            y_a=np.repeat(y[:, None], L, axis=1),
            treatment=d, mediator=m.astype(float),
            p_treat_x=np.column_stack([1 - e, e]),
            p_treat_mx=np.column_stack([1 - q, q]),
            g3=np.stack([nuisances.outcome[dd, m, x] for dd in (0, 1)]),
            g4=np.stack([np.stack([nuisances.imputation[dd, dp, x] for dp in (0, 1)]) for dd in (0, 1)]),
            p_mediator_one=nuisances.mediator[:, x].T,
        )

    def population_mean(self, nuisances: ToyNuisances, d, d_prime, score=psi_value):
        """Exact population mean of `score` at the given nuisances, over the grid."""
        values = score(self.score_inputs(nuisances), d, d_prime)
        return np.sum(self.cell_weights() * values, axis=0)

    def plugin_mean(self, nuisances: ToyNuisances, d, d_prime):
        return self.population_mean(nuisances, d, d_prime, score=plugin_value)


def orthogonality_directions(model: ToyModel):
    """
    Perturbation directions named after their primary nuisance. Each direction also moves a partner
    nuisance, because single-nuisance moves leave these scores exactly unchanged.
    """
    L = len(model.grid)
    h1 = np.array([0.5, -0.5])
    h2 = np.array([[0.5, -0.4], [-0.3, 0.5]])
    signs = np.array([[1.0, -1.0], [-1.0, 1.0]])  # [m, x]
    h3 = np.broadcast_to(0.5 * signs[None, :, :, None], (2, 2, 2, L)).copy()
    h4 = np.full((2, 2, 2, L), 0.5)
    return {
        'treatment': {'propensity': h1, 'imputation': 0.5 * h4},
        'treatment_mediator': {'treatment_mediator': h2, 'outcome': 0.5 * h3},
        'outcome': {'outcome': h3, 'treatment_mediator': 0.5 * h2},
        'imputation': {'imputation': h4, 'propensity': 0.5 * h1},
    }


def perturbation_slope(model: ToyModel, direction, pair=(1, 0), grid_point=2, score=psi_value,
                       steps=(0.02, 0.04, 0.08)):
    """Log-log slope of |mean score(v0 + t h) - mean score(v0)| against t."""
    truth = model.true_nuisances()
    d, d_prime = pair
    base = model.population_mean(truth, d, d_prime, score)[grid_point]
    gaps = [abs(model.population_mean(truth.shifted(t, **direction), d, d_prime, score)[grid_point] - base)
            for t in steps]
    if min(gaps) == 0.0:
        return float('-inf')
    return float(np.polyfit(np.log(steps), np.log(gaps), 1)[0])


def random_bayes_consistent_inputs(n, L, rng) -> ScoreInputs:
    """Random score inputs whose f(D | M, X) is derived from f(D | X) and f(M | D, X) by Bayes' rule."""
    e = rng.uniform(0.1, 0.9, n)
    mediator_one = rng.uniform(0.1, 0.9, (n, 2))
    m = (rng.uniform(size=n) < 0.5).astype(float)
    density = np.where(m[:, None] == 1, mediator_one, 1 - mediator_one)
    joint = density * np.column_stack([1 - e, e])
    p_treat_mx = joint / joint.sum(axis=1, keepdims=True)
    return ScoreInputs(
        y_a=(rng.uniform(size=(n, L)) < 0.5).astype(int),
        treatment=(rng.uniform(size=n) < e).astype(int),
        mediator=m,
        p_treat_x=np.column_stack([1 - e, e]),
        p_treat_mx=p_treat_mx,
        g3=rng.uniform(size=(2, n, L)),
        g4=rng.uniform(size=(2, 2, n, L)),
        p_mediator_one=mediator_one,
    )
