"""
CDF post-processing (clip and rearrange), quantile inversion, and the quantile treatment effects.
"""
import logging
from dataclasses import dataclass

import numpy as np

from . import DataValidationError, EstimationError
from .data import OutcomeGrid, RankGrid
from .scores import PAIRS, pair_index

logger = logging.getLogger(__name__)

CONTINUOUS = 'continuous'
DISCRETE = 'discrete'
OUTCOME_KINDS = (CONTINUOUS, DISCRETE)

NDQTE = 'NDQTE'
NDQTE_PRIME = 'NDQTE_PRIME'
NIQTE = 'NIQTE'
NIQTE_PRIME = 'NIQTE_PRIME'
TQTE = 'TQTE'
EFFECTS = (NDQTE, NDQTE_PRIME, NIQTE, NIQTE_PRIME, TQTE)


def clip_unit(p):
    clipped = np.clip(p, 0.0, 1.0)
    return float(clipped) if np.ndim(clipped) == 0 else clipped


def rearrange(seq):
    """Monotone rearrangement: the nondecreasing permutation of `seq` (along the last axis)."""
    return np.sort(np.asarray(seq, dtype=float), axis=-1)


@dataclass(frozen=True, eq=False)
class CdfProfile:
    grid: OutcomeGrid
    raw: np.ndarray
    processed: np.ndarray

    @classmethod
    def from_theta(cls, grid: OutcomeGrid, raw) -> 'CdfProfile':
        raw = np.asarray(raw, dtype=float)
        if raw.shape != (len(PAIRS), len(grid)):
            raise EstimationError('expected raw CDF values of shape (%d, %d)' % (len(PAIRS), len(grid)))
        return cls(grid, raw, rearrange(clip_unit(raw)))

    def values(self, d, d_prime):
        return self.processed[pair_index(d, d_prime)]


def _invert(p, a, tau, outcome_kind):
    """Vectorized inversion of one processed profile; returns (quantiles, clamped flags)."""
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    L = len(p)
    j = np.searchsorted(p, tau, side='left')
    exact = (j < L) & (p[np.minimum(j, L - 1)] == tau)
    above = j == L
    below = (j == 0) & ~exact
    q = np.empty_like(tau)
    q[above] = a[-1]
    if outcome_kind == DISCRETE:
        inside = ~above
        q[inside] = a[j[inside]]
        return q, above
    q[exact] = a[j[exact]]
    q[below] = a[0]
    between = ~(exact | above | below)
    lo, hi = j[between] - 1, j[between]
    share = (tau[between] - p[lo]) / (p[hi] - p[lo])
    q[between] = a[lo] + share * (a[hi] - a[lo])
    return q, above | below


def invert_quantile(profile: CdfProfile, d, d_prime, tau, outcome_kind=CONTINUOUS):
    """
    Continuous: linear interpolation of (p_l, a_l) with the left end taken on flat pieces; discrete: the
    smallest a_l with p_l >= tau. Ranks outside the profile's range return the nearest grid endpoint.
    """
    if outcome_kind not in OUTCOME_KINDS:
        raise EstimationError('unknown outcome kind %r' % (outcome_kind,))
    tau_array = np.asarray(tau, dtype=float)
    if np.any(tau_array <= 0) or np.any(tau_array >= 1):
        raise DataValidationError('ranks must lie strictly inside (0, 1)')
    q, _ = _invert(profile.values(d, d_prime), profile.grid.a, tau_array, outcome_kind)
    return float(q[0]) if tau_array.ndim == 0 else q


@dataclass(frozen=True, eq=False)
class EffectCurve:
    tau: RankGrid
    quantiles: np.ndarray
    estimates: np.ndarray
    clamped: np.ndarray

    def effect(self, name):
        return self.estimates[EFFECTS.index(name)]

    def quantile(self, d, d_prime):
        return self.quantiles[pair_index(d, d_prime)]

    @property
    def warnings(self):
        messages = []
        for (d, d_prime), flags in zip(PAIRS, self.clamped):
            if flags.any():
                messages.append('Q(%d,M(%d)) clamped to a grid endpoint at tau=%s' % (
                    d, d_prime, ','.join('%g' % t for t in self.tau.tau[flags])))
        return messages


def effects_from_quantiles(quantiles):
    """Stack the five effects from quantile rows ordered as `PAIRS`; works on any trailing shape."""
    q11, q10, q01, q00 = (quantiles[..., pair_index(*pair), :] for pair in PAIRS)
    return np.stack([
        q10 - q00,
        q11 - q01,
        q11 - q10,
        q01 - q00,
        q11 - q00,
    ], axis=-2)


def compute_effects(profile: CdfProfile, tau_grid: RankGrid, outcome_kind=CONTINUOUS) -> EffectCurve:
    if outcome_kind not in OUTCOME_KINDS:
        raise EstimationError('unknown outcome kind %r' % (outcome_kind,))
    quantiles = np.empty((len(PAIRS), len(tau_grid)))
    clamped = np.zeros((len(PAIRS), len(tau_grid)), dtype=bool)
    for index in range(len(PAIRS)):
        quantiles[index], clamped[index] = _invert(profile.processed[index], profile.grid.a, tau_grid.tau,
                                                   outcome_kind)
    return EffectCurve(tau_grid, quantiles, effects_from_quantiles(quantiles), clamped)


def estimate_effects(grid: OutcomeGrid, raw_theta, tau_grid: RankGrid, outcome_kind=CONTINUOUS):
    """The full post-processing pipeline from raw CDF values to effects; shared by point and bootstrap runs."""
    profile = CdfProfile.from_theta(grid, raw_theta)
    return profile, compute_effects(profile, tau_grid, outcome_kind)
