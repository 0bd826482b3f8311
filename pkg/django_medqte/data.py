"""
Observed-data model: the (Y, D, M, X) sample, outcome and rank grids, and fold assignment.
"""
import logging
from dataclasses import dataclass
from itertools import combinations
from typing import Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from . import DataValidationError

logger = logging.getLogger(__name__)

BINARY = 'binary'
CONTINUOUS = 'continuous'
MEDIATOR_KINDS = (BINARY, CONTINUOUS)

EMPIRICAL_QUANTILES = 'empirical_quantiles'
LINEAR_SPAN = 'linear_span'
GRID_STRATEGIES = (EMPIRICAL_QUANTILES, LINEAR_SPAN)

REQUIRED_COLUMNS = ('y', 'd', 'm')

NO_EXPANSION = 'none'
QUADRATIC = 'quadratic'
COVARIATE_EXPANSIONS = (NO_EXPANSION, QUADRATIC)


def _frozen(values, dtype=float):
    array = np.array(values, dtype=dtype, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class Observation:
    y: float
    d: int
    m: float
    x: Tuple[float, ...]


class Dataset:
    """
    Immutable observed sample.

    Columns are stored as read-only numpy arrays so a dataset can be shared with parallel workers;
    `rows` materializes `Observation` objects on demand.
    """

    def __init__(self, y, d, m, x, mediator_kind=BINARY, covariate_names=None):
        if mediator_kind not in MEDIATOR_KINDS:
            raise DataValidationError('unknown mediator kind %r' % (mediator_kind,))
        y = np.asarray(y, dtype=float)
        m = np.asarray(m, dtype=float)
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        n = len(y)
        if x.ndim != 2 or len(d) != n or len(m) != n or len(x) != n:
            raise DataValidationError('columns y, d, m and covariates must have the same length')
        if n == 0:
            raise DataValidationError('dataset is empty')
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(m)) and np.all(np.isfinite(x))):
            raise DataValidationError('y, m and covariates must be finite')
        d_float = np.asarray(d, dtype=float)
        if not np.all((d_float == 0) | (d_float == 1)):
            raise DataValidationError('treatment d must be 0 or 1')
        if mediator_kind == BINARY and not np.all((m == 0) | (m == 1)):
            raise DataValidationError('mediator declared binary but takes values outside {0, 1}')
        treated = int(d_float.sum())
        if treated == 0 or treated == n:
            raise DataValidationError('both treatment arms must be present')

        self.y = _frozen(y)
        self.d = _frozen(d_float, dtype=np.int8)
        self.m = _frozen(m)
        self.x = _frozen(x)
        self.mediator_kind = mediator_kind
        if covariate_names is None:
            covariate_names = tuple('x%d' % (j + 1) for j in range(x.shape[1]))
        if len(covariate_names) != x.shape[1]:
            raise DataValidationError('expected %d covariate names' % x.shape[1])
        self.covariate_names = tuple(covariate_names)

    @classmethod
    def from_observations(cls, rows: Sequence[Observation], mediator_kind=BINARY, covariate_names=None):
        if not rows:
            raise DataValidationError('dataset is empty')
        p = len(rows[0].x)
        if any(len(row.x) != p for row in rows):
            raise DataValidationError('all rows must share the covariate dimension')
        return cls(
            [row.y for row in rows], [row.d for row in rows], [row.m for row in rows],
            np.array([row.x for row in rows], dtype=float).reshape(len(rows), p),
            mediator_kind=mediator_kind, covariate_names=covariate_names,
        )

    @property
    def n(self):
        return len(self.y)

    @property
    def p(self):
        return self.x.shape[1]

    @property
    def rows(self):
        return [
            Observation(float(y), int(d), float(m), tuple(float(v) for v in x))
            for y, d, m, x in zip(self.y, self.d, self.m, self.x)
        ]

    def check_folds(self, folds):
        if self.n < 2 * folds:
            raise DataValidationError('%d rows are too few for %d folds (need at least %d)' % (
                self.n, folds, 2 * folds))

    def to_frame(self):
        frame = pd.DataFrame({'y': self.y, 'd': self.d.astype(int), 'm': self.m})
        for j, name in enumerate(self.covariate_names):
            frame[name] = self.x[:, j]
        return frame

    def __repr__(self):
        return '<Dataset n=%d p=%d mediator=%s>' % (self.n, self.p, self.mediator_kind)


def expand_covariates(data: Dataset, kind=QUADRATIC) -> Dataset:
    """
    Dictionary for the lasso step: the original covariates, every pairwise product and the squares of the
    non-binary covariates. p controls with b binary ones become p + p(p - 1) / 2 + (p - b) columns.
    """
    if kind not in COVARIATE_EXPANSIONS:
        raise DataValidationError('unknown covariate expansion %r' % (kind,))
    if kind == NO_EXPANSION:
        return data
    x, names = data.x, data.covariate_names
    columns, expanded_names = [x], list(names)
    for j, k in combinations(range(data.p), 2):
        columns.append(x[:, j] * x[:, k])
        expanded_names.append('%s*%s' % (names[j], names[k]))
    for j in range(data.p):
        if not np.all(np.isin(x[:, j], (0.0, 1.0))):
            columns.append(x[:, j] ** 2)
            expanded_names.append('%s^2' % names[j])
    expanded = np.column_stack(columns)
    logger.info('Expanded %d covariates to %d', data.p, expanded.shape[1])
    return Dataset(data.y, data.d, data.m, expanded, mediator_kind=data.mediator_kind,
                   covariate_names=expanded_names)


def read_csv(path, mediator_kind=BINARY) -> Dataset:
    """
    Load a dataset from a CSV file with header `y,d,m,<covariates...>`.

    Errors carry the 1-based file line of the offending row (the header is line 1).
    """
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, skip_blank_lines=False)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise DataValidationError('cannot read %s (%s)' % (path, e))

    columns = [str(column).strip() for column in frame.columns]
    if tuple(columns[:3]) != REQUIRED_COLUMNS:
        raise DataValidationError('header must start with y,d,m (found %s)' % ','.join(columns[:3]), line=1)
    if len(columns) < 4:
        raise DataValidationError('at least one covariate column is required', line=1)
    frame.columns = columns

    # blank lines are dropped but still count towards the reported line numbers
    cells = frame.fillna('').apply(lambda column: column.str.strip())
    blank = (cells == '').all(axis=1).to_numpy()
    cells = cells[~blank]
    lines = np.arange(len(frame))[~blank] + 2
    if not len(cells):
        raise DataValidationError('%s holds no data rows' % path)

    values = np.empty(cells.shape, dtype=float)
    for j, column in enumerate(columns):
        _reject_first(cells[column] == '', 'missing value in column %r' % column, lines)
        numeric = pd.to_numeric(cells[column], errors='coerce')
        _reject_first(numeric.isna(), 'cannot parse value in column %r' % column, lines)
        values[:, j] = numeric.to_numpy(dtype=float)
        _reject_first(~np.isfinite(values[:, j]), 'non-finite value in column %r' % column, lines)

    _reject_first(~np.isin(values[:, 1], (0.0, 1.0)), 'treatment d must be 0 or 1', lines)
    if mediator_kind == BINARY:
        _reject_first(~np.isin(values[:, 2], (0.0, 1.0)), 'mediator declared binary but m is not 0 or 1', lines)

    logger.info('Read %d rows with %d covariates from %s', len(values), len(columns) - 3, path)
    return Dataset(values[:, 0], values[:, 1], values[:, 2], values[:, 3:],
                   mediator_kind=mediator_kind, covariate_names=columns[3:])


def _reject_first(mask, message, lines):
    bad = np.flatnonzero(np.asarray(mask))
    if len(bad):
        raise DataValidationError(message, line=int(lines[bad[0]]))


def indicator(y, a):
    """1{y <= a}; vectorizes over numpy arrays."""
    result = np.less_equal(y, a).astype(int)
    return int(result) if result.ndim == 0 else result


@dataclass(frozen=True, eq=False)
class OutcomeGrid:
    a: np.ndarray

    def __post_init__(self):
        a = _frozen(self.a)
        if a.ndim != 1 or len(a) < 2:
            raise DataValidationError('an outcome grid needs at least two points')
        if np.any(np.diff(a) < 0):
            raise DataValidationError('outcome grid must be nondecreasing')
        object.__setattr__(self, 'a', a)

    def __len__(self):
        return len(self.a)


@dataclass(frozen=True, eq=False)
class RankGrid:
    tau: np.ndarray

    def __post_init__(self):
        tau = _frozen(self.tau)
        if tau.ndim != 1 or len(tau) == 0:
            raise DataValidationError('rank grid is empty')
        if np.any(tau <= 0) or np.any(tau >= 1):
            raise DataValidationError('ranks must lie strictly inside (0, 1)')
        if np.any(np.diff(tau) <= 0):
            raise DataValidationError('rank grid must be strictly increasing')
        object.__setattr__(self, 'tau', tau)

    @classmethod
    def from_spec(cls, spec):
        """Parse `start:stop:step` (inclusive stop) or a comma separated list of ranks."""
        spec = str(spec).strip()
        try:
            if ':' in spec:
                start, stop, step = (float(part) for part in spec.split(':'))
                count = int(np.floor((stop - start) / step + 1e-9)) + 1
                return cls(np.round(start + step * np.arange(count), 10))
            return cls(np.array([float(part) for part in spec.split(',')]))
        except ValueError:
            raise DataValidationError('cannot parse rank grid %r' % spec)

    def __len__(self):
        return len(self.tau)


def build_outcome_grid(data: Dataset, size: int, strategy=EMPIRICAL_QUANTILES,
                       bounds: Optional[Tuple[float, float]] = None) -> OutcomeGrid:
    if size < 2:
        raise DataValidationError('grid size must be at least 2')
    if strategy not in GRID_STRATEGIES:
        raise DataValidationError('unknown grid strategy %r' % (strategy,))
    y = data.y
    low, high = float(np.min(y)), float(np.max(y))
    if low == high:
        raise DataValidationError('constant outcome')

    if strategy == EMPIRICAL_QUANTILES:
        ranks = np.arange(1, size + 1) / (size + 1)
        a = np.quantile(y, ranks)
    else:
        if bounds is not None:
            low, high = float(bounds[0]), float(bounds[1])
            if not low < high:
                raise DataValidationError('grid bounds must satisfy lower < upper')
        a = low + np.arange(1, size + 1) * (high - low) / (size + 1)
    return OutcomeGrid(np.maximum.accumulate(a))


@dataclass(frozen=True, eq=False)
class FoldAssignment:
    fold_of: np.ndarray
    K: int

    def __post_init__(self):
        object.__setattr__(self, 'fold_of', _frozen(self.fold_of, dtype=np.int64))

    @property
    def n(self):
        return len(self.fold_of)

    def indices(self, k):
        return np.flatnonzero(self.fold_of == k)

    def complement(self, k):
        return np.flatnonzero(self.fold_of != k)

    def sizes(self):
        return np.bincount(self.fold_of, minlength=self.K + 1)[1:]


def kfold_split(n: int, K: int, seed: int) -> FoldAssignment:
    """
    Randomly partition `range(n)` into K folds numbered 1..K.

    Fold sizes differ by at most one; the remainder goes to the lowest-numbered folds.
    """
    if K < 2:
        raise DataValidationError('cross-fitting requires at least two folds')
    if K > n:
        raise DataValidationError('cannot split %d rows into %d folds' % (n, K))
    permutation = np.random.default_rng(seed).permutation(n)
    base, remainder = divmod(n, K)
    fold_of = np.empty(n, dtype=np.int64)
    start = 0
    for k in range(1, K + 1):
        size = base + (1 if k <= remainder else 0)
        fold_of[permutation[start:start + size]] = k
        start += size
    return FoldAssignment(fold_of, K)
