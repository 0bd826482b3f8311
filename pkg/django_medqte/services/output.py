import json
import logging
import os
import tempfile

import numpy as np
import pandas as pd

from ..quantiles import EFFECTS
from ..scores import PAIRS

logger = logging.getLogger(__name__)


class ResultWriter:
    """
    Stages result files in the output directory and renames them into place only when the block exits
    cleanly; on error every staged file is removed.
    """

    def __init__(self, out_dir, config_hash):
        self.out_dir = out_dir
        self.config_hash = config_hash
        self._staged = []

    def __enter__(self):
        os.makedirs(self.out_dir, exist_ok=True)
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            self.commit()
        else:
            self.discard()
        return False

    def _stage(self, name, text):
        handle, path = tempfile.mkstemp(prefix='.%s.' % name, dir=self.out_dir)
        with os.fdopen(handle, 'w', newline='') as stream:
            stream.write(text)
        self._staged.append((path, os.path.join(self.out_dir, name)))

    def csv(self, name, frame: pd.DataFrame):
        frame = frame.copy()
        frame['config_hash'] = self.config_hash
        self._stage(name, frame.to_csv(index=False, lineterminator='\n'))

    def json(self, name, payload):
        payload = dict(payload, config_hash=self.config_hash)
        self._stage(name, json.dumps(payload, indent=2, sort_keys=True, default=_jsonable) + '\n')

    def commit(self):
        for temporary, final in self._staged:
            os.replace(temporary, final)
            logger.info('Wrote %s', final)
        self._staged = []

    def discard(self):
        for temporary, _ in self._staged:
            if os.path.exists(temporary):
                os.remove(temporary)
        self._staged = []


def _jsonable(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (set, frozenset, tuple)):
        return sorted(value)
    raise TypeError('cannot serialize %r' % (value,))


def cdf_frame(profile):
    rows = []
    for index, (d, d_prime) in enumerate(PAIRS):
        for l, a in enumerate(profile.grid.a):
            rows.append({
                'd': d, 'd_prime': d_prime, 'l': l + 1, 'a': a,
                'raw': profile.raw[index, l], 'processed': profile.processed[index, l],
            })
    return pd.DataFrame(rows)


def _band(bootstrap, kind):
    if bootstrap is None:
        return None, None
    if kind == 'quantile':
        return bootstrap.quantile_se, bootstrap.quantile_ci
    return bootstrap.se, bootstrap.ci


def quantile_frame(curve, bootstrap=None):
    se, ci = _band(bootstrap, 'quantile')
    rows = []
    for index, (d, d_prime) in enumerate(PAIRS):
        for t, tau in enumerate(curve.tau.tau):
            rows.append({
                'd': d, 'd_prime': d_prime, 'tau': tau, 'quantile': curve.quantiles[index, t],
                'clamped': bool(curve.clamped[index, t]),
                'se': se[index, t] if se is not None else np.nan,
                'ci_lower': ci[0, index, t] if ci is not None else np.nan,
                'ci_upper': ci[1, index, t] if ci is not None else np.nan,
            })
    return pd.DataFrame(rows)


def effect_frame(curve, bootstrap=None):
    se, ci = _band(bootstrap, 'effect')
    rows = []
    for index, effect in enumerate(EFFECTS):
        for t, tau in enumerate(curve.tau.tau):
            rows.append({
                'effect': effect, 'tau': tau, 'estimate': curve.estimates[index, t],
                'se': se[index, t] if se is not None else np.nan,
                'ci_lower': ci[0, index, t] if ci is not None else np.nan,
                'ci_upper': ci[1, index, t] if ci is not None else np.nan,
            })
    return pd.DataFrame(rows)
