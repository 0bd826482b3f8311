import factory
import numpy as np
from factory.django import DjangoModelFactory
from scipy import special

from django_medqte.data import Dataset
from django_medqte.models import EstimationRun


def simulate_sample(n, p, seed, mediator_kind='binary'):
    """Small probit mediation design with p covariates, of which the first two matter."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, p))
    d = (rng.uniform(size=n) < special.ndtr(0.2 + 0.5 * x[:, 0])).astype(float)
    if mediator_kind == 'binary':
        m = (rng.uniform(size=n) < special.ndtr(-0.2 + 0.8 * d + 0.4 * x[:, 1])).astype(float)
    else:
        m = -0.2 + 0.8 * d + 0.4 * x[:, 1] + rng.standard_normal(n)
    y = 0.5 * d + 0.7 * m + 0.4 * d * m + x[:, 0] - 0.5 * x[:, 1] + rng.standard_normal(n)
    return {'y': y, 'd': d, 'm': m, 'x': x}


class DatasetFactory(factory.Factory):
    class Meta:
        model = Dataset

    class Params:
        n = 400
        p = 3
        seed = 0
        sample = factory.LazyAttribute(lambda o: simulate_sample(o.n, o.p, o.seed, o.mediator_kind))

    mediator_kind = 'binary'
    y = factory.LazyAttribute(lambda o: o.sample['y'])
    d = factory.LazyAttribute(lambda o: o.sample['d'])
    m = factory.LazyAttribute(lambda o: o.sample['m'])
    x = factory.LazyAttribute(lambda o: o.sample['x'])


class EstimationRunFactory(DjangoModelFactory):
    class Meta:
        model = EstimationRun

    command = 'estimate'
    config_hash = factory.Sequence(lambda i: '%064x' % i)
    output_dir = factory.Sequence(lambda i: 'medqte-output-%d' % i)


def write_dataset(dataset, path):
    dataset.to_frame().to_csv(path, index=False)
    return path
