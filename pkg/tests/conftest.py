import numpy as np
import pytest

from hdmt.data import GroupSample, MultiGroupDataset


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_dataset(rng, ns, p, shift=0.0, scales=None):
    groups = []
    for i, n in enumerate(ns):
        x = rng.standard_normal((n, p))
        if scales is not None:
            x = x * scales[i]
        groups.append(x + shift)
    return MultiGroupDataset.from_arrays(groups)


def rel(a, b):
    return abs(a - b) / max(abs(a), abs(b), 1e-300)


def identity_cov_sample():
    """n=3, p=2 rows whose sample covariance is exactly the identity."""
    s3 = np.sqrt(3.0)
    return GroupSample(np.array([[1.0, 1.0 / s3], [-1.0, 1.0 / s3], [0.0, -2.0 / s3]]) + 0.5)
