import numpy as np
import pytest

from consistent_bayes import RngStream


@pytest.fixture
def rng():
    return RngStream(12345)


def ks_statistic(samples, cdf):
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    n = x.size
    f = np.asarray(cdf(x), dtype=float)
    hi = np.arange(1, n + 1) / n - f
    lo = f - np.arange(n) / n
    return float(max(hi.max(), lo.max()))
