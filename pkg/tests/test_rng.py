import math

import numpy as np
import pytest
from scipy import stats

from rangelab.rng import SeedPolicy, binomial_draws, mix64, stream_seed, uniform_doubles


def test_stream_seeds_are_distinct_and_stable():
    pol = SeedPolicy(123)
    seeds = pol.seeds(0, 10_000)
    assert len(set(seeds.tolist())) == 10_000
    assert pol.seed(17) == stream_seed(123, 17) == int(seeds[17])
    assert SeedPolicy(124).seed(17) != pol.seed(17)


def test_mix64_is_a_bijection_on_a_sample():
    vals = {mix64(i) for i in range(50_000)}
    assert len(vals) == 50_000


def test_uniform_doubles_moments_and_range():
    u = uniform_doubles(99, 200_000)
    assert u.min() >= 0.0 and u.max() < 1.0
    assert abs(u.mean() - 0.5) < 5 * math.sqrt(1 / 12 / len(u))
    assert stats.kstest(u, "uniform").pvalue > 1e-4


def test_uniform_doubles_reproducible():
    assert np.array_equal(uniform_doubles(5, 100), uniform_doubles(5, 100))
    assert not np.array_equal(uniform_doubles(5, 100), uniform_doubles(6, 100))


@pytest.mark.parametrize("n,p", [(7, 0.3), (40, 0.5), (1000, 0.5), (5000, 0.01)])
def test_binomial_chi_square(n, p):
    count = 100_000
    x = binomial_draws(2024 + n, n, p, count)
    assert x.min() >= 0 and x.max() <= n
    pmf = stats.binom.pmf(np.arange(n + 1), n, p)
    expected = pmf * count
    keep = expected >= 20
    obs = np.bincount(x, minlength=n + 1)
    o = np.append(obs[keep], obs[~keep].sum())
    e = np.append(expected[keep], expected[~keep].sum())
    if e[-1] < 1e-9:
        o, e = o[:-1], e[:-1]
    chi2 = ((o - e) ** 2 / e).sum()
    assert stats.chi2.sf(chi2, len(o) - 1) > 1e-4


def test_binomial_edge_cases():
    assert np.all(binomial_draws(1, 0, 0.5, 10) == 0)
    assert np.all(binomial_draws(1, 9, 1.0, 10) == 9)
    assert np.all(binomial_draws(1, 9, 0.0, 10) == 0)
