import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rangelab.domain import DomainSpec
from rangelab.errors import CapExceeded, ConfigError, DomainError, IncompatibleSamples
from rangelab.walks import (VisitHistogram, WalkLaw, batch_mean, estimate_return_probability,
                            extract_statistics, interval_ranges, merge, return_times,
                            run_until_exit, simulate_exits, summarize, unconstrained_range_profile)


SQ = DomainSpec.unit_square()


def test_simple_law():
    law = WalkLaw.simple(3)
    assert law.dimension == 3 and len(law.steps) == 6
    assert np.allclose(law.mean, 0)
    assert np.allclose(law.covariance, np.eye(3) / 3)


def test_law_validation():
    with pytest.raises(ConfigError):
        WalkLaw.from_table("mean-zero", [(1, 0), (-1, 0)], [0.6, 0.4])
    with pytest.raises(ConfigError):
        WalkLaw.from_table("biased", [(1, 0), (-1, 0)], [0.5, 0.5])
    with pytest.raises(ConfigError):
        WalkLaw.from_table("biased", [(1, 0), (-1, 0)], [0.5, 0.6])


def test_alias_tables_reproduce_probabilities():
    law = WalkLaw.from_table("biased", [(1, 0), (-1, 0), (0, 1), (0, -1), (2, 1)],
                             [0.1, 0.25, 0.3, 0.15, 0.2])
    prob, alias = law.alias_tables()
    K = len(prob)
    back = np.zeros(K)
    for j in range(K):
        back[j] += prob[j] / K
        back[alias[j]] += (1 - prob[j]) / K
    assert np.allclose(back, law.probs)


def test_run_until_exit_histogram_is_consistent():
    dom = SQ.lattice(20)
    h = run_until_exit(WalkLaw.simple(2), dom, (10, 10), seed=3)
    assert sum(h.counts.values()) == h.tau
    assert h.counts[(10, 10)] >= 1
    assert all(dom.contains(x) for x in h.counts)


def test_extract_statistics():
    hist = VisitHistogram({(1,): 1, (2,): 3, (3,): 1, (4,): 7}, 12, (1,))
    s = extract_statistics(hist, p_max=3)
    assert s.range == 4
    assert s.multi_range == (2, 0, 1)
    assert s.overflow_sites == 1 and s.overflow_mass == 7
    assert sum(p * s.r(p) for p in range(1, 4)) + s.overflow_mass == s.tau


def test_batch_kernel_agrees_with_single_walk():
    law = WalkLaw.simple(2)
    dom = SQ.lattice(16)
    S = simulate_exits(law, dom, (5, 9), master_seed=11, replicates=30, p_max=64)
    for i in range(30):
        h = run_until_exit(law, dom, (5, 9), int(S.seed[i]))
        s = extract_statistics(h, 64)
        assert (s.tau, s.range, s.multi_range) == (S.tau[i], S.range[i], tuple(S.multi[i]))


@settings(max_examples=25, deadline=None)
@given(st.sampled_from(["square", "ball", "tri", "card", "cube3"]), st.integers(4, 20),
       st.integers(0, 2 ** 32))
def test_conservation_laws(shape, N, seed):
    spec = {"square": SQ, "ball": DomainSpec.ball((0.5, 0.5), 0.5),
            "tri": DomainSpec.polygon([(0, 0), (1, 0), (0.4, 1)]), "card": DomainSpec.cardioid(),
            "cube3": DomainSpec.cube(3)}[shape]
    dom = spec.lattice(N)
    pts = dom.enumerate_interior()
    if len(pts) == 0:
        return
    start = tuple(pts[seed % len(pts)])
    S = simulate_exits(WalkLaw.simple(spec.dimension), dom, start, seed, 20, p_max=5)
    p = np.arange(1, 6)
    assert np.all((S.multi * p).sum(1) + S.overflow_mass == S.tau)
    assert np.all(S.multi.sum(1) + S.overflow_sites == S.range)
    assert np.all(S.range <= S.tau)
    assert np.all(S.tau >= 1)


def test_walk_on_general_law_stays_consistent():
    law = WalkLaw.from_table("mean-zero", [(2, 0), (-2, 0), (0, 1), (0, -1)], [0.25] * 4)
    dom = SQ.lattice(30)
    S = simulate_exits(law, dom, (15, 15), 1, 200, p_max=200)
    assert np.all((S.multi * np.arange(1, 201)).sum(1) + S.overflow_mass == S.tau)


def test_step_cap():
    with pytest.raises(CapExceeded):
        simulate_exits(WalkLaw.simple(2), SQ.lattice(64), (32, 32), 1, 10, step_cap=5)


def test_bad_start():
    with pytest.raises(DomainError):
        simulate_exits(WalkLaw.simple(2), SQ.lattice(8), (0, 4), 1, 10)


def test_determinism_and_partition_independence():
    law, dom = WalkLaw.simple(2), SQ.lattice(24)
    a = simulate_exits(law, dom, (12, 12), 77, 500, p_max=3)
    b = simulate_exits(law, dom, (12, 12), 77, 500, p_max=3, chunk=70)
    c = merge(simulate_exits(law, dom, (12, 12), 77, 200, p_max=3, first_index=300),
              simulate_exits(law, dom, (12, 12), 77, 300, p_max=3))
    for x in (b, c):
        for name in ("replicate", "seed", "tau", "range", "multi"):
            assert np.array_equal(getattr(a, name), getattr(x, name))
    assert summarize(a) == summarize(c)


def test_worker_pool_matches_serial():
    law, dom = WalkLaw.simple(2), SQ.lattice(16)
    a = simulate_exits(law, dom, (8, 8), 5, 400, p_max=2, chunk=100, workers=1)
    b = simulate_exits(law, dom, (8, 8), 5, 400, p_max=2, chunk=100, workers=3)
    assert np.array_equal(a.tau, b.tau) and np.array_equal(a.multi, b.multi)


@settings(max_examples=20, deadline=None)
@given(st.lists(st.integers(1, 60), min_size=2, max_size=5))
def test_merge_is_associative_and_order_free(sizes):
    law, dom = WalkLaw.simple(2), SQ.lattice(10)
    parts, lo = [], 0
    for n in sizes:
        parts.append(simulate_exits(law, dom, (5, 5), 9, n, p_max=2, first_index=lo))
        lo += n
    left = parts[0]
    for p in parts[1:]:
        left = merge(left, p)
    right = parts[-1]
    for p in reversed(parts[:-1]):
        right = merge(p, right)
    flat = merge(*reversed(parts))
    for x in (right, flat):
        assert np.array_equal(left.tau, x.tau) and np.array_equal(left.replicate, x.replicate)


def test_merge_rejects_mismatch():
    law = WalkLaw.simple(2)
    a = simulate_exits(law, SQ.lattice(10), (5, 5), 1, 10, p_max=2)
    with pytest.raises(IncompatibleSamples):
        merge(a, simulate_exits(law, SQ.lattice(12), (5, 5), 1, 10, p_max=2))
    with pytest.raises(IncompatibleSamples):
        merge(a, a)


def test_batch_mean_matches_plain_mean():
    x = np.arange(1000, dtype=float)
    m, se = batch_mean(x, np.arange(1000))
    assert m == pytest.approx(499.5)
    assert se > 0
    m2, _ = batch_mean(x[::-1], np.arange(1000)[::-1])
    assert m2 == m


def test_summary_k1_is_mean_and_variance_nonnegative():
    S = simulate_exits(WalkLaw.simple(2), SQ.lattice(16), (8, 8), 3, 300, p_max=2)
    s = summarize(S, 2)
    assert s["tau"]["moments"][0] == pytest.approx(S.tau.mean())
    assert s["range"]["moments"][1] >= s["range"]["moments"][0] ** 2


# -- d = 1 -------------------------------------------------------------------

def test_interval_chain_matches_direct_walk_in_law():
    N, start, n = 30, 10, 4000
    chain = interval_ranges(N, start, n, 1)
    S = simulate_exits(WalkLaw.simple(1), DomainSpec.interval().lattice(N), (start,), 2, n, p_max=1)
    direct = S.range
    assert chain.min() >= 1 and chain.max() <= N - 1
    # two-sample comparison of the range laws
    from scipy import stats
    assert stats.ks_2samp(chain, direct).pvalue > 1e-3
    assert abs(chain.mean() - direct.mean()) < 5 * math.hypot(chain.std() / math.sqrt(n),
                                                             direct.std() / math.sqrt(n))


def test_interval_chain_small_exact():
    # from 1 on {1, 2}: the walk exits at 0 w.p. 1/2 (R = 1), else reaches 2 and then R = 2
    r = interval_ranges(3, 1, 20_000, 4)
    assert set(np.unique(r)) == {1, 2}
    assert abs((r == 1).mean() - 0.5) < 0.02


# -- unconstrained walks ---------------------------------------------------

def test_unconstrained_profile_early_values():
    prof = unconstrained_range_profile(WalkLaw.simple(2), [0, 1, 2], seed=1, replicates=50)
    assert np.all(prof.range[:, 0] == 1) and np.all(prof.range[:, 1] == 2)
    assert np.all((prof.range[:, 2] == 2) | (prof.range[:, 2] == 3))


def test_unconstrained_occupation_identity():
    cps = [10, 100, 1000]
    prof = unconstrained_range_profile(WalkLaw.simple(3), cps, seed=8, p_max=1000, replicates=5)
    for j, n in enumerate(cps):
        occ = (prof.multi[:, j, :] * np.arange(1, 1001)).sum(1)
        assert np.all(occ == n + 1)
        assert np.all(prof.multi[:, j, :].sum(1) == prof.range[:, j])


def test_d3_range_rate():
    prof = unconstrained_range_profile(WalkLaw.simple(3), [200_000], seed=3, replicates=10)
    assert abs(prof.range[:, 0].mean() / 200_000 - 0.6595) < 0.02


# -- return probability ---------------------------------------------------

def test_return_probability_needs_transience():
    with pytest.raises(DomainError):
        estimate_return_probability(2, 10_000, 100, 1)
    with pytest.raises(ValueError):
        estimate_return_probability(3, 100, 100, 1)


def test_jump_and_stepwise_agree():
    n = 4000
    a = return_times(WalkLaw.simple(3), 20_000, n, 5, "jump")
    b = return_times(WalkLaw.simple(3), 20_000, n, 6, "stepwise")
    pa, pb = (a > 0).mean(), (b > 0).mean()
    assert abs(pa - pb) < 5 * math.sqrt(2 * 0.34 * 0.66 / n)
    # first returns are at even times
    assert np.all(a[a > 0] % 2 == 0) and np.all(b[b > 0] % 2 == 0)


def test_return_probability_d3_value():
    est = estimate_return_probability(3, 100_000, 20_000, 12)
    assert abs(est.p0 - 0.3405) < 4 * est.se + 0.003
    p, se = est
    assert se > 0


def test_return_probability_d4():
    est = estimate_return_probability(4, 10_000, 20_000, 3)
    assert abs(est.p0 - 0.1932) < 4 * est.se + 0.003


def test_biased_walk_returns_are_rarer():
    law = WalkLaw.from_table("biased", [(1, 0), (-1, 0), (0, 1), (0, -1)], [0.4, 0.2, 0.2, 0.2])
    est = estimate_return_probability(law, 10_000, 20_000, 4)
    assert 0.3 < est.p0 < 0.6
