import math
from fractions import Fraction

import numpy as np
import pytest

from curlicue import measure_lab as lab
from curlicue.errors import BudgetError, DomainError, SkipRateError
from curlicue.renorm_engine import theta_alpha


def test_streams_are_deterministic():
    assert lab.sample_stream(5, 20) == lab.sample_stream(5, 20)
    assert lab.sample_stream(5, 20) != lab.sample_stream(6, 20)
    assert lab.sample_alpha(5, 3) == lab.sample_stream(5, 4)[3]
    assert lab.sample_stream(5, 5, stream=1) != lab.sample_stream(5, 5, stream=0)


def test_sampler_ks_band():
    n = 10_000
    assert lab.sampler_ks(0, n) < 1.36 / math.sqrt(n)


def test_sampler_chi_square_small():
    _, p = lab.sampler_chi_square(1, 20_000, 32)
    assert p > 0.01


def test_uniform_stream_in_unit_interval():
    us = lab.uniform_stream(0, 100)
    assert all(0 < u < 1 for u in us)


def test_empirical_distribution_histogram_and_csv():
    cloud = lab.EmpiricalDistribution(np.arange(10.0), ("x",))
    mass, edges = cloud.histogram(5)
    assert mass.sum() == pytest.approx(1.0)
    assert len(edges[0]) == 6
    assert cloud.to_csv().splitlines()[0] == "x"
    with pytest.raises(DomainError):
        lab.EmpiricalDistribution(np.zeros(3), weights=np.ones(3))


def test_ks_distance():
    rng = np.random.default_rng(0)
    a = lab.EmpiricalDistribution(rng.normal(size=(500, 2)))
    assert lab.ks_distance(a, a).statistic == 0
    b = lab.EmpiricalDistribution(rng.normal(size=(500, 2)) + 1)
    rep = lab.ks_distance(a, b, threshold=0.1)
    assert rep.statistic > 0.2 and not rep.passed
    with pytest.raises(DomainError):
        lab.ks_distance(a, lab.EmpiricalDistribution(np.zeros(5)))


def _flaky(i):
    if i % 2:
        raise BudgetError("too long")
    return i


def test_skips_are_counted_and_limited():
    out, tally = lab.run_samples(_flaky, 10, skip_limit=1.0)
    assert out == [0, 2, 4, 6, 8]
    assert tally.skipped == 5 and tally.reasons == {"BudgetError": 5}
    with pytest.raises(SkipRateError):
        lab.run_samples(_flaky, 10)


def test_theta_cloud_is_positive():
    cloud = lab.theta_distribution(10 ** 4, 200, seed=2)
    assert cloud.n == 200 and np.all(cloud.points > 0)
    alpha = lab.sample_alpha(2, 0)
    assert cloud.points[0, 0] == theta_alpha(alpha, 10 ** 4)


def test_renewal_cloud_support():
    cloud = lab.renewal_distribution(10 ** 4, 200, N1=1, N2=1, seed=3)
    assert cloud.dims == 2 + 6 + 2
    prev, nxt = cloud.marginal(0), cloud.marginal(1)
    assert np.all((prev > 0) & (prev <= 1)) and np.all(nxt > 1)
    with pytest.raises(DomainError):
        lab.renewal_distribution(10 ** 4, 10, N1=3, N2=2)


def test_fdd_chain_shape():
    chain = lab.estimate_fdd([Fraction(1, 2), 1], [2000, 4000], 50, J=2, seed=4)
    assert [c.n for c in chain.clouds] == [50, 50]
    assert chain.clouds[0].dims == 6 and len(chain.ks) == 1
    with pytest.raises(DomainError):
        lab.estimate_fdd([1], [4000, 2000], 10, J=2)


def test_markov_estimate_small():
    est = lab.markov_estimate(10, orbit_len=1000, seed=0, precision_bits=8192)
    assert np.allclose(est.Pi.sum(axis=1), 1, atol=1e-12)
    assert est.stationary.sum() == pytest.approx(1.0)
    assert est.xy_law(3).sum() == pytest.approx(1.0)
    assert len(est.distance_profile([1, 2])) == 2
    with pytest.raises(DomainError):
        lab.markov_estimate(10, orbit_len=100)


def test_markov_stationary_is_fixed():
    est = lab.markov_estimate(10, orbit_len=1000, seed=1, precision_bits=8192)
    assert np.allclose(est.stationary @ est.Pi, est.stationary, atol=1e-10)


def test_wlln_statistic_positive():
    rows = lab.wlln_experiment([50, 200], 40, seed=5, precision_bits=4096)
    assert [r.n for r in rows] == [50, 200]
    assert all(r.median > 0 for r in rows)


def test_second_moment_single_term():
    rep = lab.second_moment_check(1, 50, seed=0)
    assert rep.mean == pytest.approx(1.0, abs=1e-14)
    assert rep.variance == pytest.approx(0.0, abs=1e-14)


def test_second_moment_reports_variance():
    rep = lab.second_moment_check(100, 200, seed=0)
    assert math.isfinite(rep.variance) and rep.std_error > 0


def test_approx_errors_vanish_for_full_windows():
    table = lab.approx_error_experiment([1, 30], 10 ** 4, 40, seed=6)
    assert table.rows[1].q99 < 1e-9
    assert table.rows[0].q50 >= table.rows[1].q50


def test_invariance_residual_small():
    res = lab.invariance_residual(np.linspace(0.05, 0.95, 5))
    assert np.max(np.abs(res)) < 1e-6

