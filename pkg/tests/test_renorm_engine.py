import math
import random
from fractions import Fraction

import pytest

from curlicue.errors import DomainError
from curlicue.jump_map import phase_state, sample_mu_R, sigma_code
from curlicue.renorm_engine import (B_closed, D_closed, build_trace, entry_partial_products,
                                    fdd_point, gamma_J, gamma_J_levels, level_sequence,
                                    partial_products, phase_bookkeeping, reconstruct,
                                    renewal_depth, telescoped_value, theta_alpha)
from curlicue.theta_eval import theta_sum

CEILING = 10 ** 10


def draw(i, bits=256):
    return sample_mu_R(Fraction(2 * i + 1, 2 * 997), bits)


def direct(alpha, N, t):
    return theta_sum(alpha, Fraction(t) * N) / math.sqrt(N)


def test_first_levels():
    levels = level_sequence(Fraction(5, 12), 3, 2)
    assert levels[0].kappa_l == 0 and levels[1].kappa_l == 1
    assert levels[1].eta_l == -1
    assert levels[1].alpha_l == Fraction(2, 5)


def test_kappa_at_entry_boundaries_matches_phase_chain():
    for i in range(100):
        alpha = draw(i)
        coding = sigma_code(alpha, max_entries=9)
        top = coding.nu[min(8, len(coding.entries))]
        levels = level_sequence(alpha, 1, top)
        for n in range(min(8, len(coding.entries)) + 1):
            state = phase_state(coding, n)
            assert levels[coding.nu[n]].kappa_l == state.kappa
            # x_n is the sign product one level below nu_n
            assert levels[coding.nu[n] - 1].sign_l == state.x


def test_renewal_depth_examples():
    assert renewal_depth(Fraction(5, 12), 3) == 1
    alpha = draw(3)
    depths = [renewal_depth(alpha, N) for N in (10, 100, 10 ** 3, 10 ** 4, 10 ** 6)]
    assert depths == sorted(depths)


def test_renewal_index_bound():
    for i in range(50):
        coding = sigma_code(draw(i), qhat_above=10 ** 6)
        n = coding.renewal_index(10 ** 6)
        assert n <= 3 * math.log(coding.qhat[n], 3)


def test_theta_example():
    assert theta_alpha(Fraction(5, 12), 3) == 1.25


def test_theta_positive_and_equals_top_level():
    for i in range(50):
        alpha, N = draw(i), 1000 + 37 * i
        trace = build_trace(alpha, N)
        assert theta_alpha(alpha, N) == trace.theta > 0
        assert trace.levels[-1].N_l == trace.theta_exact


def test_partial_product_conventions():
    trace = build_trace(draw(11), 10 ** 5)
    pp = partial_products(trace, 0, 2)
    assert pp.B_sj == pp.beta_j
    assert D_closed(trace.coding, trace.n_hat, 0) == 1
    assert B_closed(Fraction(1, 3), 2) == Fraction(1, 3)
    with pytest.raises(DomainError):
        partial_products(trace, 0, 1)


def test_partial_products_against_levels():
    for i in range(100):
        trace = build_trace(draw(i), 10 ** 4 + 101 * i)
        for j in range(trace.n_hat):
            entry_partial_products(trace, j)


def test_phase_bookkeeping_identities():
    for i in range(60):
        trace = build_trace(draw(i), 10 ** 5)
        for J in range(0, min(5, trace.n_hat) + 1):
            book = phase_bookkeeping(trace.coding, trace.n_hat, J, trace=trace)
            assert book.E_alpha == book.x_base * book.E_J


def test_phase_bookkeeping_empty_window():
    trace = build_trace(draw(2), 10 ** 4)
    book = phase_bookkeeping(trace.coding, trace.n_hat, 0)
    assert book.E_J == 1 and book.Upsilon == {}
    with pytest.raises(DomainError):
        phase_bookkeeping(trace.coding, trace.n_hat, trace.n_hat + 1)


def test_reconstruct_at_zero():
    assert reconstruct(draw(1), 5000, 0) == 0


def test_reconstruct_matches_direct_sum():
    rng = random.Random(12)
    for i in range(60):
        alpha = draw(i)
        N = rng.randrange(2, 10 ** 5)
        t = Fraction(rng.randrange(0, 1001), 1000)
        value = direct(alpha, N, t)
        assert abs(reconstruct(alpha, N, t) - value) <= 1e-8 * (1 + abs(value))


def test_reconstruct_small_N():
    alpha = draw(5)
    assert reconstruct(alpha, 2, 1) == pytest.approx(direct(alpha, 2, 1), abs=1e-12)


def test_telescoped_value_at_every_depth():
    alpha, N = draw(6), 4321
    value = direct(alpha, N, Fraction(2, 3))
    for depth in range(0, renewal_depth(alpha, N) + 1):
        assert telescoped_value(alpha, N, Fraction(2, 3), depth) == pytest.approx(value, abs=1e-9)


def test_gamma_J_full_window_equals_reconstruct():
    for i in range(20):
        alpha, N = draw(i), 20_000 + i
        n_hat = sigma_code(alpha, qhat_above=N).renewal_index(N)
        res = gamma_J(alpha, N, 1, n_hat, cost_ceiling=CEILING)
        assert not res.fallback
        assert res.value == pytest.approx(reconstruct(alpha, N, 1), abs=1e-10)


def test_gamma_J_dual_routes():
    for i in range(40):
        alpha, N = draw(i), 50_000
        t = Fraction(i + 1, 41)
        for J in (1, 2, 3):
            fast = gamma_J(alpha, N, t, J, cost_ceiling=CEILING)
            if fast.fallback:
                continue
            assert fast.value == pytest.approx(gamma_J_levels(alpha, N, t, J), abs=1e-10)


def test_gamma_J_beyond_window_is_untruncated():
    alpha, N = draw(4), 3000
    res = gamma_J(alpha, N, 1, 99)
    assert res.fallback
    assert res.value == pytest.approx(direct(alpha, N, 1), abs=1e-12)


def test_gamma_J_rejects_zero_window():
    with pytest.raises(DomainError):
        gamma_J(draw(4), 1000, 1, 0)


def test_fdd_shares_the_window():
    alpha, N, J = draw(9), 10 ** 5, 3
    ts = [Fraction(1, 4), Fraction(1, 2), 1]
    shared = fdd_point(alpha, N, ts, J, cost_ceiling=CEILING)
    single = [gamma_J(alpha, N, t, J, cost_ceiling=CEILING).value for t in ts]
    assert shared == single
    assert fdd_point(alpha, N, [1], J, cost_ceiling=CEILING)[0] == single[-1]
    with pytest.raises(DomainError):
        fdd_point(alpha, N, [Fraction(1, 2), Fraction(1, 4)], J)


def test_trace_json():
    data = build_trace(Fraction(5, 12), 3).to_json()
    assert data["n_hat"] == 1 and data["r"] == 1 and data["theta"] == 1.25
