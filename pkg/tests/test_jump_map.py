import random
from fractions import Fraction

import numpy as np
import pytest

from curlicue.ecf_core import EcfDigit, ecf_expand, nested_value
from curlicue.errors import DenominatorBudgetError, DomainError
from curlicue.jump_map import (SigmaEntry, apply_R, branch_derivative, inverse_branch,
                               iter_sigma_entries, mu_R_cdf, mu_R_density, passage_time,
                               phase_index, phase_state, phi_R_pullback_direct, rank_one_cylinder,
                               renewal_snapshot, sample_mu_R, sigma_code, sigma_encode,
                               theta_from_coding, theta_from_renewal, transfer_density,
                               transfer_phi_R, trigamma, _phi_R_pullback)


@pytest.mark.parametrize("alpha, tau", [(Fraction(1, 3), 0), (Fraction(3, 4), 2), (Fraction(9, 10), 8)])
def test_passage_time(alpha, tau):
    assert passage_time(alpha) == tau


@pytest.mark.parametrize("alpha, image", [(Fraction(1, 3), 1), (Fraction(3, 4), 0),
                                          (Fraction(5, 12), Fraction(2, 5))])
def test_apply_R(alpha, image):
    assert apply_R(alpha) == image


def test_sigma_entry_rejects_the_run_letter():
    with pytest.raises(DomainError):
        SigmaEntry(2, 1, -1)


def test_encode_run_then_closing_letter():
    alpha = nested_value([EcfDigit(1, -1), EcfDigit(1, -1), EcfDigit(2, 1)], Fraction(1, 3))
    coding = sigma_encode(ecf_expand(alpha, 50))
    assert coding.entries[0] == SigmaEntry(2, 2, 1)
    assert coding.nu[1] == 4


def test_encode_five_twelfths():
    coding = sigma_encode(ecf_expand(Fraction(5, 12), 10))
    assert coding.entries[0] == SigmaEntry(0, 1, 1)
    assert coding.nu[1] == 2 and coding.qhat[1] == 5


def test_encode_without_run():
    alpha = nested_value([EcfDigit(3, -1)], Fraction(1, 3))
    assert sigma_encode(ecf_expand(alpha, 10)).entries[0] == SigmaEntry(0, 3, -1)


def test_direct_coding_matches_encoding():
    rng = random.Random(3)
    for _ in range(200):
        q = 2 ** 70
        alpha = Fraction(rng.randrange(1, q), q)
        fast, ref = sigma_code(alpha), sigma_encode(ecf_expand(alpha, 10 ** 4))
        assert fast.entries == ref.entries and fast.nu == ref.nu
        assert fast.qhat[: len(ref.qhat)] == ref.qhat
        assert list(iter_sigma_entries(alpha)) == list(fast.entries)


def test_coding_invariants():
    alpha = sample_mu_R(Fraction(1, 7), 512)
    coding = sigma_code(alpha)
    for n, e in enumerate(coding.entries, start=1):
        assert coding.nu[n] - coding.nu[n - 1] == e.h + 1
    assert all(b > a for a, b in zip(coding.qhat, coding.qhat[1:]))
    assert all(q >= 3 ** (n / 3) for n, q in enumerate(coding.qhat))


def test_returns_are_R_iterates():
    alpha = Fraction(123456789, 987654321)
    coding = sigma_code(alpha, max_entries=4)
    x = alpha
    for n in range(1, len(coding.returns)):
        x = apply_R(x)
        assert coding.returns[n] == x


def test_renewal_snapshot_example():
    snap = renewal_snapshot(Fraction(5, 12), 3)
    assert snap.n_hat == 1
    assert snap.ratio_prev == pytest.approx(2 / 3) and snap.ratio_next == pytest.approx(5 / 3)
    assert renewal_snapshot(Fraction(5, 12), 0).n_hat == 1


def test_renewal_budget_exceeded():
    with pytest.raises(DenominatorBudgetError):
        renewal_snapshot(Fraction(5, 12), 10 ** 6)


def test_renewal_bound_on_samples():
    for i in range(50):
        alpha = sample_mu_R(Fraction(2 * i + 1, 100), 256)
        snap = renewal_snapshot(alpha, 10 ** 6, N1=1, N2=1)
        q = snap.ratio_next * 10 ** 6
        assert snap.n_hat <= 3 * np.log(q) / np.log(3)
        assert 0 < snap.ratio_prev <= 1 < snap.ratio_next
        assert len(snap.window) == 2


def test_theta_from_renewal_variables():
    for i in range(100):
        alpha = sample_mu_R(Fraction(2 * i + 1, 200), 256)
        N = 1000 + 7919 * i
        coding = sigma_code(alpha, qhat_above=N)
        n = coding.renewal_index(N)
        zeta_prev = coding.entries[n - 2].zeta if n >= 2 else 1
        rebuilt = theta_from_renewal(N, coding.qhat[n - 1], coding.qhat[n], zeta_prev,
                                     coding.entries[n - 1], coding.returns[n])
        assert rebuilt == theta_from_coding(coding, n, N)


def test_mu_R_cdf_examples():
    assert mu_R_cdf(0.0) == 0.0
    assert mu_R_cdf(1.0) == pytest.approx(1.0, abs=1e-15)
    assert mu_R_cdf(0.4641) == pytest.approx(0.5, abs=1e-3)
    with pytest.raises(DomainError):
        mu_R_cdf(1.5)


def test_mu_R_density_integrates_to_one():
    from scipy import integrate
    assert integrate.quad(mu_R_density, 0, 1)[0] == pytest.approx(1.0, abs=1e-12)


def test_sampler_examples():
    assert float(sample_mu_R(0.5)) == pytest.approx(0.46410, abs=1e-5)
    assert float(sample_mu_R(1 - 1e-9)) > 0.999
    with pytest.raises(DomainError):
        sample_mu_R(0.5, precision_bits=16)
    assert sample_mu_R(Fraction(1, 3), 64).denominator <= 2 ** 64


def test_rank_one_cylinder_of_first_branch():
    # the branch (h=0, m=1, zeta=+1) is the ECF branch B(1,+1) = (1/3, 1/2)
    assert rank_one_cylinder(SigmaEntry(0, 1, 1)) == (Fraction(1, 3), Fraction(1, 2))


def test_rank_one_cylinders_are_disjoint():
    H = 6
    cells = sorted(rank_one_cylinder(SigmaEntry(h, m, z))
                   for h in range(H) for m in range(1, H + 1) for z in (-1, 1)
                   if not (m == 1 and z == -1))
    for (a0, b0), (a1, b1) in zip(cells, cells[1:]):
        assert a0 < b0 <= a1 < b1


def test_rank_one_cylinder_membership():
    rng = random.Random(5)
    for _ in range(100):
        e = SigmaEntry(rng.randint(0, 6), rng.randint(2, 7), rng.choice((-1, 1)))
        lo, hi = rank_one_cylinder(e)
        assert sigma_code((lo + hi) / 2, max_entries=1).entries[0] == e


def test_inverse_branch_round_trip():
    rng = random.Random(6)
    for _ in range(100):
        e = SigmaEntry(rng.randint(0, 8), rng.randint(2, 9), rng.choice((-1, 1)))
        x = Fraction(rng.randrange(1, 1000), 1000)
        y = inverse_branch(e, x)
        assert apply_R(y) == x
        lo, hi = rank_one_cylinder(e)
        assert lo <= y <= hi


def test_inverse_branch_simple_case():
    x = Fraction(2, 7)
    assert inverse_branch(SigmaEntry(0, 1, 1), x) == 1 / (2 + x)


def test_branch_derivative_matches_difference_quotient():
    e = SigmaEntry(2, 3, -1)
    y = float(inverse_branch(e, Fraction(1, 2)))
    eps = 1e-7
    slope = (float(apply_R(Fraction(y + eps))) - float(apply_R(Fraction(y - eps)))) / (2 * eps)
    assert branch_derivative(e, y) == pytest.approx(slope, rel=1e-5)


def test_trigamma_against_scipy():
    from scipy import special
    xs = np.linspace(0.05, 40, 200)
    assert np.allclose([trigamma(x) for x in xs], special.polygamma(1, xs), rtol=1e-12, atol=0)


def test_transfer_density_decreasing():
    vals = [transfer_density(x, 2000)[0] for x in np.linspace(0, 1, 101)]
    assert all(b < a for a, b in zip(vals, vals[1:]))


def test_phase_examples():
    s1 = phase_state([SigmaEntry(0, 1, 1)], 1)
    assert (s1.x, s1.y) == (-1, 7)
    s2 = phase_state([SigmaEntry(0, 1, 1), SigmaEntry(1, 2, -1)], 2)
    assert (s2.x, s2.y) == (-1, 5)
    s0 = phase_state([], 0)
    assert (s0.x, s0.y) == (1, 0)
    assert phase_index(-1, 5) == 13


def test_phi_R_pullback_matches_truncated_sum():
    for h in (0, 1, 5):
        for x in (0.1, 0.5, 0.9):
            assert _phi_R_pullback(h, x) == pytest.approx(phi_R_pullback_direct(h, x, 100_000), rel=2e-5)


def test_phi_R_is_invariant():
    xs = np.linspace(0.01, 0.99, 9)
    res = [transfer_phi_R(x) - mu_R_density(x) for x in xs]
    assert max(abs(r) for r in res) < 1e-6
