"""Jump transformation R = T^(tau+1), Sigma-coding, R-denominators, mu_R.

A Sigma-entry (h, m, zeta) stands for h copies of the digit (1,-1)
followed by one digit (m, zeta) != (1,-1).  Inside a (1,-1)-run the
difference d = q - p of alpha = p/q is invariant and q drops by d per step,
so a whole run is skipped with one division.  The convergent denominators
along a run form an arithmetic progression, which gives R-denominators in
O(1) big-integer operations per entry.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import mpmath
import numpy as np
from scipy import special

from .ecf_core import EcfDigit, EcfExpansion, _step, as_rational, convergent_lists
from .errors import DenominatorBudgetError, DomainError, ExhaustedError, InvariantError

LOG3 = math.log(3.0)


@dataclass(frozen=True)
class SigmaEntry:
    h: int
    m: int
    zeta: int

    def __post_init__(self):
        if self.h < 0 or self.m < 1 or self.zeta not in (-1, 1):
            raise DomainError(f"bad Sigma-entry {self}")
        if self.m == 1 and self.zeta == -1:
            raise DomainError("closing letter must differ from (1,-1)")

    def digits(self) -> list[EcfDigit]:
        return [EcfDigit(1, -1)] * self.h + [EcfDigit(self.m, self.zeta)]

    def as_list(self) -> list[int]:
        return [self.h, self.m, self.zeta]


@dataclass(frozen=True)
class SigmaCoding:
    """Sigma-entries of alpha with nu-indices and R-denominators.

    ``nu[n]`` and ``qhat[n]`` start at n = 0 (nu_0 = 1, qhat_0 = q_1).
    ``qhat`` may hold one more value than there are entries: qhat_n only
    needs the first digit after entry n.  ``conv_q[n]`` is the pair
    (q_{nu_n - 2}, q_{nu_n - 1}), likewise ``conv_p``.  ``returns[n]`` is
    R^n(alpha) for every n with a complete n-th entry (returns[0] = alpha).
    """

    alpha: Fraction
    entries: tuple[SigmaEntry, ...]
    nu: tuple[int, ...]
    qhat: tuple[int, ...]
    exhausted: bool
    conv_q: tuple[tuple[int, int], ...] = field(repr=False, default=())
    conv_p: tuple[tuple[int, int], ...] = field(repr=False, default=())
    returns: tuple[Fraction, ...] = field(repr=False, default=())

    def flat_digits(self, upto: int | None = None) -> list[EcfDigit]:
        out: list[EcfDigit] = []
        for e in self.entries[:upto]:
            out.extend(e.digits())
        return out

    def renewal_index(self, N: int) -> int:
        """n_hat = min{n >= 1 : qhat_n > N}."""
        for n in range(1, len(self.qhat)):
            if self.qhat[n] > N:
                return n
        raise DenominatorBudgetError(
            f"expansion exhausted before an R-denominator exceeded N={N} "
            f"(largest qhat = {self.qhat[-1] if self.qhat else None})"
        )


def _advance(pair: tuple[int, int], xi_prev: int, entry: SigmaEntry) -> tuple[int, int]:
    """(c_{n-2}, c_{n-1}) at the end of one entry -> same pair after the next."""
    a, b = pair
    h, m = entry.h, entry.m
    if h == 0:
        return b, 2 * m * b + xi_prev * a
    d = (2 * b + xi_prev * a) - b
    last = b + h * d
    before = b + (h - 1) * d
    return last, 2 * m * last - before


def _first_digit_value(pair: tuple[int, int], xi_prev: int, k: int) -> int:
    a, b = pair
    return 2 * k * b + xi_prev * a


def r_step(p: int, q: int):
    """One R-step on p/q.

    Returns (h, closing_k, closing_xi, p_next, q_next, terminal).  ``h`` is
    None when alpha = 1 (the run never closes).
    """
    d = q - p
    if d == 0:
        return None, 1, -1, p, q, False
    h = (q - d - 1) // d if q > 2 * d else 0
    q_run = q - h * d
    p_run = q_run - d
    k, xi, rest = _step(p_run, q_run)
    if rest == 0:
        return h, k, xi, 0, p_run, True
    return h, k, xi, rest, p_run, False


def sigma_code(alpha, max_entries: int | None = None, qhat_above: int | None = None,
               extra: int = 0) -> SigmaCoding:
    """Sigma-coding of alpha computed directly by R-steps.

    Stops at exhaustion, after ``max_entries`` entries, or once ``extra``
    further entries have been coded beyond the first n >= 1 with
    qhat_n > ``qhat_above``.
    """
    alpha = as_rational(alpha)
    if not 0 < alpha <= 1:
        raise DomainError(f"alpha must lie in (0,1], got {alpha}")
    p, q = alpha.numerator, alpha.denominator
    entries: list[SigmaEntry] = []
    nu = [1]
    qhat: list[int] = []
    conv_q = [(0, 1)]
    conv_p = [(1, 0)]
    returns = [alpha]
    xi_prev = 1
    exhausted = False
    hit: int | None = None
    while True:
        h, k, xi, p_next, q_next, terminal = r_step(p, q)
        first_k = 1 if (h is None or h > 0) else k
        qhat.append(_first_digit_value(conv_q[-1], xi_prev, first_k))
        n = len(qhat) - 1
        if hit is None and qhat_above is not None and n >= 1 and qhat[n] > qhat_above:
            hit = n
        if h is None or terminal:
            exhausted = True
            break
        if hit is not None and len(entries) >= hit + extra:
            break
        if max_entries is not None and len(entries) >= max_entries:
            break
        entry = SigmaEntry(h, k, xi)
        conv_q.append(_advance(conv_q[-1], xi_prev, entry))
        conv_p.append(_advance(conv_p[-1], xi_prev, entry))
        entries.append(entry)
        nu.append(nu[-1] + h + 1)
        xi_prev = xi
        p, q = p_next, q_next
        returns.append(Fraction(p, q))
    return SigmaCoding(alpha, tuple(entries), tuple(nu), tuple(qhat), exhausted,
                       tuple(conv_q), tuple(conv_p), tuple(returns))


def iter_sigma_entries(alpha):
    """Sigma-entries of alpha one R-step at a time, without convergents."""
    alpha = as_rational(alpha)
    if not 0 < alpha <= 1:
        raise DomainError(f"alpha must lie in (0,1], got {alpha}")
    p, q = alpha.numerator, alpha.denominator
    while True:
        h, k, xi, p, q, terminal = r_step(p, q)
        if h is None or terminal:
            return
        yield SigmaEntry(h, k, xi)


def sigma_encode(exp: EcfExpansion) -> SigmaCoding:
    """Group an ECF digit list into Sigma-entries (reference route via convergents)."""
    entries: list[SigmaEntry] = []
    run = 0
    for d in exp.digits:
        if d.terminal:
            break
        if d.k == 1 and d.xi == -1:
            run += 1
            continue
        entries.append(SigmaEntry(run, d.k, d.xi))
        run = 0
    complete_len = sum(e.h + 1 for e in entries)
    trailing = len(exp.digits) - complete_len
    exhausted = exp.exhausted or trailing > 0
    nu = [1]
    for e in entries:
        nu.append(nu[-1] + e.h + 1)
    conv = convergent_lists(exp.digits, len(exp.digits))
    qhat = [conv.den(v) for v in nu if v <= len(exp.digits)]
    conv_q = tuple((conv.den(v - 2), conv.den(v - 1)) for v in nu)
    conv_p = tuple((conv.num(v - 2), conv.num(v - 1)) for v in nu)
    returns = [exp.alpha]
    for e in entries:
        a = returns[-1]
        p, q = a.numerator, a.denominator
        _, _, _, p2, q2, _ = r_step(p, q)
        returns.append(Fraction(p2, q2) if p2 else Fraction(0))
    return SigmaCoding(exp.alpha, tuple(entries), tuple(nu), tuple(qhat), exhausted,
                       conv_q, conv_p, tuple(returns))


def passage_time(alpha) -> int:
    alpha = as_rational(alpha)
    if not 0 < alpha <= 1:
        raise DomainError(f"alpha must lie in (0,1], got {alpha}")
    h, *_ = r_step(alpha.numerator, alpha.denominator)
    if h is None:
        raise ExhaustedError("alpha = 1 never enters (0, 1/2]")
    return h


def apply_R(alpha) -> Fraction:
    alpha = as_rational(alpha)
    if not 0 < alpha <= 1:
        raise DomainError(f"alpha must lie in (0,1], got {alpha}")
    h, _, _, p, q, terminal = r_step(alpha.numerator, alpha.denominator)
    if h is None:
        raise ExhaustedError("alpha = 1 never enters (0, 1/2]")
    return Fraction(0) if terminal else Fraction(p, q)


# ---- phase chain ----

@dataclass(frozen=True)
class PhaseState:
    """(x_n, y_n) with x = prod(-zeta), y = kappa_{nu_n} - 1 mod 8.

    ``kappa`` keeps kappa_{nu_n} as an unbounded integer; at the renewal
    index it is K_alpha(N) and x is E_alpha(N).
    """

    x: int
    y: int
    kappa: int = 1

    @property
    def E(self) -> int:
        return self.x

    @property
    def K(self) -> int:
        return self.kappa

    @property
    def K8(self) -> int:
        return self.kappa % 8

    def step(self, entry: SigmaEntry) -> "PhaseState":
        z = (entry.h - entry.zeta) % 8
        return PhaseState(self.x * -entry.zeta, (self.y + z * self.x) % 8,
                          self.kappa + (entry.h - entry.zeta) * self.x)


def phase_state(coding: SigmaCoding | Sequence[SigmaEntry], n: int) -> PhaseState:
    entries = coding.entries if isinstance(coding, SigmaCoding) else tuple(coding)
    if not 0 <= n <= len(entries):
        raise DomainError(f"phase index {n} outside 0..{len(entries)}")
    state = PhaseState(1, 0, 1)
    for e in entries[:n]:
        state = state.step(e)
    return state


def phase_index(x: int, y: int) -> int:
    """Position of (x, y) in Xi = {+1,-1} x Z/8, ordered (+1,0..7), (-1,0..7)."""
    return (0 if x == 1 else 8) + (y % 8)


# ---- renewal ----

@dataclass(frozen=True)
class RenewalSnapshot:
    n_hat: int
    ratio_prev: float
    ratio_next: float
    window: tuple[SigmaEntry, ...]
    phase_at: PhaseState
    theta: float

    def to_json(self) -> dict:
        return {
            "n_hat": self.n_hat,
            "ratio_prev": self.ratio_prev,
            "ratio_next": self.ratio_next,
            "window": [e.as_list() for e in self.window],
            "x": self.phase_at.x,
            "y": self.phase_at.y,
            "theta": self.theta,
        }


def theta_from_coding(coding: SigmaCoding, n_hat: int, N: int) -> Fraction:
    """Theta = N / (q_{nu-1} + zeta_nhat * R^{nhat}(alpha) * q_{nu-2}), nu = nu_nhat."""
    q2, q1 = coding.conv_q[n_hat]
    zeta = coding.entries[n_hat - 1].zeta
    return Fraction(N) / (q1 + zeta * coding.returns[n_hat] * q2)


def theta_from_renewal(N: int, qhat_prev: int, qhat_next: int, zeta_prev: int,
                       entry: SigmaEntry, returned: Fraction) -> Fraction:
    """Theta rebuilt from the renewal variables alone.

    Inputs are qhat_{n-1}, qhat_n, the closing sign of entry n-1 (+1 for
    n = 1), entry n and R^n(alpha).  The convergent pair (a, b) before entry
    n is unknown; qhat_{n-1} and qhat_n are two linear equations in it.
    """
    returned = as_rational(returned)
    k_next = _step(returned.numerator, returned.denominator)[0] if returned else 1
    k_first = 1 if entry.h > 0 else entry.m

    def image(pair):
        a, b = _advance(pair, zeta_prev, entry)
        return a, b, 2 * k_first * pair[1] + zeta_prev * pair[0], 2 * k_next * b + entry.zeta * a

    a1, b1, p1, n1 = image((1, 0))
    a2, b2, p2, n2 = image((0, 1))
    det = p1 * n2 - p2 * n1
    if det == 0:
        raise InvariantError("renewal variables do not determine the convergent pair")
    x = Fraction(qhat_prev * n2 - p2 * qhat_next, det)
    y = Fraction(p1 * qhat_next - qhat_prev * n1, det)
    q2 = a1 * x + a2 * y
    q1 = b1 * x + b2 * y
    return Fraction(N) / (q1 + entry.zeta * returned * q2)


def renewal_snapshot(alpha, N: int, N1: int = 1, N2: int = 0,
                     coding: SigmaCoding | None = None) -> RenewalSnapshot:
    if N < 0:
        raise DomainError("N must be nonnegative")
    if coding is None:
        coding = sigma_code(alpha, qhat_above=N, extra=N2)
    n_hat = coding.renewal_index(N)
    if n_hat - N1 < 0:
        raise DomainError(f"window reaches before the first entry (n_hat={n_hat}, N1={N1})")
    if n_hat + N2 > len(coding.entries):
        raise DenominatorBudgetError(f"need {n_hat + N2} entries, have {len(coding.entries)}")
    den = max(N, 1)
    theta = theta_from_coding(coding, n_hat, N) if N > 0 else Fraction(0)
    return RenewalSnapshot(
        n_hat=n_hat,
        ratio_prev=coding.qhat[n_hat - 1] / den,
        ratio_next=coding.qhat[n_hat] / den,
        window=coding.entries[n_hat - N1:n_hat + N2],
        phase_at=phase_state(coding, n_hat - N1),
        theta=float(theta),
    )


# ---- the invariant measure ----

def mu_R_density(x):
    return (1.0 / (3.0 - x) + 1.0 / (1.0 + x)) / LOG3


def mu_R_cdf(x):
    x = np.asarray(x, dtype=float)
    if np.any((x < 0) | (x > 1)):
        raise DomainError("mu_R_cdf is defined on [0,1]")
    out = np.log(3.0 * (1.0 + x) / (3.0 - x)) / LOG3
    return float(out) if out.ndim == 0 else out


def sample_mu_R(u, precision_bits: int = 256) -> Fraction:
    """Inverse-CDF draw from mu_R, rounded to a multiple of 2^-precision_bits.

    ``u`` may be a float or an exact Fraction; the inverse CDF
    x = 3(3^u - 1)/(3^u + 3) is evaluated with 32 guard bits.
    """
    if precision_bits < 32:
        raise DomainError("precision_bits must be at least 32")
    u = as_rational(u)
    if not 0 < u < 1:
        raise DomainError("u must lie in (0,1)")
    with mpmath.workprec(precision_bits + 32):
        t = mpmath.power(3, mpmath.mpf(u.numerator) / u.denominator)
        x = 3 * (t - 1) / (t + 3)
        scaled = int(mpmath.nint(x * mpmath.mpf(2) ** precision_bits))
    scale = 1 << precision_bits
    scaled = min(max(scaled, 1), scale)
    return Fraction(scaled, scale)


# ---- rank-one cylinders and inverse branches ----

def rank_one_cylinder(entry: SigmaEntry) -> tuple[Fraction, Fraction]:
    """Closure endpoints of J_1(h m^zeta) from the closed forms."""
    h, m = entry.h, entry.m
    middle = 1 + Fraction(1 - 2 * m, 2 * m * (h + 1) - h)
    if entry.zeta == 1:
        return Fraction(1 + 2 * m * h, 1 + 2 * m * (h + 1)), middle
    return middle, Fraction(1 + 2 * h * (m - 1), 2 * m * (h + 1) - 2 * h - 1)


def inverse_branch(entry: SigmaEntry, x):
    """Inverse of R on J_1(entry); exact for rational x, float otherwise."""
    h, m, s = entry.h, entry.m, entry.zeta
    if isinstance(x, (float, np.ndarray, np.floating)):
        return (2 * h * m - h + 1 + s * h * x) / (2 * h * m + 2 * m - h + s * (h + 1) * x)
    x = as_rational(x)
    return (2 * h * m - h + 1 + s * h * x) / (2 * h * m + 2 * m - h + s * (h + 1) * x)


def branch_derivative(entry: SigmaEntry, y):
    """R'(y) on J_1(entry), equal to -zeta/(h - (h+1) y)^2."""
    return -entry.zeta / (entry.h - (entry.h + 1) * y) ** 2


# ---- trigamma and the Perron-Frobenius density ----

_TRIGAMMA_SERIES = (1.0 / 6, -1.0 / 30, 1.0 / 42, -1.0 / 30, 5.0 / 66, -691.0 / 2730, 7.0 / 6)


def trigamma(x):
    """psi'(x) for x > 0: shift to x >= 8, then the Bernoulli asymptotic series."""
    x = np.array(x, dtype=float, copy=True)
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    if np.any(x <= 0):
        raise DomainError("trigamma implemented for positive arguments only")
    acc = np.zeros_like(x)
    while True:
        low = x < 8.0
        if not low.any():
            break
        acc[low] += 1.0 / (x[low] * x[low])
        x[low] += 1.0
    inv = 1.0 / x
    inv2 = inv * inv
    series = 0.0
    for coef in reversed(_TRIGAMMA_SERIES):
        series = series * inv2 + coef
    out = acc + inv + 0.5 * inv2 + series * inv2 * inv
    return float(out[0]) if scalar else out


def transfer_density(x: float, h_max: int = 100_000) -> tuple[float, float]:
    """Partial sum of P(1)(x) over h <= h_max and a bound on the omitted tail.

    Every argument of the trigamma exceeds 1/2, so each omitted term is at
    most pi^2 / (4 (h+1)^2) and the tail is below pi^2 / (4 (h_max+1)).
    """
    if h_max < 1:
        raise DomainError("h_max must be at least 1")
    h = np.arange(h_max + 1, dtype=float)
    hp = h + 1.0
    a = (h + 2.0 + hp * x) / (2.0 * hp)
    b = (3.0 * h + 4.0 - hp * x) / (2.0 * hp)
    terms = (trigamma(a) + trigamma(b)) / (4.0 * hp * hp)
    return float(np.sum(terms)), math.pi ** 2 / (4.0 * (h_max + 1))


# ---- invariance of phi_R under the R transfer operator ----

def _branch_coefficients(h, x, zeta):
    """D = A m + B and the inverse-branch numerator num = C m + E, linear in m."""
    A = 2.0 * (h + 1)
    B = -h + zeta * (h + 1) * x
    C = 2.0 * h
    E = -h + 1 + zeta * h * x
    return A, B, C, E


def _pair_tail(a1, b1, a2, b2, m0, det):
    """sum_{m >= m0} 1/((a1 m + b1)(a2 m + b2)) via digamma; det = a1 b2 - b1 a2.

    The sum equals (psi(x + delta) - psi(x)) / det with x = m0 + b1/a1 and
    delta = det/(a1 a2).  For small delta the difference is expanded in
    polygammas to avoid cancellation.
    """
    x = m0 + b1 / a1
    delta = det / (a1 * a2)
    small = np.abs(delta) < 0.05
    direct = (special.digamma(x + np.where(small, 0.0, delta)) - special.digamma(x)) / det
    return np.where(small, _taylor_ratio(x, delta) / (a1 * a2), direct)


def _taylor_ratio(x, delta, order: int = 6):
    """(psi(x + delta) - psi(x)) / delta = sum_k delta^(k-1)/k! psi^(k)(x)."""
    out = 0.0
    for k in range(order, 0, -1):
        out = out * delta + special.polygamma(k, x) / math.factorial(k)
    return out


def _phi_R_pullback(h, x):
    """sum over (m, zeta) of phi_R(psi(x)) |psi'(x)| for fixed run length(s) h."""
    total = 0.0
    for zeta, m0 in ((1, 1), (-1, 2)):
        A, B, C, E = _branch_coefficients(h, x, zeta)
        # phi_R(num/D)/D^2 = [1/(D (3D - num)) + 1/(D (D + num))] / log 3.
        # A E - B C = 2 identically; the constants avoid cancellation at large h.
        total = total + _pair_tail(A, B, 3 * A - C, 3 * B - E, m0, -2.0)
        total = total + _pair_tail(A, B, A + C, B + E, m0, 2.0)
    return total / LOG3


def transfer_phi_R(x: float, h_max: int = 1000) -> float:
    """(P_R phi_R)(x) with the m-sums in closed form.

    h <= h_max is summed explicitly; the rest is the midpoint-rule integral
    from h_max + 1/2, taken in u = 1/h (where the integrand is smooth) by
    Gauss-Legendre quadrature.
    """
    if not 0.0 <= x <= 1.0:
        raise DomainError("x must lie in [0,1]")
    hs = np.arange(h_max + 1, dtype=float)
    head = float(np.sum(_phi_R_pullback(hs, x)))
    nodes, weights = np.polynomial.legendre.leggauss(24)
    top = 1.0 / (h_max + 0.5)
    u = (nodes + 1.0) * (top / 2.0)
    tail = float(np.sum(weights * _phi_R_pullback(1.0 / u, x) / (u * u)) * (top / 2.0))
    return head + tail


def phi_R_pullback_direct(h: int, x: float, m_max: int) -> float:
    """Same m-sum as ``transfer_phi_R`` for one h, summed term by term up to m_max."""
    total = 0.0
    for k in range(m_max, 0, -1):
        for zeta in (1, -1):
            if k == 1 and zeta == -1:
                continue
            e = SigmaEntry(h, k, zeta)
            y = inverse_branch(e, x)
            total += mu_R_density(y) / abs(branch_derivative(e, y))
    return total
