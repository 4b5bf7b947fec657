"""Direct theta sums with exact phase reduction, the curlicue curve, and
the one-step renormalization remainders.

The phase of the n-th term is pi * (n^2 p mod 2q) / q.  Block offsets
n0^2 p and 2 n0 p are reduced mod 2q with Python integers and turned into
128-bit fixed-point fractions of a full turn; inside a block the phase
c0 + i*c1 + i^2*c2 is accumulated in uint64 lanes, where wrap-around is
reduction mod 1.  Long sums factor each block as a small matrix-vector
product (see ``_long_sum``).  Phase truncation is a few units of 2^-64 of
a turn; the float error of a sum grows like a few ulp times sqrt(terms).
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator, Sequence

import numpy as np

from .ecf_core import as_rational, classify_branch, apply_T
from .errors import BudgetError, DomainError, ExhaustedError, InvariantError

BLOCK = 1 << 16
SHORT = 48
DEFAULT_TERM_BUDGET = 10 ** 9
BRUTE_COUNT_LIMIT = 20_000
EIGHTH = cmath.exp(1j * math.pi / 4)

_MASK64 = (1 << 64) - 1
_I = np.arange(BLOCK, dtype=np.uint64)
_I2 = _I * _I
_TWO_PI_2_64 = 2.0 * math.pi / 2.0 ** 64
_U32 = np.uint64(32)
_LOW32 = np.uint64(0xFFFFFFFF)


def _fixed128(c: int, M: int) -> tuple[np.uint64, np.uint64]:
    f = (c << 128) // M
    return np.uint64(f >> 64), np.uint64(f & _MASK64)


def _top_mul(k: np.ndarray, hi: np.uint64, lo: np.uint64) -> np.ndarray:
    """High 64 bits of (k * (hi 2^64 + lo)) mod 2^128, for k < 2^32."""
    a = lo >> _U32
    b = lo & _LOW32
    carry = (k * a + ((k * b) >> _U32)) >> _U32
    return k * hi + carry


def _terms_exact(p: int, q: int, n0: int, n1: int) -> np.ndarray:
    """Reference path: every phase reduced with Python integers."""
    M = 2 * q
    out = np.empty(max(n1 - n0, 0), dtype=complex)
    for j, n in enumerate(range(n0, n1)):
        r = (n * n * p) % M
        out[j] = cmath.exp(1j * math.pi * (r / q))
    return out


def _term_blocks(p: int, q: int, n0: int, n1: int) -> Iterator[tuple[int, np.ndarray]]:
    """Yield (start, e^{pi i n^2 p/q} for n in [start, start+len)) blockwise."""
    if n1 - n0 <= SHORT:
        if n1 > n0:
            yield n0, _terms_exact(p, q, n0, n1)
        return
    M = 2 * q
    p %= M
    g_hi, g_lo = _fixed128(p, M)
    square_part = _top_mul(_I2, g_hi, g_lo)
    start = n0
    while start < n1:
        size = min(BLOCK, n1 - start)
        c0 = (start * start * p) % M
        c1 = (2 * start * p) % M
        t0 = np.uint64(((c0 << 64) // M) & _MASK64)
        l_hi, l_lo = _fixed128(c1, M)
        phase = _top_mul(_I[:size], l_hi, l_lo) + square_part[:size] + t0
        angle = phase.astype(np.float64) * _TWO_PI_2_64
        yield start, np.exp(1j * angle)
        start += size


_MIN_SIDE, _MAX_SIDE = 32, 256


def _turns(phase: np.ndarray) -> np.ndarray:
    return np.exp(1j * (phase.astype(np.float64) * _TWO_PI_2_64))


def _side_for(length: int) -> int:
    """Largest power-of-two side with side^2 <= length / 2, capped at 256."""
    side = _MIN_SIDE
    while side < _MAX_SIDE and 2 * (2 * side) ** 2 <= length:
        side *= 2
    return side


def _long_sum(p: int, q: int, n0: int, n1: int) -> complex:
    """sum_{n0 <= n < n1} e^{pi i n^2 p/q} for long ranges.

    With i = side * a + b inside a block of side^2 indices the phase splits
    as [t0 + a * side * c1] + [b * c1] + [i^2 p], each reduced exactly in
    fixed point, so a block sum is U . (E @ V) with E fixed for the whole
    call.  Only 2 * side fresh exponentials per block are needed.
    """
    side = _side_for(n1 - n0)
    block = side * side
    ks = _I[:side]
    M = 2 * q
    p %= M
    g_hi, g_lo = _fixed128(p, M)
    square = _turns(_top_mul(_I2[:block], g_hi, g_lo)).reshape(side, side)
    sums = []
    start = n0
    while start + block <= n1:
        c0 = (start * start * p) % M
        c1 = (2 * start * p) % M
        t0 = np.uint64((c0 << 64) // M)
        r_hi, r_lo = _fixed128((side * c1) % M, M)
        c_hi, c_lo = _fixed128(c1, M)
        rows = _turns(_top_mul(ks, r_hi, r_lo) + t0)
        cols = _turns(_top_mul(ks, c_hi, c_lo))
        sums.append(rows @ (square @ cols))
        start += block
    for _, chunk in _term_blocks(p, q, start, n1):
        sums.append(chunk.sum())
    return complex(np.sum(np.array(sums, dtype=complex))) if sums else 0j


def _split_length(L) -> tuple[int, Fraction]:
    L = as_rational(L)
    if L < 0:
        raise DomainError("L must be nonnegative")
    whole = L.numerator // L.denominator
    return whole, L - whole


def _reduce_alpha(alpha) -> tuple[int, int]:
    alpha = as_rational(alpha)
    return alpha.numerator, alpha.denominator


def _term(p: int, q: int, n: int) -> complex:
    r = (n * n * p) % (2 * q)
    return cmath.exp(1j * math.pi * (r / q))


def theta_sum(alpha, L, conj: bool = False, budget: int = DEFAULT_TERM_BUDGET,
              exact: bool = False) -> complex:
    """S(alpha, L) = sum_{n<floor L} e^{pi i n^2 alpha} + {L} e^{pi i floor(L)^2 alpha}.

    ``conj`` returns the complex conjugate (the S^(-1) variant); ``exact``
    forces the slow per-term integer path.
    """
    p, q = _reduce_alpha(alpha)
    whole, frac = _split_length(L)
    if whole > budget:
        raise BudgetError(f"theta sum of {whole} terms exceeds budget {budget}")
    if exact:
        total = complex(_terms_exact(p, q, 0, whole).sum())
    elif whole >= 2 * _MIN_SIDE ** 2:
        total = _long_sum(p, q, 0, whole)
    else:
        block_sums = [chunk.sum() for _, chunk in _term_blocks(p, q, 0, whole)]
        total = complex(np.sum(np.array(block_sums, dtype=complex))) if block_sums else 0j
    if frac:
        total += float(frac) * _term(p, q, whole)
    return total.conjugate() if conj else total


def theta_sum_naive(alpha: float, N: int) -> complex:
    """Float-phase sum pi * n^2 * alpha without reduction (for comparison only)."""
    n = np.arange(N, dtype=np.float64)
    return complex(np.exp(1j * math.pi * (n * n) * float(alpha)).sum())


# ---- the curve ----

@dataclass(frozen=True)
class CurvePath:
    alpha: Fraction
    N: int
    t: np.ndarray
    z: np.ndarray

    def to_csv(self) -> str:
        lines = ["t,re,im"]
        for t, z in zip(self.t, self.z):
            lines.append(f"{t!r},{z.real!r},{z.imag!r}")
        return "\n".join(lines) + "\n"

    def to_svg(self, size: int = 800, margin: float = 0.05) -> str:
        xs, ys = self.z.real + 0.0, 0.0 - self.z.imag
        x0, x1 = float(xs.min()), float(xs.max())
        y0, y1 = float(ys.min()), float(ys.max())
        span = max(x1 - x0, y1 - y0, 1e-12)
        pad = margin * span
        vb = (x0 - pad, y0 - pad, (x1 - x0) + 2 * pad, (y1 - y0) + 2 * pad)
        stroke = 0.25 / math.sqrt(self.N)
        pts = " ".join(f"{x:.9g},{y:.9g}" for x, y in zip(xs, ys))
        return (
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
            f'viewBox="{vb[0]:.9g} {vb[1]:.9g} {vb[2]:.9g} {vb[3]:.9g}">\n'
            f'<polyline fill="none" stroke="black" stroke-width="{stroke:.9g}" '
            f'points="{pts}"/>\n</svg>\n'
        )


def curve_points(alpha, N: int, ts: Sequence, budget: int = DEFAULT_TERM_BUDGET) -> CurvePath:
    """z(t) = N^{-1/2} S(alpha, tN) for every t, in one pass over n < N."""
    alpha = as_rational(alpha)
    if N < 1:
        raise DomainError("N must be positive")
    if N > budget:
        raise BudgetError(f"curve of {N} terms exceeds budget {budget}")
    t_exact = [as_rational(t) for t in ts]
    if any(t < 0 or t > 1 for t in t_exact):
        raise DomainError("curve times must lie in [0,1]")
    if any(b <= a for a, b in zip(t_exact, t_exact[1:])):
        raise DomainError("curve times must be strictly increasing")
    p, q = alpha.numerator, alpha.denominator
    lengths = [_split_length(t * N) for t in t_exact]
    wanted = sorted({w for w, _ in lengths})
    prefix: dict[int, complex] = {}
    running = 0j
    pos = 0
    for start, chunk in _term_blocks(p, q, 0, N):
        csum = np.cumsum(chunk)
        end = start + len(chunk)
        while pos < len(wanted) and wanted[pos] <= end:
            w = wanted[pos]
            prefix[w] = running + (complex(csum[w - start - 1]) if w > start else 0j)
            pos += 1
        running += complex(csum[-1])
    for w in wanted[pos:]:
        prefix[w] = running
    scale = 1.0 / math.sqrt(N)
    z = np.empty(len(t_exact), dtype=complex)
    for j, (w, frac) in enumerate(lengths):
        value = prefix[w]
        if frac:
            value += float(frac) * _term(p, q, w)
        z[j] = value * scale
    return CurvePath(alpha, N, np.array([float(t) for t in t_exact]), z)


# ---- level-zero geometry ----

def curvature_radius(alpha, N: int, t) -> float:
    """(1/(2 sqrt N)) |csc(pi alpha (2tN - 1)/2)|, +inf at flat times."""
    alpha = as_rational(alpha)
    if N < 1:
        raise DomainError("N must be positive")
    arg = alpha * (2 * as_rational(t) * N - 1) / 2
    arg -= arg.numerator // arg.denominator  # |csc| has period pi
    if arg == 0:
        return math.inf
    return 1.0 / (2.0 * math.sqrt(N) * abs(math.sin(math.pi * float(arg))))


@dataclass(frozen=True)
class CurlicueGeometry:
    k_star: int
    curl_times: tuple[Fraction, ...]
    flat_times: tuple[Fraction, ...]
    interval_counts: tuple[int, ...]


def _ceil(x: Fraction) -> int:
    return -((-x.numerator) // x.denominator)


def curl_partition(alpha, N: int) -> CurlicueGeometry:
    alpha = as_rational(alpha)
    if N < 2:
        raise DomainError("N must be at least 2")
    x = alpha * N - (alpha + 1) / 2
    k_star = x.numerator // x.denominator
    curl = tuple(Fraction(2 * k + 1) / (2 * alpha * N) + Fraction(1, 2 * N)
                 for k in range(k_star + 1))
    flat = tuple(Fraction(k) / (alpha * N) + Fraction(1, 2 * N) for k in range(k_star + 2)
                 if Fraction(k) / (alpha * N) + Fraction(1, 2 * N) <= 1)
    if k_star < 0:
        counts = (N + 1,)
    else:
        def below(k):  # number of m >= 0 with m/N < curl time k
            return _ceil(Fraction(2 * k + 1) / (2 * alpha) + Fraction(1, 2))

        counts = [below(0)]
        counts += [below(k) - below(k - 1) for k in range(1, k_star + 1)]
        counts.append(N + 1 - below(k_star))
        counts = tuple(counts)
    if k_star >= 0 and N <= BRUTE_COUNT_LIMIT:
        # brute-force membership of m/N
        brute = [0] * (k_star + 2)
        j = 0
        for m in range(N + 1):
            t = Fraction(m, N)
            while j < len(curl) and t >= curl[j]:
                j += 1
            brute[j] += 1
        if tuple(brute) != counts:
            raise InvariantError(f"interval counts {counts} disagree with membership {brute}")
    return CurlicueGeometry(k_star, curl, flat, counts)


# ---- remainders ----

def _first_step(alpha: Fraction) -> tuple[Fraction, int]:
    digit = classify_branch(alpha)
    if digit.terminal:
        raise ExhaustedError(f"the T-orbit of {alpha} terminates at the first step")
    return apply_T(alpha), -digit.xi


def remainder_Lambda(alpha, N: int, budget: int = DEFAULT_TERM_BUDGET) -> complex:
    alpha = as_rational(alpha)
    if not 0 < alpha <= 1:
        raise DomainError("alpha must lie in (0,1]")
    if N < 0:
        raise DomainError("N must be nonnegative")
    alpha1, eta = _first_step(alpha)
    inner = theta_sum(alpha1, (alpha * N).numerator // (alpha * N).denominator,
                      conj=eta < 0, budget=budget)
    return theta_sum(alpha, N, budget=budget) - EIGHTH * inner / math.sqrt(alpha)


def remainder_Gamma(alpha, L, budget: int = DEFAULT_TERM_BUDGET) -> complex:
    alpha = as_rational(alpha)
    if not 0 < alpha <= 1:
        raise DomainError("alpha must lie in (0,1]")
    L = as_rational(L)
    alpha1, eta = _first_step(alpha)
    inner = theta_sum(alpha1, alpha * L, conj=eta < 0, budget=budget)
    return theta_sum(alpha, L, budget=budget) - EIGHTH * inner / math.sqrt(alpha)


@dataclass(frozen=True)
class GammaDecomposition:
    Lambda: complex
    G1: complex
    G2: complex
    H: Fraction
    sign: int
    residual: float


def gamma_decomposition(alpha, L, tol: float = 1e-9) -> GammaDecomposition:
    """Split Gamma(alpha, L) into Lambda(alpha, floor L) plus boundary terms.

    G2 carries the same conjugation as the renormalized sum.  The sign in
    front of e^{i pi/4} alpha^{-1/2} G2 is chosen by checking both
    candidates against a direct evaluation of Gamma.
    """
    alpha = as_rational(alpha)
    L = as_rational(L)
    whole, frac = _split_length(L)
    alpha1, eta = _first_step(alpha)
    p, q = alpha.numerator, alpha.denominator
    p1, q1 = alpha1.numerator, alpha1.denominator
    aw = alpha * whole
    H = alpha * frac + (aw - aw.numerator // aw.denominator)
    g1 = float(frac) * _term(p, q, whole)
    top = (alpha * L).numerator // (alpha * L).denominator
    if H < 1:
        g2 = float(H) * _term(p1, q1, top)
    else:
        g2 = _term(p1, q1, top - 1) + float(H - 1) * _term(p1, q1, top)
    if eta < 0:
        g2 = g2.conjugate()
    lam = remainder_Lambda(alpha, whole)
    gamma = remainder_Gamma(alpha, L)
    scale = EIGHTH / math.sqrt(alpha)
    best = min((-1, 1), key=lambda s: abs(lam + g1 + s * scale * g2 - gamma))
    residual = abs(lam + g1 + best * scale * g2 - gamma)
    if residual > tol * (1.0 + abs(gamma)):
        raise InvariantError(f"no sign reproduces Gamma (residual {residual:.3g})")
    return GammaDecomposition(lam, g1, g2, H, best, residual)
