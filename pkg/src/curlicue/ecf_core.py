"""Even continued fractions: the map T, digits, convergents and cylinders.

Every alpha handled here is a :class:`fractions.Fraction`.  The map

    T(alpha) = xi * (1/alpha - 2k),   alpha in B(k, xi)

with B(k, -1) = (1/2k, 1/(2k-1)] and B(k, +1) = (1/(2k+1), 1/2k] is applied
on the integer pair (p, q) directly, which keeps the orbit exact and avoids
renormalising a Fraction at every step.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator, Sequence

from .errors import DomainError, ExhaustedError, InvariantError

__all__ = [
    "EcfDigit",
    "EcfExpansion",
    "ConvergentSequence",
    "as_rational",
    "classify_branch",
    "apply_T",
    "ecf_expand",
    "nested_value",
    "convergents",
    "orbit_values",
    "orbit_product",
    "mu_T_interval",
    "mu_T_density",
    "birkhoff_log_statistic",
    "cylinder_interval",
]


@dataclass(frozen=True)
class EcfDigit:
    k: int
    xi: int
    terminal: bool = False

    def __post_init__(self):
        if self.k < 1:
            raise DomainError(f"digit k must be positive, got {self.k}")
        if self.terminal:
            # alpha = 1/(2k) sits at the right end of B(k, +1)
            object.__setattr__(self, "xi", 1)
        elif self.xi not in (-1, 1):
            raise DomainError(f"digit sign must be +1 or -1, got {self.xi}")

    def as_pair(self) -> list[int]:
        return [self.k, 0 if self.terminal else self.xi]

    def __str__(self) -> str:
        if self.terminal:
            return f"({self.k},*)"
        return f"({self.k},{'+' if self.xi > 0 else '-'}1)"


def as_rational(value) -> Fraction:
    """Convert ints, floats, Fractions and strings ("p/q" or decimal) exactly.

    Floats and decimal strings go through their exact binary value, so
    "0.1" becomes 3602879701896397/36028797018963968.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise DomainError("booleans are not numbers here")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        if not math.isfinite(value):
            raise DomainError(f"non-finite value {value!r}")
        return Fraction(value)
    if isinstance(value, str):
        text = value.strip()
        try:
            if "/" in text:
                num, den = text.split("/")
                return Fraction(int(num), int(den))
            try:
                return Fraction(int(text))
            except ValueError:
                return as_rational(float(text))
        except (ValueError, ZeroDivisionError) as exc:
            raise DomainError(f"cannot parse rational from {value!r}") from exc
    try:
        return Fraction(value)
    except TypeError as exc:
        raise DomainError(f"unsupported numeric type {type(value).__name__}") from exc


def _check_unit(alpha: Fraction) -> None:
    if not 0 < alpha <= 1:
        raise DomainError(f"alpha must lie in (0,1], got {alpha}")


def _step(p: int, q: int) -> tuple[int, int, int]:
    """One T-step on alpha = p/q (reduced, 0 < p <= q).

    Returns (k, xi, p') with T(alpha) = p'/p; p' = 0 marks a terminal digit.
    gcd(p', p) = gcd(q, p) = 1, so the result stays reduced.
    """
    f = q // p
    if f & 1:
        k = (f + 1) >> 1
        return k, -1, 2 * k * p - q
    k = f >> 1
    return k, 1, q - 2 * k * p


def classify_branch(alpha) -> EcfDigit:
    """Branch label (k, xi) of alpha; terminal when alpha = 1/(2k)."""
    alpha = as_rational(alpha)
    _check_unit(alpha)
    k, xi, rest = _step(alpha.numerator, alpha.denominator)
    if rest == 0:
        return EcfDigit(k, 1, terminal=True)
    return EcfDigit(k, xi)


def apply_T(alpha) -> Fraction:
    alpha = as_rational(alpha)
    _check_unit(alpha)
    p = alpha.numerator
    _, _, rest = _step(p, alpha.denominator)
    return Fraction(rest, p) if rest else Fraction(0)


def iter_orbit(p: int, q: int) -> Iterator[tuple[int, int, int, int]]:
    """Yield (k, xi, p_next, q_next) along the T-orbit of p/q until it hits 0."""
    while p:
        k, xi, rest = _step(p, q)
        yield k, xi, rest, p
        p, q = rest, p


@dataclass(frozen=True)
class EcfExpansion:
    """Digits of alpha along its T-orbit.

    ``remainder`` is T^n(alpha) after the stored digits (0 once exhausted);
    with it the nested fraction reproduces alpha exactly even when the
    expansion was cut at ``max_digits``.
    """

    alpha: Fraction
    digits: tuple[EcfDigit, ...]
    exhausted: bool
    remainder: Fraction = Fraction(0)

    def __len__(self) -> int:
        return len(self.digits)

    def to_json(self) -> dict:
        return {
            "alpha": f"{self.alpha.numerator}/{self.alpha.denominator}",
            "digits": [d.as_pair() for d in self.digits],
            "exhausted": self.exhausted,
        }

    @classmethod
    def from_json(cls, data: dict) -> "EcfExpansion":
        alpha = as_rational(data["alpha"])
        digits = data["digits"]
        exp = ecf_expand(alpha, max(1, len(digits)))
        if [d.as_pair() for d in exp.digits] != [list(d) for d in digits]:
            raise DomainError("digits do not match the expansion of alpha")
        if exp.exhausted != bool(data["exhausted"]):
            raise DomainError("exhausted flag does not match alpha")
        return exp


def ecf_expand(alpha, max_digits: int) -> EcfExpansion:
    alpha = as_rational(alpha)
    _check_unit(alpha)
    if max_digits < 1:
        raise DomainError("max_digits must be positive")
    p, q = alpha.numerator, alpha.denominator
    digits: list[EcfDigit] = []
    while len(digits) < max_digits:
        k, xi, rest = _step(p, q)
        if rest == 0:
            digits.append(EcfDigit(k, 1, terminal=True))
            return EcfExpansion(alpha, tuple(digits), True, Fraction(0))
        digits.append(EcfDigit(k, xi))
        p, q = rest, p
    return EcfExpansion(alpha, tuple(digits), False, Fraction(p, q))


def nested_value(digits: Sequence[EcfDigit], remainder=Fraction(0)) -> Fraction:
    """Evaluate 1/(2k1 + xi1/(2k2 + ... + xi_n * remainder))."""
    value = as_rational(remainder)
    num, den = value.numerator, value.denominator
    for d in reversed(digits):
        if d.terminal:
            num, den = 1, 2 * d.k
        else:
            # 1 / (2k + xi num/den) = den / (2k den + xi num)
            num, den = den, 2 * d.k * den + d.xi * num
    return Fraction(num, den)


@dataclass(frozen=True)
class ConvergentSequence:
    """Convergents p_n/q_n for n = 0..len-1, with p_{-1} = 1, q_{-1} = 0.

    ``xi[n]`` is the sign of digit n (xi[0] = +1 by convention).
    """

    p: tuple[int, ...]
    q: tuple[int, ...]
    xi: tuple[int, ...]

    def num(self, n: int) -> int:
        return 1 if n == -1 else self.p[n]

    def den(self, n: int) -> int:
        return 0 if n == -1 else self.q[n]

    def determinant(self, n: int) -> int:
        """p_{n+1} q_n - p_n q_{n+1}."""
        return self.num(n + 1) * self.den(n) - self.num(n) * self.den(n + 1)


def convergent_lists(digits: Sequence[EcfDigit], n: int) -> ConvergentSequence:
    p_prev, p_cur = 1, 0
    q_prev, q_cur = 0, 1
    ps, qs, xis = [0], [1], [1]
    xi_prev = 1
    for d in digits[:n]:
        p_prev, p_cur = p_cur, 2 * d.k * p_cur + xi_prev * p_prev
        q_prev, q_cur = q_cur, 2 * d.k * q_cur + xi_prev * q_prev
        ps.append(p_cur)
        qs.append(q_cur)
        xis.append(d.xi)
        xi_prev = d.xi
    return ConvergentSequence(tuple(ps), tuple(qs), tuple(xis))


def convergents(exp: EcfExpansion, n: int) -> ConvergentSequence:
    if n < 0 or n > len(exp.digits):
        raise ExhaustedError(f"requested {n} convergents, only {len(exp.digits)} digits")
    return convergent_lists(exp.digits, n)


def orbit_values(exp: EcfExpansion, n: int) -> list[Fraction]:
    """alpha_0 .. alpha_n along the T-orbit (requires n <= len(digits))."""
    if n > len(exp.digits):
        raise ExhaustedError(f"orbit known through {len(exp.digits)} steps, asked {n}")
    out = [exp.alpha]
    p, q = exp.alpha.numerator, exp.alpha.denominator
    for _ in range(n):
        if p == 0:
            out.append(Fraction(0))
            continue
        _, _, rest = _step(p, q)
        p, q = rest, p
        out.append(Fraction(p, q) if p else Fraction(0))
    return out


def orbit_product(exp: EcfExpansion, n: int) -> Fraction:
    """alpha_0 * ... * alpha_{n-1}, cross-checked against the convergent form."""
    if n < 0:
        raise DomainError("n must be nonnegative")
    if n == 0:
        return Fraction(1)
    if n > len(exp.digits):
        raise ExhaustedError(f"orbit known through {len(exp.digits)} steps, asked {n}")
    alphas = orbit_values(exp, n)
    # the product telescopes: alpha_j = p_j / p_{j-1} in reduced form
    prod = Fraction(alphas[n - 1].numerator, exp.alpha.denominator)
    check = Fraction(1)
    for a in alphas[:n]:
        check *= a
    if check != prod:
        raise InvariantError("telescoped orbit product disagrees with direct product")
    conv = convergents(exp, n)
    xi_n = conv.xi[n]
    alpha_n = alphas[n]
    # (q_n + xi_n alpha_n q_{n-1})^{-1}; a terminal digit has alpha_n = 0
    closed = 1 / (conv.den(n) + xi_n * alpha_n * conv.den(n - 1))
    if closed != prod:
        raise InvariantError(f"orbit product {prod} != convergent form {closed}")
    return prod


def mu_T_density(x: float) -> float:
    return 1.0 / (x + 1.0) - 1.0 / (x - 1.0)


def mu_T_interval(a, b) -> float:
    """mu_T((a, b)) from the antiderivative log((1+x)/(1-x))."""
    a, b = as_rational(a), as_rational(b)
    if b >= 1:
        raise DomainError("mu_T has infinite mass near 1; need b < 1")
    if a > b:
        raise DomainError("need a <= b")
    if a <= 0:
        raise DomainError("need a > 0")
    width = b - a
    # log((1+b)/(1+a)) + log((1-a)/(1-b)) written with log1p for small widths
    return math.log1p(float(width / (1 + a))) + math.log1p(float(width / (1 - b)))


def _log_rational(x: Fraction) -> float:
    return math.log(x.numerator) - math.log(x.denominator)


def birkhoff_log_statistic(alpha, n: int, exp: EcfExpansion | None = None) -> float:
    """-log(alpha_0 ... alpha_{n-1}) * log(n) / n."""
    if n < 2:
        raise DomainError("n must be at least 2")
    if exp is None:
        exp = ecf_expand(alpha, n + 1)
    if len(exp.digits) < n:
        raise ExhaustedError(f"orbit has only {len(exp.digits)} steps, need {n}")
    alphas = orbit_values(exp, n)
    prod = Fraction(alphas[n - 1].numerator, exp.alpha.denominator)
    return -_log_rational(prod) * math.log(n) / n


def cylinder_interval(prefix: Sequence[EcfDigit]) -> tuple[Fraction, Fraction]:
    """Closure endpoints of {alpha : the ECF expansion starts with prefix}.

    With n = len(prefix) the set is alpha = (p_n + xi_n t p_{n-1}) /
    (q_n + xi_n t q_{n-1}) for t = T^n(alpha) in (0, 1].
    """
    if not prefix:
        raise DomainError("empty prefix")
    if any(d.terminal for d in prefix):
        raise DomainError("terminal digits do not define a cylinder")
    n = len(prefix)
    conv = convergent_lists(prefix, n)
    xi = prefix[-1].xi
    a = Fraction(conv.num(n), conv.den(n))
    b = Fraction(conv.num(n) + xi * conv.num(n - 1), conv.den(n) + xi * conv.den(n - 1))
    return (a, b) if a < b else (b, a)
