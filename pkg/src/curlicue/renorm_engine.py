"""Iterated renormalization of theta sums and the truncated curve gamma^J.

Level l carries alpha_l = T^l(alpha), N_l = alpha_0...alpha_{l-1} N, the
sign eta_l = -xi_l, the accumulated conjugation sign_l = eta_1...eta_l and
kappa_l = 1 + eta_1 + ... + eta_1...eta_{l-1}.  Writing

    S_l(t)     = S^(sign_l)(alpha_l, t N_l)
    Gamma_l(t) = S_l(t) - e^{i pi sign_l/4} alpha_l^{-1/2} S_{l+1}(t)

the curve value telescopes to

    gamma(t) = sum_{l<r} e^{i pi kappa_l/4} N_l^{-1/2} Gamma_l(t)
               + e^{i pi kappa_r/4} N_r^{-1/2} S_r(t).

At the renewal depth r = nu_{n_hat} - 1 the last length N_r = Theta is of
order one.  Grouping the levels by Sigma-entry gives the Delta-form, whose
weights have closed forms in beta_j = alpha_{nu_{n_hat-j}-2}; gamma^J keeps
the J entries nearest the top and never touches the others.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

from .ecf_core import _step, as_rational
from .errors import BudgetError, DomainError, ExhaustedError, InvariantError
from .jump_map import SigmaCoding, phase_state, r_step, sigma_code, theta_from_coding
from .theta_eval import DEFAULT_TERM_BUDGET, theta_sum

DEFAULT_COST_CEILING = 10 ** 7


def _eighth_power(k: int) -> complex:
    return _EIGHTHS[k % 8]


_EIGHTHS = tuple(cmath.exp(1j * math.pi * k / 4) for k in range(8))


def _conj(z: complex, sign: int) -> complex:
    return z if sign > 0 else z.conjugate()


@dataclass(frozen=True)
class LevelData:
    l: int
    alpha_l: Fraction
    eta_l: int
    kappa_l: int
    N_l: Fraction
    sign_l: int  # eta_1 ... eta_l


@dataclass(frozen=True)
class RenormTrace:
    alpha: Fraction
    N: int
    coding: SigmaCoding
    n_hat: int
    r: int
    levels: tuple[LevelData, ...]
    theta_exact: Fraction
    first_level: int = 0

    @property
    def theta(self) -> float:
        return float(self.theta_exact)

    def level(self, l: int) -> LevelData:
        return self.levels[l - self.first_level]

    def to_json(self) -> dict:
        return {
            "alpha": f"{self.alpha.numerator}/{self.alpha.denominator}",
            "N": self.N,
            "n_hat": self.n_hat,
            "r": self.r,
            "theta": self.theta,
            "entries": [e.as_list() for e in self.coding.entries[: self.n_hat]],
            "nu": list(self.coding.nu[: self.n_hat + 1]),
            "qhat": [str(q) for q in self.coding.qhat[: self.n_hat + 1]],
            "levels": [
                {"l": lv.l, "alpha": f"{lv.alpha_l.numerator}/{lv.alpha_l.denominator}",
                 "eta": lv.eta_l, "kappa": lv.kappa_l, "sign": lv.sign_l,
                 "N_l": float(lv.N_l)}
                for lv in self.levels
            ],
        }


def _ladder(alpha_l: Fraction, N_l: Fraction, eta_l: int, kappa_l: int, sign_l: int,
            l0: int, count: int) -> list[LevelData]:
    levels = [LevelData(l0, alpha_l, eta_l, kappa_l, N_l, sign_l)]
    p, q = alpha_l.numerator, alpha_l.denominator
    for l in range(l0 + 1, l0 + count + 1):
        if p == 0:
            raise ExhaustedError(f"orbit terminated before level {l}")
        _, xi, rest = _step(p, q)
        prev = levels[-1]
        eta = -xi
        kappa = prev.kappa_l + prev.sign_l
        sign = prev.sign_l * eta
        N_next = prev.alpha_l * prev.N_l
        p, q = rest, p
        levels.append(LevelData(l, Fraction(p, q) if p else Fraction(0), eta, kappa, N_next, sign))
    return levels


def level_sequence(alpha, N, r: int) -> list[LevelData]:
    """Levels 0..r of the renormalization ladder (kappa_0 = 0, eta_0 := +1)."""
    alpha = as_rational(alpha)
    if not 0 < alpha <= 1:
        raise DomainError("alpha must lie in (0,1]")
    return _ladder(alpha, as_rational(N), 1, 0, 1, 0, r)


def entry_start_level(coding: SigmaCoding, i: int, N) -> LevelData:
    """Level nu_i - 1 (where R^i(alpha) lives), read off the Sigma-coding."""
    state = phase_state(coding, i)
    q2, q1 = coding.conv_q[i]
    zeta = coding.entries[i - 1].zeta if i > 0 else 1
    a_ret = coding.returns[i]
    N_l = as_rational(N) / (q1 + zeta * a_ret * q2)
    eta = -zeta if i > 0 else 1
    return LevelData(coding.nu[i] - 1, a_ret, eta, state.kappa - state.x, N_l, state.x)


def renewal_depth(alpha, N: int, coding: SigmaCoding | None = None) -> int:
    if coding is None:
        coding = sigma_code(alpha, qhat_above=N)
    return coding.nu[coding.renewal_index(N)] - 1


def build_trace(alpha, N: int, from_entry: int = 0,
                coding: SigmaCoding | None = None) -> RenormTrace:
    """Renewal data plus levels nu_{from_entry}-1 .. r."""
    alpha = as_rational(alpha)
    if N < 1:
        raise DomainError("N must be positive")
    if coding is None:
        coding = sigma_code(alpha, qhat_above=N)
    n_hat = coding.renewal_index(N)
    r = coding.nu[n_hat] - 1
    if not 0 <= from_entry <= n_hat:
        raise DomainError("from_entry outside 0..n_hat")
    start = entry_start_level(coding, from_entry, N)
    levels = _ladder(start.alpha_l, start.N_l, start.eta_l, start.kappa_l, start.sign_l,
                     start.l, r - start.l)
    theta = theta_from_coding(coding, n_hat, N)
    if levels[-1].N_l != theta:
        raise InvariantError(f"N_r = {levels[-1].N_l} differs from Theta = {theta}")
    trace = RenormTrace(alpha, N, coding, n_hat, r, tuple(levels), theta, start.l)
    _check_damping(trace, from_entry)
    return trace


def _check_damping(trace: RenormTrace, from_entry: int) -> None:
    # the run letters of an entry sit in (1/2, 1], its closing letter below 1/2
    nu = trace.coding.nu
    for i in range(from_entry, trace.n_hat):
        small = sum(trace.level(l).alpha_l < Fraction(1, 2) for l in range(nu[i] - 1, nu[i + 1] - 1))
        if small != 1:
            raise InvariantError(f"entry {i + 1} has {small} factors below 1/2")


def theta_alpha(alpha, N: int) -> float:
    """Theta_alpha(N) by the orbit product and by the convergent formula."""
    alpha = as_rational(alpha)
    coding = sigma_code(alpha, qhat_above=N)
    n_hat = coding.renewal_index(N)
    # alpha_0 ... alpha_{r-1} telescopes to (numerator of alpha_{r-1}) / q_0;
    # alpha_{r-1} is the value just before the closing digit of entry n_hat
    p, q = alpha.numerator, alpha.denominator
    for _ in range(n_hat):
        *_, p, q, _ = r_step(p, q)
    product_route = Fraction(q * N, alpha.denominator)
    convergent_route = theta_from_coding(coding, n_hat, N)
    if product_route != convergent_route:
        raise InvariantError(f"Theta routes disagree: {product_route} vs {convergent_route}")
    return float(product_route)


# ---- partial products and phase bookkeeping ----

@dataclass(frozen=True)
class PartialProducts:
    beta_j: Fraction
    B_sj: Fraction
    D_j: Fraction


def beta_of(coding: SigmaCoding, n_hat: int, j: int) -> Fraction:
    """beta_j = alpha_{nu_{n_hat-j}-2} = 1/(2m + zeta R^{n_hat-j}(alpha))."""
    i = n_hat - j
    e = coding.entries[i - 1]
    return 1 / (2 * e.m + e.zeta * coding.returns[i])


def B_closed(beta: Fraction, s: int) -> Fraction:
    return beta / ((s - 1) - (s - 2) * beta)


def alpha_closed(beta: Fraction, s: int) -> Fraction:
    """alpha_{nu_i - s} inside entry i in terms of its beta."""
    return ((s - 2) - (s - 3) * beta) / ((s - 1) - (s - 2) * beta)


def D_closed(coding: SigmaCoding, n_hat: int, j: int) -> Fraction:
    out = Fraction(1)
    for u in range(j):
        b = beta_of(coding, n_hat, u)
        out *= b / (1 + coding.entries[n_hat - u - 1].h * (1 - b))
    return out


def entry_partial_products(trace: RenormTrace, j: int) -> list[PartialProducts]:
    """Closed forms for beta_j, B_{s,j} (s = 2..h+2) and D_j, each checked
    against the level products of the trace where those levels are present."""
    n_hat, coding = trace.n_hat, trace.coding
    if not 0 <= j < n_hat:
        raise DomainError(f"j must lie in 0..{n_hat - 1}")
    i = n_hat - j
    h = coding.entries[i - 1].h
    nu_i = coding.nu[i]
    beta = beta_of(coding, n_hat, j)
    D = D_closed(coding, n_hat, j)
    top_N = trace.level(nu_i - 1).N_l if nu_i - 1 >= trace.first_level else None
    if top_N is not None:
        if trace.level(nu_i - 2).alpha_l != beta:
            raise InvariantError("beta_j differs from alpha_{nu-2}")
        if trace.level(trace.r).N_l / top_N != D:
            raise InvariantError(f"D_{j} closed form differs from the level product")
    out = []
    for s in range(2, h + 3):
        B = B_closed(beta, s)
        lo = nu_i - s
        if lo >= trace.first_level:
            lv = trace.level(lo)
            if top_N / lv.N_l != B:
                raise InvariantError(f"B_{{{s},{j}}} closed form differs from the level product")
            if lv.alpha_l != alpha_closed(beta, s):
                raise InvariantError(f"alpha_{{nu-{s}}} closed form disagrees")
        out.append(PartialProducts(beta, B, D))
    return out


def partial_products(trace: RenormTrace, j: int, s: int) -> PartialProducts:
    """beta_j, B_{s,j}, D_j by closed forms, checked against level products."""
    h = trace.coding.entries[trace.n_hat - j - 1].h if 0 <= j < trace.n_hat else 0
    if not 2 <= s <= h + 2:
        raise DomainError(f"s must lie in 2..{h + 2}")
    return entry_partial_products(trace, j)[s - 2]


@dataclass(frozen=True)
class PhaseBook:
    J: int
    n_hat: int
    Psi_J: int
    Upsilon: dict  # (j, s) -> int
    E_J: int
    E_J_j: dict  # j -> sign
    E_alpha: int
    K: int
    K8: int
    x_base: int  # x_{n_hat - J}
    kappa_base: int  # kappa_{nu_{n_hat-J} - 1}, reduced mod 8


def phase_bookkeeping(coding: SigmaCoding, n_hat: int, J: int,
                      trace: RenormTrace | None = None) -> PhaseBook:
    """Psi_J, Upsilon_{s,J}, the sign products and K^8 from the entry window.

    With a trace the quantities are compared with kappa and eta read
    directly off the level ladder.
    """
    if not 0 <= J <= n_hat:
        raise DomainError(f"J must lie in 0..n_hat={n_hat}")
    ents = coding.entries
    first = n_hat - J + 1  # entries first..n_hat form the window

    def zeta(v):
        return ents[v - 1].zeta

    def hz(v):
        e = ents[v - 1]
        return e.h - e.zeta

    def sign_prod(a, b):  # prod_{v=a}^{b} (-zeta_v)
        out = 1
        for v in range(a, b + 1):
            out *= -zeta(v)
        return out

    def weighted(a, b):  # sum_{u=a}^{b} (h_u - zeta_u) prod_{v=first}^{u-1} (-zeta_v)
        total, run = 0, 1
        for v in range(first, b + 1):
            if v >= a:
                total += hz(v) * run
            run *= -zeta(v)
        return total

    E_J = sign_prod(first, n_hat)
    Psi = weighted(first, n_hat) - E_J + 1
    Upsilon, E_J_j = {}, {}
    for j in range(J):
        i = n_hat - j
        inner = sign_prod(first, i - 1)
        E_J_j[j] = inner
        for s in range(2, ents[i - 1].h + 3):
            Upsilon[(j, s)] = weighted(first, i - 1) + (ents[i - 1].h - s + 1) * inner + 1
    top = phase_state(coding, n_hat)
    base = phase_state(coding, n_hat - J)
    E_alpha, K = top.x, top.kappa
    if E_alpha != base.x * E_J:
        raise InvariantError("E_alpha != x_{n_hat-J} * E_J")
    # kappa at level nu_{n_hat-J} - 1 from K: each (h_u - zeta_u) enters with
    # x_{u-1} = E_alpha * prod_{v=u}^{n_hat}(-zeta_v), and the level sits one
    # sign x_{n_hat-J} below kappa_{nu_{n_hat-J}}
    tail = sum(hz(u) * sign_prod(u, n_hat) for u in range(first, n_hat + 1))
    kappa_base = (K - E_alpha * tail - base.x) % 8
    if kappa_base != (base.kappa - base.x) % 8:
        raise InvariantError("kappa_{nu_{n_hat-J}-1} congruence failed")
    if trace is not None:
        _check_book(trace, coding, n_hat, J, Psi, Upsilon, E_J, E_J_j, K, base.x)
    return PhaseBook(J, n_hat, Psi, Upsilon, E_J, E_J_j, E_alpha, K, K % 8, base.x, kappa_base)


def _check_book(trace, coding, n_hat, J, Psi, Upsilon, E_J, E_J_j, K, x_base):
    nu = coding.nu
    lv = trace.level
    base_level = nu[n_hat - J] - 1
    if base_level < trace.first_level:
        return
    kb, sb = lv(base_level).kappa_l, lv(base_level).sign_l
    if sb != x_base:
        raise InvariantError("eta product at the window base differs from x_{n_hat-J}")
    if (lv(trace.r).kappa_l - kb) * sb != Psi:
        raise InvariantError("Psi_J differs from the kappa difference")
    if lv(trace.r).sign_l * sb != E_J:
        raise InvariantError("E_J differs from the eta products")
    if nu[n_hat] <= trace.r + 1 and lv(trace.r).kappa_l + lv(trace.r).sign_l != K:
        raise InvariantError("K differs from kappa_{nu_{n_hat}}")
    for (j, s), ups in Upsilon.items():
        l = nu[n_hat - j] - s
        if (lv(l).kappa_l - kb) * sb != ups:
            raise InvariantError(f"Upsilon_{{{s},{j}}} differs from kappa difference")
        if lv(l).sign_l * sb != E_J_j[j]:
            raise InvariantError(f"E_J^{j} differs from eta product")


# ---- curve values ----

class _SumCache:
    """S(alpha_l, t N_l) per level, each length summed once; tracks cost."""

    def __init__(self, budget: int):
        self.values: dict = {}
        self.cost = 0
        self.budget = budget

    def get(self, key, alpha: Fraction, L: Fraction) -> complex:
        if key not in self.values:
            self.values[key] = theta_sum(alpha, L, budget=self.budget)
            self.cost += L.numerator // L.denominator
        return self.values[key]


def telescoped_value(alpha, N: int, t, depth: int | None = None,
                     budget: int = DEFAULT_TERM_BUDGET) -> complex:
    """N^{-1/2} S(alpha, tN) via the flat telescoped sum at any depth."""
    alpha, t = as_rational(alpha), as_rational(t)
    if depth is None:
        depth = renewal_depth(alpha, N)
    levels = level_sequence(alpha, N, depth)
    cache = _SumCache(budget)
    S = [_conj(cache.get(lv.l, lv.alpha_l, t * lv.N_l), lv.sign_l) for lv in levels]
    total = 0j
    for lv in levels[:-1]:
        gamma_l = S[lv.l] - _eighth_power(lv.sign_l) * S[lv.l + 1] / math.sqrt(lv.alpha_l)
        total += _eighth_power(lv.kappa_l) * gamma_l / math.sqrt(lv.N_l)
    top = levels[-1]
    total += _eighth_power(top.kappa_l) * S[-1] / math.sqrt(top.N_l)
    return total


def _level_gamma(trace: RenormTrace, S: dict, l: int) -> complex:
    lv = trace.level(l)
    return S[l] - _eighth_power(lv.sign_l) * S[l + 1] / math.sqrt(lv.alpha_l)


def reconstruct(alpha, N: int, t, budget: int = DEFAULT_TERM_BUDGET,
                trace: RenormTrace | None = None) -> complex:
    """gamma(t) through the Delta-grouped renormalization at the renewal depth.

    Every Gamma term is summed directly; the weights come from the closed
    forms for B_{s,j} and D_j.
    """
    alpha, t = as_rational(alpha), as_rational(t)
    if trace is None:
        trace = build_trace(alpha, N)
    coding, n_hat, r = trace.coding, trace.n_hat, trace.r
    cache = _SumCache(budget)
    S = {lv.l: _conj(cache.get(lv.l, lv.alpha_l, t * lv.N_l), lv.sign_l) for lv in trace.levels}
    theta = trace.theta_exact
    top = trace.level(r)
    total = _eighth_power(top.kappa_l) * S[r]
    for j in range(n_hat):
        i = n_hat - j
        beta = beta_of(coding, n_hat, j)
        delta = 0j
        for s in range(2, coding.entries[i - 1].h + 3):
            l = coding.nu[i] - s
            weight = math.sqrt(B_closed(beta, s))
            delta += _eighth_power(trace.level(l).kappa_l) * weight * _level_gamma(trace, S, l)
        total += math.sqrt(D_closed(coding, n_hat, j)) * delta
    return total / math.sqrt(theta)


@dataclass(frozen=True)
class GammaJResult:
    value: complex
    J: int
    terms_cost: int
    truncation_bound: float
    n_hat: int
    fallback: bool = False
    values: tuple = field(default=(), repr=False)


def _truncation_scale(coding: SigmaCoding, n_hat: int, J: int, theta: Fraction) -> float:
    """Size indicator sum_{j>=J} D_j^{1/2} (h_{n_hat-j}+1) / Theta^{1/2} of the dropped scales."""
    total = 0.0
    D = Fraction(1)
    for j in range(n_hat):
        e = coding.entries[n_hat - j - 1]
        if j >= J:
            total += math.sqrt(D) * (e.h + 1)
        b = beta_of(coding, n_hat, j)
        D *= b / (1 + e.h * (1 - b))
    return total / math.sqrt(theta)


def gamma_J(alpha, N: int, t, J: int, cost_ceiling: int = DEFAULT_COST_CEILING,
            coding: SigmaCoding | None = None, ts: Sequence | None = None) -> GammaJResult:
    """Truncated curve gamma^J(t) from the renewal window alone.

    Uses Theta, beta_j, the closed-form partial products and the phase
    bookkeeping; no level below nu_{n_hat-J} - 1 is visited.  When J
    exceeds n_hat nothing is truncated and the untruncated value
    N^{-1/2} S(alpha, tN) is returned with ``fallback=True``.
    """
    alpha = as_rational(alpha)
    if J < 1:
        raise DomainError("J must be at least 1")
    times = [as_rational(x) for x in (ts if ts is not None else [t])]
    if coding is None:
        coding = sigma_code(alpha, qhat_above=N)
    n_hat = coding.renewal_index(N)
    theta = theta_from_coding(coding, n_hat, N)
    if J > n_hat:
        if N > cost_ceiling:
            raise BudgetError(f"untruncated fallback needs {N} terms > ceiling {cost_ceiling}")
        vals = tuple(theta_sum(alpha, x * N) / math.sqrt(N) for x in times)
        return GammaJResult(vals[0], J, N * len(times), 0.0, n_hat, True, vals)

    book = phase_bookkeeping(coding, n_hat, J)
    plan = []  # (key, alpha_l, N_l) for every level whose sum is needed
    top_key = ("top",)
    plan.append((top_key, coding.returns[n_hat], theta))
    groups = []
    for j in range(J):
        i = n_hat - j
        e = coding.entries[i - 1]
        beta = beta_of(coding, n_hat, j)
        D = D_closed(coding, n_hat, j)
        rows = []
        for s in range(2, e.h + 3):
            B = B_closed(beta, s)
            a_l = alpha_closed(beta, s)
            N_l = theta / (B * D)
            plan.append(((j, s), a_l, N_l))
            rows.append((s, B, a_l))
        groups.append((j, e, D, rows))
    cost = sum(N_l.numerator // N_l.denominator for _, _, N_l in plan) * len(times)
    if cost > cost_ceiling:
        raise BudgetError(f"gamma^J needs {cost} terms > ceiling {cost_ceiling}")

    levels = {key: (a_l, N_l) for key, a_l, N_l in plan}
    values = []
    for x in times:
        raw = {key: theta_sum(a_l, x * N_l) for key, (a_l, N_l) in levels.items()}
        inner = _eighth_power(book.Psi_J) * _conj(raw[top_key], book.E_J)
        for j, e, D, rows in groups:
            sign = book.E_J_j[j]
            delta = 0j
            for s, B, a_l in rows:
                # the level above (s-1 in the same entry, or the next entry's base)
                above = (j, s - 1) if s > 2 else ((j - 1, groups[j - 1][1].h + 2) if j > 0 else top_key)
                eta_next = 1 if s > 2 else -e.zeta
                gamma_l = (_conj(raw[(j, s)], sign)
                           - _eighth_power(sign) * _conj(raw[above], sign * eta_next) / math.sqrt(a_l))
                delta += _eighth_power(book.Upsilon[(j, s)]) * math.sqrt(B) * gamma_l
            inner += math.sqrt(D) * delta
        values.append(_eighth_power(book.kappa_base) * _conj(inner, book.x_base) / math.sqrt(theta))
    bound = _truncation_scale(coding, n_hat, J, theta)
    return GammaJResult(values[0], J, cost, bound, n_hat, False, tuple(values))


def gamma_J_levels(alpha, N: int, t, J: int, trace: RenormTrace | None = None) -> complex:
    """gamma^J from the level ladder (flat form), the dual route to gamma_J."""
    alpha, t = as_rational(alpha), as_rational(t)
    coding = sigma_code(alpha, qhat_above=N) if trace is None else trace.coding
    n_hat = coding.renewal_index(N)
    if trace is None or trace.first_level > coding.nu[n_hat - min(J, n_hat)] - 1:
        trace = build_trace(alpha, N, from_entry=n_hat - min(J, n_hat), coding=coding)
    lo = coding.nu[n_hat - min(J, n_hat)] - 1
    cache = _SumCache(DEFAULT_TERM_BUDGET)
    S = {lv.l: _conj(cache.get(lv.l, lv.alpha_l, t * lv.N_l), lv.sign_l)
         for lv in trace.levels if lv.l >= lo}
    total = 0j
    for l in range(lo, trace.r):
        lv = trace.level(l)
        total += _eighth_power(lv.kappa_l) * _level_gamma(trace, S, l) / math.sqrt(lv.N_l)
    top = trace.level(trace.r)
    return total + _eighth_power(top.kappa_l) * S[trace.r] / math.sqrt(top.N_l)


def fdd_point(alpha, N: int, ts: Sequence, J: int, **kw) -> list[complex]:
    """(gamma^J(t_1), ..., gamma^J(t_k)) from one shared renewal window."""
    times = [as_rational(x) for x in ts]
    if any(b <= a for a, b in zip(times, times[1:])):
        raise DomainError("times must be strictly increasing")
    if any(x < 0 or x > 1 for x in times):
        raise DomainError("times must lie in [0,1]")
    res = gamma_J(alpha, N, times[0], J, ts=times, **kw)
    return list(res.values)
