"""Exact-arithmetic identity checks over random mu_R instances.

Each check returns normally or raises; ``run_exactness_suite`` counts the
failures per check so one bad instance does not hide the others.
"""
from __future__ import annotations

import random
from dataclasses import dataclass, field
from fractions import Fraction

from .ecf_core import (EcfExpansion, convergents, ecf_expand, nested_value,
                       orbit_product)
from .errors import InvariantError
from .jump_map import sigma_code, sigma_encode, theta_from_renewal
from .measure_lab import sample_alpha
from .renorm_engine import (RenormTrace, build_trace, entry_partial_products,
                            phase_bookkeeping, theta_alpha)

CHECKS = ("ecf_round_trip", "determinant", "orbit_product", "sigma_routes",
          "theta_routes", "partial_products", "phase_bookkeeping")


def check_round_trip(exp: EcfExpansion) -> None:
    if nested_value(exp.digits, exp.remainder) != exp.alpha:
        raise InvariantError("nested value of the digits differs from alpha")


def check_determinant(exp: EcfExpansion) -> None:
    """p_{n+1} q_n - p_n q_{n+1} = (-1)^n prod_{j<=n} xi_j for every index."""
    n_max = len(exp.digits)
    conv = convergents(exp, n_max)
    sign = 1
    for n in range(n_max - 1):
        sign *= conv.xi[n]
        if conv.determinant(n) != (-1) ** n * sign:
            raise InvariantError(f"determinant identity fails at n={n}")


def check_orbit_product(exp: EcfExpansion) -> None:
    """Telescoped, direct and convergent forms of the orbit product agree."""
    n_max = len(exp.digits)
    for n in sorted({1, n_max} - {0}):
        orbit_product(exp, n)  # raises InvariantError on any disagreement


def check_sigma_routes(alpha: Fraction, exp: EcfExpansion) -> None:
    fast, ref = sigma_code(alpha), sigma_encode(exp)
    if fast.entries != ref.entries or fast.nu != ref.nu:
        raise InvariantError("Sigma-coding routes disagree")
    if fast.qhat[: len(ref.qhat)] != ref.qhat:
        raise InvariantError("R-denominator routes disagree")


def check_theta_routes(alpha: Fraction, N: int) -> None:
    coding = sigma_code(alpha, qhat_above=N)
    n = coding.renewal_index(N)
    zeta_prev = coding.entries[n - 2].zeta if n >= 2 else 1
    rebuilt = theta_from_renewal(N, coding.qhat[n - 1], coding.qhat[n], zeta_prev,
                                 coding.entries[n - 1], coding.returns[n])
    if float(rebuilt) != theta_alpha(alpha, N):
        raise InvariantError("Theta from renewal variables differs")


def check_partial_products(trace: RenormTrace) -> None:
    for j in range(trace.n_hat):
        entry_partial_products(trace, j)


def check_phase_bookkeeping(trace: RenormTrace) -> None:
    for J in range(1, trace.n_hat + 1):
        phase_bookkeeping(trace.coding, trace.n_hat, J, trace=trace)


@dataclass
class SuiteResult:
    instances: int
    failures: dict = field(default_factory=lambda: {c: 0 for c in CHECKS})
    examples: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return not any(self.failures.values())

    def to_json(self) -> dict:
        return {"instances": self.instances, "failures": self.failures,
                "examples": self.examples, "pass": self.passed}


def run_exactness_suite(instances: int = 10_000, seed: int = 0, max_N: int = 10 ** 6,
                        precision_bits: int = 256) -> SuiteResult:
    """Every check on ``instances`` mu_R samples with N uniform in [2, max_N]."""
    rng = random.Random(seed)
    result = SuiteResult(instances)
    for i in range(instances):
        alpha = sample_alpha(seed, i, precision_bits, stream=7)
        N = rng.randrange(2, max_N + 1)
        exp = ecf_expand(alpha, 10 ** 7)
        trace = build_trace(alpha, N)
        checks = {
            "ecf_round_trip": lambda: check_round_trip(exp),
            "determinant": lambda: check_determinant(exp),
            "orbit_product": lambda: check_orbit_product(exp),
            "sigma_routes": lambda: check_sigma_routes(alpha, exp),
            "theta_routes": lambda: check_theta_routes(alpha, N),
            "partial_products": lambda: check_partial_products(trace),
            "phase_bookkeeping": lambda: check_phase_bookkeeping(trace),
        }
        for name, fn in checks.items():
            try:
                fn()
            except InvariantError as exc:
                result.failures[name] += 1
                result.examples.setdefault(name, f"alpha={alpha}, N={N}: {exc}")
    return result
