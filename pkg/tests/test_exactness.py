from fractions import Fraction

import pytest

from curlicue.ecf_core import ecf_expand
from curlicue.errors import InvariantError
from curlicue.exactness import CHECKS, check_round_trip, run_exactness_suite
from curlicue.experiments import geometric_decay, run_experiment
from curlicue.errors import DomainError


def test_small_suite_passes():
    res = run_exactness_suite(40, seed=1)
    assert res.passed and set(res.failures) == set(CHECKS)


def test_round_trip_check_detects_tampering():
    exp = ecf_expand(Fraction(5, 12), 10)
    object.__setattr__(exp, "alpha", Fraction(5, 13))
    with pytest.raises(InvariantError):
        check_round_trip(exp)


def test_geometric_decay():
    assert geometric_decay([1.0, 0.5, 0.25, 0.12, 0.06])
    assert not geometric_decay([1.0, 0.9, 0.95, 0.5])
    assert not geometric_decay([1.0, 1e-15, 1e-16])


def test_unknown_experiment():
    with pytest.raises(DomainError):
        run_experiment({"experiment": "nothing"})


def test_second_moment_experiment_reports_threshold():
    summary = run_experiment({"experiment": "second_moment", "N": 50, "samples": 300})
    assert summary["expected"] == 0.5 and "sigmas" in summary
