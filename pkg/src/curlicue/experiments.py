"""Named experiments driven by a JSON config, each with its pass criterion.

Config keys: experiment, seed, N or Ns, samples, J or Js, bins,
precision_bits, t or ts, window ([N1, N2]), workers.  Thresholds are
implementation choices and are echoed in every summary.
"""
from __future__ import annotations

import json
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import measure_lab as lab
from .errors import DomainError


def _times(config) -> list[Fraction]:
    raw = config.get("ts", [config.get("t", 1)])
    return [Fraction(str(t)) for t in raw]


def _second_moment(c, out):
    rep = lab.second_moment_check(c.get("N", 1000), c.get("samples", 10_000), c.get("seed", 0),
                                  c.get("expected", 0.5))
    return {**rep.to_json(), "criterion": "within 3 standard errors",
            "pass": rep.sigmas <= 3.0}


def _markov(c, out):
    est = lab.markov_estimate(c.get("samples", 10_000), c.get("orbit_len", 1000), c.get("seed", 0),
                              c.get("precision_bits", 8192), c.get("workers", 1))
    profile = est.distance_profile(range(1, 9))
    positive = int((est.Pi > 0).sum())
    row_err = float(np.abs(est.Pi.sum(axis=1) - 1).max())
    return {"positive_entries": positive, "row_sum_error": row_err, "distance_profile": profile,
            "geometric": geometric_decay(profile),
            "pass": positive == 256 and row_err <= 1e-12 and geometric_decay(profile)}


def geometric_decay(profile, floor: float = 1e-13) -> bool:
    """Strictly decreasing with a ratio bounded below 1 until the float floor."""
    live = [d for d in profile if d > floor]
    if len(live) < 3:
        return False
    ratios = [b / a for a, b in zip(live, live[1:])]
    return all(r < 1 for r in ratios) and max(ratios[1:]) < 0.9


def _wlln(c, out):
    rows = lab.wlln_experiment(c.get("ns", [100, 1000, 10_000]), c.get("samples", 200),
                               c.get("seed", 0), c.get("precision_bits", 16384), c.get("workers", 1))
    iqr_ok = all(b.iqr < a.iqr for a, b in zip(rows, rows[1:]))
    band = 1.8 <= rows[-1].median <= 3.2
    return {"rows": [r.to_json() for r in rows], "iqr_decreasing": iqr_ok, "median_in_band": band,
            "pass": iqr_ok and band}


def _theta(c, out):
    Ns = c.get("Ns", [c.get("N", 10 ** 6), 2 * c.get("N", 10 ** 6)])
    clouds = [lab.theta_distribution(N, c.get("samples", 10_000), c.get("seed", 0),
                                     c.get("precision_bits", 256), stream=k, workers=c.get("workers", 1))
              for k, N in enumerate(Ns)]
    ks = [lab.ks_distance(a, b, c.get("threshold", 0.02)) for a, b in zip(clouds, clouds[1:])]
    _save(out, "theta", clouds)
    return {"ks": [r.to_json() for r in ks], "pass": all(r.passed for r in ks)}


def _renewal(c, out):
    N1, N2 = c.get("window", [1, 0])
    Ns = c.get("Ns", [c.get("N", 10 ** 6), 2 * c.get("N", 10 ** 6)])
    clouds = [lab.renewal_distribution(N, c.get("samples", 10_000), N1, N2, c.get("seed", 0),
                                       c.get("precision_bits", 256), stream=k, workers=c.get("workers", 1))
              for k, N in enumerate(Ns)]
    ratio_clouds = [lab.EmpiricalDistribution(cl.points[:, :2], cl.labels[:2]) for cl in clouds]
    ks = [lab.ks_distance(a, b, c.get("threshold", 0.02)) for a, b in zip(ratio_clouds, ratio_clouds[1:])]
    support = all(np.all((cl.points[:, 0] > 0) & (cl.points[:, 0] <= 1) & (cl.points[:, 1] > 1))
                  for cl in clouds)
    _save(out, "renewal", clouds)
    return {"ks": [r.to_json() for r in ks], "support_ok": bool(support),
            "pass": support and all(r.passed for r in ks)}


def _fdd(c, out):
    chain = lab.estimate_fdd(_times(c), c.get("Ns", [10 ** 5, 2 * 10 ** 5, 4 * 10 ** 5]),
                             c.get("samples", 10_000), c.get("J", 12), c.get("seed", 0),
                             c.get("precision_bits", 256), c.get("workers", 1))
    final = chain.ks[-1].statistic if chain.ks else 0.0
    threshold = c.get("threshold", 0.03)
    _save(out, "fdd", chain.clouds)
    return {**chain.to_json(), "final": final, "threshold": threshold,
            "pass": chain.decreasing and final < threshold}


def _approx(c, out):
    table = lab.approx_error_experiment(c.get("Js", [4, 8, 12]), c.get("N", 10 ** 5),
                                        c.get("samples", 2000), c.get("seed", 0),
                                        c.get("precision_bits", 256), c.get("workers", 1))
    return {**table.to_json(), "pass": table.strictly_decreasing and table.r_squared > 0.9}


def _sampler(c, out):
    stat, p = lab.sampler_chi_square(c.get("seed", 0), c.get("samples", 100_000), c.get("bins", 64))
    return {"chi_square": stat, "p_value": p, "pass": p > 0.01}


EXPERIMENTS = {
    "second_moment": _second_moment,
    "markov": _markov,
    "wlln": _wlln,
    "theta": _theta,
    "renewal": _renewal,
    "fdd": _fdd,
    "approx": _approx,
    "sampler": _sampler,
}


def _save(out, name, clouds) -> None:
    if out is None:
        return
    for k, cloud in enumerate(clouds):
        (Path(out) / f"{name}_{k}.csv").write_text(cloud.to_csv())


def run_experiment(config: dict, out: str | None = None) -> dict:
    name = config.get("experiment")
    if name not in EXPERIMENTS:
        raise DomainError(f"unknown experiment {name!r}; choose from {sorted(EXPERIMENTS)}")
    if out is not None:
        Path(out).mkdir(parents=True, exist_ok=True)
    summary = {"experiment": name, "config": config, **EXPERIMENTS[name](config, out)}
    if out is not None:
        (Path(out) / "summary.json").write_text(json.dumps(summary, sort_keys=True, default=str, indent=2))
    return summary
