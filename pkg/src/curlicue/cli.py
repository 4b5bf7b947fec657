"""Command-line front end.

Exit codes: 0 success, 1 a pass/fail check failed, 2 usage or domain
error, 3 budget exceeded, 4 I/O error, 5 too many skipped samples.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import statistics
import sys
import time
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .ecf_core import as_rational, convergents, ecf_expand
from .errors import (BudgetError, CurlicueError, DenominatorBudgetError, DomainError,
                     ExhaustedError, SkipRateError)
from .jump_map import phase_state, renewal_snapshot, sigma_encode
from .renorm_engine import DEFAULT_COST_CEILING, build_trace, gamma_J, reconstruct
from .theta_eval import curl_partition, curve_points, theta_sum

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_BUDGET, EXIT_IO, EXIT_ABORT = 0, 1, 2, 3, 4, 5
NAIVE_BUDGET = 10 ** 9

log = logging.getLogger("curlicue")


@dataclass
class RunConfig:
    subcommand: str
    alpha: str | None = None
    N: int | None = None
    t: list = field(default_factory=lambda: ["1"])
    J: int = 10
    seed: int = 0
    precision_bits: int = 256
    format: str = "json"
    budget: int = NAIVE_BUDGET
    cost_ceiling: int = DEFAULT_COST_CEILING

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        return cls(**json.loads(text))


def config_from_args(args) -> RunConfig:
    known = RunConfig.__dataclass_fields__
    values = {k: v for k, v in vars(args).items() if k in known}
    if isinstance(values.get("t"), str):
        values["t"] = [values["t"]]
    return RunConfig(**values)


def _fraction_text(x: Fraction) -> str:
    return f"{x.numerator}/{x.denominator}"


def _emit(obj, args) -> None:
    if getattr(args, "json", False):
        print(json.dumps(obj, sort_keys=True, default=str))
    else:
        for key, value in obj.items():
            print(f"{key}: {value}")


# ---- subcommands ----

def cmd_expand(args) -> int:
    alpha = as_rational(args.alpha)
    exp = ecf_expand(alpha, args.max_digits)
    coding = sigma_encode(exp)
    conv = convergents(exp, len(exp.digits))
    states = [phase_state(coding, n) for n in range(len(coding.entries) + 1)]
    report = {
        "alpha": _fraction_text(alpha),
        "digits": [str(d) for d in exp.digits],
        "exhausted": exp.exhausted,
        "sigma_entries": [e.as_list() for e in coding.entries],
        "nu": list(coding.nu),
        "qhat": list(coding.qhat),
        "q": list(conv.q),
        "phase": [[s.x, s.y] for s in states],
    }
    _emit(report, args)
    return EXIT_OK


def _timed(fn, repeat: int):
    times, value = [], None
    for _ in range(max(repeat, 1)):
        start = time.perf_counter()
        value = fn()
        times.append(time.perf_counter() - start)
    return value, statistics.median(times)


def cmd_eval(args) -> int:
    alpha = as_rational(args.alpha)
    t = as_rational(args.t)
    N = args.N
    report: dict = {"alpha": _fraction_text(alpha), "N": N, "t": str(t), "J": args.J}
    naive = fast = None
    if args.mode in ("naive", "both"):
        if t * N > args.budget:
            raise BudgetError(f"naive sum of {t * N} terms exceeds budget {args.budget}")
        naive, report["naive_seconds"] = _timed(lambda: theta_sum(alpha, t * N) / math.sqrt(N), args.bench)
        report["naive"] = [naive.real, naive.imag]
    if args.mode in ("fast", "both"):
        res, report["fast_seconds"] = _timed(
            lambda: gamma_J(alpha, N, t, args.J, cost_ceiling=args.cost_ceiling), args.bench)
        fast = res.value
        report.update(fast=[fast.real, fast.imag], n_hat=res.n_hat, terms_cost=res.terms_cost,
                      truncation_scale=res.truncation_bound, untruncated=res.fallback)
    if args.reconstruct:
        rec = reconstruct(alpha, N, t)
        report["reconstruct"] = [rec.real, rec.imag]
        if naive is not None:
            report["naive_minus_reconstruct"] = abs(naive - rec)
    if naive is not None and fast is not None:
        report["difference"] = abs(naive - fast)
    _emit(report, args)
    return EXIT_OK


def _write(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise IOError(f"cannot write {path}: {exc}") from exc


def cmd_curve(args) -> int:
    alpha = as_rational(args.alpha)
    N = args.N
    points = args.points or N + 1
    ts = [Fraction(k, points - 1) for k in range(points)] if points > 1 else [Fraction(0)]
    path = curve_points(alpha, N, ts, budget=args.budget)
    text = path.to_svg() if args.format == "svg" else path.to_csv()
    if args.format == "svg" and args.overlay:
        geom = curl_partition(alpha, N)
        marks = "".join(
            f'<circle cx="{z.real:.9g}" cy="{-z.imag:.9g}" r="{0.5 / math.sqrt(N):.9g}" fill="red"/>\n'
            for z in curve_points(alpha, N, [c for c in geom.curl_times if c <= 1]).z)
        text = text.replace("</svg>\n", marks + "</svg>\n")
    _write(args.out, text)
    return EXIT_OK


def cmd_renewal(args) -> int:
    alpha = as_rational(args.alpha)
    snap = renewal_snapshot(alpha, args.N, args.N1, args.N2)
    trace = build_trace(alpha, args.N) if args.trace else None
    report = snap.to_json()
    if trace is not None:
        report["trace"] = trace.to_json()
    _emit(report, args)
    return EXIT_OK


def cmd_dist(args) -> int:
    from . import measure_lab as lab
    if args.kind == "theta":
        cloud = lab.theta_distribution(args.N, args.samples, args.seed, args.precision_bits,
                                       workers=args.threads)
    elif args.kind == "renewal":
        cloud = lab.renewal_distribution(args.N, args.samples, args.N1, args.N2, args.seed,
                                         args.precision_bits, workers=args.threads)
    else:
        chain = lab.estimate_fdd([as_rational(t) for t in args.t], [args.N], args.samples,
                                 args.J, args.seed, args.precision_bits, workers=args.threads)
        cloud = chain.clouds[0]
    if args.out:
        _write(args.out, cloud.to_csv())
    summary = {"n": cloud.n, "labels": list(cloud.labels),
               "mean": cloud.points.mean(axis=0).tolist(),
               "median": np.median(cloud.points, axis=0).tolist()}
    _emit(summary, args)
    return EXIT_OK


def cmd_markov(args) -> int:
    from . import measure_lab as lab
    est = lab.markov_estimate(args.samples, args.orbit_len, args.seed, args.precision_bits,
                              workers=args.threads)
    report = {
        "positive_entries": int((est.Pi > 0).sum()),
        "row_sum_error": float(np.abs(est.Pi.sum(axis=1) - 1).max()),
        "stationary": est.stationary.round(6).tolist(),
        "distance_profile": est.distance_profile(range(1, 9)),
        "undersampled_rows": est.undersampled,
    }
    if args.matrix:
        report["Pi"] = est.Pi.tolist()
    _emit(report, args)
    return EXIT_OK if report["positive_entries"] == 256 else EXIT_FAIL


def cmd_verify(args) -> int:
    from .exactness import run_exactness_suite
    res = run_exactness_suite(args.instances, args.seed)
    _emit(res.to_json(), args)
    return EXIT_OK if res.passed else EXIT_FAIL


def cmd_bench(args) -> int:
    from .measure_lab import sample_stream
    alphas = sample_stream(args.seed, args.samples, args.precision_bits)
    fast_times, naive_times, fallbacks = [], [], 0
    for a in alphas:
        res, dt = _timed(lambda: gamma_J(a, args.N, 1, args.J, cost_ceiling=args.cost_ceiling), 1)
        fast_times.append(dt)
        fallbacks += res.fallback
        if not args.skip_naive:
            naive_times.append(_timed(lambda: theta_sum(a, args.N), 1)[1])
    report = {"N": args.N, "J": args.J, "samples": args.samples,
              "gamma_J_median_seconds": statistics.median(fast_times),
              "untruncated_samples": fallbacks}
    if naive_times:
        report["naive_median_seconds"] = statistics.median(naive_times)
        report["speedup"] = report["naive_median_seconds"] / report["gamma_J_median_seconds"]
    _emit(report, args)
    return EXIT_OK


def cmd_experiment(args) -> int:
    from .experiments import run_experiment
    try:
        config = json.loads(Path(args.config).read_text())
    except OSError as exc:
        raise IOError(f"cannot read {args.config}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DomainError(f"config is not valid JSON: {exc}") from exc
    config.setdefault("workers", args.threads)
    summary = run_experiment(config, args.out)
    print(json.dumps(summary, sort_keys=True, default=str))
    return EXIT_OK if summary.get("pass") else EXIT_FAIL


# ---- parser ----

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="curlicue", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    parser.add_argument("--threads", type=int, default=1,
                        help="worker cap for sample-parallel experiments (results do not depend on it)")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def add(name, fn, help_text):
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.set_defaults(func=fn)
        p.add_argument("--json", action="store_true", help="print one JSON object")
        return p

    p = add("expand", cmd_expand, "ECF digits, Sigma-entries, nu, R-denominators and phase states")
    p.add_argument("alpha", help='"p/q", an integer, or a decimal (read as its exact binary value)')
    p.add_argument("--max-digits", type=int, default=64, help="digit limit (default 64)")

    p = add("eval", cmd_eval, "naive and renormalized evaluation of N^{-1/2} S(alpha, tN)")
    p.add_argument("alpha")
    p.add_argument("N", type=int)
    p.add_argument("--t", default="1", help="curve time in [0,1] (default 1)")
    p.add_argument("--J", type=int, default=10, help="retained Sigma-entries (default 10)")
    p.add_argument("--mode", choices=("both", "fast", "naive"), default="both")
    p.add_argument("--reconstruct", action="store_true", help="also evaluate the full renormalization")
    p.add_argument("--bench", type=int, default=1, metavar="REPEAT", help="repeat and report median times")
    p.add_argument("--budget", type=int, default=NAIVE_BUDGET, help="naive term budget (default 1e9)")
    p.add_argument("--cost-ceiling", type=int, default=DEFAULT_COST_CEILING,
                   help="gamma^J term ceiling (default 1e7)")

    p = add("curve", cmd_curve, "write the curve t -> N^{-1/2} S(alpha, tN) as SVG or CSV")
    p.add_argument("alpha")
    p.add_argument("N", type=int)
    p.add_argument("--points", type=int, default=None, help="number of equally spaced times (default N+1)")
    p.add_argument("--format", choices=("svg", "csv"), default="svg")
    p.add_argument("--overlay", action="store_true", help="mark curl times on the SVG")
    p.add_argument("--out", default=None, help="output file (default stdout)")
    p.add_argument("--budget", type=int, default=10 ** 8, help="term budget (default 1e8)")

    p = add("renewal", cmd_renewal, "renewal snapshot at N")
    p.add_argument("alpha")
    p.add_argument("N", type=int)
    p.add_argument("--N1", type=int, default=1, help="entries before the renewal index (default 1)")
    p.add_argument("--N2", type=int, default=0, help="entries after the renewal index (default 0)")
    p.add_argument("--trace", action="store_true", help="include the level ladder")

    p = add("dist", cmd_dist, "sample a Theta, renewal or gamma^J cloud")
    p.add_argument("kind", choices=("theta", "renewal", "fdd"))
    p.add_argument("N", type=int)
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--precision-bits", type=int, default=256)
    p.add_argument("--N1", type=int, default=1)
    p.add_argument("--N2", type=int, default=0)
    p.add_argument("--t", nargs="+", default=["1"], help="curve times for fdd")
    p.add_argument("--J", type=int, default=12)
    p.add_argument("--out", default=None, help="CSV file for the cloud")

    p = add("markov", cmd_markov, "estimate the (zeta, z) transition matrix")
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--orbit-len", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--precision-bits", type=int, default=8192)
    p.add_argument("--matrix", action="store_true", help="include the full matrix")

    p = add("verify", cmd_verify, "exact-arithmetic invariant suite")
    p.add_argument("--instances", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)

    p = add("bench", cmd_bench, "median runtime of gamma^J versus the naive sum")
    p.add_argument("--N", type=int, default=10 ** 8)
    p.add_argument("--J", type=int, default=10)
    p.add_argument("--samples", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--precision-bits", type=int, default=512)
    p.add_argument("--cost-ceiling", type=int, default=10 ** 9)
    p.add_argument("--skip-naive", action="store_true")

    p = add("experiment", cmd_experiment, "run a measure_lab experiment from a JSON config")
    p.add_argument("config")
    p.add_argument("--out", default=None, help="directory for summary and cloud files")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    log.info("config %s", config_from_args(args).to_json())
    try:
        return args.func(args)
    except (BudgetError, DenominatorBudgetError) as exc:
        print(f"budget: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except SkipRateError as exc:
        print(f"aborted: {exc}", file=sys.stderr)
        return EXIT_ABORT
    except (DomainError, ExhaustedError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"io: {exc}", file=sys.stderr)
        return EXIT_IO
    except CurlicueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
