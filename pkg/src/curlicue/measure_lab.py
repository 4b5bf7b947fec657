"""Monte Carlo experiments over mu_R-distributed (or uniform) rationals.

Every sample is addressed by (seed, stream, index): its uniform variate is
drawn from a ``numpy.random.SeedSequence`` keyed by that triple, so any
single sample can be replayed and results do not depend on worker count.
Samples whose expansion runs out before the required depth are skipped,
counted, and abort the experiment once they exceed ``MAX_SKIP_RATE``.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from functools import partial
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from .ecf_core import birkhoff_log_statistic
from .errors import BudgetError, DomainError, ExhaustedError, SkipRateError
from .jump_map import (iter_sigma_entries, mu_R_cdf, mu_R_density, phase_index,
                       renewal_snapshot, sample_mu_R, sigma_code, transfer_phi_R)
from .renorm_engine import fdd_point, gamma_J, reconstruct, theta_alpha
from .theta_eval import theta_sum

log = logging.getLogger(__name__)

MAX_SKIP_RATE = 1e-3
DEFAULT_PRECISION = 256


# ---- sampling ----

def uniform_variate(seed: int, index: int, precision_bits: int = DEFAULT_PRECISION,
                    stream: int = 0) -> Fraction:
    """Exact dyadic u = (2k+1)/2^(bits+1) in (0,1) for sample (seed, stream, index)."""
    words = -(-precision_bits // 32)
    state = np.random.SeedSequence([seed, stream, index]).generate_state(words, dtype=np.uint32)
    k = 0
    for w in state:
        k = (k << 32) | int(w)
    k >>= 32 * words - precision_bits
    return Fraction(2 * k + 1, 1 << (precision_bits + 1))


def sample_alpha(seed: int, index: int, precision_bits: int = DEFAULT_PRECISION,
                 stream: int = 0) -> Fraction:
    return sample_mu_R(uniform_variate(seed, index, precision_bits, stream), precision_bits)


def sample_stream(seed: int, count: int, precision_bits: int = DEFAULT_PRECISION,
                  stream: int = 0, start: int = 0) -> list[Fraction]:
    if count < 1:
        raise DomainError("count must be at least 1")
    return [sample_alpha(seed, i, precision_bits, stream) for i in range(start, start + count)]


def uniform_stream(seed: int, count: int, precision_bits: int = 64, stream: int = 0) -> list[Fraction]:
    """Uniform dyadic rationals in (0,1)."""
    return [uniform_variate(seed, i, precision_bits, stream) for i in range(count)]


# ---- distributions and KS ----

@dataclass
class EmpiricalDistribution:
    points: np.ndarray  # shape (n, dims)
    labels: tuple[str, ...] = ()
    weights: np.ndarray | None = None
    bins: list | None = None
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        if self.points.ndim == 1:
            self.points = self.points[:, None]
        n = len(self.points)
        if self.weights is None:
            self.weights = np.full(n, 1.0 / n) if n else np.zeros(0)
        if n and abs(self.weights.sum() - 1.0) > 1e-12:
            raise DomainError("weights must sum to 1")
        if self.bins is not None:
            for edges in self.bins:
                if np.any(np.diff(edges) <= 0):
                    raise DomainError("bin edges must be strictly increasing")

    @property
    def n(self) -> int:
        return len(self.points)

    @property
    def dims(self) -> int:
        return self.points.shape[1]

    def marginal(self, i: int) -> np.ndarray:
        return self.points[:, i]

    def histogram(self, bins: int | Sequence = 20) -> tuple[np.ndarray, list]:
        """Axis-aligned half-open histogram of total mass 1."""
        if self.bins is not None:
            edges = self.bins
        else:
            edges = []
            for i in range(self.dims):
                lo, hi = self.points[:, i].min(), self.points[:, i].max()
                edges.append(np.linspace(lo, np.nextafter(hi, np.inf), (bins if isinstance(bins, int) else bins[i]) + 1))
        mass, _ = np.histogramdd(self.points, bins=edges, weights=self.weights)
        return mass, edges

    def to_csv(self) -> str:
        head = ",".join(self.labels or [f"x{i}" for i in range(self.dims)])
        rows = "\n".join(",".join(repr(float(v)) for v in row) for row in self.points)
        return head + "\n" + rows + "\n"


@dataclass(frozen=True)
class KsReport:
    statistic: float
    n1: int
    n2: int
    threshold: float | None = None
    marginal: str = ""

    @property
    def passed(self) -> bool:
        return self.threshold is None or self.statistic < self.threshold

    def to_json(self) -> dict:
        return {"statistic": self.statistic, "n1": self.n1, "n2": self.n2,
                "threshold": self.threshold, "marginal": self.marginal, "pass": self.passed}


def ks_distance(a: EmpiricalDistribution, b: EmpiricalDistribution,
                threshold: float | None = None) -> KsReport:
    """Max over the 1-d marginals of the two-sample KS statistic."""
    if a.dims != b.dims:
        raise DomainError("clouds have different dimensions")
    worst, name = 0.0, ""
    for i in range(a.dims):
        d = stats.ks_2samp(a.marginal(i), b.marginal(i)).statistic
        if d >= worst:
            worst, name = float(d), (a.labels[i] if a.labels else str(i))
    return KsReport(worst, a.n, b.n, threshold, name)


# ---- sample loop with skip accounting ----

@dataclass
class SkipTally:
    attempted: int = 0
    skipped: int = 0
    reasons: dict = field(default_factory=dict)

    def add(self, reason: str):
        self.skipped += 1
        self.reasons[reason] = self.reasons.get(reason, 0) + 1

    @property
    def rate(self) -> float:
        return self.skipped / self.attempted if self.attempted else 0.0

    def check(self, limit: float = MAX_SKIP_RATE):
        if self.rate > limit:
            raise SkipRateError(f"skipped {self.skipped}/{self.attempted} samples "
                                f"({self.reasons}); raise precision_bits")


def _guarded(fn: Callable, index: int):
    try:
        return fn(index)
    except (ExhaustedError, BudgetError) as exc:
        return exc


def run_samples(fn: Callable[[int], object], count: int, workers: int = 1,
                skip_limit: float = MAX_SKIP_RATE) -> tuple[list, SkipTally]:
    """Evaluate fn(0..count-1) in index order; exhaustion/budget errors are skips."""
    tally = SkipTally(attempted=count)
    job = partial(_guarded, fn)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            raw = list(pool.map(job, range(count), chunksize=max(1, count // (8 * workers))))
    else:
        raw = [job(i) for i in range(count)]
    out = []
    for item in raw:
        if isinstance(item, Exception):
            tally.add(type(item).__name__)
        else:
            out.append(item)
    if tally.skipped:
        log.info("skipped %d of %d samples: %s", tally.skipped, count, tally.reasons)
    tally.check(skip_limit)
    return out, tally


# ---- sampler checks ----

def sampler_chi_square(seed: int, samples: int = 100_000, bins: int = 64,
                       precision_bits: int = 64) -> tuple[float, float]:
    """Chi-square of mu_R samples in equal-mass bins of mu_R; returns (statistic, p)."""
    xs = np.array([float(a) for a in sample_stream(seed, samples, precision_bits)])
    cells = np.minimum((mu_R_cdf(xs) * bins).astype(int), bins - 1)
    counts = np.bincount(cells, minlength=bins)
    res = stats.chisquare(counts, np.full(bins, samples / bins))
    return float(res.statistic), float(res.pvalue)


def sampler_ks(seed: int, samples: int = 10_000, precision_bits: int = 64) -> float:
    xs = np.array([float(a) for a in sample_stream(seed, samples, precision_bits)])
    return float(stats.kstest(xs, mu_R_cdf).statistic)


# ---- finite-dimensional distributions ----

def _fdd_sample(seed, stream, precision_bits, N, times, J, index):
    alpha = sample_alpha(seed, index, precision_bits, stream)
    if J is None:
        return [reconstruct(alpha, N, t) for t in times]
    return fdd_point(alpha, N, times, J)


def _complex_cloud(values: list[list[complex]], times, provenance) -> EmpiricalDistribution:
    arr = np.array(values, dtype=complex)
    cols, labels = [], []
    for j, t in enumerate(times):
        cols += [arr[:, j].real, arr[:, j].imag, np.abs(arr[:, j])]
        labels += [f"re(t={t})", f"im(t={t})", f"abs(t={t})"]
    return EmpiricalDistribution(np.column_stack(cols), tuple(labels), provenance=provenance)


@dataclass
class StabilityChain:
    clouds: list[EmpiricalDistribution]
    ks: list[KsReport]
    skips: list[SkipTally]

    @property
    def decreasing(self) -> bool:
        d = [r.statistic for r in self.ks]
        return all(b < a for a, b in zip(d, d[1:]))

    def to_json(self) -> dict:
        return {"ks": [r.to_json() for r in self.ks], "decreasing": self.decreasing,
                "skipped": [s.skipped for s in self.skips], "n": [c.n for c in self.clouds]}


def estimate_fdd(times: Sequence, Ns: Sequence[int], samples: int, J: int | None,
                 seed: int = 0, precision_bits: int = DEFAULT_PRECISION,
                 workers: int = 1, ks_threshold: float | None = None) -> StabilityChain:
    """Clouds of (gamma^J(t_1), ..., gamma^J(t_k)) per N and KS between consecutive N.

    ``J=None`` evaluates the untruncated curve through ``reconstruct``.
    Each N draws from its own substream so consecutive clouds are independent.
    """
    times = [Fraction(t) if not isinstance(t, Fraction) else t for t in times]
    if not times:
        raise DomainError("need at least one time")
    if any(b <= a for a, b in zip(Ns, Ns[1:])):
        raise DomainError("Ns must be increasing")
    clouds, skips = [], []
    for stream, N in enumerate(Ns):
        fn = partial(_fdd_sample, seed, stream, precision_bits, N, times, J)
        vals, tally = run_samples(fn, samples, workers)
        prov = {"seed": seed, "stream": stream, "N": N, "J": J, "precision_bits": precision_bits}
        clouds.append(_complex_cloud(vals, [str(t) for t in times], prov))
        skips.append(tally)
    ks = [ks_distance(a, b, ks_threshold) for a, b in zip(clouds, clouds[1:])]
    return StabilityChain(clouds, ks, skips)


# ---- renewal and Theta ----

def _renewal_sample(seed, stream, precision_bits, N, N1, N2, index):
    alpha = sample_alpha(seed, index, precision_bits, stream)
    snap = renewal_snapshot(alpha, N, N1, N2)
    window = [v for e in snap.window for v in e.as_list()]
    return [snap.ratio_prev, snap.ratio_next, *window, snap.phase_at.x, snap.phase_at.y]


def renewal_distribution(N: int, samples: int, N1: int = 1, N2: int = 0, seed: int = 0,
                         precision_bits: int = DEFAULT_PRECISION, stream: int = 0,
                         workers: int = 1) -> EmpiricalDistribution:
    if N1 + N2 > 4:
        raise DomainError("window sizes above 4 leave the cells unpopulated")
    fn = partial(_renewal_sample, seed, stream, precision_bits, N, N1, N2)
    rows, tally = run_samples(fn, samples, workers)
    labels = ["ratio_prev", "ratio_next"]
    for w in range(N1 + N2):
        labels += [f"h{w}", f"m{w}", f"zeta{w}"]
    labels += ["x", "y"]
    prov = {"seed": seed, "stream": stream, "N": N, "skipped": tally.skipped}
    return EmpiricalDistribution(np.array(rows, dtype=float), tuple(labels), provenance=prov)


def _theta_sample(seed, stream, precision_bits, N, index):
    return theta_alpha(sample_alpha(seed, index, precision_bits, stream), N)


def theta_distribution(N: int, samples: int, seed: int = 0,
                       precision_bits: int = DEFAULT_PRECISION, stream: int = 0,
                       workers: int = 1) -> EmpiricalDistribution:
    fn = partial(_theta_sample, seed, stream, precision_bits, N)
    vals, tally = run_samples(fn, samples, workers)
    prov = {"seed": seed, "stream": stream, "N": N, "skipped": tally.skipped}
    return EmpiricalDistribution(np.array(vals), ("theta",), provenance=prov)


# ---- Markov chain over (zeta, z) ----

@dataclass
class MarkovEstimate:
    Pi: np.ndarray
    stationary: np.ndarray
    counts: np.ndarray
    initial: np.ndarray
    xy_occupation: np.ndarray  # empirical law of (x_n, y_n) at the last index
    undersampled: list = field(default_factory=list)

    def distance_profile(self, ns: Sequence[int]) -> list[float]:
        """||pi Pi^n - pi Pi^(2n)||_1 for the initial law pi."""
        out = []
        for n in ns:
            a = self.initial @ np.linalg.matrix_power(self.Pi, n)
            b = self.initial @ np.linalg.matrix_power(self.Pi, 2 * n)
            out.append(float(np.abs(a - b).sum()))
        return out

    def xy_law(self, n: int) -> np.ndarray:
        """Law of (x_n, y_n) under the Markov approximation of (zeta, z).

        Propagates the joint state (previous (zeta, z), x, y) with
        x_n = -zeta_n x_{n-1} and y_n = y_{n-1} + z_n x_{n-1}.
        """
        joint = np.zeros((16, 2, 8))
        for w in range(16):
            zeta, z = _state(w)
            joint[w, 0 if -zeta == 1 else 1, z % 8] += self.initial[w]
        for _ in range(n - 1):
            nxt = np.zeros_like(joint)
            for w in range(16):
                for xi in range(2):
                    x = 1 if xi == 0 else -1
                    block = joint[w, xi]
                    if not block.any():
                        continue
                    for v in range(16):
                        zeta, z = _state(v)
                        p = self.Pi[w, v]
                        x_new = -zeta * x
                        nxt[v, 0 if x_new == 1 else 1] += p * np.roll(block, (z * x) % 8)
            joint = nxt
        law = joint.sum(axis=0)
        return law.reshape(16)


def _state(w: int) -> tuple[int, int]:
    return (1 if w < 8 else -1), w % 8


def _markov_sample(seed, precision_bits, orbit_len, index):
    alpha = sample_alpha(seed, index, precision_bits, stream=0)
    states = []
    x, y = 1, 0
    for e in iter_sigma_entries(alpha):
        states.append(phase_index(e.zeta, e.h - e.zeta))
        y = (y + (e.h - e.zeta) * x) % 8
        x = -e.zeta * x
        if len(states) == orbit_len:
            return states, phase_index(x, y)
    raise ExhaustedError(f"only {len(states)} entries available")


def markov_estimate(samples: int, orbit_len: int = 1000, seed: int = 0,
                    precision_bits: int = 8192, workers: int = 1) -> MarkovEstimate:
    """Tally (zeta_n, z_n) -> (zeta_{n+1}, z_{n+1}) along Sigma-codings."""
    if orbit_len < 1000:
        raise DomainError("orbit_len must be at least 10^3")
    fn = partial(_markov_sample, seed, precision_bits, orbit_len)
    orbits, tally = run_samples(fn, samples, workers)
    counts = np.zeros((16, 16), dtype=np.int64)
    first = np.zeros(16, dtype=np.int64)
    last_xy = np.zeros(16, dtype=np.int64)
    for states, xy in orbits:
        s = np.asarray(states)
        np.add.at(counts, (s[:-1], s[1:]), 1)
        first[s[0]] += 1
        last_xy[xy] += 1
    rows = counts.sum(axis=1, keepdims=True)
    undersampled = [int(i) for i in np.flatnonzero(rows[:, 0] < 100)]
    Pi = np.divide(counts, rows, out=np.zeros((16, 16)), where=rows > 0)
    Pi = Pi / Pi.sum(axis=1, keepdims=True)
    vals, vecs = np.linalg.eig(Pi.T)
    stationary = np.real(vecs[:, np.argmin(np.abs(vals - 1))])
    stationary = stationary / stationary.sum()
    return MarkovEstimate(Pi, stationary, counts, first / first.sum(),
                          last_xy / last_xy.sum(), undersampled)


# ---- ergodic and moment checks ----

@dataclass(frozen=True)
class Summary:
    n: int
    median: float
    iqr: float
    count: int
    skipped: int

    def to_json(self) -> dict:
        return self.__dict__.copy()


def _wlln_sample(seed, stream, precision_bits, n, index):
    alpha = sample_alpha(seed, index, precision_bits, stream)
    return birkhoff_log_statistic(alpha, n)


def wlln_experiment(ns: Sequence[int], samples: int, seed: int = 0,
                    precision_bits: int = 16384, workers: int = 1) -> list[Summary]:
    """Distribution of (log n / n) log(1/(alpha_0...alpha_{n-1})) per n."""
    out = []
    for stream, n in enumerate(ns):
        fn = partial(_wlln_sample, seed, stream, precision_bits, n)
        vals, tally = run_samples(fn, samples, workers)
        q1, med, q3 = np.percentile(vals, [25, 50, 75])
        out.append(Summary(n, float(med), float(q3 - q1), len(vals), tally.skipped))
    return out


@dataclass(frozen=True)
class MomentReport:
    mean: float
    std_error: float
    variance: float
    samples: int
    expected: float

    @property
    def sigmas(self) -> float:
        return abs(self.mean - self.expected) / self.std_error if self.std_error else math.inf

    def to_json(self) -> dict:
        return {"mean": self.mean, "std_error": self.std_error, "variance": self.variance,
                "samples": self.samples, "expected": self.expected, "sigmas": self.sigmas}


def second_moment_check(N: int, samples: int, seed: int = 0,
                        expected: float = 0.5) -> MomentReport:
    """Mean of |S(alpha, N)|^2 / N over uniform alpha in (0,1)."""
    vals = np.array([abs(theta_sum(a, N)) ** 2 / N for a in uniform_stream(seed, samples)])
    var = float(vals.var(ddof=1)) if samples > 1 else 0.0
    return MomentReport(float(vals.mean()), math.sqrt(var / samples), var, samples, expected)


# ---- gamma vs gamma^J ----

@dataclass(frozen=True)
class ApproxRow:
    J: int
    q50: float
    q90: float
    q99: float


@dataclass
class ApproxTable:
    rows: list[ApproxRow]
    rate: float
    r_squared: float
    skipped: int

    @property
    def strictly_decreasing(self) -> bool:
        q = [r.q90 for r in self.rows]
        return all(b < a for a, b in zip(q, q[1:]))

    def to_json(self) -> dict:
        return {"rows": [r.__dict__ for r in self.rows], "rate": self.rate,
                "r_squared": self.r_squared, "decreasing": self.strictly_decreasing,
                "skipped": self.skipped}


def _approx_sample(seed, precision_bits, N, Js, index):
    alpha = sample_alpha(seed, index, precision_bits)
    full = theta_sum(alpha, N) / math.sqrt(N)
    coding = sigma_code(alpha, qhat_above=N)
    return [abs(full - gamma_J(alpha, N, 1, J, coding=coding).value) for J in Js]


def approx_error_experiment(Js: Sequence[int], N: int, samples: int, seed: int = 0,
                            precision_bits: int = DEFAULT_PRECISION,
                            workers: int = 1) -> ApproxTable:
    """Quantiles of |gamma(1) - gamma^J(1)| per J and a log-linear fit of q90."""
    fn = partial(_approx_sample, seed, precision_bits, N, list(Js))
    errs, tally = run_samples(fn, samples, workers)
    errs = np.array(errs)
    rows = []
    for k, J in enumerate(Js):
        q50, q90, q99 = np.percentile(errs[:, k], [50, 90, 99])
        rows.append(ApproxRow(J, float(q50), float(q90), float(q99)))
    q90 = np.array([r.q90 for r in rows])
    if len(rows) >= 2 and np.all(q90 > 0):
        fit = stats.linregress(np.array(Js, dtype=float), np.log(q90))
        rate, r2 = float(-fit.slope), float(fit.rvalue ** 2)
    else:
        rate, r2 = math.nan, math.nan
    return ApproxTable(rows, rate, r2, tally.skipped)


# ---- invariance of phi_R ----

def invariance_residual(xs: Sequence[float], h_max: int = 1000) -> np.ndarray:
    """(P phi_R - phi_R)(x) for the transfer operator of R."""
    xs = np.asarray(xs, dtype=float)
    return np.array([transfer_phi_R(x, h_max) for x in xs]) - mu_R_density(xs)

