"""Renewal path simulation and two-replica overlap statistics.

The overlap B_N of two independent return sets counts their common returns
up to N.  Its survival function P(B_N >= k) decays geometrically; how the
decay rate depends on N separates c < 3/2 (rate bounded below), c = 3/2
(rate ~ 1/log N) and c > 3/2 (rate ~ N^{-(2c-3)}).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy import special

from . import rng as _rng
from .excursion_law import ExcursionLaw, LawError, TiltedLaw, return_mass, sampler_tables
from .excursion_law import _draw as _draw_kernel
from .quenched import parallel_map

MIN_SURVIVORS = 100
N_CHUNKS = 32


@dataclass(frozen=True)
class ReturnPath:
    """Sorted return times 0 < tau_1 < tau_2 < ... <= N."""

    returns: np.ndarray
    N: int

    def __post_init__(self):
        r = self.returns
        if len(r) and (r[0] < 1 or r[-1] > self.N or np.any(np.diff(r) < 1)):
            raise ValueError("returns must be strictly increasing within [1, N]")

    @property
    def L(self) -> int:
        return len(self.returns)

    @property
    def gaps(self) -> np.ndarray:
        return np.diff(np.concatenate(([0], self.returns)))


@dataclass(frozen=True)
class OverlapStats:
    B_N: int
    survival: np.ndarray = field(default=None, repr=False)


def _tables(law):
    t = law.tables() if isinstance(law, TiltedLaw) else sampler_tables(law)
    return t.cdf, t.guide, t.p_inf, t.tail_mode, t.tail_param


@njit(cache=True, nogil=True)
def _walk(state, cdf, guide, p_inf, mode, param, N, out):
    """Fill ``out`` with return times up to N; returns their count."""
    t = 0
    k = 0
    while True:
        e = _draw_kernel(state, cdf, guide, p_inf, mode, param)
        if e < 0 or e > N - t:
            return k
        t += e
        out[k] = t
        k += 1


def simulate_path(law, N: int, stream: _rng.Stream) -> ReturnPath:
    """Return set of a renewal path with i.i.d. gaps from ``law`` (an ExcursionLaw or TiltedLaw)."""
    N = int(N)
    if N < 1:
        raise ValueError("N must be at least 1")
    out = np.empty(N, dtype=np.int64)
    k = _walk(stream.state, *_tables(law), N, out)
    return ReturnPath(out[:k].copy(), N)


def overlap(path1: ReturnPath, path2: ReturnPath) -> OverlapStats:
    """Number of common returns of two paths on the same horizon."""
    if path1.N != path2.N:
        raise ValueError(f"horizons differ: {path1.N} vs {path2.N}")
    return OverlapStats(int(np.intersect1d(path1.returns, path2.returns, assume_unique=True).size))


@njit(cache=True, nogil=True)
def _pair_overlaps(state, cdf, guide, p_inf, mode, param, N, n_pairs, counts):
    stamp = np.zeros(N + 1, dtype=np.int64)
    for p in range(n_pairs):
        tag = p + 1
        t = 0
        while True:
            e = _draw_kernel(state, cdf, guide, p_inf, mode, param)
            if e < 0 or e > N - t:
                break
            t += e
            stamp[t] = tag
        b = 0
        t = 0
        while True:
            e = _draw_kernel(state, cdf, guide, p_inf, mode, param)
            if e < 0 or e > N - t:
                break
            t += e
            if stamp[t] == tag:
                b += 1
        counts[p] = b


def overlap_counts(law, N: int, n_pairs: int, seed: int, threads: int | None = None) -> np.ndarray:
    """B_N for ``n_pairs`` independent pairs, split into fixed chunks with child streams."""
    tables = _tables(law)
    sizes = np.full(N_CHUNKS, n_pairs // N_CHUNKS)
    sizes[: n_pairs % N_CHUNKS] += 1

    def run(i):
        out = np.empty(int(sizes[i]), dtype=np.int64)
        if len(out):
            _pair_overlaps(_rng.Stream.child(seed, i).state, *tables, int(N), len(out), out)
        return out

    return np.concatenate(parallel_map(run, range(N_CHUNKS), threads))


def survival_curve(counts: np.ndarray, k_max: int) -> np.ndarray:
    """Empirical P(B >= k) for k = 0..k_max."""
    counts = np.asarray(counts)
    hist = np.bincount(np.minimum(counts, k_max + 1), minlength=k_max + 2)
    at_least = np.cumsum(hist[::-1])[::-1]
    return at_least[: k_max + 1] / len(counts)


def decay_rate(survival: np.ndarray, n_pairs: int, min_survivors: int = MIN_SURVIVORS):
    """Geometric rate 1 - exp(mean slope of log P(B >= k)) over k >= 1 with enough survivors.

    Returns ``(rate, k_last)``; the rate is NaN when fewer than two usable k remain.
    """
    ok = survival * n_pairs >= min_survivors
    ks = np.nonzero(ok)[0]
    ks = ks[ks >= 1]
    if len(ks) < 2:
        return math.nan, int(ks[-1]) if len(ks) else 0
    # consecutive usable k form a prefix because survival is nonincreasing
    k0, k1 = int(ks[0]), int(ks[-1])
    slope = (math.log(survival[k1]) - math.log(survival[k0])) / (k1 - k0)
    return float(-math.expm1(slope)), k1


@dataclass(frozen=True)
class SurvivalPoint:
    N: int
    n_pairs: int
    survival: np.ndarray = field(repr=False)
    rate: float
    k_last: int
    mean_B: float
    se_B: float


@dataclass(frozen=True)
class SurvivalReport:
    """Decay rates across N and the regime verdict."""

    c: float
    points: list
    regime: str
    statistic: float
    target: float
    tolerance: float
    passed: bool

    @property
    def rates(self) -> np.ndarray:
        return np.array([p.rate for p in self.points])

    @property
    def Ns(self) -> np.ndarray:
        return np.array([p.N for p in self.points])


def overlap_survival_point(law: ExcursionLaw, N: int, k_max: int, n_pairs: int, seed: int,
                           threads: int | None = None) -> SurvivalPoint:
    counts = overlap_counts(law, N, n_pairs, seed, threads)
    surv = survival_curve(counts, k_max)
    rate, k_last = decay_rate(surv, n_pairs)
    return SurvivalPoint(int(N), int(n_pairs), surv, rate, k_last, float(counts.mean()),
                         float(counts.std(ddof=1) / math.sqrt(len(counts))))


def overlap_survival_check(law: ExcursionLaw, Ns, k_max: int, n_pairs: int, seed: int,
                           threads: int | None = None) -> SurvivalReport:
    """Fit the decay rate of P(B_N >= k) on each N and test its N-dependence.

    * c < 3/2: max/min of the rate over N below 2;
    * c = 3/2: max/min of rate * log N below 1.3;
    * c > 3/2: log-log slope of the rate versus N equal to -(2c - 3) within 0.2.

    Point ``i`` of the N grid uses the seed ``child_seed(seed, i)``.
    """
    if not law.heavy_regime:
        raise LawError("overlap regimes are defined for heavy-tailed laws with 1 < c < 2")
    pts = [overlap_survival_point(law, int(n), k_max, n_pairs, _rng.child_seed(seed, i), threads)
           for i, n in enumerate(Ns)]
    rates = np.array([p.rate for p in pts])
    Ns = np.array([p.N for p in pts], dtype=float)
    c = law.c
    if abs(c - 1.5) < 1e-12:
        scaled = rates * np.log(Ns)
        stat = float(scaled.max() / scaled.min())
        return SurvivalReport(c, pts, "marginal", stat, 1.0, 0.3, bool(stat < 1.3))
    if c < 1.5:
        stat = float(rates.max() / rates.min())
        return SurvivalReport(c, pts, "irrelevant", stat, 1.0, 1.0, bool(stat < 2.0))
    slope = float(np.polyfit(np.log(Ns), np.log(rates), 1)[0])
    target = -(2.0 * c - 3.0)
    return SurvivalReport(c, pts, "relevant", slope, target, 0.2, bool(abs(slope - target) <= 0.2))


def mean_overlap_prediction(law: ExcursionLaw, N: int) -> float:
    """E[B_N] = sum_{i<=N} u_i^2 for independent copies."""
    u = return_mass(law, N)
    return float(np.sum(u[1:] ** 2))


# ---------------------------------------------------------------------------
# return-probability asymptotics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ReturnAsymptoticsReport:
    """Ratios of u_n and delta_n to two candidate asymptotic forms.

    ``ratio_gamma`` uses the constant Gamma(2-c)/Gamma(c-1) with the tail
    factor of P(E_1 > n); ``ratio_sine`` uses the renewal-theorem constant
    sin(pi (c-1))/pi = 1/(Gamma(c-1) Gamma(2-c)).  The delta_n columns use the
    pmf factor phi_K, with (c-1)Gamma(2-c)/Gamma(c-1) and 1/(Gamma(c-1)Gamma(2-c)).
    """

    n: np.ndarray
    u: np.ndarray
    delta: np.ndarray
    ratio_gamma: np.ndarray
    ratio_sine: np.ndarray
    delta_ratio_gamma: np.ndarray
    delta_ratio_sine: np.ndarray


def return_asymptotics_check(law: ExcursionLaw, ns=(10**3, 10**4, 10**5)) -> ReturnAsymptoticsReport:
    """Compare the exact return probabilities with their power-law asymptotes."""
    if not (law.heavy_regime and law.phi.is_constant):
        raise LawError("asymptotic check needs a heavy-tailed law with 1 < c < 2 and constant phi")
    ns = np.asarray(ns, dtype=np.int64)
    c = law.c
    u = return_mass(law, int(ns.max()))
    csum = np.cumsum(u[1:])
    un = u[ns]
    dn = csum[ns - 1] / ns
    phi_pmf = law.mass * law.phi.a / law.norm
    phi_tail = phi_pmf / (c - 1.0)
    power = ns.astype(float) ** (c - 2.0)
    g_ratio = special.gamma(2.0 - c) / special.gamma(c - 1.0)
    sine = 1.0 / (special.gamma(c - 1.0) * special.gamma(2.0 - c))
    return ReturnAsymptoticsReport(
        ns, un, dn,
        un / (g_ratio * power / phi_tail),
        un / (sine * power / phi_tail),
        dn / ((c - 1.0) * g_ratio * power / phi_pmf),
        dn / (sine * power / phi_pmf),
    )
