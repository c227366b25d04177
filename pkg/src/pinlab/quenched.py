"""Exact finite-volume partition functions by renewal dynamic programming.

For a disorder vector V_1..V_N and potential u, the pinned partial sums

    z(0) = 1,   z(n) = e^{beta (u + V_n)} * sum_{j<n} z(j) K(n - j)

give the free-endpoint partition function Z_N = sum_j z(j) tail(N - j).  The
kernel works on linear weights z(j) e^{-R} with a lagged reference R that is
moved only when the weights drift by more than e^{200}; whenever the linear
sum would lose precision it falls back to an exact max-shifted logsumexp.
A second accumulator r(n) = E[#returns | pinned at n] yields the Gibbs mean
of L_N in the same pass.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .annealed import PinningParams
from .excursion_law import ExcursionLaw
from .rng import Stream, child_seed

N_MAX_DEFAULT = 2**16
_REBASE = 200.0
_HEADROOM = 600.0
_SMALL = 1e-250


@dataclass(frozen=True)
class DisorderRealization:
    """Standard Gaussian disorder regenerated from ``(seed, replica_index)``."""

    values: np.ndarray
    seed: int
    replica_index: int

    @classmethod
    def generate(cls, seed: int, replica_index: int, N: int) -> "DisorderRealization":
        return cls(Stream.child(seed, replica_index).normal(N), int(seed), int(replica_index))

    @classmethod
    def zeros(cls, N: int) -> "DisorderRealization":
        return cls(np.zeros(int(N)), 0, -1)

    @property
    def N(self) -> int:
        return len(self.values)

    @property
    def child_seed(self) -> int:
        return child_seed(self.seed, self.replica_index)

    def prefix(self, n: int) -> "DisorderRealization":
        return DisorderRealization(self.values[:n], self.seed, self.replica_index)


@dataclass(frozen=True)
class DPResult:
    """Output of one renewal DP.

    ``log_z_pinned[n]`` is log z(n) and ``contacts_pinned[n]`` the Gibbs mean
    number of returns given a return at n; both allow cheap evaluation at any
    prefix length via :meth:`at`.
    """

    log_Z: float
    mean_LN: float
    log_z_pinned: np.ndarray = field(repr=False)
    contacts_pinned: np.ndarray = field(repr=False)
    N: int = 0
    log_tail: np.ndarray = field(repr=False, default=None)

    @property
    def free_energy_density(self) -> float:
        return self.log_Z / self.N

    @property
    def contact_fraction(self) -> float:
        return self.mean_LN / self.N

    def at(self, n: int) -> "DPResult":
        """Result for the system truncated to its first ``n`` monomers."""
        if not 1 <= n <= self.N:
            raise ValueError(f"prefix length must lie in [1, {self.N}]")
        lz, r = self.log_z_pinned[: n + 1], self.contacts_pinned[: n + 1]
        log_Z, mean_LN = _endpoint(lz, r, self.log_tail[: n + 1])
        return DPResult(log_Z, mean_LN, lz, r, n, self.log_tail[: n + 1])


@dataclass(frozen=True)
class EstimateWithCI:
    """Monte Carlo mean with standard error ``std/sqrt(n)``."""

    mean: float
    std_error: float
    n_replicas: int
    per_replica: np.ndarray | None = field(default=None, repr=False)

    @classmethod
    def from_samples(cls, x) -> "EstimateWithCI":
        x = np.asarray(x, dtype=float)
        n = len(x)
        se = float(np.std(x, ddof=1) / math.sqrt(n)) if n > 1 else math.nan
        return cls(float(np.mean(x)), se, n, x)

    @property
    def sample_std(self) -> float:
        return self.std_error * math.sqrt(self.n_replicas)


# ---------------------------------------------------------------------------
# kernel
# ---------------------------------------------------------------------------


@njit(cache=True, nogil=True)
def _dp_kernel(K, logK, pot, lz, r):
    N = pot.shape[0] - 1
    zt = np.zeros(N + 1)
    lz[0] = 0.0
    r[0] = 0.0
    zt[0] = 1.0
    R = 0.0
    top = 0.0  # running max of lz
    for n in range(1, N + 1):
        s = 0.0
        sr = 0.0
        for j in range(n):
            w = zt[j] * K[n - j]
            s += w
            sr += w * r[j]
        if s > _SMALL and s < np.inf:
            lz[n] = pot[n] + R + np.log(s)
            r[n] = 1.0 + sr / s
        else:
            m = -np.inf
            for j in range(n):
                v = lz[j] + logK[n - j]
                if v > m:
                    m = v
            if m == -np.inf:
                lz[n] = -np.inf
                r[n] = 0.0
                zt[n] = 0.0
                continue
            s = 0.0
            sr = 0.0
            for j in range(n):
                v = lz[j] + logK[n - j]
                if v > -np.inf:
                    w = np.exp(v - m)
                    s += w
                    sr += w * r[j]
            lz[n] = pot[n] + m + np.log(s)
            r[n] = 1.0 + sr / s
        if lz[n] > top:
            top = lz[n]
        target = max(lz[n], top - _HEADROOM)
        if abs(target - R) > _REBASE:
            R = target
            for j in range(n + 1):
                zt[j] = np.exp(lz[j] - R)
        else:
            zt[n] = np.exp(lz[n] - R)


@njit(cache=True, nogil=True)
def _endpoint(lz, r, logT):
    N = lz.shape[0] - 1
    m = -np.inf
    for j in range(N + 1):
        v = lz[j] + logT[N - j]
        if v > m:
            m = v
    s = 0.0
    sr = 0.0
    for j in range(N + 1):
        v = lz[j] + logT[N - j]
        if v > -np.inf:
            w = np.exp(v - m)
            s += w
            sr += w * r[j]
    return m + np.log(s), sr / s


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------


def _law_arrays(law: ExcursionLaw, N: int):
    with law._lock:
        cached = law._cache.get("dp_arrays")
    if cached is None or len(cached[0]) < N + 1:
        K = law.pmf_array(N)
        T = law.tail_array(N)
        with np.errstate(divide="ignore"):
            cached = (K, np.log(K), np.log(T))
        with law._lock:
            law._cache["dp_arrays"] = cached
    K, logK, logT = cached
    return K[: N + 1], logK[: N + 1], logT[: N + 1]


def _values(disorder) -> np.ndarray:
    if isinstance(disorder, DisorderRealization):
        return disorder.values
    return np.asarray(disorder, dtype=float)


def dp_log_partition(law: ExcursionLaw, params: PinningParams, disorder, n_max: int = N_MAX_DEFAULT) -> DPResult:
    """log Z_N and the Gibbs mean of L_N for one disorder realization.

    Parameters
    ----------
    law : ExcursionLaw
    params : PinningParams
    disorder : DisorderRealization or array_like
        V_1..V_N.
    n_max : int
        Refuse systems longer than this (the DP is O(N^2)).
    """
    V = _values(disorder)
    N = len(V)
    if N < 1:
        raise ValueError("disorder must have length >= 1")
    if N > n_max:
        raise ValueError(f"N={N} exceeds the DP cap {n_max}")
    K, logK, logT = _law_arrays(law, N)
    pot = np.empty(N + 1)
    pot[0] = 0.0
    pot[1:] = params.beta * (params.u + V)
    lz = np.empty(N + 1)
    r = np.empty(N + 1)
    _dp_kernel(K, logK, pot, lz, r)
    log_Z, mean_LN = _endpoint(lz, r, logT)
    return DPResult(float(log_Z), float(mean_LN), lz, r, N, logT)


def dp_mean_contacts(law: ExcursionLaw, params: PinningParams, disorder) -> float:
    """Gibbs mean of the number of returns L_N."""
    return dp_log_partition(law, params, disorder).mean_LN


def mean_contacts_fd(law: ExcursionLaw, params: PinningParams, disorder, h: float | None = None) -> float:
    """beta^{-1} d/du log Z_N by central differences (cross-check of the accumulator)."""
    if h is None:
        h = max(1e-5, 1e-3 * abs(params.delta))
    up = dp_log_partition(law, params.shifted(h), disorder).log_Z
    dn = dp_log_partition(law, params.shifted(-h), disorder).log_Z
    return (up - dn) / (2.0 * h * params.beta)


def annealed_dp(law: ExcursionLaw, params: PinningParams, N: int, n_max: int = N_MAX_DEFAULT) -> DPResult:
    """Annealed finite-N partition function: zero disorder at potential u + beta/2."""
    shifted = PinningParams(params.beta, params.u + 0.5 * params.beta)
    return dp_log_partition(law, shifted, np.zeros(int(N)), n_max)


def sample_path(result: DPResult, law: ExcursionLaw, params: PinningParams, disorder, stream: Stream) -> list[int]:
    """Exact posterior sample of the return set under the finite-volume Gibbs measure."""
    del params, disorder  # the DP tables already encode them
    N = result.N
    _, logK, logT = _law_arrays(law, N)
    lz = result.log_z_pinned

    def pick(logw):
        w = np.exp(logw - np.max(logw))
        c = np.cumsum(w)
        return int(np.searchsorted(c, stream.random() * c[-1], side="right"))

    j = pick(lz + logT[N::-1])
    returns = []
    while j > 0:
        returns.append(j)
        j = pick(lz[:j] + logK[j:0:-1])
    return returns[::-1]


# ---------------------------------------------------------------------------
# Monte Carlo over disorder
# ---------------------------------------------------------------------------


def resolve_threads(threads: int | None = None) -> int:
    """Worker count: explicit value, else PINLAB_THREADS, else the machine's CPU count."""
    if threads is None:
        env = os.environ.get("PINLAB_THREADS")
        threads = int(env) if env else (os.cpu_count() or 1)
    return max(1, int(threads))


def parallel_map(fn, items, threads: int | None = None) -> list:
    """Order-preserving map over a thread pool (kernels release the GIL)."""
    items = list(items)
    n = resolve_threads(threads)
    if n == 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


@dataclass(frozen=True)
class ReplicaRecord:
    replica: int
    seed_child: int
    N: int
    log_Z: float
    mean_LN: float

    @property
    def fN(self) -> float:
        return self.log_Z / self.N

    @property
    def contact(self) -> float:
        return self.mean_LN / self.N


@dataclass(frozen=True)
class QuenchedEstimate:
    """Disorder averages of (1/N) log Z and L_N / N; unpacks as (free_energy, contact)."""

    free_energy: EstimateWithCI
    contact: EstimateWithCI
    records: list = field(repr=False)

    def __iter__(self):
        return iter((self.free_energy, self.contact))


def replica_prefix_results(law: ExcursionLaw, params: PinningParams, Ns, n_replicas: int, seed: int,
                           zero_disorder: bool = False, threads: int | None = None) -> dict:
    """Run one DP per replica at max(Ns) and read off every N in ``Ns`` from its prefixes.

    Returns a mapping N -> list of :class:`ReplicaRecord` in replica order.
    """
    Ns = sorted(int(n) for n in Ns)
    n_top = Ns[-1]

    def run(i):
        if zero_disorder:
            dis = DisorderRealization(np.zeros(n_top), seed, i)
        else:
            dis = DisorderRealization.generate(seed, i, n_top)
        res = dp_log_partition(law, params, dis)
        out = []
        for n in Ns:
            sub = res.at(n)
            out.append(ReplicaRecord(i, dis.child_seed, n, sub.log_Z, sub.mean_LN))
        return out

    rows = parallel_map(run, range(n_replicas), threads)
    return {n: [r[k] for r in rows] for k, n in enumerate(Ns)}


def summarize(records) -> QuenchedEstimate:
    f = EstimateWithCI.from_samples([r.fN for r in records])
    c = EstimateWithCI.from_samples([r.contact for r in records])
    return QuenchedEstimate(f, c, list(records))


def quenched_mc(law: ExcursionLaw, params: PinningParams, N: int, n_replicas: int, seed: int,
                threads: int | None = None, zero_disorder: bool = False) -> QuenchedEstimate:
    """Quenched free-energy density and contact fraction over independent replicas.

    Replica ``i`` uses the disorder stream seeded by ``child_seed(seed, i)``;
    results are reduced in replica order so they do not depend on scheduling.
    """
    if n_replicas < 2:
        raise ValueError("n_replicas must be at least 2")
    recs = replica_prefix_results(law, params, [N], n_replicas, seed, zero_disorder, threads)[int(N)]
    return summarize(recs)
