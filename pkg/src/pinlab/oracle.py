"""Exhaustive enumeration over return sets, used to validate the DP.

For N <= 20 every subset of {1..N} is a trajectory of returns; its weight is
prod K(gaps) * tail(N - last) * exp(beta * sum_{returns} (u + V_i)).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .annealed import PinningParams
from .excursion_law import ExcursionLaw


@dataclass(frozen=True)
class Enumeration:
    log_Z: float
    mean_LN: float
    marginals: np.ndarray  # P(i is a return), i = 1..N
    masks: np.ndarray
    log_weights: np.ndarray

    def posterior(self) -> np.ndarray:
        """Probability of each return set, indexed like ``masks``."""
        return np.exp(self.log_weights - self.log_Z)


def enumerate_returns(law: ExcursionLaw, params: PinningParams, disorder) -> Enumeration:
    """Brute-force log Z_N, Gibbs mean of L_N and per-site return marginals."""
    V = np.asarray(disorder, dtype=float)
    N = len(V)
    if not 1 <= N <= 20:
        raise ValueError("enumeration supports 1 <= N <= 20")
    with np.errstate(divide="ignore"):
        logK = np.log(law.pmf_array(N))
        logT = np.log(law.tail_array(N))
    pot = params.beta * (params.u + V)
    masks = np.arange(2**N, dtype=np.int64)
    logw = np.zeros(len(masks))
    last = np.zeros(len(masks), dtype=np.int64)
    count = np.zeros(len(masks), dtype=np.int64)
    bits = np.empty((N, len(masks)), dtype=bool)
    for i in range(1, N + 1):
        on = (masks >> (i - 1)) & 1 == 1
        bits[i - 1] = on
        logw[on] += logK[i - last[on]] + pot[i - 1]
        last[on] = i
        count += on
    logw += logT[N - last]
    log_Z = float(logsumexp(logw))
    p = np.exp(logw - log_Z)
    return Enumeration(log_Z, float(p @ count), bits @ p, masks, logw)


def mask_of(returns) -> int:
    m = 0
    for i in returns:
        m |= 1 << (int(i) - 1)
    return m


# ---------------------------------------------------------------------------
# self-check suite
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def _rel(a, b):
    return abs(a - b) / max(abs(b), 1e-300)


def selfcheck(n_cases: int = 60, seed: int = 12345) -> list[CheckResult]:
    """Fast invariant checks against brute force and closed forms."""
    import math

    from .annealed import solve_annealed
    from .excursion_law import (
        build_law,
        deterministic_law,
        direct_return_mass,
        geometric_law,
        mgf,
        return_mass,
    )
    from .quenched import dp_log_partition, mean_contacts_fd
    from .rng import Stream, next_u64

    out = []

    s = np.array([1, 2, 3, 4], dtype=np.uint64)
    got = [int(next_u64(s)) for _ in range(4)]
    ref = [41943041, 58720359, 3588806011781223, 3591011842654386]
    out.append(CheckResult("xoshiro256++ reference stream", got == ref, str(got)))

    laws = [build_law(1.25), build_law(1.5), build_law(1.75), geometric_law(0.4), deterministic_law(1),
            deterministic_law(2), build_law(1.5, p_inf=0.3)]
    stream = Stream(seed)
    worst_z = worst_l = 0.0
    for _ in range(n_cases):
        law = laws[int(stream.random() * len(laws))]
        N = 1 + int(stream.random() * 12)
        p = PinningParams(0.05 + 0.95 * stream.random(), -1.0 + 2.0 * stream.random())
        V = stream.normal(N)
        r = dp_log_partition(law, p, V)
        e = enumerate_returns(law, p, V)
        worst_z = max(worst_z, _rel(r.log_Z, e.log_Z) if e.log_Z != 0 else abs(r.log_Z))
        worst_l = max(worst_l, _rel(r.mean_LN, e.mean_LN) if e.mean_LN > 0 else abs(r.mean_LN))
    out.append(CheckResult("DP log Z equals enumeration", worst_z <= 1e-9, f"max rel err {worst_z:.2e}"))
    out.append(CheckResult("DP mean contacts equal enumeration", worst_l <= 1e-9, f"max rel err {worst_l:.2e}"))

    law = build_law(1.5)
    V = Stream(seed + 1).normal(500)
    p = PinningParams(0.5, 0.05)
    acc = dp_log_partition(law, p, V).mean_LN
    fd = mean_contacts_fd(law, p, V)
    out.append(CheckResult("contact accumulator equals finite difference", abs(acc - fd) <= 1e-6 * 500,
                           f"|diff| {abs(acc - fd):.2e}"))

    worst = 0.0
    for lw in laws:
        n = 4000
        total = float(np.sum(lw.pmf_array(n))) + float(lw.tail(n))
        worst = max(worst, abs(total - 1.0))
    out.append(CheckResult("normalization sum K + p_inf = 1", worst <= 1e-12, f"max err {worst:.2e}"))

    g = geometric_law(0.5)
    closed = 0.5 * math.exp(-0.1) / (1 - 0.5 * math.exp(-0.1))
    out.append(CheckResult("geometric mgf closed form", _rel(mgf(g, 0.1), closed) <= 1e-13,
                           f"{mgf(g, 0.1)!r} vs {closed!r}"))

    u_fast = return_mass(law, 3000)
    u_slow = direct_return_mass(law, 3000)
    err = float(np.max(np.abs(u_fast - u_slow)))
    out.append(CheckResult("renewal sequence FFT equals recursion", err <= 1e-12, f"max err {err:.2e}"))

    worst = 0.0
    for bd in (0.1, 0.01, 0.003):
        sol = solve_annealed(law, bd, correlation_length_M=False)
        worst = max(worst, abs(sol.residual_lhs), abs(sol.residual_var))
    out.append(CheckResult("annealed solver identities", worst <= 1e-10, f"max residual {worst:.2e}"))

    det = deterministic_law(1)
    V = Stream(seed + 2).normal(50)
    p = PinningParams(0.7, 0.2)
    lz = dp_log_partition(det, p, V).log_Z
    exact = float(np.sum(p.beta * (p.u + V)))
    out.append(CheckResult("deterministic law log Z", _rel(lz, exact) <= 1e-12, f"{lz!r} vs {exact!r}"))
    return out
