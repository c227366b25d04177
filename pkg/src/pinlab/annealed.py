"""Annealed (equivalently, deterministic) thermodynamics of the pinning model.

For standard Gaussian disorder the annealed model at (beta, u) coincides with
the homogeneous model at potential u + beta/2, so everything below is a
function of ``beta_delta = beta * (u + beta/2)`` only.

With the excursion law K and M_E(-alpha) = sum_n e^{-alpha n} K(n):

* the free energy alpha0 solves ``beta_delta + log M_E(-alpha0) = 0``;
* the contact fraction is ``delta_star = 1 / (log M_E)'(-alpha0)``;
* the correlation length M is the first n with ``delta_n <= delta_star``,
  where delta_n is the running mean of the return probabilities;
* ``F(delta) = beta_delta*delta - delta*I_E(1/delta)`` with the rate function
  ``I_E(t) = sup_{x <= 0} (t x - log M_E(x))`` has maximum alpha0 at delta_star.

All root finding is bisection in log(alpha) (the series are monotone).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .excursion_law import (
    ExcursionLaw,
    LawError,
    log_mgf,
    log_mgf_deriv,
    mean_return_fraction,
)

ALPHA_FLOOR = 1e-300
REL_TOL = 1e-12
M_CAP = 10**7


@dataclass(frozen=True)
class PinningParams:
    """Inverse temperature ``beta``, potential ``u`` and ``delta = u + beta/2``.

    ``delta`` is filled in from ``u`` when omitted; :meth:`from_delta` keeps
    the given delta exactly so that ``beta * delta`` carries no rounding.
    """

    beta: float
    u: float
    delta: float = None

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if self.delta is None:
            object.__setattr__(self, "delta", self.u + 0.5 * self.beta)
        elif abs(self.delta - (self.u + 0.5 * self.beta)) > 1e-12 * max(1.0, abs(self.delta)):
            raise ValueError("delta must equal u + beta/2")

    @classmethod
    def from_delta(cls, beta: float, delta: float) -> "PinningParams":
        return cls(float(beta), float(delta) - 0.5 * float(beta), float(delta))

    @property
    def beta_delta(self) -> float:
        return self.beta * self.delta

    def shifted(self, du: float) -> "PinningParams":
        return PinningParams(self.beta, self.u + du)


@dataclass(frozen=True)
class AnnealedSolution:
    """Solved annealed thermodynamics at one value of beta*delta.

    ``corr_length_M`` is ``math.inf`` on the unpinned side and ``None`` when it
    was not requested.
    """

    beta_delta: float
    alpha0: float
    delta_star: float
    corr_length_M: float | int | None
    residual_lhs: float = 0.0
    residual_var: float = 0.0
    law: ExcursionLaw | None = field(default=None, repr=False, compare=False)

    @property
    def free_energy(self) -> float:
        """beta * f^a, which equals alpha0."""
        return self.alpha0

    @property
    def pinned(self) -> bool:
        return self.alpha0 > 0

    def F(self, delta):
        """Variational functional F(delta) = beta_delta*delta - delta*I_E(1/delta)."""
        return variational_F(self.law, self.beta_delta, delta)


# ---------------------------------------------------------------------------
# bisection helpers
# ---------------------------------------------------------------------------


def _bisect_log(fun, lo, hi, rel_tol=REL_TOL):
    """Vectorized bisection in log space for a function decreasing in its argument.

    ``fun(lo) > 0 >= fun(hi)`` is assumed elementwise; returns the midpoint of
    the final bracket (relative width below ``rel_tol``).
    """
    llo = np.log(np.asarray(lo, dtype=float))
    lhi = np.log(np.asarray(hi, dtype=float))
    llo, lhi = np.broadcast_arrays(llo, lhi)
    llo, lhi = llo.copy(), lhi.copy()
    while True:
        width = lhi - llo
        if np.all(width <= rel_tol):
            break
        mid = 0.5 * (llo + lhi)
        pos = fun(np.exp(mid)) > 0
        llo = np.where(pos, mid, llo)
        lhi = np.where(pos, lhi, mid)
    return np.exp(0.5 * (llo + lhi))


def _grow_upper(fun, start, limit=1e3):
    """Doubling search for hi with fun(hi) <= 0, elementwise."""
    hi = np.array(start, dtype=float, copy=True)
    while True:
        bad = fun(hi) > 0
        if not np.any(bad):
            return hi
        if np.any(hi[bad] > limit):
            raise LawError("no sign change below alpha = %g" % limit)
        hi = np.where(bad, 2.0 * hi, hi)


# ---------------------------------------------------------------------------
# rate function
# ---------------------------------------------------------------------------


def rate_function(law: ExcursionLaw, t):
    """I_E(t) and its maximizer x0 <= 0, elementwise in ``t``.

    Returns ``(value, x0)``.  For finite-mean laws with t at or above the mean
    the supremum sits on the boundary: x0 = 0 and I_E(t) = -log(1 - p_inf).
    """
    t_in = np.asarray(t, dtype=float)
    tt = np.atleast_1d(t_in).ravel()
    if np.any(tt <= 1.0):
        raise LawError("rate function needs t > 1")
    if np.any(tt <= law.min_support):
        raise LawError(f"t must exceed the minimum excursion length {law.min_support}")
    mean = law.mean
    interior = tt < mean
    x0 = np.zeros_like(tt)
    if np.any(interior):
        ti = tt[interior]

        def g(a):
            return log_mgf_deriv(law, a, 1) - ti

        hi = _grow_upper(g, np.full(ti.shape, 1.0), limit=700.0)
        x0[interior] = -_bisect_log(g, np.full(ti.shape, ALPHA_FLOOR), hi)
    value = tt * x0 - log_mgf(law, -x0)
    value = np.maximum(value, 0.0) if law.p_inf == 0 else value
    if t_in.ndim == 0:
        return float(value[0]), float(x0[0])
    return value.reshape(t_in.shape), x0.reshape(t_in.shape)


def variational_F(law: ExcursionLaw, beta_delta: float, delta):
    """F(delta) = beta_delta*delta - delta*I_E(1/delta) for delta in (0, 1)."""
    d = np.asarray(delta, dtype=float)
    if np.any((d <= 0) | (d >= 1)):
        raise LawError("F is evaluated on 0 < delta < 1")
    value, _ = rate_function(law, 1.0 / d)
    return beta_delta * d - d * value


# ---------------------------------------------------------------------------
# solver
# ---------------------------------------------------------------------------


def _solve_alpha0(law: ExcursionLaw, beta_delta: np.ndarray) -> np.ndarray:
    def h(a):
        return beta_delta + log_mgf(law, a)

    start = np.maximum(beta_delta / law.min_support, 1e-3) * 2.0
    hi = _grow_upper(h, start, limit=1e6)
    return _bisect_log(h, np.full(beta_delta.shape, ALPHA_FLOOR), hi)


def alpha0(law: ExcursionLaw, beta_delta):
    """beta*f^a as a function of beta*delta (0 on the unpinned side); vectorized."""
    _require_recurrent(law)
    bd_in = np.asarray(beta_delta, dtype=float)
    bd = np.atleast_1d(bd_in).ravel()
    out = np.zeros_like(bd)
    pos = bd > 0
    if np.any(pos):
        out[pos] = _solve_alpha0(law, bd[pos])
    return float(out[0]) if bd_in.ndim == 0 else out.reshape(bd_in.shape)


def delta_star(law: ExcursionLaw, beta_delta):
    """Annealed contact fraction as a function of beta*delta; vectorized."""
    bd_in = np.asarray(beta_delta, dtype=float)
    a = np.atleast_1d(alpha0(law, bd_in))
    out = np.zeros_like(a)
    pos = a > 0
    if np.any(pos):
        out[pos] = 1.0 / log_mgf_deriv(law, a[pos], 1)
    return float(out[0]) if bd_in.ndim == 0 else out.reshape(bd_in.shape)


def _require_recurrent(law: ExcursionLaw):
    if law.p_inf > 0:
        raise LawError("annealed solver needs a recurrent law; call recurrentize first")


def correlation_length(law: ExcursionLaw, delta_star_value: float, cap: int = M_CAP) -> int:
    """First n with delta_n <= delta_star, found by doubling the renewal horizon."""
    if not 0 < delta_star_value <= 1:
        raise LawError("delta_star must lie in (0, 1]")
    n = 1024
    while True:
        d = mean_return_fraction(law, n)
        hit = np.nonzero(d[1:] <= delta_star_value * (1.0 + 1e-15))[0]
        if hit.size:
            return int(hit[0]) + 1
        if n >= cap:
            raise LawError(f"correlation length exceeds the cap {cap}; raise the cap or skip it")
        n = min(2 * n, cap)


def solve_annealed(law: ExcursionLaw, params: PinningParams | float, correlation_length_M: bool = True,
                   m_cap: int = M_CAP) -> AnnealedSolution:
    """Solve the annealed thermodynamics at ``params`` (or directly at a beta*delta value).

    Parameters
    ----------
    law : ExcursionLaw
        Recurrent excursion law.
    params : PinningParams or float
        Model parameters, or the scalar beta*delta.
    correlation_length_M : bool
        Also locate the correlation length (costs a renewal sequence of length M).
    m_cap : int
        Largest correlation length searched.
    """
    _require_recurrent(law)
    bd = params.beta_delta if isinstance(params, PinningParams) else float(params)
    if bd <= 0:
        return AnnealedSolution(bd, 0.0, 0.0, math.inf, 0.0, 0.0, law)
    a0 = float(_solve_alpha0(law, np.array([bd]))[0])
    m1 = float(log_mgf_deriv(law, a0, 1))
    ds = 1.0 / m1
    res_lhs = bd + float(log_mgf(law, a0))
    res_var = m1 * ds - 1.0
    M = correlation_length(law, ds, m_cap) if correlation_length_M else None
    return AnnealedSolution(bd, a0, ds, M, res_lhs, res_var, law)


def annealed_contact_fraction(solution: AnnealedSolution) -> float:
    return solution.delta_star


def solve_delta0(solution: AnnealedSolution) -> float:
    """Root delta0 > delta_star of F, i.e. I_E(1/delta0) = beta_delta."""
    law, bd = solution.law, solution.beta_delta
    if not solution.pinned:
        raise LawError("delta0 is defined on the pinned side only")

    def g(d):
        return bd - rate_function(law, 1.0 / d)[0]

    lo = solution.delta_star
    hi = 1.0 / max(law.min_support, 1) - 1e-15
    if law.min_support == 1:
        hi = 1.0 - 1e-9
    if g(hi) > 0:
        raise LawError("F stays positive up to delta = 1; no root delta0")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if g(mid) > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-14 * hi:
            break
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# crossovers and exponents
# ---------------------------------------------------------------------------


def _crossover(fun, beta, lo, hi, rel_tol, name):
    flo, fhi = fun(lo), fun(hi)
    if not (flo > 0 >= fhi):
        raise LawError(f"{name}: no sign change on [{lo}, {hi}] (values {flo:.6g}, {fhi:.6g}) at beta={beta}")
    return float(_bisect_log(lambda x: np.array([fun(float(x[0]))]), np.array([lo]), np.array([hi]), rel_tol)[0])


def crossover_delta1(law: ExcursionLaw, beta: float, bracket=(1e-8, 10.0), rel_tol=1e-8) -> float:
    """Delta at which the annealed contact fraction meets the line 2*Delta/beta."""
    return _crossover(lambda d: delta_star(law, beta * d) - 2.0 * d / beta, beta, *bracket, rel_tol, "Delta_1")


def crossover_delta2(law: ExcursionLaw, beta: float, bracket=(1e-8, 10.0), rel_tol=1e-8) -> float:
    """Delta at which beta*f^a meets the quadratic bound Delta^2/2."""
    return _crossover(lambda d: alpha0(law, beta * d) - 0.5 * d * d, beta, *bracket, rel_tol, "Delta_2")


@dataclass(frozen=True)
class ExponentReport:
    """Least-squares log-log slopes of alpha0 and delta_star against beta*delta."""

    beta_delta: np.ndarray
    alpha0: np.ndarray
    delta_star: np.ndarray
    slope_alpha0: float
    slope_delta_star: float
    expected_alpha0: float
    expected_delta_star: float


def loglog_slope(x, y) -> float:
    return float(np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)[0])


def small_delta_exponents(law: ExcursionLaw, beta: float, deltas) -> ExponentReport:
    """Slopes of log alpha0 and log delta_star versus log(beta*delta) near criticality.

    The expected slopes are 1/(c-1) and (2-c)/(c-1).
    """
    if not law.heavy_regime:
        raise LawError("exponent fit needs a heavy-tailed law with 1 < c < 2")
    if not law.phi.is_constant:
        warnings.warn("non-constant phi: fitted slopes include slowly varying corrections", stacklevel=2)
    bd = beta * np.asarray(deltas, dtype=float)
    if np.any(bd <= 0):
        raise LawError("exponent fit needs beta*delta > 0")
    a = alpha0(law, bd)
    ds = 1.0 / log_mgf_deriv(law, a, 1)
    c = law.c
    return ExponentReport(bd, a, ds, loglog_slope(bd, a), loglog_slope(bd, ds), 1.0 / (c - 1.0), (2.0 - c) / (c - 1.0))
