"""Excursion-length laws K(n) = P(E_1 = n) and derived renewal quantities.

Three families are supported:

* ``heavy``: K(n) proportional to n^{-c} phi(n) with phi slowly varying,
  normalized explicitly so that sum K(n) = 1 - p_inf;
* ``geometric``: K(n) = p (1-p)^{n-1} (closed-form test law);
* ``deterministic``: K(k) = 1 (point-mass test law).

Any family may carry a defect mass ``p_inf`` at infinity (transient chain).

Series over n (normalizer, moment generating function and its derivatives)
are evaluated as an explicit head sum over n <= ``N_HEAD`` plus an
Euler-Maclaurin tail whose integral is done in closed form for constant phi
(incomplete gamma functions) and by adaptive quadrature otherwise.  The
truncation error of the Euler-Maclaurin remainder is below 1e-16 relative for
every alpha >= 0 because the summand and its derivatives are smooth on the
scale 1/N_HEAD.
"""

from __future__ import annotations

import math
import threading
import warnings
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy import integrate, special
from scipy.signal import fftconvolve

from . import rng as _rng

N_HEAD = 1024
INF_SENTINEL = -1


class LawError(ValueError):
    """Raised for invalid law parameters or out-of-domain evaluations."""


# ---------------------------------------------------------------------------
# slowly varying factors
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SlowlyVarying:
    """phi(x) = a (``const``) or phi(x) = log(x + e)^a (``logpower``)."""

    kind: str = "const"
    a: float = 1.0

    def __post_init__(self):
        if self.kind not in ("const", "logpower"):
            raise LawError(f"unknown slowly varying kind {self.kind!r}")
        if self.kind == "const" and not self.a > 0:
            raise LawError("constant slowly varying factor must be positive")

    @classmethod
    def const(cls, a: float = 1.0) -> "SlowlyVarying":
        return cls("const", float(a))

    @classmethod
    def logpower(cls, a: float) -> "SlowlyVarying":
        return cls("logpower", float(a))

    @property
    def is_constant(self) -> bool:
        return self.kind == "const" or self.a == 0.0

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "const":
            return np.full_like(x, self.a)
        return np.log(x + math.e) ** self.a

    def log(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "const":
            return np.full_like(x, math.log(self.a))
        return self.a * np.log(np.log(x + math.e))

    def spec(self) -> str:
        return f"{'const' if self.kind == 'const' else 'logpower'}({self.a!r})"


def tilde_phi(phi: SlowlyVarying, x: float) -> float:
    """Partial sum sum_{n <= x} n^{-1} phi(n)^{-2}.

    Exact summation up to 10^6 terms; beyond that the remainder is added with
    Euler-Maclaurin (absolute error far below 1e-12).
    """
    if x < 1:
        raise LawError("tilde_phi needs x >= 1")
    n_max = int(math.floor(x))
    if phi.kind == "const":
        # harmonic number via digamma, exact to rounding
        return float((special.digamma(n_max + 1.0) + np.euler_gamma) / phi.a**2)
    cut = min(n_max, 10**6)
    n = np.arange(1, cut + 1, dtype=float)
    head = float(np.sum(1.0 / (n * phi(n) ** 2)))
    if n_max == cut:
        return head

    def g(t):
        return 1.0 / (t * float(phi(t)) ** 2)

    # sum_{n=cut+1}^{n_max} g(n) = int_cut^{n_max} g + (g(n_max) - g(cut))/2 + (g'(n_max) - g'(cut))/12
    lo, hi = math.log(cut), math.log(n_max)
    integral = integrate.quad(lambda s: g(math.exp(s)) * math.exp(s), lo, hi, epsabs=0, epsrel=1e-13, limit=200)[0]
    corr = 0.5 * (g(n_max) - g(cut)) + (_deriv1(g, n_max) - _deriv1(g, cut)) / 12.0
    return head + integral + corr


def tilde_phi_inverse(phi: SlowlyVarying, level: float) -> int:
    """Smallest integer m with tilde_phi(phi, m) >= level (bisection)."""
    if level <= tilde_phi(phi, 1):
        return 1
    lo, hi = 1, 2
    while tilde_phi(phi, hi) < level:
        lo, hi = hi, hi * 2
        if hi > 2**62:
            raise LawError("tilde_phi is bounded below the requested level")
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if tilde_phi(phi, mid) >= level:
            hi = mid
        else:
            lo = mid
    return hi


def _deriv1(g, x, h=1.0):
    return (8.0 * (g(x + h) - g(x - h)) - (g(x + 2 * h) - g(x - 2 * h))) / (12.0 * h)


def _deriv3(g, x, h=1.0):
    return (g(x + 2 * h) - 2.0 * g(x + h) + 2.0 * g(x - h) - g(x - 2 * h)) / (2.0 * h**3)


# ---------------------------------------------------------------------------
# incomplete-gamma helpers for the constant-phi tails
# ---------------------------------------------------------------------------


def _upper_gamma(s: float, z):
    """Upper incomplete gamma Gamma(s, z) for real s (z > 0), vectorized in z."""
    z = np.asarray(z, dtype=float)
    if s > 0:
        return special.gamma(s) * special.gammaincc(s, z)
    if s == 0:
        return special.exp1(z)
    # Gamma(s, z) = (Gamma(s + 1, z) - z^s e^{-z}) / s
    return (_upper_gamma(s + 1.0, z) - z**s * np.exp(-z)) / s


def _power_tail_deficit(c: float, alpha, n0: float):
    """int_{n0}^inf (1 - e^{-alpha x}) x^{-c} dx for c > 1, stable for small alpha*n0."""
    alpha = np.asarray(alpha, dtype=float)
    z = alpha * n0
    out = np.empty_like(z)
    small = z <= 1.0
    if np.any(small):
        zs = np.maximum(z[small], np.finfo(float).tiny)
        # int_z^1 (1-e^{-t}) t^{-c} dt by termwise integration of the series
        acc = np.zeros_like(zs)
        fact = 1.0
        for j in range(1, 40):
            fact *= j
            p = j + 1.0 - c
            if abs(p) < 1e-14:
                term = -np.log(zs)
            else:
                term = -np.expm1(p * np.log(zs)) / p
            acc += ((-1.0) ** (j + 1)) / fact * term
        upper = 1.0 / (c - 1.0) - float(_upper_gamma(1.0 - c, 1.0))
        gz = acc + upper
        out[small] = alpha[small] ** (c - 1.0) * gz
    big = ~small
    if np.any(big):
        zb = z[big]
        gz = zb ** (1.0 - c) / (c - 1.0) - _upper_gamma(1.0 - c, zb)
        out[big] = alpha[big] ** (c - 1.0) * gz
    zero = alpha == 0
    out[zero] = 0.0
    return out


def _power_tail_moment(c: float, k: int, alpha, n0: float):
    """int_{n0}^inf x^{k-c} e^{-alpha x} dx (alpha > 0 unless k - c < -1)."""
    alpha = np.asarray(alpha, dtype=float)
    s = k - c + 1.0
    out = np.empty_like(alpha)
    pos = alpha > 0
    if np.any(pos):
        a = alpha[pos]
        out[pos] = a ** (-s) * _upper_gamma(s, a * n0)
    if np.any(~pos):
        if s >= 0:
            out[~pos] = np.inf
        else:
            out[~pos] = n0**s / (-s)
    return out


# ---------------------------------------------------------------------------
# the law
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _SamplerTables:
    cdf: np.ndarray  # cdf[n] = P(E <= n), n = 0..n_max
    guide: np.ndarray
    p_inf: float
    tail_mode: int  # 0: lump beyond n_max, 1: Pareto continuation, 2: geometric continuation
    tail_param: float


@dataclass(frozen=True, eq=False)
class ExcursionLaw:
    """Return-time law of the underlying chain.

    Use :func:`build_law`, :func:`geometric_law` or :func:`deterministic_law`
    rather than the constructor.  Instances are immutable apart from internal
    read-mostly caches (renewal sequence, sampler tables) guarded by a lock.
    """

    kind: str
    c: float
    phi: SlowlyVarying
    p_inf: float
    norm: float
    n_table: int
    param: float = 0.0
    pmf_table: np.ndarray = field(repr=False, default=None)
    tail_table: np.ndarray = field(repr=False, default=None)
    _cache: dict = field(repr=False, default_factory=dict, compare=False)
    _lock: threading.Lock = field(repr=False, default_factory=threading.Lock, compare=False)

    # -- basic evaluation ---------------------------------------------------

    @property
    def mass(self) -> float:
        return 1.0 - self.p_inf

    @property
    def is_heavy(self) -> bool:
        return self.kind == "heavy"

    @property
    def is_recurrent(self) -> bool:
        return self.p_inf == 0.0

    @property
    def min_support(self) -> int:
        return int(self.param) if self.kind == "deterministic" else 1

    @property
    def mean(self) -> float:
        if self.p_inf > 0:
            return math.inf
        if self.kind == "geometric":
            return 1.0 / self.param
        if self.kind == "deterministic":
            return float(self.param)
        return math.inf if self.c <= 2.0 else float(self._heavy_moment_series(np.array([0.0]), 1)[0])

    @property
    def heavy_regime(self) -> bool:
        return self.kind == "heavy" and 1.0 < self.c < 2.0

    def _weight(self, x):
        """Unnormalized heavy-tail weight x^{-c} phi(x) (real x)."""
        x = np.asarray(x, dtype=float)
        return x ** (-self.c) * self.phi(x)

    def pmf(self, n):
        """K(n) for integer n (array or scalar); K(n) = 0 for n < 1."""
        n_arr = np.asarray(n)
        scalar = n_arr.ndim == 0
        n_arr = np.atleast_1d(n_arr).astype(np.int64)
        out = np.zeros(n_arr.shape)
        ok = n_arr >= 1
        if self.kind == "heavy":
            out[ok] = self.mass * self._weight(n_arr[ok]) / self.norm
        elif self.kind == "geometric":
            p = self.param
            out[ok] = self.mass * p * np.exp((n_arr[ok] - 1) * math.log1p(-p)) if p < 1 else np.where(
                n_arr[ok] == 1, self.mass, 0.0
            )
        else:
            out[n_arr == int(self.param)] = self.mass
        return float(out[0]) if scalar else out

    def tail(self, n):
        """P(E_1 > n) including the defect mass; tail(0) = 1."""
        n_arr = np.asarray(n)
        scalar = n_arr.ndim == 0
        n_arr = np.atleast_1d(n_arr).astype(np.int64)
        out = np.ones(n_arr.shape)
        pos = n_arr >= 1
        if self.kind == "heavy":
            inside = pos & (n_arr <= self.n_table)
            out[inside] = self.tail_table[n_arr[inside]]
            beyond = pos & (n_arr > self.n_table)
            if np.any(beyond):
                s = np.array([self._weight_tail_sum(int(m)) for m in n_arr[beyond]])
                out[beyond] = self.p_inf + self.mass * s / self.norm
        elif self.kind == "geometric":
            p = self.param
            out[pos] = self.p_inf + self.mass * np.exp(n_arr[pos] * math.log1p(-p)) if p < 1 else self.p_inf
        else:
            k = int(self.param)
            out[pos] = np.where(n_arr[pos] >= k, self.p_inf, 1.0)
        return float(out[0]) if scalar else out

    def log_pmf(self, n):
        with np.errstate(divide="ignore"):
            return np.log(self.pmf(n))

    def log_tail(self, n):
        with np.errstate(divide="ignore"):
            return np.log(self.tail(n))

    def pmf_array(self, n_max: int) -> np.ndarray:
        """K(0..n_max) as an array with K(0) = 0."""
        return self.pmf(np.arange(n_max + 1))

    def tail_array(self, n_max: int) -> np.ndarray:
        """tail(0..n_max) as an array."""
        if self.kind == "heavy" and n_max > self.n_table:
            head = self.tail_table
            m = np.arange(self.n_table + 1, n_max + 1)
            w = self._weight(m)
            # reverse cumulative sum anchored on the Euler-Maclaurin tail at n_max
            s_end = self._weight_tail_sum(n_max)
            rc = np.concatenate((np.cumsum(w[::-1])[::-1][1:], [0.0])) + s_end
            return np.concatenate((head, self.p_inf + self.mass * rc / self.norm))
        return self.tail(np.arange(n_max + 1))

    def _weight_tail_sum(self, n0: int) -> float:
        """sum_{m > n0} m^{-c} phi(m), Euler-Maclaurin beyond n0."""
        if self.phi.kind == "const":
            return float(self.phi.a * special.zeta(self.c, n0 + 1.0))
        return float(self._em_tail(lambda x: self._weight(x), n0, lambda: _quad_tail(lambda x: self._weight(x), n0)))

    @staticmethod
    def _em_tail(g, n0, integral):
        """sum_{n > n0} g(n) = int_{n0}^inf g - g(n0)/2 - g'(n0)/12 + g'''(n0)/720."""
        g0 = float(g(float(n0)))
        if g0 == 0.0:
            return 0.0
        return integral() - 0.5 * g0 - _deriv1(lambda t: float(g(t)), n0) / 12.0 + _deriv3(lambda t: float(g(t)), n0) / 720.0

    # -- series engine ------------------------------------------------------

    def _heavy_head(self, alpha: np.ndarray, k: int, deficit: bool) -> np.ndarray:
        n0 = min(self.n_table, N_HEAD)
        n = np.arange(1, n0 + 1, dtype=float)
        w = self._weight(n) * n**k
        ax = np.multiply.outer(alpha, n)
        if deficit:
            f = -np.expm1(-ax)
        else:
            f = np.exp(-ax)
        return f @ w

    def _heavy_moment_series(self, alpha: np.ndarray, k: int, deficit: bool = False) -> np.ndarray:
        """Unnormalized sum_n w(n) n^k e^{-alpha n} (or (1-e^{-alpha n}) if deficit)."""
        alpha_in = np.asarray(alpha, dtype=float)
        alpha = np.atleast_1d(alpha_in).ravel()
        n0 = min(self.n_table, N_HEAD)
        head = self._heavy_head(alpha, k, deficit)
        if self.phi.kind == "const":
            tails = self._const_tail(alpha, k, deficit, n0)
        else:
            tails = np.array([self._quad_series_tail(a, k, deficit, n0) for a in alpha])
        return (head + tails).reshape(alpha_in.shape)

    def _summand(self, alpha, k, deficit):
        c = self.c
        if deficit:
            return lambda x: -np.expm1(-alpha * x) * x ** (-c) * self.phi(x)
        return lambda x: np.exp(-alpha * x) * x ** (k - c) * self.phi(x)

    def _const_tail(self, alpha, k, deficit, n0):
        """Euler-Maclaurin tail beyond n0 for constant phi, vectorized over alpha."""
        g = self._summand(alpha, k, deficit)
        if deficit:
            integral = self.phi.a * _power_tail_deficit(self.c, alpha, n0)
        else:
            integral = self.phi.a * _power_tail_moment(self.c, k, alpha, n0)
        out = integral - 0.5 * g(n0) - _deriv1(g, n0) / 12.0 + _deriv3(g, n0) / 720.0
        return np.where(g(float(n0)) == 0.0, 0.0, out)

    def _quad_series_tail(self, a, k, deficit, n0):
        g = self._summand(a, k, deficit)
        if float(g(float(n0))) == 0.0:
            return 0.0
        if not deficit and a == 0 and k - self.c >= -1:
            return np.inf
        return self._em_tail(lambda x: float(g(x)), n0, lambda: _quad_tail(lambda x: float(g(x)), n0))

    def deficit(self, alpha):
        """1 - p_inf - M_E(-alpha) = sum_n (1 - e^{-alpha n}) K(n), computed without cancellation."""
        alpha = np.asarray(alpha, dtype=float)
        if self.kind == "heavy":
            return self.mass * self._heavy_moment_series(alpha, 0, deficit=True) / self.norm
        if self.kind == "geometric":
            q = 1.0 - self.param
            return self.mass * (-np.expm1(-alpha)) / (1.0 - q * np.exp(-alpha))
        return self.mass * (-np.expm1(-alpha * self.param))

    def moment(self, alpha, k: int):
        """sum_n n^k e^{-alpha n} K(n) for k = 0, 1, 2."""
        alpha = np.asarray(alpha, dtype=float)
        if k == 0:
            return self.mass - self.deficit(alpha)
        if self.kind == "heavy":
            return self.mass * self._heavy_moment_series(alpha, k) / self.norm
        if self.kind == "geometric":
            p = self.param
            q = 1.0 - p
            x = np.exp(-alpha)
            d = 1.0 - q * x
            if k == 1:
                return self.mass * p * x / d**2
            return self.mass * p * x * (1.0 + q * x) / d**3
        kk = float(self.param)
        return self.mass * kk**k * np.exp(-alpha * kk)


def _quad_tail(g, n0: float) -> float:
    """int_{n0}^inf g(x) dx through x = n0 e^s."""
    def h(s):
        x = n0 * math.exp(s)
        return g(x) * x

    total = 0.0
    lo = 0.0
    # split into unit windows in s until contributions are negligible
    while True:
        part = integrate.quad(h, lo, lo + 2.0, epsabs=0.0, epsrel=1e-13, limit=200)[0]
        total += part
        lo += 2.0
        if abs(part) <= 1e-17 * abs(total) or lo > 200:
            break
    return total


# ---------------------------------------------------------------------------
# construction
# ---------------------------------------------------------------------------


def _check_p_inf(p_inf: float) -> float:
    p_inf = float(p_inf)
    if not 0.0 <= p_inf < 1.0:
        raise LawError(f"p_inf must lie in [0, 1), got {p_inf}")
    return p_inf


def build_law(c: float, phi: SlowlyVarying | None = None, p_inf: float = 0.0, n_table: int = 10**5) -> ExcursionLaw:
    """Heavy-tailed law K(n) = (1 - p_inf) n^{-c} phi(n) / norm."""
    phi = SlowlyVarying.const(1.0) if phi is None else phi
    p_inf = _check_p_inf(p_inf)
    c = float(c)
    if c <= 1.0:
        raise LawError(f"c = {c} <= 1: n^-c phi(n) is not normalizable")
    n_table = int(n_table)
    if n_table < 1000:
        raise LawError("n_table must be at least 1000")
    n = np.arange(1, n_table + 1, dtype=float)
    w = n ** (-c) * phi(n)
    proto = ExcursionLaw("heavy", c, phi, p_inf, 1.0, n_table)
    beyond = proto._weight_tail_sum(n_table)
    if phi.kind == "const":
        norm = float(phi.a * special.zeta(c))
    else:
        norm = float(math.fsum(w)) + beyond
    mass = 1.0 - p_inf
    pmf = np.concatenate(([0.0], mass * w / norm))
    rc = np.concatenate((np.cumsum(w[::-1])[::-1], [0.0]))  # rc[m] = sum_{j > m} w(j) over the table, m=0..n_table
    tail = p_inf + mass * (rc + beyond) / norm
    tail[0] = 1.0
    return ExcursionLaw("heavy", c, phi, p_inf, norm, n_table, 0.0, pmf, tail)


def geometric_law(p: float, p_inf: float = 0.0) -> ExcursionLaw:
    if not 0.0 < p <= 1.0:
        raise LawError("geometric parameter must lie in (0, 1]")
    return ExcursionLaw("geometric", math.nan, SlowlyVarying.const(1.0), _check_p_inf(p_inf), 1.0, 1000, float(p))


def deterministic_law(k: int = 1, p_inf: float = 0.0) -> ExcursionLaw:
    if int(k) != k or k < 1:
        raise LawError("deterministic excursion length must be a positive integer")
    return ExcursionLaw("deterministic", math.nan, SlowlyVarying.const(1.0), _check_p_inf(p_inf), 1.0, 1000, float(k))


def recurrentize(law: ExcursionLaw) -> ExcursionLaw:
    """Condition on E_1 < infinity: K_R(n) = K(n) / (1 - p_inf)."""
    if law.p_inf == 0.0:
        warnings.warn("law is already recurrent; recurrentize is the identity", stacklevel=2)
        return law
    if law.kind == "heavy":
        return build_law(law.c, law.phi, 0.0, law.n_table)
    if law.kind == "geometric":
        return geometric_law(law.param)
    return deterministic_law(int(law.param))


def deterministic_critical_point(law: ExcursionLaw, beta: float) -> float:
    """u_c^d(beta) = -log P(E_1 < inf) / beta."""
    return -math.log1p(-law.p_inf) / beta


def law_spec(law: ExcursionLaw) -> str:
    """Config-file form of a law, e.g. ``heavy(c=1.5, phi=const(1.0), p_inf=0.0)``."""
    if law.kind == "heavy":
        return f"heavy(c={law.c!r}, phi={law.phi.spec()}, p_inf={law.p_inf!r})"
    if law.kind == "geometric":
        extra = f", p_inf={law.p_inf!r}" if law.p_inf else ""
        return f"geometric({law.param!r}{extra})"
    extra = f", p_inf={law.p_inf!r}" if law.p_inf else ""
    return f"deterministic({int(law.param)}{extra})"


# ---------------------------------------------------------------------------
# generating-function quantities
# ---------------------------------------------------------------------------


def mgf(law: ExcursionLaw, alpha):
    """M_E(-alpha) = sum_n e^{-alpha n} K(n)."""
    a = np.asarray(alpha, dtype=float)
    if np.any(a < 0):
        raise LawError("mgf needs alpha >= 0")
    out = law.moment(a, 0)
    return float(out) if np.ndim(alpha) == 0 else out


def log_mgf(law: ExcursionLaw, alpha):
    """log M_E(-alpha), accurate even when M_E is within 1e-12 of 1."""
    a = np.asarray(alpha, dtype=float)
    out = np.log1p(-(law.p_inf + law.deficit(a)))
    return float(out) if np.ndim(alpha) == 0 else out


def log_mgf_deriv(law: ExcursionLaw, alpha, order: int = 1):
    """(log M_E)'(-alpha) (order 1) or (log M_E)''(-alpha) (order 2).

    The first derivative is the mean of the tilted law e^{-alpha n}K(n)/M_E(-alpha),
    the second its variance.
    """
    a = np.asarray(alpha, dtype=float)
    if order not in (1, 2):
        raise LawError("order must be 1 or 2")
    if np.any(a < 0):
        raise LawError("alpha must be nonnegative")
    if np.any(a == 0) and not math.isfinite(law.mean):
        raise LawError("derivative of log M_E diverges at alpha = 0 for infinite-mean laws")
    m0 = law.moment(a, 0)
    m1 = law.moment(a, 1)
    mean = m1 / m0
    if order == 1:
        out = mean
    else:
        out = law.moment(a, 2) / m0 - mean**2
    return float(out) if np.ndim(alpha) == 0 else out


def return_mass(law: ExcursionLaw, N: int) -> np.ndarray:
    """u_n = P(X_n = 0) for n = 0..N from the renewal equation u = 1 + K * u.

    Solved by Newton iteration on the generating function 1/(1 - K(s)) with FFT
    products; results are cached per law and extended on demand.
    """
    N = int(N)
    if N < 1:
        raise LawError("return_mass needs N >= 1")
    with law._lock:
        u = law._cache.get("u")
        if u is None or len(u) < N + 1:
            # FFT round-off can leave u_n a few ulps outside [0, 1]
            u = np.clip(_renewal_newton(law, N + 1, u), 0.0, 1.0)
            law._cache["u"] = u
    return u[: N + 1].copy()


def _renewal_newton(law: ExcursionLaw, length: int, start: np.ndarray | None) -> np.ndarray:
    b = np.array([1.0]) if start is None or len(start) == 0 else start
    m = len(b)
    target = 1 << max(0, (length - 1).bit_length())
    a_full = -law.pmf_array(max(target, 1))
    a_full[0] = 1.0
    while m < length:
        m2 = min(2 * m, target)
        a = a_full[:m2]
        ab = fftconvolve(a, b)[:m2]
        e = -ab
        e[0] += 2.0
        b = fftconvolve(b, e)[:m2]
        m = m2
    return b


def direct_return_mass(law: ExcursionLaw, N: int) -> np.ndarray:
    """O(N^2) renewal recursion; reference for :func:`return_mass`."""
    K = law.pmf_array(N)
    u = np.zeros(N + 1)
    u[0] = 1.0
    for n in range(1, N + 1):
        u[n] = np.dot(K[1 : n + 1], u[n - 1 :: -1])
    return u


def mean_return_fraction(law: ExcursionLaw, N: int) -> np.ndarray:
    """delta_n = (1/n) sum_{i=1}^n u_i for n = 1..N (index 0 unused, set to 1)."""
    u = return_mass(law, N)
    d = np.empty(N + 1)
    d[0] = 1.0
    d[1:] = np.cumsum(u[1:]) / np.arange(1, N + 1)
    return d


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------


def _guide_table(cdf: np.ndarray, size: int) -> np.ndarray:
    levels = np.arange(size) / size
    return np.searchsorted(cdf, levels, side="left").astype(np.int64)


def sampler_tables(law: ExcursionLaw) -> _SamplerTables:
    with law._lock:
        t = law._cache.get("sampler")
        if t is None:
            if law.kind == "heavy":
                n_max = law.n_table
                cdf = 1.0 - law.tail_table
                mode, param = 1, law.c
            elif law.kind == "geometric":
                n_max = law.n_table
                cdf = 1.0 - law.tail_array(n_max)
                mode, param = 2, 1.0 - law.param
            else:
                n_max = int(law.param)
                cdf = 1.0 - law.tail_array(n_max)
                mode, param = 0, 0.0
            cdf[0] = 0.0
            t = _SamplerTables(cdf, _guide_table(cdf, max(n_max, 16)), law.p_inf, mode, param)
            law._cache["sampler"] = t
    return t


@njit(cache=True, nogil=True)
def _draw(state, cdf, guide, p_inf, tail_mode, tail_param):
    """One excursion length; INF_SENTINEL (-1) for an infinite excursion."""
    u = _rng.next_uniform(state)
    n_max = cdf.shape[0] - 1
    if u < cdf[n_max]:
        g = guide.shape[0]
        n = guide[int(u * g)]
        while cdf[n] <= u:
            n += 1
        return n
    if u >= 1.0 - p_inf:
        return -1
    if tail_mode == 1:
        v = _rng.next_uniform_open0(state)
        x = n_max * v ** (-1.0 / (tail_param - 1.0))
        if x > 4.0e18:
            return 4000000000000000000
        return int(np.ceil(x))
    if tail_mode == 2:
        v = _rng.next_uniform_open0(state)
        return n_max + int(np.ceil(np.log(v) / np.log(tail_param)))
    return n_max


@njit(cache=True, nogil=True)
def _draw_many(state, cdf, guide, p_inf, tail_mode, tail_param, out):
    for i in range(out.shape[0]):
        out[i] = _draw(state, cdf, guide, p_inf, tail_mode, tail_param)


def sample_excursion(law: ExcursionLaw, stream: _rng.Stream):
    """One excursion length (``math.inf`` for the defect)."""
    t = sampler_tables(law)
    n = _draw(stream.state, t.cdf, t.guide, t.p_inf, t.tail_mode, t.tail_param)
    return math.inf if n == INF_SENTINEL else int(n)


def sample_excursions(law: ExcursionLaw, stream: _rng.Stream, size: int) -> np.ndarray:
    """``size`` i.i.d. excursion lengths as floats (``inf`` marks the defect)."""
    t = sampler_tables(law)
    out = np.empty(int(size), dtype=np.int64)
    _draw_many(stream.state, t.cdf, t.guide, t.p_inf, t.tail_mode, t.tail_param, out)
    res = out.astype(float)
    res[out == INF_SENTINEL] = np.inf
    return res


# ---------------------------------------------------------------------------
# tilted law
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TiltedLaw:
    """Q(E_1 = n) = e^{-alpha n} K(n) / M_E(-alpha), tabulated until negligible."""

    base: ExcursionLaw
    alpha: float
    pmf_table: np.ndarray = field(repr=False)
    _tables: _SamplerTables = field(repr=False)

    @classmethod
    def from_law(cls, base: ExcursionLaw, alpha: float, rel_cut: float = 1e-17) -> "TiltedLaw":
        if not alpha > 0:
            raise LawError("tilt parameter must be positive")
        z = mgf(base, alpha)
        # e^{-alpha n} tail(n) bounds the neglected mass
        n_max = max(64, int(math.ceil(-math.log(rel_cut) / alpha)))
        if n_max > 5 * 10**7:
            raise LawError(f"tilt alpha={alpha} too small to tabulate")
        n = np.arange(n_max + 1)
        q = base.pmf(n) * np.exp(-alpha * n) / z
        q[0] = 0.0
        cdf = np.cumsum(q)
        cdf = np.minimum(cdf, 1.0)
        tables = _SamplerTables(cdf, _guide_table(cdf, n_max), 0.0, 0, 0.0)
        return cls(base, float(alpha), q, tables)

    def pmf(self, n):
        n = np.asarray(n)
        inside = (n >= 0) & (n < len(self.pmf_table))
        out = np.zeros(n.shape)
        out[inside] = self.pmf_table[n[inside]]
        return out

    @property
    def total_mass(self) -> float:
        return float(math.fsum(self.pmf_table))

    @property
    def mean(self) -> float:
        return float(log_mgf_deriv(self.base, self.alpha, 1))

    @property
    def variance(self) -> float:
        return float(log_mgf_deriv(self.base, self.alpha, 2))

    def tables(self) -> _SamplerTables:
        return self._tables

    def sample(self, stream: _rng.Stream, size: int) -> np.ndarray:
        t = self._tables
        out = np.empty(int(size), dtype=np.int64)
        _draw_many(stream.state, t.cdf, t.guide, t.p_inf, t.tail_mode, t.tail_param, out)
        return out
