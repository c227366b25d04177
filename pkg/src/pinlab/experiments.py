"""Finite-N numerical studies of the quenched versus annealed pinning model.

Every function here is a pure function of its arguments and the seed: replica
``i`` always sees the disorder of ``child_seed(seed, i)``, and one DP at the
largest system size serves all smaller sizes through its prefixes, so the
same disorder is shared across the N grid.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .annealed import (
    AnnealedSolution,
    PinningParams,
    crossover_delta1,
    crossover_delta2,
    delta_star,
    solve_annealed,
)
from .excursion_law import (
    ExcursionLaw,
    LawError,
    SlowlyVarying,
    deterministic_critical_point,
    recurrentize,
    tilde_phi_inverse,
)
from .quenched import (
    DisorderRealization,
    EstimateWithCI,
    annealed_dp,
    dp_log_partition,
    parallel_map,
    replica_prefix_results,
    summarize,
)
from .rng import child_seed

SIZE_FACTOR = 20


def _require_heavy_regime(law: ExcursionLaw):
    if not law.heavy_regime:
        raise LawError("this experiment needs a heavy-tailed law with 1 < c < 2")


# ---------------------------------------------------------------------------
# quenched versus annealed free energy
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CurvePoint:
    """Quenched and annealed values at one (beta, delta).

    ``annealed_f``/``annealed_c`` are the infinite-volume values (alpha0,
    delta_star); ``annealed_fN``/``annealed_cN`` come from the annealed DP at
    the same N as the quenched runs and are the comparator for ratios.
    ``finite_size`` marks points with N < 20 M.
    """

    beta: float
    delta: float
    N: int
    M: float
    annealed_f: float
    annealed_c: float
    annealed_fN: float
    annealed_cN: float
    quenched_f: EstimateWithCI
    quenched_c: EstimateWithCI
    finite_size: bool
    skipped: str = ""

    @property
    def ratio(self) -> float:
        return self.quenched_f.mean / self.annealed_fN if self.annealed_fN > 0 else math.nan

    @property
    def ratio_se(self) -> float:
        return self.quenched_f.std_error / self.annealed_fN if self.annealed_fN > 0 else math.nan

    @property
    def jensen_ok(self) -> bool:
        return self.quenched_f.mean <= self.annealed_fN + 3.0 * self.quenched_f.std_error

    def ratio_ok(self, floor: float = 0.9) -> bool:
        return self.ratio >= floor - 3.0 * self.ratio_se


def curve_compare(law: ExcursionLaw, beta: float, delta_grid, N: int, n_replicas: int, seed: int,
                  threads: int | None = None, m_cap: int = 10**7) -> list[CurvePoint]:
    """Quenched Monte Carlo against the annealed solution along a grid of delta.

    Grid point ``k`` uses the replica seeds ``child_seed(child_seed(seed, k), i)``.
    Points whose correlation length exceeds ``m_cap`` are kept with NaN
    annealed infinite-volume values and a skip notice.
    """
    _require_heavy_regime(law)
    out = []
    for k, d in enumerate(np.asarray(delta_grid, dtype=float)):
        params = PinningParams.from_delta(beta, d)
        skipped = ""
        try:
            sol = solve_annealed(law, params, m_cap=m_cap)
            M = sol.corr_length_M
        except LawError as exc:
            sol = solve_annealed(law, params, correlation_length_M=False)
            M, skipped = math.nan, str(exc)
        ann = annealed_dp(law, params, N)
        q = summarize(replica_prefix_results(law, params, [N], n_replicas, child_seed(seed, k), threads=threads)[N])
        finite = not (math.isfinite(M) and N >= SIZE_FACTOR * M)
        out.append(CurvePoint(beta, float(d), int(N), M, sol.alpha0, sol.delta_star,
                              ann.log_Z / N, ann.mean_LN / N, q.free_energy, q.contact, finite, skipped))
    return out


# ---------------------------------------------------------------------------
# quadratic bound for c > 3/2
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BoundPoint:
    """Quenched values against Delta^2/2 and 2 Delta/beta at one delta.

    The free-energy bound holds in expectation at every N (Gaussian change of
    measure), so its slack is the control's own excess over the bound, which
    is zero for a nonpositive potential.  The contact bound at finite N picks
    up ``max(0, -E log Z_N) / (N beta delta)`` through convexity in delta;
    E log Z_N is bounded below by the V = 0 control, giving the slack.
    """

    beta: float
    delta: float
    N: int
    quenched_f: EstimateWithCI
    quenched_c: EstimateWithCI
    control_log_Z: float
    control_mean_LN: float
    slack_f: float
    slack_c: float

    @property
    def bound_f(self) -> float:
        return 0.5 * self.delta**2

    @property
    def bound_c(self) -> float:
        return 2.0 * self.delta / self.beta

    @property
    def ok_f(self) -> bool:
        return self.quenched_f.mean - 3.0 * self.quenched_f.std_error <= self.bound_f + self.slack_f

    @property
    def ok_c(self) -> bool:
        return self.quenched_c.mean - 3.0 * self.quenched_c.std_error <= self.bound_c + self.slack_c

    @property
    def ok_c_without_slack(self) -> bool:
        return self.quenched_c.mean - 3.0 * self.quenched_c.std_error <= self.bound_c


def quadratic_bound_check(law: ExcursionLaw, beta: float, delta_grid, N: int, n_replicas: int, seed: int,
                          threads: int | None = None, restrict: bool = True) -> list[BoundPoint]:
    """Check the quenched free energy against Delta^2/2 and the contact fraction against 2 Delta/beta.

    With ``restrict`` the grid is cut to delta <= Delta_2.  There the annealed
    free energy exceeds Delta^2/2, so the bound is a genuine quenched effect;
    beyond Delta_2 it already follows from f^q <= f^a.
    """
    _require_heavy_regime(law)
    if law.c <= 1.5:
        raise LawError("the quadratic bound regime needs c > 3/2")
    grid = np.asarray(delta_grid, dtype=float)
    if restrict:
        d2 = crossover_delta2(law, beta)
        grid = grid[grid <= d2]
    out = []
    for k, d in enumerate(grid):
        params = PinningParams.from_delta(beta, d)
        q = summarize(replica_prefix_results(law, params, [N], n_replicas, child_seed(seed, k), threads=threads)[N])
        ctrl = dp_log_partition(law, params, DisorderRealization.zeros(N))
        slack_f = max(0.0, ctrl.log_Z - N * 0.5 * d * d) / N
        slack_c = max(0.0, -ctrl.log_Z) / (N * beta * d)
        out.append(BoundPoint(beta, float(d), int(N), q.free_energy, q.contact, ctrl.log_Z, ctrl.mean_LN,
                              slack_f, slack_c))
    return out


# ---------------------------------------------------------------------------
# critical bracket
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BracketReport:
    beta: float
    N_grid: tuple
    deltas: np.ndarray
    threshold: np.ndarray  # theta_c at each delta
    contact: np.ndarray  # mean quenched contact, shape (len(deltas), len(N_grid))
    extrapolated: np.ndarray
    free_energy: np.ndarray  # mean (1/N) log Z, same shape as contact
    free_energy_se: np.ndarray
    delta_lo: float
    delta_hi: float
    monotone: bool


def extrapolate_inverse_n(Ns, values) -> float:
    """Intercept of the least-squares line of values against 1/N."""
    x = 1.0 / np.asarray(Ns, dtype=float)
    return float(np.polyfit(x, np.asarray(values, dtype=float), 1)[1])


def critical_bracket(law: ExcursionLaw, beta: float, delta_grid, N_grid, n_replicas: int, seed: int,
                     theta: float = 0.5, threads: int | None = None) -> BracketReport:
    """Bracket the quenched critical point from the N-extrapolated contact fraction.

    delta_hi is the smallest grid delta from which the extrapolated contact
    stays above ``theta`` times the annealed one; delta_lo is the grid point
    just below it.  A crossing that is not monotone along the grid widens
    the bracket to the last upcrossing and triggers a warning.  Grid points
    with delta <= 0 count as depinned: the quenched critical point is never
    below the annealed one, whose contact fraction vanishes there.
    """
    _require_heavy_regime(law)
    deltas = np.sort(np.asarray(delta_grid, dtype=float))
    Ns = tuple(sorted(int(n) for n in N_grid))
    thr = theta * np.array([delta_star(law, beta * d) for d in deltas])
    contact = np.empty((len(deltas), len(Ns)))
    fmean = np.empty_like(contact)
    fse = np.empty_like(contact)
    for k, d in enumerate(deltas):
        res = replica_prefix_results(law, PinningParams.from_delta(beta, d), Ns, n_replicas, child_seed(seed, k),
                                     threads=threads)
        for j, n in enumerate(Ns):
            est = summarize(res[n])
            contact[k, j] = est.contact.mean
            fmean[k, j], fse[k, j] = est.free_energy.mean, est.free_energy.std_error
    extrap = np.array([extrapolate_inverse_n(Ns, row) for row in contact])
    above = (extrap > thr) & (deltas > 0)
    if not above[-1]:
        k_hi = len(deltas)
    else:
        k_hi = len(deltas) - 1
        while k_hi > 0 and above[k_hi - 1]:
            k_hi -= 1
    monotone = not np.any(above[:max(k_hi - 1, 0)])
    if not monotone:
        warnings.warn("contact crossing is not monotone along the delta grid; bracket widened", stacklevel=2)
    delta_hi = float(deltas[k_hi]) if k_hi < len(deltas) else math.inf
    delta_lo = float(deltas[k_hi - 1]) if k_hi > 0 else 0.0
    return BracketReport(beta, Ns, deltas, thr, contact, extrap, fmean, fse, delta_lo, delta_hi, bool(monotone))


# ---------------------------------------------------------------------------
# transient chains
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TransientReport:
    """Per-replica discrepancies d(N) = |log Z - log Z_R| / N under shared disorder."""

    beta: float
    u: float
    u_c: float
    N_grid: tuple
    d: np.ndarray  # shape (n_replicas, len(N_grid))
    f_recurrent: EstimateWithCI  # (1/N) log Z_R at the largest N
    C_fit: float

    @property
    def decreasing(self) -> np.ndarray:
        return np.all(np.diff(self.d, axis=1) < 0, axis=1)

    @property
    def fraction_decreasing(self) -> float:
        return float(np.mean(self.decreasing))

    @property
    def d_final(self) -> float:
        return float(np.mean(self.d[:, -1]))


def transient_map_check(law: ExcursionLaw, beta: float, u: float, N_grid, n_replicas: int, seed: int,
                        threads: int | None = None) -> TransientReport:
    """Compare the transient model at u with the recurrentized one at u - u_c^d.

    Both systems see the same disorder; ``C_fit`` is the smallest C with
    d(N) <= C log N / N for every replica and N.
    """
    if law.p_inf <= 0:
        raise LawError("transient mapping needs p_inf > 0")
    rec = recurrentize(law)
    uc = deterministic_critical_point(law, beta)
    Ns = tuple(sorted(int(n) for n in N_grid))
    p = PinningParams(beta, u)
    pr = PinningParams(beta, u - uc)

    def run(i):
        dis = DisorderRealization.generate(seed, i, Ns[-1])
        a = dp_log_partition(law, p, dis)
        b = dp_log_partition(rec, pr, dis)
        la = np.array([a.at(n).log_Z for n in Ns])
        lb = np.array([b.at(n).log_Z for n in Ns])
        return np.abs(la - lb) / np.array(Ns), lb[-1] / Ns[-1]

    rows = parallel_map(run, range(n_replicas), threads)
    d = np.array([r[0] for r in rows])
    f = EstimateWithCI.from_samples([r[1] for r in rows])
    n_arr = np.array(Ns, dtype=float)
    C = float(np.max(d * n_arr / np.log(n_arr)))
    return TransientReport(beta, u, uc, Ns, d, f, C)


# ---------------------------------------------------------------------------
# scales
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Slope:
    value: float
    std_error: float
    dof: int


def fit_slope(x, y) -> Slope:
    """Least-squares slope with its standard error."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = len(x)
    if n < 3:
        raise ValueError("a slope with a standard error needs at least 3 points")
    coef, res, *_ = np.polyfit(x, y, 1, full=True)
    s2 = float(res[0]) / (n - 2) if len(res) else 0.0
    se = math.sqrt(s2 / np.sum((x - x.mean()) ** 2))
    return Slope(float(coef[0]), se, n - 2)


@dataclass(frozen=True)
class ScaleReport:
    """Crossover scales Delta_1, Delta_2 over a beta grid and their log-log slopes."""

    beta_grid: np.ndarray
    delta1: np.ndarray
    delta2: np.ndarray
    slope1: Slope
    slope2: Slope
    expected: float

    @property
    def ratio(self) -> np.ndarray:
        return self.delta2 / self.delta1

    @property
    def ratio_drift(self) -> float:
        r = self.ratio
        return float(r.max() / r.min() - 1.0)


def crossover_scaling(law: ExcursionLaw, beta_grid) -> ScaleReport:
    """Delta_1 and Delta_2 along ``beta_grid``; expected slope 1/(2c-3) for c > 3/2."""
    _require_heavy_regime(law)
    b = np.asarray(beta_grid, dtype=float)
    d1 = np.array([crossover_delta1(law, x) for x in b])
    d2 = np.array([crossover_delta2(law, x) for x in b])
    lb = np.log(b)
    expected = 1.0 / (2.0 * law.c - 3.0) if law.c > 1.5 else math.inf
    return ScaleReport(b, d1, d2, fit_slope(lb, np.log(d1)), fit_slope(lb, np.log(d2)), expected)


@dataclass(frozen=True)
class C32Report:
    """Operational scale phi(m)/sqrt(m) with m the first integer where tilde_phi reaches A/beta^2."""

    beta_grid: np.ndarray
    m: np.ndarray
    delta0_hat: np.ndarray
    A: float
    slope: Slope

    @property
    def expected_slope(self) -> float:
        return -0.5 * self.A

    @property
    def relative_error(self) -> float:
        return abs(self.slope.value / self.expected_slope - 1.0)


def delta0_hat(phi: SlowlyVarying, beta: float, A: float = 1.0) -> tuple[int, float]:
    m = tilde_phi_inverse(phi, A / beta**2)
    return m, float(phi(m)) / math.sqrt(m)


def c32_scale(law: ExcursionLaw, beta_grid, A: float = 1.0) -> C32Report:
    """Delta0-hat along ``beta_grid`` and the slope of its log against 1/beta^2."""
    if not (law.kind == "heavy" and abs(law.c - 1.5) < 1e-12):
        raise LawError("the c = 3/2 scale needs a heavy-tailed law with c = 3/2")
    phi = law.phi
    if phi.kind == "logpower" and phi.a > 0.5:
        raise LawError("tilde_phi is bounded for this phi; the scale is not exponentially small")
    b = np.asarray(beta_grid, dtype=float)
    pairs = [delta0_hat(phi, x, A) for x in b]
    m = np.array([p[0] for p in pairs], dtype=np.int64)
    d0 = np.array([p[1] for p in pairs])
    return C32Report(b, m, d0, float(A), fit_slope(1.0 / b**2, np.log(d0)))


def annealed_solutions(law: ExcursionLaw, beta: float, deltas, with_M: bool = True) -> list[AnnealedSolution]:
    return [solve_annealed(law, PinningParams.from_delta(beta, d), correlation_length_M=with_M) for d in deltas]


__all__ = [
    "CurvePoint", "curve_compare", "BoundPoint", "quadratic_bound_check", "BracketReport", "critical_bracket",
    "extrapolate_inverse_n", "TransientReport", "transient_map_check", "Slope", "fit_slope", "ScaleReport",
    "crossover_scaling", "C32Report", "c32_scale", "delta0_hat", "annealed_solutions",
]
