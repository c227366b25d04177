import math

import numpy as np
import pytest

from pinlab.annealed import solve_annealed
from pinlab.excursion_law import LawError, TiltedLaw, build_law, deterministic_law, geometric_law, return_mass
from pinlab.overlap import (
    ReturnPath,
    decay_rate,
    mean_overlap_prediction,
    overlap,
    overlap_counts,
    overlap_survival_check,
    return_asymptotics_check,
    simulate_path,
    survival_curve,
)
from pinlab.rng import Stream


def test_deterministic_path_returns_everywhere():
    p = simulate_path(deterministic_law(1), 50, Stream(0))
    assert list(p.returns) == list(range(1, 51))
    assert overlap(p, p).B_N == 50


def test_disjoint_paths_have_zero_overlap():
    a = ReturnPath(np.array([1, 3, 5]), 6)
    b = ReturnPath(np.array([2, 4, 6]), 6)
    assert overlap(a, b).B_N == 0
    with pytest.raises(ValueError):
        overlap(a, ReturnPath(np.array([2]), 7))
    with pytest.raises(ValueError):
        ReturnPath(np.array([3, 2]), 5)


def test_overlap_symmetric_and_bounded():
    law = build_law(1.5)
    st = Stream(3)
    for _ in range(50):
        a, b = simulate_path(law, 500, st), simulate_path(law, 500, st)
        assert overlap(a, b).B_N == overlap(b, a).B_N <= min(a.L, b.L)


def test_path_gaps_and_defect():
    law = build_law(1.5, p_inf=0.5)
    st = Stream(4)
    lengths = [simulate_path(law, 10_000, st).L for _ in range(2000)]
    # with p_inf = 1/2 the number of finite excursions is at most geometric(1/2)
    assert np.mean(lengths) < 1.05
    p = simulate_path(geometric_law(0.3), 1000, Stream(5))
    assert np.all(p.gaps >= 1)


def test_untilted_return_count_matches_renewal_sum():
    law = build_law(1.5, n_table=10**6)
    N = 10**5
    st = Stream(6)
    L = np.array([simulate_path(law, N, st).L for _ in range(2000)])
    expected = float(np.sum(return_mass(law, N)[1:]))
    assert 0.9 <= L.mean() / expected <= 1.1


def test_tilted_mean_gap_is_inverse_contact_fraction():
    law = build_law(1.5)
    for bd in (0.1, 0.03):
        sol = solve_annealed(law, bd, correlation_length_M=False)
        t = TiltedLaw.from_law(law, sol.alpha0)
        gaps = t.sample(Stream(7), 100_000)
        se = gaps.std(ddof=1) / math.sqrt(len(gaps))
        assert abs(gaps.mean() - 1 / sol.delta_star) < 3 * se


def test_tilted_path_simulation():
    law = build_law(1.5)
    sol = solve_annealed(law, 0.1, correlation_length_M=False)
    t = TiltedLaw.from_law(law, sol.alpha0)
    p = simulate_path(t, 200_000, Stream(8))
    assert p.L / 200_000 == pytest.approx(sol.delta_star, rel=0.05)


def test_tilted_variance_scale_stable():
    law = build_law(1.5)
    ratios = []
    for bd in (0.3, 0.1, 0.03, 0.01):
        sol = solve_annealed(law, bd)
        ratios.append(TiltedLaw.from_law(law, sol.alpha0).variance / sol.corr_length_M**1.5)
    assert max(ratios) / min(ratios) < 2


def test_mean_overlap_matches_sum_of_squares():
    law = build_law(1.5, n_table=10**6)
    N = 10**4
    counts = overlap_counts(law, N, 10_000, seed=9)
    assert 0.9 <= counts.mean() / mean_overlap_prediction(law, N) <= 1.1


def test_pair_chain_transient_below_three_halves():
    law = build_law(1.25)
    a, b = mean_overlap_prediction(law, 10**4), mean_overlap_prediction(law, 10**5)
    assert b / a - 1 < 0.1


def test_overlap_counts_reproducible_and_thread_independent():
    law = build_law(1.75)
    a = overlap_counts(law, 2000, 1000, seed=10, threads=1)
    b = overlap_counts(law, 2000, 1000, seed=10, threads=4)
    assert np.array_equal(a, b) and len(a) == 1000


def test_survival_curve_and_exact_geometric_rate():
    counts = np.array([0, 0, 1, 2, 2, 5])
    s = survival_curve(counts, 3)
    assert np.allclose(s, [1, 4 / 6, 3 / 6, 1 / 6])
    # exact geometric survival (1-p)^k with p = 0.2
    k = np.arange(60)
    rate, k_last = decay_rate(0.8**k, 10**6)
    assert rate == pytest.approx(0.2, rel=1e-12)
    assert 0.8**k_last * 10**6 >= 100


def test_decay_rate_excludes_k0_atom():
    # P(B >= 1) = 0.1 then geometric with p = 0.5: the k = 0 atom must not bias the rate
    surv = np.concatenate(([1.0], 0.1 * 0.5 ** np.arange(12)))
    assert decay_rate(surv, 10**6)[0] == pytest.approx(0.5, rel=1e-12)


def test_decay_rate_needs_survivors():
    rate, _ = decay_rate(np.array([1.0, 1e-5, 1e-6]), 1000)
    assert math.isnan(rate)


def test_survival_check_requires_heavy_regime():
    with pytest.raises(LawError):
        overlap_survival_check(geometric_law(0.5), [100, 1000], 10, 100, 0)


def test_return_asymptotics_corrected_constant():
    rep = return_asymptotics_check(build_law(1.5))
    assert abs(rep.ratio_sine[-1] - 1) < 0.01
    assert abs(rep.ratio_sine[-1] - 1) < abs(rep.ratio_sine[0] - 1)
    assert abs(rep.delta_ratio_sine[-1] - 1) < 0.01
    # the Gamma-ratio constant misses by the factor 1/pi at c = 3/2
    assert rep.ratio_gamma[-1] == pytest.approx(1 / math.pi, rel=1e-3)


def test_return_asymptotics_converges_c175():
    rep = return_asymptotics_check(build_law(1.75))
    errs = np.abs(rep.ratio_sine - 1)
    assert np.all(np.diff(errs) < 0) and errs[-1] < 0.05
