"""Command-line front end.

Exit codes: 0 success, 1 a scientific verdict failed (an inequality violated
beyond its tolerance), 2 usage error.  Usage errors are detected before the
output directory is touched.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
import time
from dataclasses import dataclass, field


from . import __version__
from .annealed import PinningParams, solve_annealed
from .config import ConfigError, RunConfig, parse_config
from .excursion_law import LawError
from .io import write_csv, write_json, write_manifest

SUBCOMMANDS = ("annealed", "quenched", "curve", "bound", "bracket", "overlap", "transient", "c32scale", "selfcheck")

REQUIRED = {
    "annealed": ("beta",),
    "quenched": ("beta", "N"),
    "curve": ("beta", "delta_grid", "N"),
    "bound": ("beta", "delta_grid", "N"),
    "bracket": ("beta", "delta_grid", "N_grid"),
    "overlap": ("N_grid",),
    "transient": ("beta", "N_grid"),
    "c32scale": ("beta_grid",),
    "selfcheck": (),
}
NEEDS_POTENTIAL = ("quenched", "transient")


@dataclass
class Outcome:
    columns: list
    rows: list
    summary: dict
    passed: bool = True
    warnings: list = field(default_factory=list)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def _annealed(cfg: RunConfig, threads) -> Outcome:
    law = cfg.build_law()
    deltas = cfg.delta_grid if cfg.delta_grid else (cfg.resolved_delta(),)
    rows, warns, worst = [], [], 0.0
    for d in deltas:
        params = PinningParams.from_delta(cfg.beta, d)
        try:
            sol = solve_annealed(law, params, m_cap=cfg.m_cap)
            M = sol.corr_length_M
        except LawError as exc:
            sol = solve_annealed(law, params, correlation_length_M=False)
            M = math.nan
            warns.append(f"delta={d!r}: {exc}")
        worst = max(worst, abs(sol.residual_lhs), abs(sol.residual_var))
        rows.append([cfg.beta, d, params.beta_delta, sol.alpha0, sol.delta_star, M, sol.residual_lhs,
                     sol.residual_var])
    cols = ["beta", "delta", "beta_delta", "alpha0", "delta_star", "M", "residual_lhs", "residual_var"]
    return Outcome(cols, rows, {"max_residual": worst, "n_points": len(rows)}, worst <= 1e-10, warns)


def _quenched(cfg: RunConfig, threads) -> Outcome:
    from .quenched import annealed_dp, quenched_mc

    law = cfg.build_law()
    params = PinningParams.from_delta(cfg.beta, cfg.resolved_delta())
    est = quenched_mc(law, params, cfg.N, cfg.n_replicas, cfg.seed, threads=threads)
    ann = annealed_dp(law, params, cfg.N)
    f, c = est
    jensen = f.mean <= ann.log_Z / cfg.N + 3.0 * f.std_error
    rows = [[r.replica, r.seed_child, r.N, r.log_Z, r.fN, r.mean_LN, r.contact] for r in est.records]
    summary = {
        "beta": cfg.beta, "u": params.u, "delta": params.delta, "N": cfg.N, "n_replicas": cfg.n_replicas,
        "f_mean": f.mean, "f_se": f.std_error, "c_mean": c.mean, "c_se": c.std_error,
        "annealed_fN": ann.log_Z / cfg.N, "jensen_ok": jensen,
    }
    return Outcome(["replica", "seed_child", "N", "log_Z", "fN", "mean_LN", "contact"], rows, summary, jensen)


def _curve(cfg: RunConfig, threads) -> Outcome:
    from .experiments import curve_compare

    law = cfg.build_law()
    pts = curve_compare(law, cfg.beta, cfg.delta_grid, cfg.N, cfg.n_replicas, cfg.seed, threads, cfg.m_cap)
    cols = ["beta", "delta", "beta_delta", "N", "M", "annealed_f", "annealed_c", "annealed_fN", "annealed_cN",
            "quenched_f", "quenched_f_se", "quenched_c", "quenched_c_se", "ratio", "finite_size", "jensen_ok"]
    rows = [[p.beta, p.delta, p.beta * p.delta, p.N, p.M, p.annealed_f, p.annealed_c, p.annealed_fN,
             p.annealed_cN, p.quenched_f.mean, p.quenched_f.std_error, p.quenched_c.mean,
             p.quenched_c.std_error, p.ratio, p.finite_size, p.jensen_ok] for p in pts]
    warns = [f"delta={p.delta!r}: {p.skipped}" for p in pts if p.skipped]
    ok = all(p.jensen_ok for p in pts)
    summary = {"jensen_violations": sum(not p.jensen_ok for p in pts),
               "ratio_floor_0.9_ok": all(p.ratio_ok() for p in pts), "n_points": len(pts)}
    return Outcome(cols, rows, summary, ok, warns)


def _bound(cfg: RunConfig, threads) -> Outcome:
    from .experiments import quadratic_bound_check

    law = cfg.build_law()
    pts = quadratic_bound_check(law, cfg.beta, cfg.delta_grid, cfg.N, cfg.n_replicas, cfg.seed, threads)
    cols = ["beta", "delta", "N", "quenched_f", "quenched_f_se", "bound_f", "slack_f", "quenched_c",
            "quenched_c_se", "bound_c", "slack_c", "ok_f", "ok_c"]
    rows = [[p.beta, p.delta, p.N, p.quenched_f.mean, p.quenched_f.std_error, p.bound_f, p.slack_f,
             p.quenched_c.mean, p.quenched_c.std_error, p.bound_c, p.slack_c, p.ok_f, p.ok_c] for p in pts]
    ok = all(p.ok_f and p.ok_c for p in pts)
    warns = [] if len(pts) == len(cfg.delta_grid) else ["grid restricted to delta <= Delta_2"]
    return Outcome(cols, rows, {"violations": sum(not (p.ok_f and p.ok_c) for p in pts), "n_points": len(pts)},
                   ok, warns)


def _bracket(cfg: RunConfig, threads) -> Outcome:
    import warnings

    from .experiments import critical_bracket

    law = cfg.build_law()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        rep = critical_bracket(law, cfg.beta, cfg.delta_grid, cfg.N_grid, cfg.n_replicas, cfg.seed,
                               cfg.theta_c, threads)
    rows = []
    for k, d in enumerate(rep.deltas):
        for j, n in enumerate(rep.N_grid):
            rows.append([d, n, rep.contact[k, j], rep.threshold[k], rep.extrapolated[k], rep.free_energy[k, j],
                         rep.free_energy_se[k, j]])
    summary = {"delta_lo": rep.delta_lo, "delta_hi": rep.delta_hi, "monotone": rep.monotone}
    return Outcome(["delta", "N", "contact", "threshold", "extrapolated", "fN", "fN_se"], rows, summary, rep.delta_lo >= 0,
                   [str(w.message) for w in caught])


def _overlap(cfg: RunConfig, threads) -> Outcome:
    from .overlap import overlap_survival_check

    law = cfg.build_law()
    rep = overlap_survival_check(law, cfg.N_grid, cfg.k_max, cfg.n_pairs, cfg.seed, threads)
    rows = []
    for p in rep.points:
        for k, s in enumerate(p.survival):
            if s == 0.0:
                break
            rows.append([p.N, k, s, p.n_pairs])
    summary = {"regime": rep.regime, "statistic": rep.statistic, "target": rep.target,
               "tolerance": rep.tolerance, "passed": rep.passed,
               "rates": {str(p.N): p.rate for p in rep.points}}
    return Outcome(["N", "k", "survival", "n_pairs"], rows, summary, rep.passed)


def _transient(cfg: RunConfig, threads) -> Outcome:
    from .experiments import transient_map_check

    law = cfg.build_law()
    rep = transient_map_check(law, cfg.beta, cfg.resolved_u(), cfg.N_grid, cfg.n_replicas, cfg.seed, threads)
    rows = [[i, n, rep.d[i, j]] for i in range(rep.d.shape[0]) for j, n in enumerate(rep.N_grid)]
    ok = rep.fraction_decreasing >= 0.95
    summary = {"u": rep.u, "u_c_d": rep.u_c, "fraction_decreasing": rep.fraction_decreasing,
               "d_final_mean": rep.d_final, "f_recurrent_mean": rep.f_recurrent.mean,
               "f_recurrent_se": rep.f_recurrent.std_error, "C_fit": rep.C_fit, "passed": ok}
    return Outcome(["replica", "N", "d"], rows, summary, ok)


def _c32scale(cfg: RunConfig, threads) -> Outcome:
    from .experiments import c32_scale

    rep = c32_scale(cfg.build_law(), cfg.beta_grid, cfg.A)
    rows = [[b, m, d] for b, m, d in zip(rep.beta_grid, rep.m, rep.delta0_hat)]
    ok = rep.relative_error <= 0.05
    summary = {"A": rep.A, "slope": rep.slope.value, "slope_se": rep.slope.std_error,
               "expected_slope": rep.expected_slope, "relative_error": rep.relative_error, "passed": ok}
    return Outcome(["beta", "m", "delta0_hat"], rows, summary, ok)


def _selfcheck(cfg: RunConfig, threads) -> Outcome:
    from .oracle import selfcheck

    results = selfcheck(seed=cfg.seed or 12345)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name}: {r.detail}")
    rows = [[r.name, r.passed, r.detail] for r in results]
    ok = all(r.passed for r in results)
    return Outcome(["check", "passed", "detail"], rows, {"passed": ok, "n_checks": len(results)}, ok)


RUNNERS = {
    "annealed": _annealed, "quenched": _quenched, "curve": _curve, "bound": _bound, "bracket": _bracket,
    "overlap": _overlap, "transient": _transient, "c32scale": _c32scale, "selfcheck": _selfcheck,
}


# ---------------------------------------------------------------------------
# argument handling
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pinlab", description="Pinning-model numerical laboratory")
    parser.add_argument("--version", action="version", version=f"pinlab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="flat key = value config file; flags override it")
        p.add_argument("--law")
        p.add_argument("--beta")
        p.add_argument("--delta")
        p.add_argument("--u")
        p.add_argument("--N", dest="N")
        p.add_argument("--N-grid", dest="N_grid")
        p.add_argument("--replicas", dest="n_replicas")
        p.add_argument("--seed")
        p.add_argument("--out-dir", dest="out_dir")
        p.add_argument("--threads")
        p.add_argument("--theta-c", dest="theta_c")
        p.add_argument("--A", dest="A")
        p.add_argument("--delta-grid", dest="delta_grid")
        p.add_argument("--beta-grid", dest="beta_grid")
        p.add_argument("--k-max", dest="k_max")
        p.add_argument("--pairs", dest="n_pairs")
        p.add_argument("--m-cap", dest="m_cap")
    return parser


_FLAG_KEYS = ("law", "beta", "delta", "u", "N", "N_grid", "n_replicas", "seed", "out_dir", "threads", "theta_c",
              "A", "delta_grid", "beta_grid", "k_max", "n_pairs", "m_cap")


def validate(command: str, cfg: RunConfig):
    """Raise ConfigError for anything that would make ``command`` fail before it starts."""
    cfg.require(*REQUIRED[command])
    if command in NEEDS_POTENTIAL or (command == "annealed" and not cfg.delta_grid):
        cfg.resolved_delta()
    law = cfg.build_law()
    if command in ("annealed", "curve", "bound", "bracket") and law.p_inf > 0:
        raise ConfigError("law: this subcommand needs a recurrent law (p_inf = 0)")
    if command == "transient" and law.p_inf == 0:
        raise ConfigError("law: transient needs p_inf > 0")
    if command in ("curve", "bound", "bracket", "overlap") and not law.heavy_regime:
        raise ConfigError("law: this subcommand needs heavy(c=...) with 1 < c < 2")
    if command == "bound" and law.c <= 1.5:
        raise ConfigError("law: bound needs c > 3/2")
    if command == "c32scale" and not (law.kind == "heavy" and law.c == 1.5):
        raise ConfigError("law: c32scale needs heavy(c=1.5, ...)")


def run_subcommand(command: str, cfg: RunConfig) -> int:
    from .quenched import resolve_threads

    threads = resolve_threads(cfg.threads)
    t0 = time.perf_counter()
    outcome = RUNNERS[command](cfg, threads)
    elapsed = time.perf_counter() - t0
    os.makedirs(cfg.out_dir, exist_ok=True)
    write_csv(os.path.join(cfg.out_dir, f"{command}.csv"), outcome.columns, outcome.rows)
    summary = dict(outcome.summary)
    summary["verdict"] = "pass" if outcome.passed else "fail"
    summary["config_hash"] = cfg.config_hash()
    summary["parameters"] = {k: v for k, v in cfg.to_dict().items() if k not in RunConfig.NON_RESULT_KEYS}
    write_json(os.path.join(cfg.out_dir, f"{command}.summary.json"), summary)
    write_manifest(cfg.out_dir, cfg.config_hash(), cfg.seed, {command: elapsed}, outcome.warnings)
    for w in outcome.warnings:
        print(f"notice: {w}", file=sys.stderr)
    return 0 if outcome.passed else 1


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    overrides = {k: getattr(args, k) for k in _FLAG_KEYS}
    try:
        cfg = parse_config(args.config, overrides)
        validate(args.command, cfg)
    except ConfigError as exc:
        print(f"pinlab {args.command}: error: {exc}", file=sys.stderr)
        return 2
    return run_subcommand(args.command, cfg)


if __name__ == "__main__":
    sys.exit(main())
