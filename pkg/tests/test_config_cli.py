import json
import math
import os
import subprocess
import sys

import pytest

from pinlab.cli import main
from pinlab.config import ConfigError, RunConfig, canonical_law, parse_config, parse_config_text, parse_law
from pinlab.io import format_value, read_csv, write_csv

# ---------------------------------------------------------------------------
# law grammar
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("text,kind", [
    ("heavy(c=1.5)", "heavy"),
    ("heavy(1.75, phi=logpower(-1.0), p_inf=0.3)", "heavy"),
    ("heavy(c=1.25, phi=const(2.0), n_table=1000000)", "heavy"),
    ("geometric(0.5)", "geometric"),
    ("geometric(p=0.5, p_inf=0.1)", "geometric"),
    ("deterministic(k=2)", "deterministic"),
])
def test_parse_law(text, kind):
    assert parse_law(text).kind == kind


@pytest.mark.parametrize("text", ["heavy()", "heavy(c=0.9)", "pareto(1.5)", "heavy(c=1.5, q=2)",
                                  "heavy(c=1.5", "deterministic(1.5)", "heavy(c=abc)", "heavy(c=1.5, phi=sine(1))"])
def test_parse_law_errors(text):
    with pytest.raises(ConfigError):
        parse_law(text)


def test_canonical_law_is_stable():
    a = canonical_law("heavy(1.5)")
    assert a == "heavy(c=1.5, phi=const(1.0), p_inf=0.0)"
    assert canonical_law(a) == a
    assert "n_table=1000000" in canonical_law("heavy(c=1.5, n_table=1e6)")


# ---------------------------------------------------------------------------
# run configuration
# ---------------------------------------------------------------------------


def test_delta_u_conversion():
    cfg = parse_config(None, {"beta": "0.2", "delta": "0.05"})
    assert cfg.resolved_u() == pytest.approx(-0.05)
    cfg = parse_config(None, {"beta": "0.2", "u": "-0.05"})
    assert cfg.resolved_delta() == pytest.approx(0.05)


def test_conflicting_potential_rejected():
    with pytest.raises(ConfigError, match="delta"):
        parse_config(None, {"beta": "0.2", "delta": "0.05", "u": "0.1"})
    with pytest.raises(ConfigError):
        RunConfig(beta=0.2, delta=0.1, u=0.0)


def test_flags_override_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("# comment\nbeta = 0.3\nu = 0.1\nN = 1024\n")
    cfg = parse_config(str(path), {"delta": "0.2", "N": "2048"})
    assert cfg.delta == 0.2 and cfg.u is None and cfg.N == 2048 and cfg.beta == 0.3


@pytest.mark.parametrize("text,key", [("bogus = 1", "bogus"), ("beta = x", "beta"), ("N = 1.5", "N"),
                                      ("beta 0.3", "line 1"), ("beta = 1\nbeta = 2", "duplicate")])
def test_config_text_errors_name_the_key(text, key):
    with pytest.raises(ConfigError, match=key):
        parse_config_text(text)


@pytest.mark.parametrize("kw", [dict(beta=-1.0), dict(n_replicas=1), dict(seed=-1), dict(theta_c=1.5),
                                dict(N=0), dict(threads=0), dict(beta_grid=(0.1, -0.2))])
def test_range_validation(kw):
    with pytest.raises(ConfigError):
        RunConfig(**kw)


def test_config_round_trip_and_hash(tmp_path):
    cfg = RunConfig(law="heavy(1.75, phi=logpower(-1))", beta=0.2, delta=0.05, N=4096, n_replicas=8, seed=7,
                    delta_grid=(0.01, 0.1), N_grid=(256, 512), out_dir="a", threads=2)
    path = tmp_path / "cfg.txt"
    path.write_text(cfg.to_text())
    back = parse_config(str(path))
    assert back == cfg
    other = RunConfig(**{**cfg.to_dict(), "out_dir": "b", "threads": 1,
                         "delta_grid": tuple(cfg.delta_grid), "N_grid": tuple(cfg.N_grid),
                         "beta_grid": tuple(cfg.beta_grid)})
    assert other.config_hash() == cfg.config_hash()
    assert RunConfig(beta=0.2, delta=0.06).config_hash() != RunConfig(beta=0.2, delta=0.05).config_hash()
    assert len(cfg.config_hash()) == 40


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def test_format_value():
    assert format_value(0.1) == "0.1"
    assert format_value(1 / 3) == repr(1 / 3)
    assert format_value(math.inf) == "inf" and format_value(math.nan) == "nan"
    assert format_value(True) == "true" and format_value(3) == "3"


def test_csv_round_trip(tmp_path):
    path = str(tmp_path / "x.csv")
    write_csv(path, ["a", "b"], [[1, 0.25], [2, math.inf]])
    with open(path, "rb") as fh:
        assert fh.read() == b"a,b\n1,0.25\n2,inf\n"
    assert read_csv(path) == (["a", "b"], [["1", "0.25"], ["2", "inf"]])
    with pytest.raises(ValueError):
        write_csv(path, ["a"], [[1, 2]])


# ---------------------------------------------------------------------------
# command line
# ---------------------------------------------------------------------------


def _run(tmp_path, name, *args):
    out = tmp_path / name
    code = main([*args, "--out-dir", str(out)])
    return code, out


def test_usage_errors_exit_2_without_output(tmp_path, capsys):
    cases = [
        ("quenched", "--beta", "0.2", "--delta", "0.05", "--u", "0.1", "--N", "64"),
        ("quenched", "--beta", "0.2", "--N", "64"),
        ("annealed", "--delta", "0.1"),
        ("bound", "--law", "heavy(1.5)", "--beta", "0.2", "--delta-grid", "0.01", "--N", "64"),
        ("transient", "--beta", "0.5", "--u", "0.1", "--N-grid", "64,128"),
        ("quenched", "--beta", "0.2", "--delta", "0.05", "--N", "abc"),
    ]
    for i, args in enumerate(cases):
        code, out = _run(tmp_path, f"case{i}", *args)
        assert code == 2, args
        assert not out.exists()
    assert "error" in capsys.readouterr().err


def test_unknown_config_key_exit_2(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("beta = 0.2\nfoo = 1\n")
    code, out = _run(tmp_path, "o", "annealed", "--config", str(cfg))
    assert code == 2 and not out.exists()


def test_quenched_outputs_and_determinism(tmp_path):
    args = ("quenched", "--beta", "0.2", "--delta", "0.05", "--N", "512", "--replicas", "8", "--seed", "7")
    c1, o1 = _run(tmp_path, "a", *args)
    c2, o2 = _run(tmp_path, "b", *args, "--threads", "2")
    assert c1 == c2 == 0
    for name in ("quenched.csv", "quenched.summary.json"):
        assert (o1 / name).read_bytes() == (o2 / name).read_bytes()
    header, rows = read_csv(str(o1 / "quenched.csv"))
    assert header == ["replica", "seed_child", "N", "log_Z", "fN", "mean_LN", "contact"]
    assert len(rows) == 8
    summary = json.loads((o1 / "quenched.summary.json").read_text())
    for key in ("beta", "u", "delta", "N", "n_replicas", "f_mean", "f_se", "c_mean", "c_se", "config_hash"):
        assert key in summary
    assert summary["u"] == pytest.approx(-0.05)
    text = (o1 / "quenched.summary.json").read_text()
    assert text == json.dumps(json.loads(text), sort_keys=True, indent=2) + "\n"
    manifest = json.loads((o1 / "manifest.json").read_text())
    assert manifest["seed"] == 7 and manifest["config_hash"] == summary["config_hash"]
    assert "numpy" in manifest["versions"]


def test_annealed_subcommand(tmp_path):
    code, out = _run(tmp_path, "o", "annealed", "--law", "geometric(0.5)", "--beta", "1", "--delta-grid", "0.1,0.2")
    assert code == 0
    header, rows = read_csv(str(out / "annealed.csv"))
    assert header == ["beta", "delta", "beta_delta", "alpha0", "delta_star", "M", "residual_lhs", "residual_var"]
    assert float(rows[0][3]) == pytest.approx(0.1 + math.log(0.5 + 0.5 * math.exp(-0.1)), rel=1e-11)


def test_curve_cap_exceeded_gives_notices(tmp_path):
    code, out = _run(tmp_path, "o", "curve", "--law", "heavy(1.25)", "--beta", "0.2", "--delta-grid", "0.05,0.5",
                     "--N", "256", "--replicas", "4", "--m-cap", "10000")
    assert code == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert any("cap" in w for w in manifest["warnings"])


def test_other_subcommands_run(tmp_path):
    runs = [
        ("overlap", "--law", "heavy(1.25)", "--N-grid", "100,1000", "--pairs", "2000", "--k-max", "50"),
        ("c32scale", "--law", "heavy(1.5)", "--beta-grid", "0.5,0.4,0.3"),
        ("transient", "--law", "heavy(1.5, p_inf=0.3)", "--beta", "0.5", "--u", "0.9", "--N-grid", "128,512",
         "--replicas", "4"),
        ("bracket", "--law", "heavy(1.75)", "--beta", "0.5", "--delta-grid", "0.01,0.1,0.5", "--N-grid",
         "128,256", "--replicas", "4"),
        ("bound", "--law", "heavy(1.75)", "--beta", "0.2", "--delta-grid", "0.001,0.003", "--N", "256",
         "--replicas", "4"),
    ]
    for i, args in enumerate(runs):
        code, out = _run(tmp_path, f"r{i}", *args)
        assert code in (0, 1), args
        assert (out / f"{args[0]}.csv").exists() and (out / "manifest.json").exists()


def test_selfcheck_console_script(tmp_path):
    out = tmp_path / "sc"
    proc = subprocess.run([sys.executable, "-m", "pinlab.cli", "selfcheck", "--out-dir", str(out)],
                          capture_output=True, text=True, env={**os.environ, "PINLAB_THREADS": "1"})
    assert proc.returncode == 0, proc.stderr
    assert proc.stdout.count("PASS") >= 9 and "FAIL" not in proc.stdout
    assert (out / "selfcheck.csv").exists()
