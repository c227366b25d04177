"""Run configuration: flat ``key = value`` files, command-line overrides and the law grammar.

Law grammar::

    heavy(c=1.5, phi=const(1.0), p_inf=0.0)
    heavy(c=1.5, phi=logpower(-1.0), p_inf=0.3, n_table=1000000)
    geometric(0.5)            geometric(p=0.5, p_inf=0.1)
    deterministic(1)          deterministic(k=2)
"""

from __future__ import annotations

import dataclasses
import hashlib
import math
import re
from dataclasses import dataclass

from .excursion_law import (
    ExcursionLaw,
    LawError,
    SlowlyVarying,
    build_law,
    deterministic_law,
    geometric_law,
    law_spec,
)


class ConfigError(ValueError):
    """Invalid configuration; the CLI maps it to exit code 2."""


# ---------------------------------------------------------------------------
# law grammar
# ---------------------------------------------------------------------------

_CALL = re.compile(r"^\s*([A-Za-z_]\w*)\s*\((.*)\)\s*$", re.S)


def _split_args(body: str) -> list[str]:
    parts, depth, cur = [], 0, []
    for ch in body:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
            if depth < 0:
                raise ConfigError(f"unbalanced parentheses in {body!r}")
        if ch == "," and depth == 0:
            parts.append("".join(cur).strip())
            cur = []
        else:
            cur.append(ch)
    if depth != 0:
        raise ConfigError(f"unbalanced parentheses in {body!r}")
    tail = "".join(cur).strip()
    if tail:
        parts.append(tail)
    return parts


def _parse_call(text: str):
    m = _CALL.match(text)
    if not m:
        raise ConfigError(f"expected name(args), got {text!r}")
    name, body = m.group(1).lower(), m.group(2)
    pos, kw = [], {}
    for arg in _split_args(body):
        if "=" in arg and not arg.lstrip().startswith(("const", "logpower")):
            k, v = arg.split("=", 1)
            kw[k.strip()] = v.strip()
        else:
            if kw:
                raise ConfigError(f"positional argument after keyword in {text!r}")
            pos.append(arg)
    return name, pos, kw


def _num(value: str, key: str) -> float:
    try:
        return float(value)
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {value!r}") from None


def _bind(name, pos, kw, names, required):
    if len(pos) > len(names):
        raise ConfigError(f"{name}: too many arguments")
    out = dict(zip(names, pos))
    for k, v in kw.items():
        if k not in names:
            raise ConfigError(f"{name}: unknown argument {k!r}")
        if k in out:
            raise ConfigError(f"{name}: argument {k!r} given twice")
        out[k] = v
    for k in required:
        if k not in out:
            raise ConfigError(f"{name}: missing argument {k!r}")
    return out


def parse_phi(text: str) -> SlowlyVarying:
    name, pos, kw = _parse_call(text)
    args = _bind(name, pos, kw, ["a"], [])
    a = _num(args.get("a", "1.0"), "phi.a")
    if name == "const":
        return SlowlyVarying.const(a)
    if name == "logpower":
        return SlowlyVarying.logpower(a)
    raise ConfigError(f"unknown slowly varying factor {name!r}")


def parse_law(text: str) -> ExcursionLaw:
    """Build an :class:`ExcursionLaw` from its config-file form."""
    name, pos, kw = _parse_call(text)
    try:
        if name == "heavy":
            args = _bind(name, pos, kw, ["c", "phi", "p_inf", "n_table"], ["c"])
            phi = parse_phi(args["phi"]) if "phi" in args else SlowlyVarying.const(1.0)
            n_table = int(_num(args.get("n_table", "100000"), "n_table"))
            return build_law(_num(args["c"], "c"), phi, _num(args.get("p_inf", "0"), "p_inf"), n_table)
        if name == "geometric":
            args = _bind(name, pos, kw, ["p", "p_inf"], ["p"])
            return geometric_law(_num(args["p"], "p"), _num(args.get("p_inf", "0"), "p_inf"))
        if name == "deterministic":
            args = _bind(name, pos, kw, ["k", "p_inf"], ["k"])
            k = _num(args["k"], "k")
            if k != int(k):
                raise ConfigError("deterministic: k must be an integer")
            return deterministic_law(int(k), _num(args.get("p_inf", "0"), "p_inf"))
    except LawError as exc:
        raise ConfigError(str(exc)) from None
    raise ConfigError(f"unknown law family {name!r}")


def canonical_law(text: str) -> str:
    law = parse_law(text)
    spec = law_spec(law)
    if law.kind == "heavy" and law.n_table != 100000:
        spec = spec[:-1] + f", n_table={law.n_table})"
    return spec


# ---------------------------------------------------------------------------
# run configuration
# ---------------------------------------------------------------------------


def _floats(text) -> tuple:
    if isinstance(text, (list, tuple)):
        return tuple(float(x) for x in text)
    items = [t for t in re.split(r"[,\s]+", str(text).strip()) if t]
    try:
        return tuple(float(t) for t in items)
    except ValueError:
        raise ConfigError(f"expected a comma-separated list of numbers, got {text!r}") from None


def _ints(text) -> tuple:
    vals = _floats(text)
    if any(v != int(v) for v in vals):
        raise ConfigError(f"expected integers, got {text!r}")
    return tuple(int(v) for v in vals)


@dataclass(frozen=True)
class RunConfig:
    """All knobs of one run.  Exactly one of ``delta``/``u`` may be set."""

    law: str = "heavy(c=1.5, phi=const(1.0), p_inf=0.0)"
    beta: float | None = None
    delta: float | None = None
    u: float | None = None
    N: int | None = None
    N_grid: tuple = ()
    n_replicas: int = 64
    seed: int = 0
    out_dir: str = "out"
    threads: int | None = None
    theta_c: float = 0.5
    A: float = 1.0
    delta_grid: tuple = ()
    beta_grid: tuple = ()
    k_max: int = 5000
    n_pairs: int = 10000
    m_cap: int = 10**7

    # keys that do not change numerical results
    NON_RESULT_KEYS = ("out_dir", "threads")

    def __post_init__(self):
        if self.delta is not None and self.u is not None:
            raise ConfigError("give exactly one of 'delta' and 'u', not both")
        if self.beta is not None and not self.beta > 0:
            raise ConfigError("beta: must be positive")
        if self.N is not None and self.N < 1:
            raise ConfigError("N: must be at least 1")
        if any(n < 1 for n in self.N_grid):
            raise ConfigError("N_grid: entries must be at least 1")
        if self.n_replicas < 2:
            raise ConfigError("n_replicas: must be at least 2")
        if self.seed < 0 or self.seed >= 2**64:
            raise ConfigError("seed: must lie in [0, 2^64)")
        if self.threads is not None and self.threads < 1:
            raise ConfigError("threads: must be at least 1")
        if not 0 < self.theta_c < 1:
            raise ConfigError("theta_c: must lie in (0, 1)")
        if not self.A > 0:
            raise ConfigError("A: must be positive")
        if any(b <= 0 for b in self.beta_grid):
            raise ConfigError("beta_grid: entries must be positive")
        if self.k_max < 1 or self.n_pairs < 2 or self.m_cap < 1:
            raise ConfigError("k_max, n_pairs and m_cap must be positive (n_pairs >= 2)")
        object.__setattr__(self, "law", canonical_law(self.law))

    @property
    def has_potential(self) -> bool:
        return self.delta is not None or self.u is not None

    def resolved_delta(self) -> float:
        """Delta, converting from u with Delta = u + beta/2 when needed."""
        self.require("beta")
        if self.delta is not None:
            return self.delta
        if self.u is not None:
            return self.u + 0.5 * self.beta
        raise ConfigError("missing required field 'delta' (or 'u')")

    def resolved_u(self) -> float:
        return self.resolved_delta() - 0.5 * self.beta

    def require(self, *keys):
        for k in keys:
            v = getattr(self, k)
            if v is None or v == ():
                raise ConfigError(f"missing required field {k!r}")

    def build_law(self) -> ExcursionLaw:
        return parse_law(self.law)

    # -- serialization ------------------------------------------------------

    def to_text(self, include_all: bool = True) -> str:
        lines = []
        for f in dataclasses.fields(self):
            if not include_all and f.name in self.NON_RESULT_KEYS:
                continue
            v = getattr(self, f.name)
            if v is None or v == ():
                continue
            lines.append(f"{f.name} = {_fmt(v)}")
        return "\n".join(lines) + "\n"

    def config_hash(self) -> str:
        """Git blob hash of the canonical result-relevant configuration text."""
        body = self.to_text(include_all=False).encode()
        return hashlib.sha1(b"blob %d\0" % len(body) + body).hexdigest()

    def to_dict(self) -> dict:
        return {f.name: _jsonable(getattr(self, f.name)) for f in dataclasses.fields(self)}


def _fmt(v) -> str:
    if isinstance(v, tuple):
        return ", ".join(_fmt(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _jsonable(v):
    if isinstance(v, tuple):
        return list(v)
    return v


_CONVERTERS = {
    "law": str,
    "beta": float,
    "delta": float,
    "u": float,
    "N": int,
    "N_grid": _ints,
    "n_replicas": int,
    "seed": int,
    "out_dir": str,
    "threads": int,
    "theta_c": float,
    "A": float,
    "delta_grid": _floats,
    "beta_grid": _floats,
    "k_max": int,
    "n_pairs": int,
    "m_cap": int,
}


def _convert(key: str, value):
    if key not in _CONVERTERS:
        raise ConfigError(f"unknown key {key!r}")
    conv = _CONVERTERS[key]
    if conv is int and isinstance(value, str):
        try:
            f = float(value)
        except ValueError:
            raise ConfigError(f"{key}: expected an integer, got {value!r}") from None
        if not math.isfinite(f) or f != int(f):
            raise ConfigError(f"{key}: expected an integer, got {value!r}")
        return int(f)
    try:
        return conv(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: cannot parse {value!r}") from None


def parse_config_text(text: str) -> dict:
    """Parse ``key = value`` lines (``#`` comments, blank lines ignored) into raw values."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = _convert(key, value)
    return out


def parse_config(path: str | None = None, overrides: dict | None = None) -> RunConfig:
    """Merge a config file (optional) with flag overrides; flags win.

    A flag setting either ``delta`` or ``u`` replaces both file values.
    """
    values = {}
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                values = parse_config_text(fh.read())
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path!r}: {exc.strerror}") from None
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    if "delta" in overrides and "u" in overrides:
        raise ConfigError("give exactly one of 'delta' and 'u', not both")
    if "delta" in overrides or "u" in overrides:
        values.pop("delta", None)
        values.pop("u", None)
    for k, v in overrides.items():
        values[k] = _convert(k, v) if isinstance(v, str) else v
    return RunConfig(**values)
