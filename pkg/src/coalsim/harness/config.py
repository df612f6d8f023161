"""Experiment configs: INI files with [experiment], [model] and one [observer.NAME] per observer.

Numeric values may be arithmetic expressions over the names of the current parameter point
(for example ``tau = ln(n) ** -3``) and strings may contain ``{name}`` placeholders, which is
how sweeps vary a parameter.
"""

from __future__ import annotations

import ast
import configparser
import itertools
import math
import operator
import re
from dataclasses import dataclass, field
from pathlib import Path

__all__ = ["ConfigError", "ExperimentSpec", "load_config", "load_grid", "evaluate", "parse_list"]


class ConfigError(ValueError):
    """Malformed or inconsistent experiment config."""

    def __init__(self, message: str, path=None, line: int | None = None, field: str | None = None):
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        if field:
            message = f"[{field}] {message}"
        super().__init__(where + message)
        self.path, self.line, self.field = path, line, field


_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Div: operator.truediv, ast.Pow: operator.pow, ast.FloorDiv: operator.floordiv,
           ast.Mod: operator.mod}
_FUNCS = {"ln": math.log, "log": math.log, "log10": math.log10, "sqrt": math.sqrt,
          "exp": math.exp, "floor": math.floor, "ceil": math.ceil, "int": int, "min": min,
          "max": max, "abs": abs}
_CONSTS = {"pi": math.pi, "e": math.e, "inf": math.inf}


def evaluate(expr: str, names: dict | None = None):
    """Evaluate an arithmetic expression with a small whitelist of functions."""
    names = {**_CONSTS, **(names or {})}

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return node.value
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            v = ev(node.operand)
            return -v if isinstance(node.op, ast.USub) else v
        if isinstance(node, ast.Name) and node.id in names:
            return names[node.id]
        if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) \
                and node.func.id in _FUNCS and not node.keywords:
            return _FUNCS[node.func.id](*[ev(a) for a in node.args])
        raise ValueError(f"unsupported expression element {ast.dump(node)[:40]}")

    try:
        return ev(ast.parse(str(expr).strip(), mode="eval"))
    except SyntaxError as exc:
        raise ValueError(f"cannot parse expression {expr!r}") from exc


def parse_list(text: str) -> list[str]:
    return [p.strip() for p in re.split(r"[,\s]+", str(text).strip()) if p.strip()]


@dataclass
class ExperimentSpec:
    """One experiment: model, observers, replication and output settings.

    ``model`` and ``observers`` keep raw strings; they are resolved per parameter point.
    """

    name: str
    seed: int
    replicas: int
    model: dict[str, str]
    observers: dict[str, dict[str, str]]
    params: dict[str, str] = field(default_factory=dict)
    threads: int | None = None
    out: str | None = None
    source: str | None = None
    base_dir: Path | None = None
    grid: list[dict] | None = None
    line_of: dict = field(default_factory=dict, repr=False)

    def error(self, message, section, key=None):
        fld = f"{section}{'.' + key if key else ''}"
        return ConfigError(message, self.source, self.line_of.get((section, key)), fld)

    def resolved_params(self, overrides: dict | None = None) -> dict:
        """Grid values first, then [params] in order (later entries may use earlier ones)."""
        names: dict = {}

        def put(k, v):
            if isinstance(v, str):
                try:
                    v = evaluate(v, names)
                except ValueError:
                    pass
            names[k] = v

        for k, v in (overrides or {}).items():
            put(k, v)
        for k, v in self.params.items():
            if k not in names:
                put(k, v)
        return names


def _parser() -> configparser.ConfigParser:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str  # option names are case-sensitive (R, C0)
    return cp


def _line_index(text: str) -> dict:
    out, section = {}, None
    for i, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        m = re.match(r"^\[(.+)\]$", s)
        if m:
            section = m.group(1).strip()
            out[(section, None)] = i
            continue
        m = re.match(r"^([^=:#;\s][^=:]*?)\s*[=:]", s)
        if m and section:
            out[(section, m.group(1).strip())] = i
    return out


def load_config(path, text: str | None = None) -> ExperimentSpec:
    """Parse an experiment config file (or ``text`` attributed to ``path``)."""
    path = Path(path) if path is not None else None
    if text is None:
        try:
            text = path.read_text()
        except OSError:
            raise
    cp = _parser()
    try:
        cp.read_string(text, source=str(path))
    except configparser.ParsingError as exc:
        line = exc.errors[0][0] if getattr(exc, "errors", None) else None
        raise ConfigError(f"unparseable line: {exc.errors[0][1]!s}" if line else str(exc),
                          path, line) from None
    except configparser.Error as exc:
        raise ConfigError(str(exc).splitlines()[0], path, getattr(exc, "lineno", None)) from None
    lines = _line_index(text)

    def need(section, key):
        if not cp.has_option(section, key):
            raise ConfigError(f"missing required key {key!r}", path,
                              lines.get((section, None)), f"{section}.{key}")
        return cp.get(section, key)

    if not cp.has_section("experiment"):
        raise ConfigError("missing [experiment] section", path, None, "experiment")
    if not cp.has_section("model"):
        raise ConfigError("missing [model] section", path, None, "model")
    name = cp.get("experiment", "name", fallback=path.stem if path else "experiment")
    try:
        seed = int(need("experiment", "seed"), 0)
    except ValueError:
        raise ConfigError("seed must be an integer", path, lines.get(("experiment", "seed")),
                          "experiment.seed") from None
    if not 0 <= seed < 2 ** 64:
        raise ConfigError("seed must fit in 64 bits", path, lines.get(("experiment", "seed")),
                          "experiment.seed")
    try:
        replicas = int(cp.get("experiment", "replicas", fallback="1"))
    except ValueError:
        raise ConfigError("replicas must be an integer", path,
                          lines.get(("experiment", "replicas")), "experiment.replicas") from None
    if replicas < 1:
        raise ConfigError("replicas must be >= 1", path, lines.get(("experiment", "replicas")),
                          "experiment.replicas")
    threads = cp.get("experiment", "threads", fallback=None)
    observers = {}
    listed = parse_list(cp.get("experiment", "observers", fallback=""))
    for sec in cp.sections():
        if sec.startswith("observer."):
            observers[sec.split(".", 1)[1]] = dict(cp.items(sec))
    for o in listed:
        observers.setdefault(o, {})
    if not observers:
        raise ConfigError("no observers configured", path, lines.get(("experiment", None)),
                          "experiment.observers")
    from coalsim.harness.observers import OBSERVERS

    for o, params in observers.items():
        kind = params.get("type", o)
        if kind not in OBSERVERS:
            line = lines.get((f"observer.{o}", None)) or lines.get(("experiment", "observers"))
            raise ConfigError(f"unknown observer {kind!r} (known: {', '.join(sorted(OBSERVERS))})",
                              path, line, f"observer.{o}")
    params = dict(cp.items("params")) if cp.has_section("params") else {}
    grid = _grid_from(cp, path) if cp.has_section("grid") else None
    return ExperimentSpec(
        name=name, seed=seed, replicas=replicas, model=dict(cp.items("model")),
        observers=observers, params=params,
        threads=int(threads) if threads not in (None, "") else None,
        out=cp.get("experiment", "out", fallback=None), source=str(path) if path else None,
        base_dir=path.parent if path else None, grid=grid, line_of=lines)


def _grid_from(cp, path) -> list[dict]:
    keys = list(cp["grid"].keys())
    values = [parse_list(cp["grid"][k]) for k in keys]
    if not keys or any(not v for v in values):
        raise ConfigError("grid is empty", path, None, "grid")
    return [dict(zip(keys, combo)) for combo in itertools.product(*values)]


def load_grid(path) -> list[dict]:
    """Sweep grid file: a [grid] section of ``name = v1, v2, ...``; returns the cartesian product."""
    cp = _parser()
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(str(exc).splitlines()[0], path) from None
    if not cp.has_section("grid"):
        raise ConfigError("missing [grid] section", path)
    return _grid_from(cp, path)
