"""Replica scheduling, aggregation and output files.

Every replica gets its own stream ``SeedSequence([seed, cell, replica, observer])``, so raw
results depend only on the experiment config and the root seed, never on the thread count.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from coalsim.asymptotics import fit_power_law
from coalsim.harness.config import ConfigError, ExperimentSpec, evaluate
from coalsim.harness.observers import MODEL_KEYS, OBSERVERS, Options, build_model

__all__ = ["ScalingReport", "run_experiment", "replicate_and_aggregate", "emit_plot_data",
           "resolve_threads", "STATS"]

STATS = ("n", "mean", "sd", "stderr", "q05", "q50", "q95")
RAW_HEADER = ("replica", "observer", "time", "key", "value")
AGG_HEADER = ("observer", "param_point", "stat", "value")


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def _cell_label(cell: dict) -> str:
    return ";".join(f"{k}={v}" for k, v in cell.items())


@dataclass
class ScalingReport:
    """Aggregated results; ``raw`` keeps every replica row in canonical order.

    ``table`` rows are dicts with keys cell, observer, time, key, n, mean, sd, stderr, q05,
    q50, q95. ``fits`` maps a fit name to (exponent, prefactor, r2) plus the points used.
    """

    name: str
    seed: int
    replicas: int
    cells: list[dict]
    raw: list[tuple] = field(default_factory=list)
    table: list[dict] = field(default_factory=list)
    fits: dict = field(default_factory=dict)
    files: dict = field(default_factory=dict)

    # --- access -------------------------------------------------------------
    def values(self, observer: str, key: str, time=None, cell: dict | None = None) -> np.ndarray:
        """Per-replica values in replica order."""
        obs = observer if not cell else f"{observer}[{_cell_label(cell)}]"
        out = [r[4] for r in self.raw
               if r[1] == obs and r[3] == key and (time is None or r[2] == time)]
        return np.asarray(out, dtype=float)

    def stat(self, observer: str, key: str, stat: str = "mean", time=None,
             cell: dict | None = None) -> float:
        rows = [r for r in self.table if r["observer"] == observer and r["key"] == key
                and (time is None or r["time"] == time)
                and (cell is None or r["cell"] == cell)]
        if len(rows) != 1:
            raise KeyError(f"{len(rows)} rows match {observer}/{key}")
        return rows[0][stat]

    def times(self, observer: str, key: str) -> list[float]:
        return sorted({r["time"] for r in self.table if r["observer"] == observer
                       and r["key"] == key})

    # --- serialisation -------------------------------------------------------------
    def header(self) -> str:
        return f"# coalsim experiment={self.name} seed={self.seed} replicas={self.replicas}\n"

    def raw_csv(self) -> str:
        buf = io.StringIO()
        buf.write(self.header())
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(RAW_HEADER)
        for rep, obs, t, key, v in self.raw:
            w.writerow((rep, obs, _fmt(t), key, _fmt(v)))
        return buf.getvalue()

    def aggregated_rows(self):
        for row in self.table:
            point = _cell_label(row["cell"])
            point = (point + ";" if point else "") + f"t={_fmt(row['time'])};key={row['key']}"
            for s in STATS:
                yield row["observer"], point, s, row[s]

    def aggregated_csv(self) -> str:
        buf = io.StringIO()
        buf.write(self.header())
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(AGG_HEADER)
        for obs, point, s, v in self.aggregated_rows():
            w.writerow((obs, point, s, _fmt(v)))
        return buf.getvalue()

    def summary(self) -> dict:
        return {"experiment": self.name, "seed": self.seed, "replicas": self.replicas,
                "cells": self.cells, "rows": len(self.raw), "fits": self.fits,
                "files": {k: str(v) for k, v in self.files.items()}}

    @classmethod
    def from_aggregated_csv(cls, path) -> "ScalingReport":
        """Rebuild the aggregated table from a written CSV (raw rows are not restored)."""
        text = Path(path).read_text()
        meta = {}
        lines = text.splitlines()
        if lines and lines[0].startswith("#"):
            for part in lines[0][1:].split():
                if "=" in part:
                    k, v = part.split("=", 1)
                    meta[k] = v
        rows: dict = {}
        reader = csv.DictReader(line for line in lines if not line.startswith("#"))
        if reader.fieldnames is None or tuple(reader.fieldnames) != AGG_HEADER:
            raise ValueError(f"{path}: not an aggregated report")
        for r in reader:
            parts = dict(p.split("=", 1) for p in r["param_point"].split(";"))
            key = parts.pop("key")
            t = float(parts.pop("t"))
            cell = parts
            ident = (r["observer"], tuple(cell.items()), t, key)
            row = rows.setdefault(ident, {"observer": r["observer"], "cell": cell, "time": t,
                                          "key": key})
            row[r["stat"]] = float(r["value"])
        cells = []
        for row in rows.values():
            if row["cell"] not in cells:
                cells.append(row["cell"])
        return cls(meta.get("experiment", Path(path).stem), int(meta.get("seed", 0)),
                   int(meta.get("replicas", 0)), cells, table=list(rows.values()))


# --- aggregation ------------------------------------------------------------------


def _summarise(vals: np.ndarray) -> dict:
    n = len(vals)
    finite = vals[np.isfinite(vals)]
    mean = float(np.mean(vals))
    sd = float(np.std(vals, ddof=1)) if n > 1 else 0.0
    q = np.quantile(finite, [0.05, 0.5, 0.95]) if len(finite) else [math.nan] * 3
    return {"n": n, "mean": mean, "sd": sd, "stderr": sd / math.sqrt(n),
            "q05": float(q[0]), "q50": float(q[1]), "q95": float(q[2])}


def _aggregate(raw, cells, obs_names) -> list[dict]:
    groups: dict = {}
    for rep, obs, t, key, v in raw:
        groups.setdefault((obs, t, key), []).append((rep, v))
    table = []
    for ci, cell in enumerate(cells):
        for name in obs_names:
            label = name if not cell else f"{name}[{_cell_label(cell)}]"
            idents = sorted((g for g in groups if g[0] == label), key=lambda g: (g[1], g[2]))
            for ident in idents:
                vals = np.array([v for _, v in sorted(groups[ident], key=lambda p: p[0])],
                                dtype=float)
                row = {"cell": cell, "observer": name, "time": ident[1], "key": ident[2]}
                row.update(_summarise(vals))
                table.append(row)
    return table


def resolve_threads(threads: int | None) -> int:
    if threads is None:
        env = os.environ.get("COALSIM_THREADS")
        if env:
            try:
                threads = int(env)
            except ValueError:
                raise ConfigError(f"COALSIM_THREADS must be an integer, got {env!r}") from None
    threads = 1 if threads is None else threads
    if threads < 1:
        raise ConfigError("threads must be >= 1")
    return threads


def _execute(tasks: Sequence[Callable[[], list]], threads: int) -> list:
    if threads == 1 or len(tasks) <= 1:
        return [t() for t in tasks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda f: f(), tasks))


def _stream(*entropy) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(e) for e in entropy]))


def replicate_and_aggregate(op: Callable[[dict, np.random.Generator], list], grid: Sequence[dict],
                            R: int, seed: int, threads: int | None = None,
                            name: str = "op") -> ScalingReport:
    """Run ``op(point, rng) -> [(time, key, value), ...]`` R times on every grid cell."""
    grid = [dict(c) for c in grid]
    if not grid:
        raise ValueError("grid must be nonempty")
    if R < 1:
        raise ValueError("R must be >= 1")
    threads = resolve_threads(threads)
    tasks, labels = [], []
    for ci, cell in enumerate(grid):
        label = name if not cell else f"{name}[{_cell_label(cell)}]"
        for r in range(R):
            tasks.append(lambda cell=cell, ci=ci, r=r: op(cell, _stream(seed, ci, r, 0)))
            labels.append((r, label))
    results = _execute(tasks, threads)
    raw = [(r, label, float(t), str(k), v)
           for (r, label), rows in zip(labels, results) for t, k, v in rows]
    raw.sort(key=lambda x: (grid_index(x[1], name, grid), x[0]))
    rep = ScalingReport(name, seed, R, grid, raw)
    rep.table = _aggregate(raw, grid, [name])
    return rep


def grid_index(label: str, name: str, grid) -> int:
    for i, cell in enumerate(grid):
        if label == (name if not cell else f"{name}[{_cell_label(cell)}]"):
            return i
    return -1


def _fits(spec: ExperimentSpec, report: ScalingReport, grid: list[dict]):
    """``fit = KEY vs t`` (power law over time) or ``fit = KEY vs PARAM`` (over sweep cells),
    optionally followed by ``mean`` (default median) and ``span=F`` (minimum x ratio)."""
    for oname, params in spec.observers.items():
        text = params.get("fit")
        if not text:
            continue
        parts = text.split()
        if len(parts) < 3 or parts[1] != "vs":
            raise spec.error("fit must read 'KEY vs t|PARAM [mean] [span=F]'",
                             f"observer.{oname}", "fit")
        key, xname = parts[0], parts[2]
        stat = "q50" if "mean" not in parts[3:] else "mean"
        span = 10.0
        for p in parts[3:]:
            if p.startswith("span="):
                span = float(p[5:])
        pts = []
        for row in report.table:
            if row["observer"] != oname or row["key"] != key:
                continue
            if xname == "t":
                x = row["time"]
            elif xname in row["cell"]:
                x = float(evaluate(row["cell"][xname]))
            else:
                continue
            pts.append((x, row[stat]))
        pts.sort()
        label = f"{oname}:{key}~{xname}"
        try:
            b, a, r2 = fit_power_law(pts, min_span=span)
            report.fits[label] = {"exponent": b, "prefactor": a, "r2": r2, "stat": stat,
                                  "points": pts}
        except ValueError as exc:
            report.fits[label] = {"error": str(exc), "points": pts}


def run_experiment(spec: ExperimentSpec, out_dir=None, *, threads: int | None = None,
                   seed: int | None = None, replicas: int | None = None,
                   grid: Sequence[dict] | None = None, write: bool = True) -> ScalingReport:
    """Run every observer of ``spec`` for each replica (and grid cell) and write results.

    Files: ``raw.csv`` (replica,observer,time,key,value), ``aggregated.csv``
    (observer,param_point,stat,value) and ``summary.json`` in ``out_dir``.
    """
    seed = spec.seed if seed is None else int(seed)
    R = spec.replicas if replicas is None else int(replicas)
    if R < 1:
        raise ConfigError("replicas must be >= 1", spec.source, None, "experiment.replicas")
    threads = resolve_threads(threads if threads is not None else spec.threads)
    grid = grid if grid is not None else spec.grid
    cells = [dict(c) for c in grid] if grid else [{}]
    names = list(spec.observers)

    prepared = []
    for ci, cell in enumerate(cells):
        point = spec.resolved_params(cell)
        try:
            model = build_model(spec.model, point, spec.base_dir)
        except (ValueError, KeyError) as exc:
            raise ConfigError(str(exc), spec.source, None, "model") from None
        per_obs = []
        for oi, oname in enumerate(names):
            raw_opts = spec.observers[oname]
            odef = OBSERVERS[raw_opts.get("type", oname)]
            override = {k: v for k, v in raw_opts.items() if k in MODEL_KEYS}
            omodel = model
            if override:
                try:
                    omodel = build_model({**spec.model, **override}, point, spec.base_dir)
                except (ValueError, KeyError) as exc:
                    raise spec.error(str(exc), f"observer.{oname}") from None
            if odef.needs_graph and omodel.graph is None:
                raise spec.error(f"observer {oname} needs a graph", "model")
            opts = Options({k: v for k, v in raw_opts.items()
                            if k not in ("type", "fit") and k not in MODEL_KEYS}, point)
            shared = None
            if odef.shared is not None:
                try:
                    shared = odef.shared(omodel, opts, _stream(seed, ci, oi, 0, 1))
                except (ValueError, KeyError) as exc:
                    raise spec.error(str(exc), f"observer.{oname}") from None
            per_obs.append((oname, odef, omodel, opts, shared))
        prepared.append((ci, cell, per_obs))

    def replica(ci, cell, per_obs, r):
        rows = []
        for oi, (oname, odef, model, opts, shared) in enumerate(per_obs):
            label = oname if not cell else f"{oname}[{_cell_label(cell)}]"
            try:
                out = odef.run(model, opts, _stream(seed, ci, r, oi), shared)
            except KeyError as exc:
                raise spec.error(f"missing option {exc.args[0]!r}", f"observer.{oname}") from None
            rows.extend((r, label, float(t), str(k), v) for t, k, v in out)
        return rows

    tasks = [lambda a=p, r=r: replica(*a, r) for p in prepared for r in range(R)]
    results = _execute(tasks, threads)
    raw = [row for rows in results for row in rows]
    report = ScalingReport(spec.name, seed, R, cells, raw)
    report.table = _aggregate(raw, cells, names)
    _fits(spec, report, cells)
    if write:
        out = Path(out_dir or spec.out or f"results/{spec.name}")
        _write(report, out)
    return report


def _write(report: ScalingReport, out: Path):
    out.mkdir(parents=True, exist_ok=True)
    files = {"raw": out / "raw.csv", "aggregated": out / "aggregated.csv",
             "summary": out / "summary.json"}
    report.files = files
    files["raw"].write_text(report.raw_csv())
    files["aggregated"].write_text(report.aggregated_csv())
    files["summary"].write_text(json.dumps(report.summary(), indent=2, default=float) + "\n")


# --- plot data ---------------------------------------------------------------------


def emit_plot_data(report: ScalingReport, style: str = "linear", out_dir=None) -> list[Path]:
    """One whitespace-separated table per observer: series, x, y, y_err_low, y_err_high.

    y is the mean; the band is q05/q95 when the report has quantiles, else mean +- stderr.
    x is the sweep parameter when exactly one varies, otherwise time. ``loglog`` writes log10
    of x and y (and the band), ``semilog`` log10 of y only; rows with nonpositive values are
    dropped there.
    """
    if style not in ("loglog", "semilog", "linear"):
        raise ValueError("style must be loglog, semilog or linear")
    out = Path(out_dir if out_dir is not None else ".")
    out.mkdir(parents=True, exist_ok=True)
    varying = sorted({k for c in report.cells for k in c
                      if len({str(cc.get(k)) for cc in report.cells}) > 1})
    xname = varying[0] if len(varying) == 1 else "t"
    by_obs: dict = {}
    for row in report.table:
        by_obs.setdefault(row["observer"], []).append(row)
    written = []
    for obs, rows in by_obs.items():
        lines = []
        for row in rows:
            x = float(row["cell"][xname]) if xname != "t" else row["time"]
            series = row["key"]
            if xname != "t" and len(report.times(obs, row["key"])) > 1:
                series = f"{row['key']}@t={_fmt(row['time'])}"
            y = row["mean"]
            if not math.isnan(row.get("q05", math.nan)):
                lo, hi = row["q05"], row["q95"]
            else:
                lo, hi = y - row["stderr"], y + row["stderr"]
            vals = [x, y, lo, hi]
            if style == "loglog":
                if min(vals) <= 0:
                    continue
                vals = [math.log10(v) for v in vals]
            elif style == "semilog":
                if min(vals[1:]) <= 0:
                    continue
                vals = [x] + [math.log10(v) for v in vals[1:]]
            lines.append((series, *vals))
        path = out / f"{obs}.{style}.dat"
        note = {"loglog": "x and y columns are log10 values",
                "semilog": "y columns are log10 values",
                "linear": "values are untransformed"}[style]
        with open(path, "w") as fh:
            fh.write(f"# experiment={report.name} seed={report.seed} observer={obs} "
                     f"x={xname} style={style}: {note}\n")
            fh.write("series x y y_err_low y_err_high\n")
            for series, *v in lines:
                fh.write(series + " " + " ".join(_fmt(u) for u in v) + "\n")
        written.append(path)
    return written
