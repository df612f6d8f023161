"""Built-in observers. Each one runs a library operation for a single replica and returns rows
``(time, key, value)``.

An observer gets the resolved model (graph, mechanism, migration rate, boundary, initial
condition) and its own options, already evaluated against the current parameter point.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from coalsim import genealogy, lattice, meanfield, mechanism
from coalsim.lattice import GraphSpec
from coalsim.spatial import (Boundary, Mode, SpatialConfig, density_decay, multiscale_observe,
                             parse_init, random_partition, restricted_coupling, run_origin_block,
                             simulate, simulate_crw, survivors_estimate)

__all__ = ["Model", "Options", "OBSERVERS", "MODEL_KEYS", "parse_graph", "parse_boundary",
           "build_model"]

# observer sections may override any of these model keys
MODEL_KEYS = ("graph", "mechanism", "rho", "migration_rate", "boundary", "init", "mode", "horizon")

_CALL_RE = re.compile(r"^\s*(\w+)\s*(?:\((.*)\))?\s*$")


def _call(text: str):
    m = _CALL_RE.match(text)
    if not m:
        raise ValueError(f"cannot parse {text!r}")
    kw = {}
    for part in filter(None, (p.strip() for p in (m.group(2) or "").split(","))):
        if "=" not in part:
            raise ValueError(f"expected key=value in {text!r}")
        k, v = part.split("=", 1)
        kw[k.strip()] = v.strip()
    return m.group(1).lower(), kw


def parse_graph(text: str, base_dir=None) -> GraphSpec:
    """``zd(d=2) | torus(d=2, L=32) | path(length=50[, origin=0]) | edges(file=...)``."""
    name, kw = _call(text)
    try:
        if name == "zd":
            return GraphSpec.zd(int(kw["d"]))
        if name == "torus":
            return GraphSpec.torus(int(kw["d"]), int(kw["L"]))
        if name == "path":
            return GraphSpec.path(int(kw["length"]), int(kw.get("origin", 0)))
        if name == "edges":
            p = Path(kw["file"])
            if base_dir is not None and not p.is_absolute():
                p = Path(base_dir) / p
            return lattice.load_edge_list(p, int(kw.get("origin", 0)))
    except KeyError as exc:
        raise ValueError(f"graph {name} is missing {exc.args[0]!r}") from None
    raise ValueError(f"unknown graph {name!r}")


def parse_boundary(text: str | None) -> Boundary:
    """``none | kill(R=...) | freeze(R=...)``."""
    if not text:
        return Boundary()
    name, kw = _call(text)
    if name == "none":
        return Boundary()
    if name in ("kill", "freeze"):
        if "R" not in kw:
            raise ValueError(f"{name} boundary needs R=...")
        R = int(kw["R"])
        return Boundary.kill_outside(R) if name == "kill" else Boundary.freeze_outside(R)
    raise ValueError(f"unknown boundary {name!r}")


@dataclass
class Model:
    graph: GraphSpec | None
    measure: mechanism.LambdaMeasure
    rho: float
    boundary: Boundary
    init: str | None
    mode: Mode
    horizon: float | None

    @property
    def config(self) -> SpatialConfig:
        if self.graph is None:
            raise ValueError("this observer needs a graph in [model]")
        return SpatialConfig(self.graph, self.measure, self.rho, self.boundary, self.mode)

    def initial(self, rng):
        if self.init is None:
            raise ValueError("this observer needs an initial condition (model.init)")
        return parse_init(self.init, self.graph, rng, self.mode)


def substitute(text: str, names: dict) -> str:
    """Replace ``{name}`` placeholders; the values are formatted compactly."""
    def rep(m):
        key = m.group(1)
        if key not in names:
            raise ValueError(f"unknown placeholder {{{key}}}")
        v = names[key]
        if isinstance(v, float) and v.is_integer():
            v = int(v)
        return str(v)
    return re.sub(r"\{(\w+)\}", rep, str(text))


def build_model(raw: dict, names: dict, base_dir=None) -> Model:
    from coalsim.harness.config import evaluate

    s = {k: substitute(v, names) for k, v in raw.items()}
    graph = parse_graph(s["graph"], base_dir) if s.get("graph") else None
    measure = mechanism.parse_mechanism(s.get("mechanism", "kingman"), base_dir)
    rho = float(evaluate(s.get("rho", s.get("migration_rate", "1")), names))
    horizon = float(evaluate(s["horizon"], names)) if s.get("horizon") else None
    return Model(graph, measure, rho, parse_boundary(s.get("boundary")), s.get("init"),
                 Mode(s.get("mode", "counts")), horizon)


class Options:
    """Observer options with ``{name}`` substitution and expression evaluation."""

    def __init__(self, raw: dict, names: dict):
        self.raw = raw
        self.names = names

    def has(self, key):
        return key in self.raw

    def str(self, key, default=None):
        if key not in self.raw:
            if default is None:
                raise KeyError(key)
            return default
        return substitute(self.raw[key], self.names)

    def num(self, key, default=None):
        from coalsim.harness.config import evaluate

        if key not in self.raw:
            if default is None:
                raise KeyError(key)
            return default
        return evaluate(substitute(self.raw[key], self.names), self.names)

    def int(self, key, default=None):
        return int(round(self.num(key, default)))

    def nums(self, key, default=None):
        from coalsim.harness.config import evaluate, parse_list

        if key not in self.raw:
            if default is None:
                raise KeyError(key)
            return list(default)
        text = substitute(self.raw[key], self.names)
        return [float(evaluate(p, self.names)) for p in parse_list(text)]


def _horizon(model: Model) -> float:
    if model.horizon is None:
        raise ValueError("observer needs a horizon")
    return float(model.horizon)


def _times(opts: Options, model: Model):
    if opts.has("times"):
        ts = sorted(opts.nums("times"))
    elif model.horizon is not None:
        ts = [model.horizon]
    else:
        raise ValueError("observer needs times=... or model.horizon")
    return np.asarray(ts, dtype=float)


# --- observers ------------------------------------------------------------------


def obs_counts(model: Model, opts: Options, rng, shared):
    """Live, frozen and occupied-site counts at ``times``."""
    ts = _times(opts, model)
    init = model.initial(rng)
    _, rec = simulate(init, float(ts[-1]), model.config, rng=rng, sample_times=ts)
    rows = []
    for i, t in enumerate(ts):
        rows += [(t, "N", rec.live[i]), (t, "frozen", rec.frozen[i]),
                 (t, "occupied", rec.occupied[i])]
    return rows


def obs_occupancy(model: Model, opts: Options, rng, shared):
    """Blocks in B(o, r) (when ``radius`` is given) and the largest occupied distance."""
    ts = _times(opts, model)
    init = model.initial(rng)
    r = opts.int("radius", -1)
    _, rec = simulate(init, float(ts[-1]), model.config, rng=rng, sample_times=ts,
                      snapshots=True)
    rows = []
    for t, snap in zip(ts, rec.snapshots):
        rows.append((t, "N", snap.total))
        rows.append((t, "radius", snap.max_distance()))
        if r >= 0:
            inside = model.graph.distances(snap.keys) <= r
            rows.append((t, "ball", int(snap.counts[inside].sum())))
    return rows


def obs_origin_block(model: Model, opts: Options, rng, shared):
    """n blocks at the origin with frozen exits, up to ``tau``."""
    n = opts.int("n")
    tau = float(opts.num("tau"))
    cfg = model.config
    st = run_origin_block(n, tau, cfg, rng)
    scale = cfg.theta / 4.0 * math.log(n)
    rows = [(tau, "M", st.M[-1]), (tau, "Z", st.Z[-1]), (tau, "N", st.N[-1]),
            (tau, "M_tau_half", st.M[-1] * tau / 2.0), (tau, "violations", st.violations)]
    for j, c in enumerate(st.landing):
        rows.append((tau, f"nb{j}", c))
    rows.append((tau, "nb_mean", float(np.mean(st.landing))))
    rows.append((tau, "nb_ratio", float(np.mean(st.landing)) / scale))
    return rows


def obs_restriction(model: Model, opts: Options, rng, shared):
    """Labeled run restricted to a random partition; counts sandwich violations per path."""
    init = parse_init(model.init, model.graph, rng, Mode.LABELED)
    h = _horizon(model)
    classes = min(opts.int("classes", 4), init.total)
    _, rec = simulate(init, h, model.config, rng=rng, record_log=True)
    res = restricted_coupling(rec, random_partition(init.total, classes, rng))
    return [(h, "violations", res.violations), (h, "checks", res.checks),
            (h, "N", int(res.totals[0, -1]))]


def obs_multiscale(model: Model, opts: Options, rng, shared):
    """Stage records X_k, Y_k, S_k, Z_k of the long-time schedule for B(o, m)."""
    m = opts.int("m")
    gamma = float(opts.num("gamma", 1.0))
    c0 = opts.int("C0", 1)
    st = multiscale_observe(m, gamma, model.config, rng, C0=c0)
    rows = []
    for r in st.rows():
        for key in ("X", "Y", "S", "Z"):
            rows.append((r["t"], f"{key}{r['k']}", r[key]))
    return rows


def obs_density_decay(model: Model, opts: Options, rng, shared):
    """S_t, rho(t) and 1/rho(t) for the confined run in B(o, R)."""
    R = opts.int("R")
    fill = float(opts.num("fill", 1))
    ts = _times(opts, model)
    res = density_decay(R, fill, ts, model.config, rng)
    rows = []
    for t, s, r in zip(res.t, res.S, res.rho):
        rows += [(t, "S", s), (t, "rho", r), (t, "inv_rho", 1.0 / r if r > 0 else math.inf)]
    return rows


def obs_crw(model: Model, opts: Options, rng, shared):
    """Coalescing random walks: occupancy indicators at fixed random site pairs.

    The pairs are drawn once per parameter point from the shared stream so all replicas look
    at the same sites.
    """
    ts = _times(opts, model)
    pairs = shared["pairs"]
    init = model.initial(rng)
    _, rec = simulate_crw(init, float(ts[-1]), model.config, rng, sample_times=ts,
                          snapshots=True)
    rows = []
    for t, snap in zip(ts, rec.snapshots):
        rows.append((t, "N", snap.total))
        x = snap.counts_at_keys(pairs[:, 0]) > 0
        y = snap.counts_at_keys(pairs[:, 1]) > 0
        for i in range(len(pairs)):
            rows += [(t, f"x{i}", int(x[i])), (t, f"y{i}", int(y[i])),
                     (t, f"xy{i}", int(x[i] and y[i]))]
    return rows


def _crw_shared(model: Model, opts: Options, rng):
    npairs = opts.int("pairs", 20)
    g = model.graph
    radius = opts.int("pair_radius", -1)
    if radius >= 0:
        sites = lattice.ball_sites(g, radius)
    elif g.is_finite:
        sites = np.arange(g.n_vertices, dtype=np.int64)
    else:
        raise ValueError("crw pairs on an infinite graph need pair_radius")
    if len(sites) < 2:
        raise ValueError("need at least two candidate sites")
    pairs = np.array([rng.choice(sites, 2, replace=False) for _ in range(npairs)],
                     dtype=np.int64)
    return {"pairs": pairs}


def obs_survivors(model: Model, opts: Options, rng, shared):
    """N*(t) along ``times`` and a plateau estimate of the long-time survivor count."""
    ts = _times(opts, model)
    window = float(opts.num("window", 0.5))
    crw = bool(opts.int("crw", 0))
    init = model.initial(rng)
    res = survivors_estimate(init, model.config, ts, rng, plateau_window=window, crw=crw)
    rows = [(t, "N", c) for t, c in zip(res.times, res.counts)]
    h = float(ts[-1])
    rows.append((h, "plateau", res.plateau if res.has_plateau else res.counts[-1]))
    rows.append((h, "has_plateau", int(res.has_plateau)))
    return rows


def obs_meanfield(model: Model, opts: Options, rng, shared):
    """Non-spatial block count N(t) from n blocks, plus N(t) t / 2."""
    n = opts.int("n")
    ts = _times(opts, model)
    counts = meanfield.blockcounts_at_times(n, ts, model.measure, rng)
    rows = []
    for t, c in zip(ts, counts):
        rows += [(t, "N", c), (t, "N_t_half", c * t / 2.0)]
    return rows


def obs_crp(model: Model, opts: Options, rng, shared):
    """Emigration count Z_n from the Chinese-restaurant block-count law."""
    n = opts.int("n")
    theta = float(opts.num("theta", 2.0 * model.rho))
    z = genealogy.sample_block_count_crp(n, theta, rng)
    return [(0.0, "Z", z), (0.0, "Z_over_ln_n", z / math.log(n))]


def obs_rates(model: Model, opts: Options, rng, shared):
    """Closed-form merger rates against quadrature; deterministic."""
    alphas = opts.nums("alphas", [1.2, 1.5, 1.8])
    bmax = opts.int("bmax", 100)
    rows = []
    for a in alphas:
        lam = mechanism.LambdaMeasure.beta(a)
        worst = 0.0
        for b in range(2, bmax + 1):
            for k in range(2, b + 1):
                x = mechanism.merger_rate(lam, b, k)
                q = mechanism.merger_rate_quad(lam, b, k)
                worst = max(worst, abs(x - q) / abs(q))
        table = mechanism.RateTable.build(lam, bmax)
        rows += [(a, "max_rel_err", worst), (a, "recursion_defect", table.recursion_defect())]
    return rows


def obs_meeting(model: Model, opts: Options, rng, shared):
    """Indicator (or fraction over ``walks``) that two walks from B(o, m) meet by ``horizon``."""
    m = opts.int("m")
    h = _horizon(model)
    est = lattice.rw_meeting_prob(model.graph, m, h, opts.int("walks", 1), rng, model.rho)
    return [(h, "meet", est.value)]


def obs_hitting(model: Model, opts: Options, rng, shared):
    """Indicator that a walk from a uniform site of B(o, m) visits the origin by ``horizon``."""
    m = opts.int("m")
    h = _horizon(model)
    sites = lattice.ball_sites(model.graph, m)
    est = lattice.rw_hit_origin_prob(model.graph, sites, h, opts.int("walks", 1), rng,
                                     model.rho)
    return [(h, "hit", est.value), (h, "hit_log_m", est.value * math.log(m))]


def obs_exp(model: Model, opts: Options, rng, shared):
    """One Exp(rate) sample; a trivial observer for exercising the harness."""
    return [(0.0, "x", rng.exponential(1.0 / float(opts.num("rate", 1.0))))]


@dataclass(frozen=True)
class ObserverDef:
    run: Callable
    shared: Callable | None = None
    needs_graph: bool = True


OBSERVERS: dict[str, ObserverDef] = {
    "counts": ObserverDef(obs_counts),
    "occupancy": ObserverDef(obs_occupancy),
    "origin_block": ObserverDef(obs_origin_block),
    "restriction": ObserverDef(obs_restriction),
    "multiscale": ObserverDef(obs_multiscale),
    "density_decay": ObserverDef(obs_density_decay),
    "crw": ObserverDef(obs_crw, _crw_shared),
    "survivors": ObserverDef(obs_survivors),
    "meanfield": ObserverDef(obs_meanfield, needs_graph=False),
    "crp": ObserverDef(obs_crp, needs_graph=False),
    "rates": ObserverDef(obs_rates, needs_graph=False),
    "meeting": ObserverDef(obs_meeting),
    "hitting": ObserverDef(obs_hitting),
    "exp": ObserverDef(obs_exp, needs_graph=False),
}
