"""Spatial configurations and run parameters."""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field

import numpy as np

from coalsim.lattice import GraphSpec, ball_sites
from coalsim.mechanism import LambdaMeasure

__all__ = ["Mode", "BoundaryKind", "Boundary", "SpatialConfig", "SpatialState", "parse_init"]


class Mode(str, enum.Enum):
    COUNTS = "counts"
    LABELED = "labeled"


class BoundaryKind(str, enum.Enum):
    NONE = "none"
    KILL = "kill"
    FREEZE = "freeze"


@dataclass(frozen=True)
class Boundary:
    """What happens to a block that jumps outside B(o, R)."""

    kind: BoundaryKind = BoundaryKind.NONE
    R: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", BoundaryKind(self.kind))
        if self.kind is not BoundaryKind.NONE and self.R < 0:
            raise ValueError("boundary radius must be nonnegative")

    @classmethod
    def kill_outside(cls, R: int) -> "Boundary":
        return cls(BoundaryKind.KILL, R)

    @classmethod
    def freeze_outside(cls, R: int) -> "Boundary":
        return cls(BoundaryKind.FREEZE, R)


@dataclass(frozen=True)
class SpatialConfig:
    """Graph, merger mechanism, per-block jump rate rho (theta = 2 rho) and boundary policy."""

    graph: GraphSpec
    measure: LambdaMeasure
    rho: float = 1.0
    boundary: Boundary = field(default_factory=Boundary)
    mode: Mode = Mode.COUNTS

    def __post_init__(self):
        if self.rho < 0:
            raise ValueError("migration rate must be nonnegative")
        object.__setattr__(self, "mode", Mode(self.mode))

    @property
    def theta(self) -> float:
        return 2.0 * self.rho


@dataclass
class SpatialState:
    """Occupied sites and their block counts.

    ``keys``/``counts`` list live blocks per occupied site (keys sorted). Labeled states also
    carry ``label_site`` (site key of each label, -1 once merged away) and ``status``. Frozen
    blocks (exited under a freeze boundary) are kept apart in ``frozen_keys``/``frozen_counts``.
    """

    graph: GraphSpec
    keys: np.ndarray
    counts: np.ndarray
    mode: Mode = Mode.COUNTS
    label_site: np.ndarray | None = None
    status: np.ndarray | None = None
    frozen_keys: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    frozen_counts: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    time: float = 0.0

    def __post_init__(self):
        self.keys = np.asarray(self.keys, dtype=np.int64)
        self.counts = np.asarray(self.counts, dtype=np.int64)
        order = np.argsort(self.keys)
        self.keys, self.counts = self.keys[order], self.counts[order]
        if np.any(self.counts <= 0):
            raise ValueError("stored counts must be positive")
        if len(np.unique(self.keys)) != len(self.keys):
            raise ValueError("duplicate site keys")

    # --- construction -------------------------------------------------

    @classmethod
    def from_particles(cls, graph: GraphSpec, particle_keys, mode=Mode.COUNTS) -> "SpatialState":
        """State with one block per entry of ``particle_keys``; labels are the entry indices."""
        pk = np.asarray(particle_keys, dtype=np.int64)
        keys, counts = np.unique(pk, return_counts=True)
        st = cls(graph, keys, counts, Mode(mode))
        if st.mode is Mode.LABELED:
            st.label_site = pk.copy()
            st.status = np.zeros(len(pk), dtype=np.int8)
        return st

    @classmethod
    def point(cls, graph: GraphSpec, n: int, site=None, mode=Mode.COUNTS) -> "SpatialState":
        site = graph.origin if site is None else site
        return cls.from_particles(graph, np.full(int(n), graph.encode(site)), mode)

    @classmethod
    def fill(cls, graph: GraphSpec, count: int, radius: int, mode=Mode.COUNTS) -> "SpatialState":
        sites = ball_sites(graph, radius)
        return cls.from_particles(graph, np.repeat(sites, int(count)), mode)

    @classmethod
    def bernoulli(cls, graph: GraphSpec, p: float, radius: int, rng: np.random.Generator,
                  mode=Mode.COUNTS) -> "SpatialState":
        """Each site of B(o, radius) holds one particle with probability p (at least one kept)."""
        sites = ball_sites(graph, radius)
        keep = sites[rng.random(len(sites)) < p]
        if len(keep) == 0:
            keep = sites[:1] if len(sites) == 1 else rng.choice(sites, 1)
        return cls.from_particles(graph, keep, mode)

    @classmethod
    def uniform(cls, graph: GraphSpec, s: int, radius: int, rng: np.random.Generator,
                distinct: bool = False, mode=Mode.COUNTS) -> "SpatialState":
        """``s`` particles at independent uniform sites of B(o, radius) (or distinct sites)."""
        sites = ball_sites(graph, radius)
        if distinct and s > len(sites):
            raise ValueError("more particles than sites")
        pk = rng.choice(sites, size=int(s), replace=not distinct)
        return cls.from_particles(graph, pk, mode)

    # --- views --------------------------------------------------------

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def frozen_total(self) -> int:
        return int(self.frozen_counts.sum())

    @property
    def occupied(self) -> int:
        return len(self.keys)

    def particle_keys(self) -> np.ndarray:
        """Site key per particle; for labeled states the label order is preserved."""
        if self.mode is Mode.LABELED and self.label_site is not None and self.status is not None:
            alive = self.status == 0
            if np.all(alive):
                return self.label_site.copy()
        return np.repeat(self.keys, self.counts)

    def count_at(self, site) -> int:
        key = self.graph.encode(site)
        i = np.searchsorted(self.keys, key)
        return int(self.counts[i]) if i < len(self.keys) and self.keys[i] == key else 0

    def site_counts(self) -> dict:
        return {self.graph.decode(k): int(c) for k, c in zip(self.keys, self.counts)}

    def counts_at_keys(self, keys) -> np.ndarray:
        keys = np.asarray(keys, dtype=np.int64)
        i = np.clip(np.searchsorted(self.keys, keys), 0, max(len(self.keys) - 1, 0))
        if len(self.keys) == 0:
            return np.zeros(len(keys), dtype=np.int64)
        return np.where(self.keys[i] == keys, self.counts[i], 0)

    def max_distance(self) -> int:
        """Largest graph distance from the origin among occupied sites (0 when empty)."""
        if len(self.keys) == 0:
            return 0
        return int(self.graph.distances(self.keys).max())

    def labels_at(self, site) -> np.ndarray:
        if self.label_site is None:
            raise ValueError("counts-mode state has no labels")
        key = self.graph.encode(site)
        return np.flatnonzero((self.label_site == key) & (self.status == 0))


_INIT_RE = re.compile(r"^\s*(\w+)\s*\((.*)\)\s*$")


def parse_init(text: str, graph: GraphSpec, rng: np.random.Generator | None = None,
               mode=Mode.COUNTS) -> SpatialState:
    """``point(n=..., site=origin) | bernoulli(p=..., radius=m) | fill(count=..., radius=m) |
    uniform(s=..., radius=m[, distinct=1])``."""
    m = _INIT_RE.match(text)
    if not m:
        raise ValueError(f"cannot parse initial condition {text!r}")
    name = m.group(1).lower()
    kw = {}
    for part in filter(None, (p.strip() for p in m.group(2).split(","))):
        if "=" not in part:
            raise ValueError(f"expected key=value in {text!r}")
        k, v = part.split("=", 1)
        kw[k.strip()] = v.strip()
    try:
        if name == "point":
            site = kw.get("site", "origin")
            site = None if site == "origin" else tuple(int(c) for c in site.strip("()").split(";"))
            if site is not None and not graph.is_lattice:
                site = site[0]
            return SpatialState.point(graph, int(kw["n"]), site, mode)
        if name == "fill":
            return SpatialState.fill(graph, int(kw.get("count", 1)), int(kw["radius"]), mode)
        if name == "bernoulli":
            return SpatialState.bernoulli(graph, float(kw["p"]), int(kw["radius"]), rng, mode)
        if name == "uniform":
            return SpatialState.uniform(graph, int(kw["s"]), int(kw["radius"]), rng,
                                        bool(int(kw.get("distinct", 0))), mode)
    except KeyError as exc:
        raise ValueError(f"initial condition {name} is missing {exc.args[0]!r}") from None
    raise ValueError(f"unknown initial condition {name!r}")
