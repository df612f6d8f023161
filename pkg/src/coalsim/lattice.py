"""Graph substrate, balls, and Monte Carlo random-walk oracles.

Sites on Z^d and tori are integer tuples; on paths and custom graphs they are vertex ids.
Internally every site is an int64 key (see :mod:`coalsim._kernels`), which is what the
simulators store. Balls use graph distance (l1 on lattices).
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np
from numba import njit
from scipy import sparse, stats
from scipy.sparse import csgraph

from coalsim import _kernels as K

__all__ = [
    "GraphKind",
    "GraphSpec",
    "Estimate",
    "neighbors",
    "ball_volume",
    "ball_sites",
    "rw_meeting_prob",
    "rw_hit_origin_prob",
    "rw_mean_square_displacement",
    "excursion_tail_check",
    "load_edge_list",
]


class GraphKind(str, enum.Enum):
    ZD = "zd"
    TORUS = "torus"
    PATH = "path"
    CUSTOM = "custom"


_EMPTY_I = np.zeros(2, dtype=np.int64)


@dataclass(frozen=True, eq=False)
class GraphSpec:
    """A bounded-degree graph with a distinguished origin.

    Build with :meth:`zd`, :meth:`torus`, :meth:`path` or :meth:`custom`.
    """

    kind: GraphKind
    d: int = 1
    L: int = 0
    n_vertices: int = 0
    origin_id: int = 0
    indptr: np.ndarray = field(default=_EMPTY_I, repr=False)
    indices: np.ndarray = field(default=_EMPTY_I, repr=False)
    dist: np.ndarray = field(default=_EMPTY_I, repr=False)

    @classmethod
    def zd(cls, d: int) -> "GraphSpec":
        if not 1 <= d <= 3:
            raise ValueError("Z^d supported for d in {1, 2, 3}")
        return cls(GraphKind.ZD, d=d)

    @classmethod
    def torus(cls, d: int, L: int) -> "GraphSpec":
        if d < 1:
            raise ValueError("d must be >= 1")
        if L < 3:
            raise ValueError("torus side L must be >= 3")
        return cls(GraphKind.TORUS, d=d, L=L, n_vertices=L ** d)

    @classmethod
    def path(cls, length: int, origin: int = 0) -> "GraphSpec":
        """Path on vertices ``0 .. length - 1``."""
        if length < 1:
            raise ValueError("path length must be >= 1")
        edges = [(i, i + 1) for i in range(length - 1)]
        return cls._from_edges(GraphKind.PATH, length, edges, origin)

    @classmethod
    def custom(cls, adjacency, origin: int = 0, max_degree: int | None = None) -> "GraphSpec":
        """Graph from an adjacency list ``adjacency[v] = [neighbours...]``."""
        n = len(adjacency)
        edges = set()
        for u, nb in enumerate(adjacency):
            for v in nb:
                if not 0 <= v < n:
                    raise ValueError(f"vertex {v} out of range")
                if u not in adjacency[v]:
                    raise ValueError(f"adjacency not symmetric at ({u}, {v})")
                edges.add((min(u, v), max(u, v)))
        g = cls._from_edges(GraphKind.CUSTOM, n, sorted(edges), origin)
        if max_degree is not None and max_degree != g.max_degree:
            raise ValueError(f"declared max degree {max_degree} != actual {g.max_degree}")
        return g

    @classmethod
    def _from_edges(cls, kind, n, edges, origin):
        if not 0 <= origin < n:
            raise ValueError("origin out of range")
        e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if np.any(e[:, 0] == e[:, 1]):
            raise ValueError("self-loops are not allowed")
        rows = np.concatenate([e[:, 0], e[:, 1]])
        cols = np.concatenate([e[:, 1], e[:, 0]])
        adj = sparse.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
        adj.sum_duplicates()
        adj.sort_indices()
        dist = csgraph.shortest_path(adj, unweighted=True, indices=origin)
        dist = np.where(np.isfinite(dist), dist, np.iinfo(np.int32).max).astype(np.int64)
        return cls(kind, d=1, n_vertices=n, origin_id=origin,
                   indptr=adj.indptr.astype(np.int64), indices=adj.indices.astype(np.int64),
                   dist=dist)

    # --- basic properties -------------------------------------------------

    @property
    def is_lattice(self) -> bool:
        return self.kind in (GraphKind.ZD, GraphKind.TORUS)

    @property
    def is_finite(self) -> bool:
        return self.kind is not GraphKind.ZD

    @property
    def max_degree(self) -> int:
        if self.is_lattice:
            return 2 * self.d
        return int(np.max(np.diff(self.indptr))) if self.n_vertices else 0

    @property
    def origin(self):
        return (0,) * self.d if self.is_lattice else self.origin_id

    @property
    def gkind(self) -> int:
        return {GraphKind.ZD: K.GK_ZD, GraphKind.TORUS: K.GK_TORUS}.get(self.kind, K.GK_CSR)

    def kernel_args(self):
        """``(gkind, d, L, indptr, indices, dist)`` for the numba kernels."""
        return (self.gkind, self.d, self.L, self.indptr, self.indices, self.dist)

    def __repr__(self):
        if self.kind is GraphKind.ZD:
            return f"GraphSpec.zd({self.d})"
        if self.kind is GraphKind.TORUS:
            return f"GraphSpec.torus({self.d}, L={self.L})"
        return f"GraphSpec.{self.kind.value}(n={self.n_vertices}, origin={self.origin_id})"

    # --- site encoding ----------------------------------------------------

    def validate(self, site):
        if self.is_lattice:
            site = tuple(int(c) for c in np.atleast_1d(site))
            if len(site) != self.d:
                raise ValueError(f"site {site} has wrong dimension for {self!r}")
            if self.kind is GraphKind.TORUS and not all(0 <= c < self.L for c in site):
                raise ValueError(f"site {site} outside torus of side {self.L}")
            if self.kind is GraphKind.ZD and not all(abs(c) < K.ZD_OFFSET for c in site):
                raise ValueError(f"site {site} outside the representable box")
            return site
        v = int(site)
        if not 0 <= v < self.n_vertices:
            raise ValueError(f"vertex {v} out of range")
        return v

    def encode(self, site) -> int:
        site = self.validate(site)
        if self.kind is GraphKind.ZD:
            return sum((c + K.ZD_OFFSET) << (K.ZD_BITS * a) for a, c in enumerate(site))
        if self.kind is GraphKind.TORUS:
            return sum(c * self.L ** a for a, c in enumerate(site))
        return site

    def encode_many(self, coords) -> np.ndarray:
        """Vectorised :meth:`encode` for an ``(n, d)`` coordinate array (or ids)."""
        c = np.asarray(coords, dtype=np.int64)
        if self.kind is GraphKind.ZD:
            c = c.reshape(len(c), self.d)
            shifts = np.int64(K.ZD_BITS) * np.arange(self.d, dtype=np.int64)
            return np.sum((c + K.ZD_OFFSET) << shifts, axis=1)
        if self.kind is GraphKind.TORUS:
            c = c.reshape(len(c), self.d) % self.L
            return c @ (self.L ** np.arange(self.d, dtype=np.int64))
        return c.reshape(-1)

    def decode(self, key: int):
        key = int(key)
        if self.kind is GraphKind.ZD:
            return tuple(((key >> (K.ZD_BITS * a)) & K.ZD_MASK) - K.ZD_OFFSET
                         for a in range(self.d))
        if self.kind is GraphKind.TORUS:
            return tuple((key // self.L ** a) % self.L for a in range(self.d))
        return key

    def decode_many(self, keys) -> np.ndarray:
        keys = np.asarray(keys, dtype=np.int64)
        if self.kind is GraphKind.ZD:
            shifts = np.int64(K.ZD_BITS) * np.arange(self.d, dtype=np.int64)
            return ((keys[:, None] >> shifts) & K.ZD_MASK) - K.ZD_OFFSET
        if self.kind is GraphKind.TORUS:
            return (keys[:, None] // self.L ** np.arange(self.d)) % self.L
        return keys

    def distance(self, site) -> int:
        """Graph distance from the origin."""
        key = self.encode(site)
        return int(K.graph_dist(self.gkind, self.d, self.L, self.dist, key))

    def distances(self, keys) -> np.ndarray:
        keys = np.asarray(keys, dtype=np.int64)
        if self.kind is GraphKind.ZD:
            return np.abs(self.decode_many(keys)).sum(axis=1)
        if self.kind is GraphKind.TORUS:
            c = self.decode_many(keys)
            return np.minimum(c, self.L - c).sum(axis=1)
        return self.dist[keys]

    def norms2(self, keys) -> np.ndarray:
        """Squared Euclidean norm of lattice sites (torus coordinates wrapped)."""
        c = self.decode_many(keys)
        if self.kind is GraphKind.TORUS:
            c = np.minimum(c, self.L - c)
        elif self.kind is not GraphKind.ZD:
            raise ValueError("Euclidean norm needs a lattice")
        return (c.astype(float) ** 2).sum(axis=1)


def load_edge_list(path: str | Path, origin: int = 0) -> GraphSpec:
    """Custom graph from a text file with one ``u v`` pair per line (0-indexed)."""
    edges = np.loadtxt(path, dtype=np.int64, ndmin=2, comments="#")
    if edges.shape[1] != 2:
        raise ValueError(f"{path}: expected two columns")
    if np.any(edges < 0):
        raise ValueError(f"{path}: vertex ids must be nonnegative")
    n = int(edges.max()) + 1 if len(edges) else 1
    adjacency = [set() for _ in range(n)]
    for u, v in edges:
        adjacency[u].add(int(v))
        adjacency[v].add(int(u))
    return GraphSpec.custom([sorted(a) for a in adjacency], origin=origin)


def neighbors(g: GraphSpec, v) -> list:
    """Neighbours of site ``v`` in a fixed order."""
    key = g.encode(v)
    gk, d, L, indptr, indices, _ = g.kernel_args()
    deg = K.graph_degree(gk, d, L, indptr, key)
    return [g.decode(K.graph_neighbor(gk, d, L, indptr, indices, key, j)) for j in range(deg)]


def ball_volume(g: GraphSpec, r: int) -> int:
    """Number of sites within graph distance ``r`` of the origin."""
    if r < 0:
        raise ValueError("r must be nonnegative")
    if g.kind is GraphKind.ZD:
        return sum(2 ** k * math.comb(g.d, k) * math.comb(r, k) for k in range(g.d + 1))
    return len(ball_sites(g, r))


def ball_sites(g: GraphSpec, r: int) -> np.ndarray:
    """Keys of all sites within graph distance ``r`` of the origin (sorted)."""
    if r < 0:
        raise ValueError("r must be nonnegative")
    if g.kind is GraphKind.ZD:
        rng_ = np.arange(-r, r + 1)
        grids = np.stack(np.meshgrid(*([rng_] * g.d), indexing="ij"), -1).reshape(-1, g.d)
        grids = grids[np.abs(grids).sum(axis=1) <= r]
        return np.sort(g.encode_many(grids))
    if g.kind is GraphKind.TORUS:
        keys = np.arange(g.n_vertices, dtype=np.int64)
        return keys[g.distances(keys) <= r]
    return np.flatnonzero(g.dist <= r).astype(np.int64)


# --- random-walk oracles ----------------------------------------------------


class Estimate(NamedTuple):
    value: float
    stderr: float
    replicas: int
    horizon: float


def _estimate(hits, horizon) -> Estimate:
    hits = np.asarray(hits, dtype=float)
    n = len(hits)
    p = hits.mean()
    se = math.sqrt(p * (1 - p) / n) if n > 1 else float("nan")
    return Estimate(float(p), se, n, float(horizon))


@njit(cache=True, nogil=True)
def _walk_hits(gk, d, L, indptr, indices, starts, target, horizon, rate, rng, out):
    for r in range(len(starts)):
        x = starts[r]
        if x == target:
            out[r] = True
            continue
        t = 0.0
        hit = False
        while True:
            t += rng.exponential(1.0) / rate
            if t > horizon:
                break
            x = K.graph_random_neighbor(gk, d, L, indptr, indices, x, rng)
            if x == target:
                hit = True
                break
        out[r] = hit


@njit(cache=True, nogil=True)
def _walks_meet(gk, d, L, indptr, indices, a0, b0, horizon, rate, rng, out):
    # two independent rate-`rate` walks; the next mover is chosen uniformly
    for r in range(len(a0)):
        a = a0[r]
        b = b0[r]
        if a == b:
            out[r] = True
            continue
        t = 0.0
        met = False
        while True:
            t += rng.exponential(1.0) / (2.0 * rate)
            if t > horizon:
                break
            if rng.random() < 0.5:
                a = K.graph_random_neighbor(gk, d, L, indptr, indices, a, rng)
            else:
                b = K.graph_random_neighbor(gk, d, L, indptr, indices, b, rng)
            if a == b:
                met = True
                break
        out[r] = met


@njit(cache=True, nogil=True)
def _walk_max_norm2(gk, d, L, indptr, indices, start, horizon, rate, rng, out_max, out_end):
    for r in range(len(out_max)):
        x = start
        best = K.graph_norm2(gk, d, L, x)
        t = 0.0
        while True:
            t += rng.exponential(1.0) / rate
            if t > horizon:
                break
            x = K.graph_random_neighbor(gk, d, L, indptr, indices, x, rng)
            n2 = K.graph_norm2(gk, d, L, x)
            if n2 > best:
                best = n2
        out_max[r] = best
        out_end[r] = K.graph_norm2(gk, d, L, x)


def _starts(g: GraphSpec, start, replicas, rng) -> np.ndarray:
    """Start keys: a site, an array of candidate keys (uniform), or a callable rng -> site."""
    if callable(start):
        return np.array([g.encode(start(rng)) for _ in range(replicas)], dtype=np.int64)
    if isinstance(start, np.ndarray) and start.ndim == 1 and start.dtype.kind == "i":
        return rng.choice(start, size=replicas)
    return np.full(replicas, g.encode(start), dtype=np.int64)


def rw_hit_origin_prob(g: GraphSpec, start, horizon: float, replicas: int,
                       rng: np.random.Generator, rate: float = 1.0) -> Estimate:
    """P(a rate-``rate`` walk from ``start`` visits the origin by ``horizon``).

    ``start`` is a site, a callable ``rng -> site``, or an int64 array of site keys to draw
    from uniformly. Starting at the origin counts as a hit at time 0.
    """
    starts = _starts(g, start, replicas, rng)
    gk, d, L, indptr, indices, _ = g.kernel_args()
    out = np.zeros(replicas, dtype=np.bool_)
    _walk_hits(gk, d, L, indptr, indices, starts, g.encode(g.origin), float(horizon),
               float(rate), rng, out)
    return _estimate(out, horizon)


def rw_meeting_prob(g: GraphSpec, m: int, horizon: float, replicas: int,
                    rng: np.random.Generator, rate: float = 1.0) -> Estimate:
    """P(two independent walks started uniformly in B(o, m) ever share a site by ``horizon``).

    On Z^2 the natural horizon is ``t * m**2``; for d > 2 a finite horizon stands in for
    infinity and is reported with the estimate.
    """
    sites = ball_sites(g, m)
    a = rng.choice(sites, size=replicas)
    b = rng.choice(sites, size=replicas)
    gk, d, L, indptr, indices, _ = g.kernel_args()
    out = np.zeros(replicas, dtype=np.bool_)
    _walks_meet(gk, d, L, indptr, indices, a, b, float(horizon), float(rate), rng, out)
    return _estimate(out, horizon)


def rw_mean_square_displacement(g: GraphSpec, t: float, replicas: int,
                                rng: np.random.Generator, rate: float = 1.0) -> Estimate:
    """Mean of ``|X_t|^2`` for a walk from the origin; equals ``rate * t`` on Z^d."""
    if not g.is_lattice:
        raise ValueError("displacement needs a lattice")
    gk, d, L, indptr, indices, _ = g.kernel_args()
    mx = np.empty(replicas)
    end = np.empty(replicas)
    _walk_max_norm2(gk, d, L, indptr, indices, g.encode(g.origin), float(t), float(rate), rng,
                    mx, end)
    return Estimate(float(end.mean()), float(end.std(ddof=1) / math.sqrt(replicas)), replicas,
                    float(t))


@dataclass
class TailCheck:
    """Excursion tail P(sup_{s<=t} |X_s| >= x) and the fitted template ``C exp(-c x^2/t)``."""

    t: float
    xs: np.ndarray
    probs: np.ndarray
    stderr: np.ndarray
    c: float
    C: float
    method: str


def _exact_tail_z1(t: float, x: int, rate: float) -> float:
    """P(max_{s<=t} |X_s| >= x) for the rate-``rate`` walk on Z by an absorbing chain."""
    if x <= 0:
        return 1.0
    mean = rate * t
    kmax = int(mean + 12 * math.sqrt(mean) + 20)
    weights = stats.poisson.pmf(np.arange(kmax + 1), mean)
    width = 2 * x - 1
    p = np.zeros(width)
    p[x - 1] = 1.0
    alive = np.empty(kmax + 1)
    alive[0] = 1.0
    for k in range(1, kmax + 1):
        q = np.zeros(width)
        q[1:] += 0.5 * p[:-1]
        q[:-1] += 0.5 * p[1:]
        p = q
        alive[k] = p.sum()
    return float(1.0 - np.sum(weights * alive) - stats.poisson.sf(kmax, mean))


def excursion_tail_check(g: GraphSpec, t: float, x, replicas: int,
                         rng: np.random.Generator | None = None, rate: float = 1.0,
                         method: str = "mc") -> TailCheck:
    """Compare ``P(sup_{s<=t} |X_s|_2 >= x)`` with a sub-Gaussian template.

    ``method="mc"`` simulates ``replicas`` walks; ``method="exact"`` (Z^1 only) uses an
    absorbing-chain computation mixed over the Poisson number of jumps, which resolves tails far
    below Monte Carlo reach. ``(c, C)`` come from a least-squares fit of
    ``log p = log C - c x^2/t`` over the points with p > 0.
    """
    if not t > 0:
        raise ValueError("t must be positive")
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    if method == "exact":
        if not (g.kind is GraphKind.ZD and g.d == 1):
            raise ValueError("exact tails are implemented for Z^1")
        probs = np.array([_exact_tail_z1(t, int(math.ceil(v)), rate) for v in xs])
        se = np.zeros_like(probs)
    elif method == "mc":
        if rng is None:
            raise ValueError("Monte Carlo tails need an rng")
        gk, d, L, indptr, indices, _ = g.kernel_args()
        mx = np.empty(replicas)
        end = np.empty(replicas)
        _walk_max_norm2(gk, d, L, indptr, indices, g.encode(g.origin), float(t), float(rate),
                        rng, mx, end)
        probs = np.array([np.mean(mx >= v * v) if v > 0 else 1.0 for v in xs])
        se = np.sqrt(probs * (1 - probs) / replicas)
    else:
        raise ValueError(f"unknown method {method!r}")
    ok = (probs > 0) & (xs > 0)
    c = C = float("nan")
    if ok.sum() >= 2:
        slope, icpt = np.polyfit(xs[ok] ** 2 / t, np.log(probs[ok]), 1)
        c, C = float(-slope), float(math.exp(icpt))
    return TailCheck(float(t), xs, probs, se, c, C, method)
