"""Coupling constructions: origin block with frozen exits, label restriction, paired process."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from coalsim import _kernels as K
from coalsim.spatial import _engine as E
from coalsim.spatial.core import RunRecord
from coalsim.spatial.state import SpatialConfig, SpatialState

__all__ = [
    "OriginBlockStats",
    "run_origin_block",
    "RestrictionResult",
    "restricted_coupling",
    "random_partition",
    "pair_partition",
    "paired_process_counts",
]


# --- origin block -------------------------------------------------------------


@dataclass
class OriginBlockStats:
    """One run of n blocks at a site u whose exits are frozen where they land.

    ``M`` counts blocks that never left u, ``Z`` is the cumulative number of exits and ``N``
    the coupled mean-field count in which exited blocks keep coalescing. ``M <= N <= M + Z``
    holds on every path. Paths are sampled at ``times``; ``landing[j]`` is the number of frozen
    blocks on the j-th neighbour of u at the end.
    """

    times: np.ndarray
    M: np.ndarray
    Z: np.ndarray
    N: np.ndarray
    landing: np.ndarray
    neighbor_keys: np.ndarray
    int_N: float
    int_M: float
    violations: int
    tau: float

    @property
    def origin_count(self) -> int:
        return int(self.M[-1])


@njit(cache=True, nogil=True)
def _origin_block(n, tau, mech, rho, deg, times, rng, M, Z, N):
    lam = mech[4]
    pairs_only = mech[1] == K.MK_NONE
    nn = n
    a = n
    z = 0
    t = 0.0
    int_n = 0.0
    int_m = 0.0
    land = np.zeros(deg, dtype=np.int64)
    viol = 0
    si = 0
    nt = len(times)
    while True:
        rm = lam[nn] if nn >= 2 else 0.0
        rk = rho * a
        total = rm + rk
        dt = rng.exponential(1.0) / total if total > 0 else np.inf
        while si < nt and times[si] < t + dt:
            M[si] = a
            Z[si] = z
            N[si] = nn
            si += 1
        step = min(dt, tau - t)
        int_n += nn * step
        int_m += a * step
        if t + dt > tau:
            break
        t += dt
        if rng.random() * total < rm:
            if pairs_only:
                k = 2
            else:
                k = K.sample_k(mech, nn, rng)
            # participants are a uniform k-subset of the nn blocks; j of them are still at u
            j = 0
            left_alive = a
            left = nn
            for _ in range(k):
                if rng.random() * left < left_alive:
                    j += 1
                    left_alive -= 1
                left -= 1
            nn -= k - 1
            if j >= 1:
                a -= j - 1
        else:
            a -= 1
            z += 1
            land[rng.integers(0, deg)] += 1
        if not (a <= nn and nn <= a + z):
            viol += 1
    while si < nt:
        M[si] = a
        Z[si] = z
        N[si] = nn
        si += 1
    return land, int_n, int_m, viol


def run_origin_block(n: int, tau: float, config: SpatialConfig, rng: np.random.Generator,
                     times=None, site=None) -> OriginBlockStats:
    """Blocks start together at ``site`` (default origin); each exit freezes on landing.

    Exits from u happen at rate rho per block still at u. The run is driven by a mean-field
    coalescent on all n blocks in which each merger picks a uniform subset of the current blocks;
    by consistency the blocks still at u then coalesce exactly as a Lambda-coalescent at u.
    """
    if n < 1:
        raise ValueError("n must be positive")
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    g = config.graph
    site = g.origin if site is None else site
    key = g.encode(site)
    gk, d, L, indptr, indices, _ = g.kernel_args()
    deg = K.graph_degree(gk, d, L, indptr, key)
    nb = np.array([K.graph_neighbor(gk, d, L, indptr, indices, key, j) for j in range(deg)],
                  dtype=np.int64)
    times = np.asarray([tau] if times is None else times, dtype=float)
    M = np.zeros(len(times), dtype=np.int64)
    Z = np.zeros_like(M)
    N = np.zeros_like(M)
    land, int_n, int_m, viol = _origin_block(int(n), float(tau), config.measure.kernel(n),
                                             float(config.rho), deg, times, rng, M, Z, N)
    return OriginBlockStats(times, M, Z, N, land, nb, int_n, int_m, int(viol), float(tau))


# --- label restriction ----------------------------------------------------------


def random_partition(n: int, classes: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Uniform random assignment of labels 0..n-1 into ``classes`` nonempty classes."""
    if not 1 <= classes <= n:
        raise ValueError("need 1 <= classes <= n")
    assign = np.concatenate([np.arange(classes), rng.integers(0, classes, n - classes)])
    rng.shuffle(assign)
    return [np.flatnonzero(assign == c) for c in range(classes)]


@dataclass
class RestrictionResult:
    """Per-class restrictions of one labeled run.

    ``totals[i, e]`` is the number of blocks of the full process (``i = 0``) or meeting class
    ``i`` (``i >= 1``) after the e-th event (column 0 is the initial state); ``times`` gives the
    event times. ``violations`` counts (event, site) pairs where the sandwich
    ``X^B_v <= X_v <= sum_i X^{B_i}_v`` failed.
    """

    times: np.ndarray
    totals: np.ndarray
    violations: int
    checks: int


@njit(cache=True, nogil=True)
def _replay(init_keys, cls_mask, log_i, nclass):
    n = len(init_keys)
    mask = cls_mask.copy()
    site = init_keys.copy()
    alive = np.ones(n, dtype=np.bool_)
    # per-site counts are kept in a dense table over the sites ever visited
    visited = np.unique(np.concatenate((init_keys, log_i[:, 2], log_i[:, 3])))
    nsites = len(visited)
    full = np.zeros(nsites, dtype=np.int64)
    per = np.zeros((nsites, nclass), dtype=np.int64)
    slot = np.searchsorted(visited, site)
    for lab in range(n):
        full[slot[lab]] += 1
        for c in range(nclass):
            if (mask[lab] >> c) & 1:
                per[slot[lab], c] += 1
    ne = len(log_i)
    totals = np.zeros((nclass + 1, ne + 1), dtype=np.int64)
    totals[0, 0] = n
    for c in range(nclass):
        totals[c + 1, 0] = per[:, c].sum()
    viol = 0
    checks = 0
    for e in range(ne):
        kind = log_i[e, 0]
        touched0 = -1
        touched1 = -1
        if kind == E.EV_MERGE:
            surv = log_i[e, 1]
            gone = log_i[e, 2]
            v = slot[surv]
            full[v] -= 1
            for c in range(nclass):
                if (mask[gone] >> c) & 1:
                    per[v, c] -= 1
                if (mask[surv] >> c) & 1:
                    per[v, c] -= 1
            mask[surv] |= mask[gone]
            for c in range(nclass):
                if (mask[surv] >> c) & 1:
                    per[v, c] += 1
            alive[gone] = False
            touched0 = v
        else:
            lab = log_i[e, 1]
            v = slot[lab]
            full[v] -= 1
            for c in range(nclass):
                if (mask[lab] >> c) & 1:
                    per[v, c] -= 1
            touched0 = v
            if kind == E.EV_MOVE:
                w = np.searchsorted(visited, log_i[e, 3])
                slot[lab] = w
                full[w] += 1
                for c in range(nclass):
                    if (mask[lab] >> c) & 1:
                        per[w, c] += 1
                touched1 = w
            else:
                alive[lab] = False
        for v in (touched0, touched1):
            if v < 0:
                continue
            checks += 1
            ssum = 0
            for c in range(nclass):
                ssum += per[v, c]
                if per[v, c] > full[v]:
                    viol += 1
            if full[v] > ssum:
                viol += 1
        totals[0, e + 1] = full.sum()
        for c in range(nclass):
            totals[c + 1, e + 1] = per[:, c].sum()
    return totals, viol, checks


def restricted_coupling(run: RunRecord, partition) -> RestrictionResult:
    """Restrict a labeled run (recorded with its event log) to each class of ``partition``.

    A block belongs to the restriction for class B when it contains at least one label of B;
    blocks that merge carry the union of their classes. Frozen and killed blocks leave every
    restriction together with the full process.
    """
    if run.log is None or run.initial_keys is None:
        raise ValueError("restriction needs a run recorded with record_log=True")
    n = len(run.initial_keys)
    if len(partition) > 63:
        raise ValueError("at most 63 classes")
    cls_mask = np.zeros(n, dtype=np.int64)
    for c, members in enumerate(partition):
        members = np.asarray(members, dtype=np.int64)
        if len(members) and (members.min() < 0 or members.max() >= n):
            raise ValueError(f"labels outside [0, {n})")
        cls_mask[members] |= np.int64(1) << c
    totals, viol, checks = _replay(run.initial_keys, cls_mask, run.log, len(partition))
    times = np.concatenate(([0.0], run.log_times))
    return RestrictionResult(times, totals, int(viol), int(checks))


# --- paired (slowed) process -----------------------------------------------------


def pair_partition(initial: SpatialState, rng: np.random.Generator) -> np.ndarray:
    """Partner index per label, -1 for a singleton.

    Labels are sorted by site key (random order within a site) and paired consecutively, so
    co-located labels pair up first. Domination holds for any pairing.
    """
    pk = initial.particle_keys()
    n = len(pk)
    order = np.lexsort((rng.random(n), pk))
    partner = np.full(n, -1, dtype=np.int64)
    for i in range(0, n - 1, 2):
        a, b = order[i], order[i + 1]
        partner[a], partner[b] = b, a
    return partner


@njit(cache=True, nogil=True)
def _paired(gk, gd, gL, indptr, indices, keys, partner, rho, a0, times, rng, out):
    n = len(keys)
    nt = len(times)
    for i in range(n):
        j = partner[i]
        if j >= 0 and j < i:
            continue
        if j < 0:
            for q in range(nt):
                out[q] += 1
            continue
        x = keys[i]
        y = keys[j]
        t = 0.0
        merged = False
        q = 0
        while True:
            rate = 2.0 * rho
            if not merged and x == y:
                rate += a0
            if merged:
                rate = 0.0
            dt = rng.exponential(1.0) / rate if rate > 0 else np.inf
            while q < nt and times[q] < t + dt:
                out[q] += 1 if merged else 2
                q += 1
            if q >= nt:
                break
            t += dt
            u = rng.random() * rate
            if u < rho:
                x = K.graph_random_neighbor(gk, gd, gL, indptr, indices, x, rng)
            elif u < 2.0 * rho:
                y = K.graph_random_neighbor(gk, gd, gL, indptr, indices, y, rng)
            else:
                merged = True


def paired_process_counts(initial: SpatialState, config: SpatialConfig, times, a0: float,
                          rng: np.random.Generator, partner=None) -> np.ndarray:
    """Total block count of the paired process at ``times``.

    Classes are partner pairs (or singletons); classes move independently, and two partners on
    the same site merge at rate ``a0``. With ``a0 <= lambda_b / b`` for all b this process
    dominates the spatial coalescent started from the same configuration.
    """
    if partner is None:
        partner = pair_partition(initial, rng)
    times = np.asarray(times, dtype=float)
    out = np.zeros(len(times), dtype=np.int64)
    gk, d, L, indptr, indices, _ = config.graph.kernel_args()
    _paired(gk, d, L, indptr, indices, initial.particle_keys(), np.asarray(partner),
            float(config.rho), float(a0), times, rng, out)
    return out
