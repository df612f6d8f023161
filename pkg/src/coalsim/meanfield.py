"""Exact simulation of the non-spatial block-count chain N(t).

The chain holds at count b for an Exp(lambda_b) time and then drops by K - 1 where K is a
merger size. Only counts are simulated; exchangeability makes them sufficient for every
statistic used here (N(t), the tree-length integral X_n, and Y_n).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from coalsim import _kernels
from coalsim.mechanism import LambdaMeasure, MeasureKind

__all__ = [
    "BlockCountTrajectory",
    "simulate_blockcount",
    "block_count_at",
    "time_integral_blocks",
    "blockcounts_at_times",
    "kingman_concentration_stat",
    "fit_decay_exponent",
]


@dataclass(frozen=True)
class BlockCountTrajectory:
    """Piecewise-constant block count: ``counts[i]`` holds on ``[times[i], times[i+1])``.

    ``times[0] == 0`` and ``counts[0] == n``; the path is known up to ``horizon``.
    ``approximate`` is set when the start was fast-forwarded analytically.
    """

    n: int
    times: np.ndarray
    counts: np.ndarray
    horizon: float
    approximate: bool = False

    @property
    def events(self) -> list[tuple[float, int]]:
        return [(float(t), int(c)) for t, c in zip(self.times[1:], self.counts[1:])]

    @property
    def final_count(self) -> int:
        return int(self.counts[-1])

    def __len__(self):
        return len(self.times) - 1


@njit(cache=True, nogil=True)
def _chain(n, t_end, mech, rng, times, counts):
    """Fill ``times``/``counts`` with the events; return the number of entries used."""
    times[0] = 0.0
    counts[0] = n
    b = n
    t = 0.0
    i = 1
    pairs_only = mech[1] == _kernels.MK_NONE
    while b > 1:
        t += rng.exponential(1.0) / _kernels.total_rate(mech, b)
        if t > t_end:
            break
        if pairs_only:
            b -= 1
        else:
            b -= _kernels.sample_k(mech, b, rng) - 1
        times[i] = t
        counts[i] = b
        i += 1
    return i


@njit(cache=True, nogil=True)
def _chain_at(n, grid, mech, rng, out):
    """Block counts at sorted times ``grid`` without storing the path."""
    b = n
    t = 0.0
    g = 0
    m = len(grid)
    pairs_only = mech[1] == _kernels.MK_NONE
    while b > 1 and g < m:
        t += rng.exponential(1.0) / _kernels.total_rate(mech, b)
        while g < m and grid[g] < t:
            out[g] = b
            g += 1
        if pairs_only:
            b -= 1
        else:
            b -= _kernels.sample_k(mech, b, rng) - 1
    while g < m:
        out[g] = b
        g += 1


def _check_n(n):
    if int(n) != n or n < 1:
        raise ValueError(f"n must be a positive integer, got {n!r}")
    return int(n)


def simulate_blockcount(n: int, t_end: float, measure: LambdaMeasure, rng: np.random.Generator,
                        fast_forward: bool = False,
                        t0: float | None = None) -> BlockCountTrajectory:
    """Exact path of the block count on ``[0, t_end]`` started from ``n`` blocks.

    With ``fast_forward`` (Kingman only, n > 1e8) the chain starts at ``ceil(2/t0)`` blocks at
    time ``t0`` instead of simulating the first events; the result is flagged approximate.
    The default ``t0 = 4/n`` only skips half the events. Kingman concentration justifies any
    ``t0`` with ``n t0 >> 1``, and a larger ``t0`` is what makes n = 1e9 fit in memory.
    """
    n = _check_n(n)
    if not t_end > 0:
        raise ValueError("t_end must be positive")
    ff_t0, t0, start = t0, 0.0, n
    approximate = False
    if fast_forward:
        if measure.kind is not MeasureKind.KINGMAN:
            raise ValueError("fast-forward is only justified for Kingman")
        if n > 1e8:
            t0 = 4.0 / n if ff_t0 is None else float(ff_t0)
            if not 0 < t0 < t_end:
                raise ValueError("fast-forward time must lie in (0, t_end)")
            start = min(n, math.ceil(2.0 / t0))
            approximate = True
    mech = measure.kernel(start)
    times = np.empty(start)
    counts = np.empty(start, dtype=np.int64)
    used = _chain(start, t_end - t0, mech, rng, times, counts)
    times = times[:used] + t0
    counts = counts[:used].copy()
    if approximate:
        times = np.concatenate(([0.0], times))
        counts = np.concatenate(([n], counts))
    return BlockCountTrajectory(n, times, counts, float(t_end), approximate)


def blockcounts_at_times(n: int, times, measure: LambdaMeasure,
                         rng: np.random.Generator) -> np.ndarray:
    """N(t) at each of ``times`` (any order) from one path, without storing events."""
    n = _check_n(n)
    times = np.asarray(times, dtype=float)
    order = np.argsort(times)
    out = np.empty(len(times), dtype=np.int64)
    _chain_at(n, times[order], measure.kernel(n), rng, out)
    res = np.empty_like(out)
    res[order] = out
    return res


def block_count_at(traj: BlockCountTrajectory, t: float) -> int:
    """Right-continuous value of the path at time ``t``."""
    if t < 0 or t > traj.horizon:
        raise ValueError(f"t={t} outside [0, {traj.horizon}]")
    i = np.searchsorted(traj.times, t, side="right") - 1
    return int(traj.counts[i])


def time_integral_blocks(traj: BlockCountTrajectory, t0: float, t1: float,
                         subtract_one: bool = False) -> float:
    """Exact integral of N (or N - 1) over ``[t0, t1]``."""
    if not 0 <= t0 <= t1:
        raise ValueError(f"need 0 <= t0 <= t1, got [{t0}, {t1}]")
    if t1 > traj.horizon:
        raise ValueError(f"t1={t1} beyond horizon {traj.horizon}")
    edges = np.append(traj.times, np.inf)
    lo = np.clip(edges[:-1], t0, t1)
    hi = np.clip(edges[1:], t0, t1)
    vals = traj.counts - (1 if subtract_one else 0)
    return float(np.sum(vals * (hi - lo)))


def kingman_concentration_stat(n: int, t: float, replicas: int, rng: np.random.Generator,
                               eps: float = 0.1, measure: LambdaMeasure | None = None) -> float:
    """Fraction of replicas with ``N(t) * t / 2`` inside ``(1 - eps, 1 + eps)``."""
    measure = measure or LambdaMeasure.kingman()
    if measure.kind is not MeasureKind.KINGMAN or measure.atom0_mass != 1.0:
        raise ValueError("concentration around 2/t is stated for the unit Kingman coalescent")
    hits = 0
    for _ in range(replicas):
        x = blockcounts_at_times(n, [t], measure, rng)[0] * t / 2.0
        hits += (1 - eps) < x < (1 + eps)
    return hits / replicas


def fit_decay_exponent(measure: LambdaMeasure, n: int, ts, replicas: int,
                       rng: np.random.Generator,
                       min_span: float = 10.0) -> tuple[float, np.ndarray]:
    """Slope of log median N(t) against log t; returns (slope, medians)."""
    from coalsim.asymptotics import fit_power_law

    ts = np.asarray(ts, dtype=float)
    samples = np.array([blockcounts_at_times(n, ts, measure, rng) for _ in range(replicas)])
    med = np.median(samples, axis=0)
    slope, _, _ = fit_power_law(list(zip(ts, med)), min_span=min_span)
    return slope, med
