"""Long-time statistics: survivors, multi-scale stages, confined density decay."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from coalsim.asymptotics import make_schedule
from coalsim.spatial.core import _run
from coalsim.spatial.state import Boundary, BoundaryKind, SpatialConfig, SpatialState

__all__ = [
    "SurvivorsResult",
    "survivors_estimate",
    "MultiScaleStats",
    "multiscale_observe",
    "DensityResult",
    "density_decay",
]


@dataclass
class SurvivorsResult:
    """N*(t) along a schedule and, if found, a plateau estimate of N*(infinity).

    A plateau is declared when no merger happened during the trailing ``window`` fraction of
    the horizon. It is an estimator: a later merger is always possible.
    """

    times: np.ndarray
    counts: np.ndarray
    plateau: int | None
    window: float

    @property
    def has_plateau(self) -> bool:
        return self.plateau is not None


def survivors_estimate(initial: SpatialState, config: SpatialConfig, t_schedule,
                       rng: np.random.Generator, plateau_window: float = 0.5,
                       crw: bool = False) -> SurvivorsResult:
    ts = np.asarray(t_schedule, dtype=float)
    if len(ts) == 0 or np.any(np.diff(ts) <= 0):
        raise ValueError("schedule must be strictly increasing")
    if not 0 < plateau_window < 1:
        raise ValueError("plateau window must be in (0, 1)")
    horizon = ts[-1]
    cut = (1.0 - plateau_window) * horizon
    grid = np.union1d(ts, [cut])
    _, rec = _run(initial, horizon, config, rng, instant=crw, sample_times=grid)
    at = {t: i for i, t in enumerate(grid)}
    counts = np.array([rec.live[at[t]] for t in ts])
    plateau = None
    if initial.total == 1 or rec.merges[at[cut]] == rec.merges[-1]:
        plateau = int(rec.live[-1])
    return SurvivorsResult(ts, counts, plateau, plateau_window)


@dataclass
class MultiScaleStats:
    """Stage records for k = 1..K: X_k / Y_k inside / outside B(o, R_k) at t_k, S_k blocks that
    stayed in B(o, R_k) during [t_{k-1}, t_k], Z_k blocks in B(o, R_k) at t_k that leave
    B(o, R_{k+1}) before t_{k+1} (Z_K = 0)."""

    m: int
    gamma: float
    K: int
    t: np.ndarray
    R: np.ndarray
    X: np.ndarray
    Y: np.ndarray
    S: np.ndarray
    Z: np.ndarray
    total: np.ndarray

    def rows(self):
        for i in range(self.K):
            yield {"k": i + 1, "t": self.t[i], "R": self.R[i], "X": int(self.X[i]),
                   "Y": int(self.Y[i]), "S": int(self.S[i]), "Z": int(self.Z[i])}


def multiscale_observe(m: int, gamma: float, config: SpatialConfig, rng: np.random.Generator,
                       C0: int = 1, K: int | None = None,
                       initial: SpatialState | None = None) -> MultiScaleStats:
    """Run from ``C0`` blocks per site of B(o, m) and record the stage statistics."""
    sched = make_schedule("long_time", m, gamma)
    if K is not None and K != sched.K:
        raise ValueError(f"K must be floor(ln ln m) = {sched.K}")
    if initial is None:
        initial = SpatialState.fill(config.graph, C0, m)
    stage_t = np.concatenate(([0.0], sched.t))
    stage_R = np.concatenate(([0.0], sched.R))
    _, rec = _run(initial, float(sched.t[-1]), config, rng, stage_t=stage_t, stage_R=stage_R)
    st = rec.stages
    X, Y, S, Z = st["X"][1:], st["Y"][1:], st["S"][1:], st["Z"][1:]
    return MultiScaleStats(m, gamma, sched.K, sched.t, sched.R, X, Y, S, Z, X + Y)


@dataclass
class DensityResult:
    """S_t (blocks that never left B(o, R)) on a grid; density rho(t) = S_t / R^d."""

    t: np.ndarray
    S: np.ndarray
    rho: np.ndarray
    inv_increments: np.ndarray


def density_decay(R: int, fill, t_grid, config: SpatialConfig,
                  rng: np.random.Generator) -> DensityResult:
    """Confined run in B(o, R) with a kill or freeze boundary at R.

    ``fill`` >= 1 puts that many blocks on every site of the ball; 0 < fill < 1 is a Bernoulli
    density.
    """
    if config.boundary.kind is BoundaryKind.NONE or config.boundary.R != R:
        raise ValueError("density decay needs a kill or freeze boundary at radius R")
    ts = np.asarray(t_grid, dtype=float)
    if np.any(np.diff(ts) <= 0):
        raise ValueError("t_grid must be increasing")
    g = config.graph
    if fill >= 1:
        initial = SpatialState.fill(g, int(fill), R)
    else:
        initial = SpatialState.bernoulli(g, float(fill), R, rng)
    _, rec = _run(initial, float(ts[-1]), config, rng, sample_times=ts)
    S = rec.live.astype(float)
    rho = S / float(R) ** g.d
    with np.errstate(divide="ignore"):
        inv = 1.0 / rho
    return DensityResult(ts, rec.live, rho, np.diff(inv))
