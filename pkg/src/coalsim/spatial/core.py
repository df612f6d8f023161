"""Running the spatial coalescent and the coalescing-random-walk variant."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from coalsim.spatial import _engine as E
from coalsim.spatial.state import BoundaryKind, Mode, SpatialConfig, SpatialState

__all__ = ["RunRecord", "Observer", "simulate", "simulate_crw", "EVENT_NAMES"]

EVENT_NAMES = {E.EV_MERGE: "merge", E.EV_MOVE: "move", E.EV_KILL: "kill",
               E.EV_FREEZE: "freeze"}

_BOUNDARY_CODE = {BoundaryKind.NONE: E.BD_NONE, BoundaryKind.KILL: E.BD_KILL,
                  BoundaryKind.FREEZE: E.BD_FREEZE}


class Observer:
    """Hook into a run. ``sample`` sees the state at each requested time; ``event`` sees every
    logged event (only called when the run records its event log)."""

    name = "observer"
    needs_snapshots = True
    needs_log = False

    def sample(self, t: float, state: SpatialState) -> None:
        pass

    def event(self, kind: int, t: float, a: int, b: int, c: int) -> None:
        pass

    def result(self):
        return None


@dataclass
class RunRecord:
    """Everything a run produced besides the final state.

    ``log`` rows are ``(kind, a, b, c)`` with times in ``log_times``:
    merge ``(0, survivor, absorbed, site)``, move ``(1, label, from, to)``,
    kill ``(2, label, from, to)`` and freeze ``(3, label, from, to)``.
    """

    sample_times: np.ndarray
    live: np.ndarray
    frozen: np.ndarray
    occupied: np.ndarray
    merges: np.ndarray
    snapshots: list[SpatialState] = field(default_factory=list)
    log_times: np.ndarray | None = None
    log: np.ndarray | None = None
    initial_keys: np.ndarray | None = None
    stages: dict | None = None
    events: int = 0
    observed: dict = field(default_factory=dict)


def _run(initial: SpatialState, t_end: float, config: SpatialConfig, rng, *, instant=False,
         sample_times=None, record_log=False, snapshots=False, stage_t=None, stage_R=None):
    if initial.total == 0:
        raise ValueError("initial state is empty")
    if not t_end >= 0:
        raise ValueError("t_end must be nonnegative")
    g = config.graph
    if initial.graph is not g:
        raise ValueError("initial state lives on a different graph")
    pk = initial.particle_keys()
    ts = np.asarray([] if sample_times is None else sample_times, dtype=float)
    if np.any(np.diff(ts) < 0):
        raise ValueError("sample times must be sorted")
    if np.any(ts > t_end) or np.any(ts < 0):
        raise ValueError("sample times must lie in [0, t_end]")
    st_t = np.asarray([] if stage_t is None else stage_t, dtype=float)
    st_R = np.asarray([] if stage_R is None else stage_R, dtype=float)
    mech = config.measure.kernel(max(len(pk), 2)) if not instant else \
        config.measure.kernel(2)
    gk, d, L, indptr, indices, dist = g.kernel_args()
    out = E.run_engine(gk, d, L, indptr, indices, dist, mech, float(config.rho), bool(instant),
                       pk, float(t_end), ts, _BOUNDARY_CODE[config.boundary.kind],
                       int(config.boundary.R), bool(record_log), bool(snapshots), st_t, st_R,
                       rng)
    (fk, fc, zk, zc, status, label_site, live, frozen, occ, merges, sk, sc, szk, szc,
     log_t, log_i, X, Y, S, Z, events, _) = out
    labeled = instant or config.mode is Mode.LABELED
    mode = Mode.LABELED if labeled else Mode.COUNTS
    final = SpatialState(g, fk, fc, mode, frozen_keys=np.sort(zk), time=float(t_end),
                         frozen_counts=zc[np.argsort(zk)])
    if labeled:
        final.label_site = np.where(status == E.ST_MERGED, -1, label_site)
        final.status = status
    snaps = []
    if snapshots:
        for t, a, b, c, e in zip(ts, sk, sc, szk, szc):
            o = np.argsort(c)
            snaps.append(SpatialState(g, a, b, Mode.COUNTS, frozen_keys=c[o],
                                      frozen_counts=e[o], time=float(t)))
    stages = None
    if len(st_t):
        stages = {"X": X, "Y": Y, "S": S, "Z": Z}
    rec = RunRecord(ts, live, frozen, occ, merges, snaps,
                    log_t if record_log else None, log_i if record_log else None,
                    pk if record_log else None, stages, int(events))
    return final, rec


def simulate(initial: SpatialState, t_end: float, config: SpatialConfig,
             observers: Sequence[Observer] = (), rng: np.random.Generator | None = None, *,
             sample_times=None, record_log: bool = False, snapshots: bool = False):
    """Exact event-driven run on ``[0, t_end]``; returns ``(final_state, RunRecord)``.

    Each occupied site with b blocks rings at rate ``lambda_b 1{b>=2} + b rho``. A merger
    removes K - 1 of the blocks there (K from the merger-size law); a migration moves one block
    to a uniform neighbour, subject to the boundary policy. ``sample_times`` read the
    right-continuous state.
    """
    if rng is None:
        raise ValueError("simulate needs an explicit rng")
    want_snap = snapshots or any(o.needs_snapshots for o in observers)
    want_log = record_log or any(o.needs_log for o in observers)
    final, rec = _run(initial, t_end, config, rng, sample_times=sample_times,
                      record_log=want_log, snapshots=want_snap)
    _feed(observers, rec)
    return final, rec


def _feed(observers, rec):
    for o in observers:
        if o.needs_log and rec.log is not None:
            for t, row in zip(rec.log_times, rec.log):
                o.event(int(row[0]), float(t), int(row[1]), int(row[2]), int(row[3]))
        if o.needs_snapshots:
            for snap in rec.snapshots:
                o.sample(snap.time, snap)
        rec.observed[o.name] = o.result()


def simulate_crw(initial: SpatialState, t_end: float, config: SpatialConfig,
                 rng: np.random.Generator, *, sample_times=None, record_log: bool = False,
                 snapshots: bool = False):
    """Coalescing random walks: blocks merge the moment they share a site.

    Blocks sharing a site at time 0 are collapsed onto the smallest label first. The merger
    mechanism in ``config`` is ignored. Returns ``(final_state, RunRecord)`` with a labeled final
    state.
    """
    return _run(initial, t_end, config, rng, instant=True, sample_times=sample_times,
                record_log=record_log, snapshots=snapshots)
