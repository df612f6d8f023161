import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from coalsim.lattice import GraphSpec, ball_sites, ball_volume
from coalsim.mechanism import LambdaMeasure
from coalsim.meanfield import blockcounts_at_times
from coalsim.spatial import (Boundary, Mode, Observer, SpatialConfig, SpatialState, density_decay,
                             multiscale_observe, paired_process_counts, parse_init,
                             random_partition, restricted_coupling, run_origin_block, simulate,
                             simulate_crw, survivors_estimate)
from coalsim.spatial.core import _run
from coalsim.spatial import _engine as E

Z2 = GraphSpec.zd(2)
Z3 = GraphSpec.zd(3)
KING = LambdaMeasure.kingman()


def cfg(g=Z2, m=KING, rho=1.0, boundary=None, mode=Mode.COUNTS):
    return SpatialConfig(g, m, rho, boundary or Boundary(), mode)


# --- state ----------------------------------------------------------------------------


def test_state_constructors(rng):
    s = SpatialState.point(Z2, 7)
    assert s.total == 7 and s.occupied == 1 and s.count_at((0, 0)) == 7
    f = SpatialState.fill(Z2, 2, 3)
    assert f.total == 2 * ball_volume(Z2, 3)
    b = SpatialState.bernoulli(Z2, 1.0, 4, rng)
    assert b.total == ball_volume(Z2, 4)
    u = SpatialState.uniform(Z2, 30, 5, rng, distinct=True)
    assert u.total == 30 and u.occupied == 30
    lab = SpatialState.uniform(Z2, 30, 2, rng, mode=Mode.LABELED)
    for k, c in zip(lab.keys, lab.counts):
        assert np.sum(lab.label_site == k) == c


def test_parse_init(rng):
    assert parse_init("point(n=5)", Z2).total == 5
    assert parse_init("fill(count=2, radius=1)", Z2).total == 10
    assert parse_init("bernoulli(p=1, radius=2)", Z2, rng).total == 13
    assert parse_init("uniform(s=9, radius=3)", Z2, rng).total == 9
    assert parse_init("point(n=3, site=(1;2))", Z2).count_at((1, 2)) == 3
    with pytest.raises(ValueError):
        parse_init("blob(n=2)", Z2)
    with pytest.raises(ValueError):
        parse_init("point()", Z2)


def test_boundary_validation():
    with pytest.raises(ValueError):
        Boundary.kill_outside(-1)
    with pytest.raises(ValueError):
        SpatialConfig(Z2, KING, rho=-1.0)


# --- engine ---------------------------------------------------------------------------


def test_one_particle(rng):
    for g in (Z2, Z3, GraphSpec.path(10), GraphSpec.torus(2, 5)):
        _, rec = simulate(SpatialState.point(g, 1), 50.0, cfg(g), rng=rng,
                          sample_times=np.linspace(0, 50, 11))
        assert np.all(rec.live == 1)


def test_one_particle_is_random_walk(rng):
    ends = []
    for _ in range(4000):
        fin, _ = simulate(SpatialState.point(Z2, 1), 25.0, cfg(), rng=rng)
        ends.append(np.sum(np.asarray(Z2.decode(fin.keys[0])) ** 2))
    ends = np.array(ends)
    assert abs(ends.mean() - 25.0) < 3 * ends.std() / math.sqrt(len(ends))


def test_two_particles_no_motion(rng):
    n = 30_000
    ts = np.empty(n)
    for i in range(n):
        _, rec = simulate(SpatialState.point(Z2, 2), 1e6, cfg(rho=0.0), rng=rng,
                          record_log=True)
        ts[i] = rec.log_times[0]
    assert abs(ts.mean() - 1.0) < 3 * ts.std() / math.sqrt(n)


def test_small_rho_matches_meanfield(rng):
    sp = [simulate(SpatialState.point(Z2, 1000), 1.0, cfg(rho=1e-6), rng=rng,
                   sample_times=[1.0])[1].live[0] for _ in range(1500)]
    mf = [blockcounts_at_times(1000, [1.0], KING, rng)[0] for _ in range(1500)]
    assert stats.ks_2samp(sp, mf).pvalue > 0.01


@given(seed=st.integers(0, 2 ** 32 - 1), alpha=st.sampled_from([None, 1.5, 1.0]),
       bd=st.sampled_from(["none", "kill", "freeze"]))
@settings(max_examples=30, deadline=None)
def test_event_conservation(seed, alpha, bd):
    rng = np.random.default_rng(seed)
    m = KING if alpha is None else (LambdaMeasure.uniform() if alpha == 1.0
                                    else LambdaMeasure.beta(alpha))
    boundary = {"none": Boundary(), "kill": Boundary.kill_outside(3),
                "freeze": Boundary.freeze_outside(3)}[bd]
    init = SpatialState.uniform(Z2, 40, 3, rng)
    fin, rec = simulate(init, 3.0, cfg(m=m, boundary=boundary), rng=rng, record_log=True,
                        sample_times=[1.0, 2.0, 3.0])
    live = init.total
    for row in rec.log:
        kind = row[0]
        if kind == E.EV_MERGE:
            live -= 1
        elif kind in (E.EV_KILL, E.EV_FREEZE):
            live -= 1
    assert live == fin.total == rec.live[-1]
    assert fin.total == fin.counts.sum()
    if bd == "none":
        assert fin.frozen_total == 0
    assert np.all(np.diff(rec.live) <= 0)


def test_freeze_and_kill_boundaries(rng):
    init = SpatialState.fill(Z2, 3, 2)
    fin, _ = simulate(init, 20.0, cfg(rho=5.0, boundary=Boundary.freeze_outside(2)), rng=rng)
    assert np.all(Z2.distances(fin.frozen_keys) == 3)
    assert np.all(Z2.distances(fin.keys) <= 2)
    fin, _ = simulate(init, 20.0, cfg(rho=5.0, boundary=Boundary.kill_outside(2)), rng=rng)
    assert fin.frozen_total == 0 and np.all(Z2.distances(fin.keys) <= 2)


def test_observer_hooks(rng):
    class Tally(Observer):
        name = "tally"
        needs_log = True

        def __init__(self):
            self.samples, self.moves = [], 0

        def sample(self, t, state):
            self.samples.append(state.total)

        def event(self, kind, t, a, b, c):
            self.moves += kind == E.EV_MOVE

        def result(self):
            return self.samples, self.moves

    obs = Tally()
    _, rec = simulate(SpatialState.point(Z2, 20), 2.0, cfg(), observers=[obs], rng=rng,
                      sample_times=[0.5, 1.0, 2.0])
    assert rec.observed["tally"][0] == list(rec.live)
    assert rec.observed["tally"][1] == int(np.sum(rec.log[:, 0] == E.EV_MOVE))


def test_determinism():
    outs = []
    for _ in range(2):
        r = np.random.default_rng(5)
        init = SpatialState.uniform(Z2, 50, 4, r)
        fin, rec = simulate(init, 5.0, cfg(m=LambdaMeasure.beta(1.5)), rng=r, record_log=True)
        outs.append((fin.keys.copy(), rec.log.copy()))
    assert np.array_equal(outs[0][0], outs[1][0]) and np.array_equal(outs[0][1], outs[1][1])


def test_needs_rng():
    with pytest.raises(ValueError):
        simulate(SpatialState.point(Z2, 2), 1.0, cfg())


# --- coalescing random walks ---------------------------------------------------------


def test_crw_single(rng):
    _, rec = simulate_crw(SpatialState.point(Z2, 1), 30.0, cfg(), rng,
                          sample_times=[10.0, 30.0])
    assert np.all(rec.live == 1)


def test_crw_at_most_one_per_site(rng):
    g = GraphSpec.torus(2, 8)
    init = SpatialState.uniform(g, 40, 8, rng)
    fin, rec = simulate_crw(init, 5.0, cfg(g), rng, sample_times=[0.0, 1.0, 5.0],
                            snapshots=True)
    for snap in rec.snapshots:
        assert np.all(snap.counts <= 1)
    assert fin.mode is Mode.LABELED


def test_crw_survivors_d3(rng):
    # uniform starts in B(o, m), s = a m^(d-2): most start configurations keep > s/4 survivors
    for m in (8, 16):
        s = 2 * m
        hits = 0
        for _ in range(40):
            init = SpatialState.uniform(Z3, s, m, rng)
            fin, _ = simulate_crw(init, 50.0 * m * m, cfg(Z3), rng)
            hits += fin.total > s / 4
        assert hits / 40 >= 0.9


def test_crw_negative_correlation(rng):
    g = GraphSpec.torus(2, 8)
    pairs = [(g.encode((0, 0)), g.encode((0, 1))), (g.encode((2, 3)), g.encode((5, 5)))]
    xs = np.zeros((3000, len(pairs), 2))
    for i in range(3000):
        init = SpatialState.uniform(g, 20, 8, rng, distinct=True)
        fin, _ = simulate_crw(init, 3.0, cfg(g), rng)
        for j, (a, b) in enumerate(pairs):
            xs[i, j] = fin.counts_at_keys([a, b]) > 0
    for j in range(len(pairs)):
        prod = xs[:, j, 0] * xs[:, j, 1]
        se = prod.std() / math.sqrt(len(prod))
        assert prod.mean() <= xs[:, j, 0].mean() * xs[:, j, 1].mean() + 3 * se


# --- origin block ---------------------------------------------------------------------


def test_origin_block_no_motion(rng):
    # without motion nothing emigrates and the origin block is the mean-field coalescent
    a, b = [], []
    for _ in range(400):
        st_ = run_origin_block(500, 0.5, cfg(rho=0.0), rng, times=[0.1, 0.5])
        assert np.all(st_.Z == 0) and np.array_equal(st_.M, st_.N)
        a.append(st_.M)
        b.append(blockcounts_at_times(500, [0.1, 0.5], KING, rng))
    a, b = np.array(a, float), np.array(b, float)
    se = np.sqrt(a.var(0) / len(a) + b.var(0) / len(b))
    assert np.all(np.abs(a.mean(0) - b.mean(0)) <= 4 * se)


def test_origin_block_sandwich(rng):
    for m in (KING, LambdaMeasure.beta(1.5)):
        for _ in range(30):
            st_ = run_origin_block(3000, 0.5, cfg(m=m), rng, times=np.linspace(0, 0.5, 20))
            assert st_.violations == 0
            assert np.all(st_.M <= st_.N) and np.all(st_.N <= st_.M + st_.Z)


def test_exit_count_domination(rng):
    z, integ = [], []
    for _ in range(400):
        st_ = run_origin_block(2000, 0.3, cfg(), rng)
        z.append(st_.Z[-1])
        integ.append(st_.int_N)
    z, integ = np.array(z), np.array(integ)
    diff = z - 1.0 * integ
    assert diff.mean() <= 3 * diff.std() / math.sqrt(len(diff))


def test_origin_block_cascade_step(rng):
    n = 10 ** 6
    tau = math.log(n) ** -3
    runs = [run_origin_block(n, tau, cfg(), rng) for _ in range(40)]
    med = np.median([r.M[-1] * tau / 2 for r in runs])
    assert 0.8 < med < 1.2
    assert sum(r.landing.sum() for r in runs) == sum(r.Z[-1] for r in runs)


# --- restriction coupling -------------------------------------------------------------


def _labeled_run(rng, n=60, t=4.0, m=KING, boundary=None):
    init = SpatialState.uniform(Z2, n, 3, rng, mode=Mode.LABELED)
    _, rec = simulate(init, t, cfg(m=m, mode=Mode.LABELED, boundary=boundary), rng=rng,
                      record_log=True)
    return init, rec


def test_restriction_single_class(rng):
    init, rec = _labeled_run(rng)
    res = restricted_coupling(rec, [np.arange(init.total)])
    assert np.array_equal(res.totals[0], res.totals[1])


def test_restriction_singletons(rng):
    init, rec = _labeled_run(rng)
    res = restricted_coupling(rec, [[i] for i in range(init.total)])
    assert np.all(res.totals[1:] == 1)
    assert res.violations == 0


@given(seed=st.integers(0, 2 ** 32 - 1), classes=st.integers(1, 12),
       alpha=st.sampled_from([None, 1.5, 1.0]), bd=st.sampled_from([None, "kill", "freeze"]))
@settings(max_examples=40, deadline=None)
def test_restriction_sandwich_property(seed, classes, alpha, bd):
    rng = np.random.default_rng(seed)
    m = KING if alpha is None else (LambdaMeasure.uniform() if alpha == 1.0
                                    else LambdaMeasure.beta(alpha))
    boundary = None if bd is None else (Boundary.kill_outside(3) if bd == "kill"
                                        else Boundary.freeze_outside(3))
    init, rec = _labeled_run(rng, m=m, boundary=boundary)
    res = restricted_coupling(rec, random_partition(init.total, classes, rng))
    assert res.violations == 0
    assert np.all(res.totals[1:] <= res.totals[0])
    assert np.all(res.totals[0] <= res.totals[1:].sum(axis=0))


def test_restriction_needs_log(rng):
    init = SpatialState.point(Z2, 5, mode=Mode.LABELED)
    _, rec = simulate(init, 1.0, cfg(mode=Mode.LABELED), rng=rng)
    with pytest.raises(ValueError):
        restricted_coupling(rec, [[0, 1]])


def test_monotone_in_n(rng):
    # restriction to the first m labels is a coupled copy started from m particles
    init, rec = _labeled_run(rng, n=80)
    res = restricted_coupling(rec, [np.arange(30)])
    assert np.all(res.totals[1] <= res.totals[0])


# --- paired domination ----------------------------------------------------------------


def test_paired_process_dominates(rng):
    a0 = 0.5  # lambda_2 / 2 for Kingman
    times = np.array([0.5, 2.0, 8.0])
    R = 3000
    sp = np.empty((R, 3))
    pp = np.empty((R, 3))
    for i in range(R):
        init = SpatialState.uniform(Z2, 30, 2, rng)
        sp[i] = simulate(init, 8.0, cfg(), rng=rng, sample_times=times)[1].live
        pp[i] = paired_process_counts(init, cfg(), times, a0, rng)
    for j in range(3):
        for x in np.unique(np.concatenate([sp[:, j], pp[:, j]])):
            f_p, f_s = np.mean(pp[:, j] <= x), np.mean(sp[:, j] <= x)
            tol = 3 * math.sqrt((f_p * (1 - f_p) + f_s * (1 - f_s)) / R) + 1e-9
            assert f_p <= f_s + tol


# --- long-time statistics -------------------------------------------------------------


def test_survivors_single(rng):
    res = survivors_estimate(SpatialState.point(Z2, 1), cfg(), [1.0, 2.0], rng)
    assert res.has_plateau and res.plateau == 1


def test_survivors_schedule_checks(rng):
    with pytest.raises(ValueError):
        survivors_estimate(SpatialState.point(Z2, 3), cfg(), [2.0, 1.0], rng)


def test_survivors_d3_ratio(rng):
    ratios = []
    for m in (8, 12, 16):
        vals = []
        for _ in range(15):
            init = SpatialState.bernoulli(Z3, 1.0, m, rng)
            vals.append(survivors_estimate(init, cfg(Z3), [m * m, 4.0 * m * m], rng).counts[-1])
        ratios.append(np.median(vals) / m)
    assert max(ratios) / min(ratios) <= 4


def test_survivors_d2_no_early_plateau(rng):
    init = SpatialState.bernoulli(Z2, 1.0, 16, rng)
    res = survivors_estimate(init, cfg(), [256.0], rng)
    assert res.counts[-1] > 1


def test_multiscale_trivial(rng):
    st0 = multiscale_observe(16, 1.0, cfg(Z3, rho=0.0), rng)
    assert np.all(st0.Y == 0) and np.all(st0.Z == 0)
    big = [multiscale_observe(16, 50.0, cfg(Z3), rng).Z for _ in range(20)]
    assert all(np.all(z == 0) for z in big)


def test_multiscale_density_event(rng):
    vals = []
    for _ in range(30):
        st_ = multiscale_observe(16, 1.0, cfg(Z3), rng)
        vals.append(st_.X[-1] / (st_.R[-1] ** 3 / st_.t[-1]))
    # the density event: X is of order R^3 / t, with a stable constant
    assert 0.5 < min(vals) and max(vals) < 4.0
    assert max(vals) / min(vals) < 1.5


def test_density_single(rng):
    res = density_decay(5, 0.0001, [1.0, 2.0], cfg(boundary=Boundary.kill_outside(5),
                                                   rho=0.0), rng)
    assert res.S[0] == res.S[1] == 1
    with pytest.raises(ValueError):
        density_decay(5, 1, [1.0], cfg(), rng)


def test_k_few_in_box(rng):
    # blocks in S at tau are at most (blocks that never left S) + (exited particles), so the
    # stayers alone bound the event
    R, tau = 22, 1.0
    vol = ball_volume(Z2, R)
    assert vol == 1013
    init = SpatialState.fill(Z2, 5, R)
    bad = 0
    for _ in range(40):
        _, rec = _run(init, tau, cfg(), rng, stage_t=np.array([0.0, tau]),
                      stage_R=np.array([R, R], dtype=float))
        stay = rec.stages["S"][1]
        inside = rec.stages["X"][1]
        assert stay <= inside
        bad += stay > 4.5 * vol / tau
    assert bad / 40 < 0.05


def test_beta_few_remain(rng):
    ratios = []
    for R in (5, 17):
        vol = ball_volume(Z2, R)
        c = cfg(m=LambdaMeasure.beta(1.5), boundary=Boundary.kill_outside(R))
        q = [density_decay(R, 20, [1.0], c, rng).S[0] / vol for _ in range(15)]
        ratios.append(np.mean(q))
    # the surviving density does not depend on the box size
    assert max(ratios) / min(ratios) < 1.5
