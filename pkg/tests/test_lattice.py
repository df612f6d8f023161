import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coalsim.asymptotics import fit_power_law
from coalsim.lattice import (GraphSpec, ball_sites, ball_volume, excursion_tail_check,
                             load_edge_list, neighbors, rw_hit_origin_prob, rw_mean_square_displacement,
                             rw_meeting_prob)


def test_neighbors():
    assert sorted(neighbors(GraphSpec.zd(2), (0, 0))) == [(-1, 0), (0, -1), (0, 1), (1, 0)]
    assert sorted(neighbors(GraphSpec.torus(1, 3), 2)) == [(0,), (1,)]
    assert neighbors(GraphSpec.path(3), 0) == [1]


def test_ball_volume():
    for g in (GraphSpec.zd(1), GraphSpec.zd(2), GraphSpec.zd(3), GraphSpec.path(5),
              GraphSpec.torus(2, 5)):
        assert ball_volume(g, 0) == 1
    for d in (1, 2, 3):
        assert ball_volume(GraphSpec.zd(d), 1) == 1 + 2 * d
    assert ball_volume(GraphSpec.zd(2), 2) == 13


@pytest.mark.parametrize("d", [1, 2, 3])
def test_ball_closed_form_matches_enumeration(d):
    g = GraphSpec.zd(d)
    for r in range(0, 7):
        assert ball_volume(g, r) == len(ball_sites(g, r))
        if r:
            assert ball_volume(g, r) <= 1 + 2 * d * ball_volume(g, r - 1)


def test_torus_and_path_validation():
    with pytest.raises(ValueError):
        GraphSpec.torus(2, 2)
    with pytest.raises(ValueError):
        GraphSpec.zd(4)


@given(seed=st.integers(0, 10 ** 6), which=st.sampled_from(["z2", "z3", "torus", "path"]))
@settings(max_examples=40, deadline=None)
def test_neighbor_symmetry(seed, which):
    g = {"z2": GraphSpec.zd(2), "z3": GraphSpec.zd(3), "torus": GraphSpec.torus(2, 4),
         "path": GraphSpec.path(7)}[which]
    rng = np.random.default_rng(seed)
    v = g.decode(int(rng.choice(ball_sites(g, 3))))
    for u in neighbors(g, v):
        assert v in neighbors(g, u)


def test_encode_roundtrip():
    g = GraphSpec.zd(3)
    pts = np.array([[0, 0, 0], [5, -3, 2], [-1000, 7, 999]])
    assert np.array_equal(g.decode_many(g.encode_many(pts)), pts)


def test_edge_list(tmp_path):
    p = tmp_path / "e.txt"
    p.write_text("0 1\n1 2\n2 0\n2 3\n")
    g = load_edge_list(p)
    assert sorted(neighbors(g, 2)) == [0, 1, 3]
    assert g.max_degree == 3
    assert ball_volume(g, 1) == 3


def test_custom_adjacency_checks():
    with pytest.raises(ValueError):
        GraphSpec.custom([[1], []])
    g = GraphSpec.custom([[1], [0, 2], [1]])
    assert g.max_degree == 2


def test_trivial_oracles(rng):
    g = GraphSpec.zd(2)
    assert rw_meeting_prob(g, 0, 10.0, 100, rng).value == 1.0
    assert rw_hit_origin_prob(g, (0, 0), 10.0, 100, rng).value == 1.0


def test_meeting_d3_slope(rng):
    g = GraphSpec.zd(3)
    pts = [(m, rw_meeting_prob(g, m, 4 * m * m, 20_000, rng).value) for m in (4, 8, 16)]
    assert fit_power_law(pts, min_span=2)[0] == pytest.approx(-1, abs=0.2)


def test_meeting_d2_template(rng):
    g = GraphSpec.zd(2)
    t, m = 16, 32
    est = rw_meeting_prob(g, m, t * m * m, 4000, rng)
    template = math.log(t) / (math.log(m) + math.log(t))
    assert template / 3 <= est.value <= 3 * template


def test_hitting_d2_bounded(rng):
    g = GraphSpec.zd(2)
    vals = []
    for m in (8, 16, 32):
        sphere = ball_sites(g, m)
        sphere = sphere[g.distances(sphere) == m]
        vals.append(rw_hit_origin_prob(g, sphere, m * m, 20_000, rng).value * math.log(m))
    assert min(vals) > 0 and max(vals) / min(vals) <= 2.0


@pytest.mark.slow
def test_hitting_d3_slope(rng):
    g = GraphSpec.zd(3)
    pts = [(r, rw_hit_origin_prob(g, (r, 0, 0), 50 * r * r, 20_000, rng).value)
           for r in (4, 8, 16)]
    assert fit_power_law(pts, min_span=2)[0] == pytest.approx(-1, abs=0.2)


def test_mean_square_displacement(rng):
    # each jump changes |X|^2 by one on average, so E|X_t|^2 = rate * t in every dimension
    for d in (1, 2, 3):
        est = rw_mean_square_displacement(GraphSpec.zd(d), 100.0, 100_000, rng)
        assert est.value == pytest.approx(100.0, rel=0.05)


def test_excursion_tails(rng):
    g = GraphSpec.zd(1)
    assert excursion_tail_check(g, 10.0, 0.0, 100, rng).probs[0] == 1.0
    mc = excursion_tail_check(g, 100.0, [20, 40, 60], 200_000, rng)
    assert 0.1 <= mc.c <= 1.0
    ex = excursion_tail_check(g, 100.0, [20, 40, 60], 0, method="exact")
    assert 0.1 <= ex.c <= 1.0
    assert np.all(np.abs(mc.probs[:2] - ex.probs[:2]) < 4 * mc.stderr[:2] + 1e-4)
    far = excursion_tail_check(g, 1.0, 11.0, 10_000, rng)
    assert far.probs[0] < 1e-3
