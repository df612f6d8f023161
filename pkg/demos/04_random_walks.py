"""Random-walk oracles on Z^d: hitting the origin and two walks meeting."""
import math

import numpy as np

from coalsim.lattice import GraphSpec, rw_hit_origin_prob, rw_meeting_prob, rw_mean_square_displacement

rng = np.random.default_rng(11)
z2, z3 = GraphSpec.zd(2), GraphSpec.zd(3)

# a rate-1 walk: E|X_t|^2 = t
print("MSD at t=20:", rw_mean_square_displacement(z2, 20.0, 20000, rng))

# in d=2, started at distance m and run for m^2, the hit probability decays like 1/ln m
for m in (4, 8, 16, 32):
    est = rw_hit_origin_prob(z2, (m, 0), m * m, 4000, rng)
    print(f"d=2 m={m:2d}  P(hit) {est.value:.3f} +- {est.stderr:.3f}  times ln m {est.value * math.log(m):.3f}")

# in d=3 two walks from a ball of radius m meet with probability ~ 1/m
for m in (4, 8, 16):
    est = rw_meeting_prob(z3, m, 4 * m * m, 8000, rng)
    print(f"d=3 m={m:2d}  P(meet) {est.value:.4f}  times m {est.value * m:.3f}")
