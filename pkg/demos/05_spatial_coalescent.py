"""The spatial coalescent: blocks jump between lattice sites and merge only when they share one.

We start n blocks at the origin of Z^2 and watch the total count. Compared with the mean-field
run, spreading out slows coalescence, and once blocks are far apart very few mergers remain.
"""
import numpy as np

from coalsim.lattice import GraphSpec
from coalsim.meanfield import blockcounts_at_times
from coalsim.mechanism import LambdaMeasure
from coalsim.spatial import Boundary, SpatialConfig, SpatialState, density_decay, simulate

rng = np.random.default_rng(5)
g = GraphSpec.zd(2)
king = LambdaMeasure.kingman()
times = [0.01, 0.1, 1.0, 10.0]

cfg = SpatialConfig(g, king, rho=1.0)
final, rec = simulate(SpatialState.point(g, 10 ** 4), times[-1], cfg, rng=rng, sample_times=times)
mf = blockcounts_at_times(10 ** 4, times, king, rng)
for t, a, b, occ in zip(times, rec.live, mf, rec.occupied):
    print(f"t={t:6.2f}  spatial N {a:5d}  ({occ:4d} sites)   mean-field N {b:5d}")
print("farthest block at t=10:", final.max_distance())

# a full box in Z^3 thins out like 1/t
g3 = GraphSpec.zd(3)
res = density_decay(10, 1, [1, 2, 4, 8, 16], SpatialConfig(g3, king, 1.0, Boundary.kill_outside(10)), rng)
print("S_t:", res.S.tolist())
