"""Couplings used to compare the spatial process with simpler ones.

1. Origin block: blocks that never left the start site (M) sit between the mean-field count
   N and N + Z, where Z counts exits.
2. Restriction: label the particles, split the labels into classes, and follow each class on
   its own. At every site the full process is squeezed between any one class and the sum.
"""
import numpy as np

from coalsim.lattice import GraphSpec
from coalsim.mechanism import LambdaMeasure
from coalsim.spatial import (Mode, SpatialConfig, SpatialState, random_partition,
                             restricted_coupling, run_origin_block, simulate)

rng = np.random.default_rng(9)
g = GraphSpec.zd(2)
cfg = SpatialConfig(g, LambdaMeasure.kingman(), 1.0)

st = run_origin_block(10 ** 4, 2.0, cfg, rng, times=[0.1, 0.5, 1.0, 2.0])
print("M:", st.M.tolist(), " N:", st.N.tolist(), " Z:", st.Z.tolist(), " violations:", st.violations)

lab = SpatialConfig(g, LambdaMeasure.beta(1.5), 1.0, mode=Mode.LABELED)
init = SpatialState.uniform(g, 200, 5, rng, mode=Mode.LABELED)
_, run = simulate(init, 3.0, lab, rng=rng, record_log=True)
res = restricted_coupling(run, random_partition(200, 4, rng))
print("events:", len(res.times) - 1, " sandwich violations:", res.violations)
