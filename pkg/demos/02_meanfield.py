"""The non-spatial block count N(t).

Kingman started from n blocks comes down from infinity: N(t) ~ 2/t regardless of n. The Beta
coalescent with 1 < a < 2 comes down too, but more slowly, like t^{-1/(a-1)}.
"""
import numpy as np

from coalsim.meanfield import (blockcounts_at_times, fit_decay_exponent, kingman_concentration_stat,
                               simulate_blockcount)
from coalsim.mechanism import LambdaMeasure

rng = np.random.default_rng(7)
king = LambdaMeasure.kingman()

traj = simulate_blockcount(10 ** 5, 1.0, king, rng)
print("events on [0,1]:", len(traj), " N(1) =", traj.final_count)

ts = [0.01, 0.1, 1.0]
runs = np.array([blockcounts_at_times(10 ** 6, ts, king, rng) for _ in range(200)])
for t, col in zip(ts, runs.T):
    print(f"t={t:5.2f}  mean N t/2 = {col.mean() * t / 2:.3f}  sd {col.std() * t / 2:.3f}")

# how often N t/2 lands within 10% of 1; the sd above sets the answer
print("P(0.9 < N t/2 < 1.1) at t=0.01:", kingman_concentration_stat(10 ** 6, 0.01, 300, rng))

slope, _ = fit_decay_exponent(LambdaMeasure.beta(1.5), 10 ** 5, [0.04, 0.1, 0.2, 0.4], 100, rng)
print("Beta(1.5) decay exponent:", round(slope, 3), "(tends to -2 as t -> 0)")
