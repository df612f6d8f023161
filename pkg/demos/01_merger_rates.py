"""Merger rates of a Lambda-coalescent.

With b blocks, a given k-subset merges at rate lambda_{b,k} = int x^{k-2} (1-x)^{b-k} Lambda(dx).
For Beta(2-a, a) this has a closed form through Beta functions. Below we compare it with direct
quadrature and check the telescoping identity behind the fast total rate.
"""
import numpy as np

from coalsim.mechanism import (LambdaMeasure, merger_rate, merger_rate_quad, sample_merger_size,
                               total_event_rate, total_event_rate_quad)

beta = LambdaMeasure.beta(1.5)
print("lambda_{3,2} =", merger_rate(beta, 3, 2), " lambda_3 =", total_event_rate(beta, 3))

# closed form vs quadrature, a few (b, k)
for b, k in [(5, 2), (20, 7), (100, 50)]:
    a, q = merger_rate(beta, b, k), merger_rate_quad(beta, b, k)
    print(f"b={b:3d} k={k:2d}  closed {a:.6e}  quad {q:.6e}  rel {abs(a - q) / q:.1e}")

# lambda_{b+1} - lambda_b = b * lambda_{b+1,2}
b = 40
lhs = total_event_rate(beta, b + 1) - total_event_rate(beta, b)
print("telescoping defect:", abs(lhs - b * merger_rate(beta, b + 1, 2)))
print("total rate, two routes:", total_event_rate(beta, 60), total_event_rate_quad(beta, 60))

# Kingman only ever merges pairs; Beta produces occasional large jumps
rng = np.random.default_rng(1)
for m in (LambdaMeasure.kingman(), beta, LambdaMeasure.uniform()):
    ks = [sample_merger_size(m, 200, rng) for _ in range(2000)]
    print(f"{m!r:32s} mean K {np.mean(ks):6.2f}  max K {max(ks)}")
