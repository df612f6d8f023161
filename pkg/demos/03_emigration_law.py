"""How many lineages leave a crowded site.

A site starting with n blocks under Kingman, each block jumping at rate rho, loses about
theta ln n of them before they coalesce (theta = 2 rho). The count is a sum of independent
Bernoulli variables, so its exact law is a Poisson-binomial we can tabulate.
"""
import math

import numpy as np

from coalsim.genealogy import (MutationModel, block_count_pmf, expected_block_count,
                               sample_block_count_crp)

theta = MutationModel.from_migration_rate(1.0).theta
n = 10 ** 6
rng = np.random.default_rng(3)
z = np.array([sample_block_count_crp(n, theta, rng) for _ in range(5000)])
print(f"theta={theta}  E Z = {expected_block_count(n, theta):.3f}  sample mean {z.mean():.3f}")
print(f"theta ln n = {theta * math.log(n):.2f}")

# the mean is on target; the spread is of order sqrt(ln n), so a fixed band is coarse at 10^6
pmf = block_count_pmf(n, theta, kmax=200)
x = np.arange(len(pmf)) / math.log(n)
print("P(|Z/ln n - theta| > 0.3) exact:", round(1 - pmf[np.abs(x - theta) <= 0.3].sum(), 4))
