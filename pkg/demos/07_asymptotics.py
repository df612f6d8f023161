"""Tower functions, iterated logarithms and power-law fits.

Spatial Kingman from n blocks at the origin of Z^2 spreads over a region whose size is governed
by log* n, the number of times ln must be applied to reach 1. These helpers keep such
quantities finite in floating point.
"""
import math

from coalsim.asymptotics import f_star, fit_power_law, log_star, ode_density, tow

print("tow(3, e) =", tow(3, math.e), "  log* of it:", log_star(tow(3, math.e)))
print("log* 10^100 =", log_star(1e100))
# sqrt only reaches 1 through float rounding, so this count is a property of doubles
print("iterations of sqrt from 10^6 down to 1:", f_star(math.sqrt, 1e6))

# the mean-field density ODE rho' = -rho^2/2: rho = 2/(t + 2), so the fitted slope creeps toward -1
pts = [(t, ode_density(t, 1.0)) for t in (10, 30, 100, 300, 1000)]
b, a, r2 = fit_power_law(pts)
print(f"density exponent {b:.3f}  (r2 {r2:.5f})")
