"""
Offspring laws and what the checker says about them
===================================================

"""

# Every law is a distribution of offspring per individual that depends on
# the current density x = Z/K.  The mean m(x) falls as the population fills
# up; m(0) = a > 1 is the growth factor of a sparse population.
import numpy as np
from branchveil import BevertonHoltPoisson, BinarySplit, validate_assumptions
from branchveil.laws import fixed_point_density, sample_offspring

bh = BevertonHoltPoisson(2, 1)
bs = BinarySplit(0.5, 1)
x = np.linspace(0, 2, 5)
print("x          ", x)
print("m(x), BH   ", bh.mean(x))
print("m(x), split", bs.mean(x))

# Sampling goes through the quantile function: one uniform u per
# individual.  A larger u never gives fewer children, and a crowded
# population never gets more children from the same u.  The coupling
# arguments lean on exactly this ordering.
u = np.linspace(0.05, 0.95, 7)
print("u               ", u)
print("children at x=0 ", sample_offspring(bh, 0.0, np.inf, u))
print("children at x=1 ", sample_offspring(bh, 1.0, np.inf, u))

# The density map f(x) = x m(x) has a stable fixed point where m = 1.
print("fixed point, BH:", fixed_point_density(bh))
print("fixed point, split law:", fixed_point_density(bs), "(m stays above 1)")

# The assumption checker evaluates each regularity condition on a grid.
# "verified-on-grid" is evidence, not proof; A3 is a closed-under-limits
# condition that no finite grid can settle.
rep = validate_assumptions(bh)
for name, status in rep.statuses.items():
    print(f"{name:16s} {status.kind}")

# A hand-made table whose mean jumps from 2 to 1/2 breaks monotonicity of
# f, and the checker names a density where it happens.
from branchveil.laws import UserTabulated
bad = UserTabulated(np.array([0.0, 0.5, 1.0]),
                    np.array([[0, 0, 1.0], [0, 0, 1.0], [0.5, 0.5, 0]]))
a2 = validate_assumptions(bad, np.linspace(0, 1, 21), [1e3]).statuses["A2"]
print("tabulated law, A2:", a2.kind, a2.witness)
