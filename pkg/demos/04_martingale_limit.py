"""
The martingale limit W
======================

"""

# Early on the population behaves like a Galton-Watson process, and
# Z~_n / a^n settles to a random W(z0).  Its mean is z0 and its variance
# z0 sigma^2(0) / (a^2 - a).  With Poisson offspring W has an atom at 0 of
# mass q^z0, q the extinction probability.
import numpy as np
from branchveil import BevertonHoltPoisson, BinarySplit
from branchveil.wlimit import extinction_probability, gw_normalized_paths, sample_W, w_moments

for law in (BinarySplit(0.5, 1), BevertonHoltPoisson(2, 1)):
    for z0 in (1, 5):
        W = sample_W(law, z0, R=5000, seed=0).values
        mean, var = w_moments(law, z0)
        print(f"{law.family:20s} z0={z0}: mean {W.mean():.3f} ({mean}), "
              f"var {W.var():.3f} ({var:.3f}), P(W=0) {np.mean(W == 0):.3f}")

q = extinction_probability(BevertonHoltPoisson(2, 1))
print("q for Poisson(2):", q)

# The normalised paths are flat in mean from the first generation on.
paths = gw_normalized_paths(BevertonHoltPoisson(2, 1), 1, 12, seed=1, R=4000)
print("mean of Z~_n / a^n:", np.round(paths.mean(axis=0), 3))
