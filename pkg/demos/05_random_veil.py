"""
What the initial number leaves behind
=====================================

"""

# After floor(log_a K) generations the density is close to h(W(z0)), read
# on the aligned scale a^(floor(log_a K) - log_a K).  The starting number
# z0 is visible only through the random W, so it is veiled whenever the
# early reproduction is random.
from branchveil import BevertonHoltPoisson, BinarySplit, IteratedMap, compute_h
from branchveil.experiments import recover_z0, verify_main
from branchveil.simulator import SimConfig, replicate

rep = verify_main(BevertonHoltPoisson(2, 1), z0=1, K_grid=(1e4, 1e5, 1e6), R=1000)
for key in ("ks", "ks_unaligned", "baseline", "mass_at_zero"):
    print(f"{key:14s}", [round(v, 4) for v in rep.statistics[key]])
print("verdicts:", rep.verdicts)

# With certain splitting at low density (p0 = 1) W equals z0 exactly, and
# inverting h recovers the start from a single observation.
law = BinarySplit(1, 1)
K = 2.0 ** 18
H = compute_h(IteratedMap(law), x_max=12.0)
X = replicate(law, SimConfig(K, 9, seed=0), 20, "X")
print("recovered:", {recover_z0([x], H, law, K).estimate for x in X})

# With random splitting only a set of plausible values survives.
law = BinarySplit(0.5, 1)
K = 1e5
H = compute_h(IteratedMap(law), x_max=40.0)
X = replicate(law, SimConfig(K, 4, seed=0), 3, "X")
for x in X:
    res = recover_z0([x], H, law, K, mode="interval", z_max=15)
    print(f"X = {x:.4f}: z0 in {res.accepted}")
