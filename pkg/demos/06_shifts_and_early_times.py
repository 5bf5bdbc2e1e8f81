"""
Before and after generation log_a K
===================================

"""

# A few generations past log_a K the density follows the deterministic map:
# X_{log K + n} is close to f_n(h(W)).  Far earlier, at sub-logarithmic
# times, the expected density is still of order a^(lambda - log_a K).
from branchveil import BevertonHoltPoisson, BinarySplit
from branchveil.experiments import verify_corollary_shift, verify_fixed_time, verify_sublog

for shift in (1, 3, -1):
    rep = verify_corollary_shift(BevertonHoltPoisson(2, 1), z0=1, shift=shift, R=1000)
    print(f"shift {shift:+d}: KS", [round(v, 4) for v in rep.statistics["ks"]])

# Starting from a positive density instead, X_n tracks f_n(x0) directly.
rep = verify_fixed_time(BevertonHoltPoisson(2, 1), x0=0.1, n=3, R=1000)
print("X_3 means:", [round(v, 5) for v in rep.statistics["mean"]],
      "target", round(rep.diagnostics["target"], 6))

rep = verify_sublog(BinarySplit(0.5, 1), lam="sqrt-log", R=1000)
for K, n, e, b in zip(rep.K_grid, rep.statistics["n"], rep.statistics["exact_mean"],
                      rep.statistics["bound"]):
    print(f"K={K:9.0f} n={n}: E[X_n] = {e:.3g} <= {b:.3g}")
