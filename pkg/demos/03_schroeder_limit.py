"""
The limit h of the rescaled density map
=======================================

"""

# h(x) = lim f_n(x / a^n).  For the Beverton-Holt mean the iterates have a
# closed form and h(x) = x / (1 + b x / (a - 1)); here a = 2, b = 1.
import numpy as np
from branchveil import IteratedMap, BevertonHoltPoisson, BinarySplit, compute_h, h_eval, h_inverse
from branchveil.schroeder import schroeder_residual, fixed_points

fmap = IteratedMap(BevertonHoltPoisson(2, 1))
H = compute_h(fmap, x_max=4.0, tol=1e-10)
x = np.array([0.25, 1.0, 3.0])
print("numerical h:", h_eval(H, x))
print("x/(1+x):    ", x / (1 + x))
print("iterations used:", H.n_trunc)

# h solves Schroeder's equation h(x) = f(h(x/a)); the residual at the
# knots measures how well the table does.
print("max residual:", schroeder_residual(H, fmap).max())

# h is strictly increasing, so it can be inverted: a density observed at
# generation log_a K points back to a value of the martingale limit.
print("h^-1(0.5) =", h_inverse(H, 0.5))

# The split law has no fixed point (m never drops to 1), so h keeps
# growing; it is tabulated on an explicit range instead.
fsplit = IteratedMap(BinarySplit(0.5, 1))
print("fixed points:", fixed_points(fsplit), fixed_points(fmap))
Hs = compute_h(fsplit, x_max=5.0)
print("split law h on 0..5:", np.round(h_eval(Hs, np.linspace(0, 5, 6)), 4))
