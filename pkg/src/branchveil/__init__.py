"""Density- and capacity-dependent branching populations: simulation, the
Schroeder limit ``h``, the martingale limit ``W`` and limit-theorem checks."""

from .laws import (BevertonHoltPoisson, BinarySplit, OffspringLaw, UserTabulated,
                   make_law, offspring_mean, offspring_variance, sample_offspring)
from .schroeder import (IteratedMap, SchroederH, compute_h, fixed_points, h_eval,
                        h_inverse, iterate_f)
from .simulator import (SimConfig, decompose_martingale, replicate, simulate_coupled,
                        simulate_fast, simulate_path)
from .validation import validate_assumptions
from .wlimit import extinction_probability, sample_W, w_moments

__version__ = "0.1.0"
