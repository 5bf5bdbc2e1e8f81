"""The martingale limit ``W(z0) = lim Z~_n / a^n`` of the comparison process."""
from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np

from . import streams
from .laws import INF, OffspringLaw
from .simulator import MAX_COUNT, map_replicates

N_TRUNC = 30


@dataclass
class WEnsemble:
    """Approximants ``Z~_{n_trunc} / a^{n_trunc}``; extinct paths give 0."""

    values: np.ndarray
    z0: int
    n_trunc: int
    seed: int
    law: dict

    def __len__(self):
        return self.values.size


def _gw_normalized(law, z0, n, seed, tag, r):
    rng = streams.generator(seed, tag, r)
    a = law.a
    out = np.empty(n + 1)
    z = z0
    out[0] = z0
    for k in range(1, n + 1):
        if z:
            z = law.sample_total(z, 0.0, INF, rng)
            if z > MAX_COUNT:
                raise OverflowError(f"comparison process overflowed at generation {k}")
        out[k] = z / a ** k
    return out


def gw_normalized_paths(law: OffspringLaw, z0: int, n: int, seed: int, R: int,
                        tag: str = "w", workers: int | None = None) -> np.ndarray:
    """``(R, n + 1)`` array of ``Z~_k / a^k`` for ``k = 0..n``."""
    if not law.a > 1:
        raise ValueError("law must be supercritical at zero density")
    fn = functools.partial(_gw_normalized, law, int(z0), int(n), int(seed), tag)
    return np.array(map_replicates(fn, R, workers))


def sample_W(law: OffspringLaw, z0: int, n_trunc: int = N_TRUNC, seed: int = 0,
             R: int = 2000, tag: str = "w", workers: int | None = None) -> WEnsemble:
    """``R`` independent approximants of ``W(z0)`` at generation ``n_trunc``."""
    paths = gw_normalized_paths(law, z0, n_trunc, seed, R, tag, workers)
    return WEnsemble(paths[:, -1], int(z0), int(n_trunc), int(seed), law.to_dict())


def w_moments(law: OffspringLaw, z0: int) -> tuple[float, float]:
    """Mean and variance of ``W(z0)``: ``z0`` and ``z0 sigma^2(0) / (a^2 - a)``."""
    a = law.a
    if not a > 1:
        raise ValueError("law must be supercritical at zero density")
    return float(z0), float(z0 * law.eta_variance() / (a * a - a))


def extinction_probability(law: OffspringLaw, tol: float = 1e-12,
                           max_iter: int = 1_000_000) -> float:
    """Smallest fixed point of the offspring generating function at zero density.

    Iterates ``s <- g(s)`` from ``s = 0``; the iterates increase to the root.
    """
    s = 0.0
    for _ in range(max_iter):
        nxt = float(law.pgf(s, 0.0, INF))
        if abs(nxt - s) < tol:
            return nxt
        s = nxt
    raise RuntimeError("generating-function iteration did not converge")
