"""Trajectories of density-dependent branching populations.

Three generators of paths are provided:

* exact mode draws one uniform per individual per generation and maps it
  through the offspring quantile function;
* fast mode advances a whole generation with a single aggregate draw
  (binomial thinning, Poisson additivity, multinomial counts), which is an
  exact distributional identity and costs O(1) draws per generation;
* the coupled construction runs the process, the comparison Galton-Watson
  process and the frozen-density lower process from the same uniforms.
"""
from __future__ import annotations

import functools
import logging
import math
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import streams
from .laws import INF, OffspringLaw

log = logging.getLogger(__name__)

MAX_COUNT = 2 ** 62
EXACT_LIMIT = 50_000_000  # individuals per generation in exact mode

_workers = 1


def set_workers(n: int) -> None:
    """Number of processes used by :func:`map_replicates` (1 = in-process)."""
    global _workers
    _workers = max(1, int(n))


def map_replicates(fn, R: int, workers: int | None = None) -> list:
    """``[fn(0), ..., fn(R-1)]``, optionally fanned out to a process pool.

    Results are keyed by replicate index, so the outcome does not depend on
    scheduling.
    """
    workers = _workers if workers is None else workers
    if workers <= 1 or R < 2 * workers:
        return [fn(r) for r in range(R)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(R), chunksize=max(1, R // (4 * workers))))


def log_a(K: float, a: float) -> float:
    return math.log(K) / math.log(a)


def floor_log(K: float, a: float, c: float = 1.0) -> int:
    """``floor(c log_a K)``, robust to round-off at exact powers of ``a``."""
    return int(math.floor(c * log_a(K, a) + 1e-9))


@dataclass(frozen=True)
class SimConfig:
    K: float
    z0: int = 1
    c: float = 0.6
    gamma: float = 0.8
    n_max: int | None = None
    seed: int = 0
    mode: str = "fast"

    def __post_init__(self):
        if not self.K >= 1:
            raise ValueError(f"K must be >= 1, got {self.K}")
        if int(self.z0) != self.z0 or self.z0 < 0:
            raise ValueError(f"z0 must be a non-negative integer, got {self.z0}")
        if not self.c > 0.5:
            raise ValueError("c must exceed 1/2")
        if not self.c < self.gamma:
            raise ValueError("gamma must exceed c")
        if not self.gamma < 1:
            raise ValueError("gamma must be below 1")
        if self.n_max is not None and self.n_max < 0:
            raise ValueError("n_max must be >= 0")
        if self.mode not in ("exact", "fast"):
            raise ValueError(f"mode must be 'exact' or 'fast', got {self.mode!r}")

    def n_K(self, a: float) -> int:
        return floor_log(self.K, a, self.c)

    def log_index(self, a: float) -> int:
        return floor_log(self.K, a)

    def nu_K(self, a: float) -> int:
        return self.log_index(a) - self.n_K(a)

    def horizon(self, a: float) -> int:
        return self.log_index(a) if self.n_max is None else self.n_max

    def to_dict(self):
        return {"K": self.K, "z0": self.z0, "c": self.c, "gamma": self.gamma,
                "n_max": self.n_max, "seed": self.seed, "mode": self.mode}


@dataclass
class PopulationPath:
    counts: np.ndarray
    K: float
    draws: int = 0
    mode: str = "fast"

    @property
    def densities(self) -> np.ndarray:
        return self.counts / self.K

    @property
    def extinct_at(self) -> int | None:
        zero = np.flatnonzero(self.counts == 0)
        return int(zero[0]) if zero.size else None


@dataclass
class CoupledPaths:
    Z: np.ndarray
    Z_gw: np.ndarray
    Z_gamma: np.ndarray
    K: float
    gamma: float
    tau: int | None
    nu: int | None

    def sandwich_violations(self) -> int:
        """Number of generations breaking the pointwise ordering."""
        n = np.arange(self.Z.size)
        before_tau = n < (self.tau if self.tau is not None else self.Z.size)
        bad = (self.Z > self.Z_gw) | (self.Z_gamma > self.Z_gw)
        bad |= before_tau & (self.Z_gamma > self.Z)
        return int(bad.sum())


@dataclass
class MartingaleTrace:
    eps: np.ndarray
    cond_var: np.ndarray
    prev_density: np.ndarray = field(repr=False)


def _check_count(z: int, n: int) -> int:
    if z > MAX_COUNT:
        raise OverflowError(f"population {z} at generation {n} exceeds safe count range")
    return z


def _simulate_exact(law, cfg, replicate, horizon):
    key = streams.stream_key(cfg.seed, "exact", replicate)
    z = np.zeros(horizon + 1, dtype=np.int64)
    z[0] = cfg.z0
    draws = 0
    for n in range(1, horizon + 1):
        prev = int(z[n - 1])
        if prev == 0:
            break
        if prev > EXACT_LIMIT:
            raise OverflowError(f"exact mode: {prev} individuals at generation {n - 1} "
                                f"exceeds the cost guard {EXACT_LIMIT}")
        u = streams.generation_uniforms(key, n, prev)
        draws += prev
        z[n] = _check_count(int(law.quantile(u, prev / cfg.K, cfg.K).sum()), n)
    return PopulationPath(z, cfg.K, draws, "exact")


def simulate_fast(law: OffspringLaw, cfg: SimConfig, replicate: int = 0,
                  horizon: int | None = None) -> PopulationPath:
    """Advance each generation with one aggregate draw."""
    horizon = cfg.horizon(law.a) if horizon is None else horizon
    rng = streams.generator(cfg.seed, "fast", replicate)
    z = np.zeros(horizon + 1, dtype=np.int64)
    z[0] = cfg.z0
    draws = 0
    for n in range(1, horizon + 1):
        prev = int(z[n - 1])
        if prev == 0:
            break
        z[n] = _check_count(law.sample_total(prev, prev / cfg.K, cfg.K, rng), n)
        draws += 1
    return PopulationPath(z, cfg.K, draws, "fast")


def simulate_path(law: OffspringLaw, cfg: SimConfig, replicate: int = 0,
                  horizon: int | None = None) -> PopulationPath:
    """One trajectory ``Z_0, ..., Z_horizon`` (default horizon ``floor(log_a K)``)."""
    horizon = cfg.horizon(law.a) if horizon is None else horizon
    if cfg.mode == "exact":
        return _simulate_exact(law, cfg, replicate, horizon)
    return simulate_fast(law, cfg, replicate, horizon)


def simulate_fast_coupled(law: OffspringLaw, cfg: SimConfig, replicate: int = 0,
                          horizon: int | None = None, gw_horizon: int | None = None):
    """Fast-mode path together with a comparison Galton-Watson path.

    Both are advanced with aggregate draws that reproduce, in law, the
    per-individual coupling (so ``Z_n <= Z~_n`` for every ``n``).  The
    comparison process is continued alone up to ``gw_horizon``.  Returns
    ``(path, gw_counts)``.
    """
    horizon = cfg.horizon(law.a) if horizon is None else horizon
    gw_horizon = max(horizon, gw_horizon or 0)
    rng = streams.generator(cfg.seed, "fast-coupled", replicate)
    z = np.zeros(horizon + 1, dtype=np.int64)
    zt = np.zeros(gw_horizon + 1, dtype=np.int64)
    z[0] = zt[0] = cfg.z0
    eta_K, draws = INF, 0
    for n in range(1, gw_horizon + 1):
        prev_t = int(zt[n - 1])
        if prev_t == 0:
            break
        if n <= horizon:
            prev = int(z[n - 1])
            z[n], zt[n] = law.sample_total_coupled(prev, prev_t, prev / cfg.K, cfg.K, rng)
            _check_count(int(zt[n]), n)
            draws += 3
        else:
            zt[n] = _check_count(law.sample_total(prev_t, 0.0, eta_K, rng), n)
            draws += 1
    return PopulationPath(z, cfg.K, draws, "fast"), zt


def simulate_coupled(law: OffspringLaw, cfg: SimConfig, replicate: int = 0,
                     horizon: int | None = None) -> CoupledPaths:
    """Process, comparison process and frozen-density process on shared uniforms.

    Individual ``j`` of generation ``n`` uses the same uniform ``U_{n,j}`` in
    all three constructions: the process at its current density, the
    comparison process with the limit law at zero density, and the lower
    process with the law frozen at density ``K^(gamma-1)``.  The process
    itself coincides with exact-mode :func:`simulate_path` for the same seed
    and replicate.
    """
    horizon = cfg.horizon(law.a) if horizon is None else horizon
    K = cfg.K
    x_gamma = K ** (cfg.gamma - 1.0)
    key = streams.stream_key(cfg.seed, "exact", replicate)
    Z = np.zeros(horizon + 1, dtype=np.int64)
    Zt = np.zeros_like(Z)
    Zg = np.zeros_like(Z)
    Z[0] = Zt[0] = Zg[0] = cfg.z0
    for n in range(1, horizon + 1):
        nt = int(Zt[n - 1])
        if nt == 0:
            break
        if nt > EXACT_LIMIT:
            raise OverflowError(f"coupled run: comparison process reached {nt} individuals")
        u = streams.generation_uniforms(key, n, nt)
        nz, ng = int(Z[n - 1]), int(Zg[n - 1])
        Zt[n] = law.quantile(u, 0.0, INF).sum()
        Z[n] = law.quantile(u[:nz], nz / K, K).sum() if nz else 0
        Zg[n] = law.quantile(u[:ng], x_gamma, K).sum() if ng else 0
    over = np.flatnonzero(Z / K > x_gamma)
    over_gw = np.flatnonzero(Zt > K ** cfg.gamma)
    tau = int(over[0]) if over.size else None
    nu = int(over_gw[0]) if over_gw.size else None
    return CoupledPaths(Z, Zt, Zg, K, cfg.gamma, tau, nu)


def decompose_martingale(path: PopulationPath, law: OffspringLaw,
                         K: float | None = None) -> MartingaleTrace:
    """Martingale differences of the density recursion.

    ``eps_n = sqrt(K) (X_n - f^K(X_{n-1}))`` has conditional mean zero and
    conditional variance ``X_{n-1} sigma_K^2(X_{n-1})``.
    """
    K = path.K if K is None else K
    X = path.counts / K
    prev = X[:-1]
    eps = math.sqrt(K) * (X[1:] - law.density_map(prev, K))
    cond_var = prev * law.variance(prev, K)
    return MartingaleTrace(eps, cond_var, prev)


_SHIFT = re.compile(r"^log\s*([+-])\s*(\d+)$")


def resolve_index(index, a: float, K: float, c: float = 0.6) -> int:
    """Generation index from an index expression.

    Accepted forms: an int, ``"n_K"``, ``"log"`` (``floor(log_a K)``),
    ``"log+3"`` / ``"log-1"``, or a callable ``lam(K)`` whose floor is taken.
    """
    if callable(index):
        return int(math.floor(index(K) + 1e-9))
    if isinstance(index, (int, np.integer)):
        return int(index)
    if index == "n_K":
        return floor_log(K, a, c)
    if index == "log":
        return floor_log(K, a)
    m = _SHIFT.match(str(index))
    if m:
        s = int(m.group(2))
        return floor_log(K, a) + (s if m.group(1) == "+" else -s)
    raise ValueError(f"unknown index expression {index!r}")


def _observe(law, cfg, observable, n, r):
    z = int(simulate_path(law, cfg, r, horizon=n).counts[n])
    if observable == "Z":
        return z
    if observable == "X":
        return z / cfg.K
    return z / law.a ** n


def replicate(law: OffspringLaw, cfg: SimConfig, R: int, observable: str = "X",
              index="log", workers: int | None = None) -> np.ndarray:
    """``R`` i.i.d. samples of ``Z_n``, ``X_n`` or ``Z_n / a^n``.

    Sample ``r`` depends only on ``(cfg.seed, r)``.
    """
    if observable not in ("Z", "X", "Z/a^n"):
        raise ValueError(f"unknown observable {observable!r}")
    n = resolve_index(index, law.a, cfg.K, cfg.c)
    if n < 0:
        raise ValueError(f"index {index!r} resolves to negative generation {n}")
    if cfg.n_max is not None and n > cfg.n_max:
        raise ValueError(f"index {n} beyond n_max={cfg.n_max}")
    fn = functools.partial(_observe, law, cfg, observable, n)
    out = map_replicates(fn, R, workers)
    return np.asarray(out, dtype=np.int64 if observable == "Z" else float)
