"""Offspring-law families for density- and capacity-dependent reproduction.

A law describes the conditional distribution of the number of offspring of a
single individual, given the current population density ``x = Z/K`` and the
carrying capacity ``K``.  ``K = inf`` selects the limiting law; ``x = 0`` with
``K = inf`` is the asymptotic reproduction that drives the comparison
Galton-Watson process.

All randomness enters through caller-supplied uniforms (``quantile``) or a
caller-supplied :class:`numpy.random.Generator` (``sample_total``), so law
objects are immutable and safe to share.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import ClassVar

import numpy as np
from scipy import stats

INF = math.inf

# Smallest positive uniform handed to a quantile function.  u = 0 would
# otherwise select a zero-probability count below the support.
_U_FLOOR = np.finfo(float).tiny


def _capacity_factor(kappa: float, K: float) -> float:
    """Depression factor ``1 - kappa/sqrt(K)`` applied to the mean parameter."""
    if kappa == 0.0 or math.isinf(K):
        return 1.0
    s = 1.0 - kappa / math.sqrt(K)
    if s <= 0.0:
        raise ValueError(f"kappa={kappa} too large for K={K}: need kappa < sqrt(K)")
    return s


class OffspringLaw:
    """Base class; concrete families implement the hooks below."""

    family: ClassVar[str] = ""
    support_max: ClassVar[float] = INF

    kappa: float = 0.0

    # -- hooks -----------------------------------------------------------
    def mean(self, x, K=INF):
        raise NotImplementedError

    def variance(self, x, K=INF):
        raise NotImplementedError

    def quantile(self, u, x, K=INF):
        raise NotImplementedError

    def sample_total(self, z: int, x: float, K: float, rng: np.random.Generator) -> int:
        """Sum of ``z`` i.i.d. offspring counts drawn at density ``x``."""
        raise NotImplementedError

    def sample_total_coupled(self, z: int, zt: int, x: float, K: float,
                             rng: np.random.Generator) -> tuple[int, int]:
        """Advance the process (``z`` individuals at density ``x``) jointly with
        the comparison Galton-Watson process (``zt >= z`` individuals, limit law
        at zero density), keeping ``new_z <= new_zt``."""
        raise NotImplementedError

    def pgf(self, s, x=0.0, K=INF):
        raise NotImplementedError

    def params(self) -> dict:
        raise NotImplementedError

    # -- shared ----------------------------------------------------------
    @property
    def a(self) -> float:
        """Malthusian parameter ``m(0)``: mean offspring at zero density."""
        return float(self.mean(0.0, INF))

    def eta_variance(self) -> float:
        """Offspring variance of the asymptotic reproduction law."""
        return float(self.variance(0.0, INF))

    def density_map(self, x, K=INF):
        """``f^K(x) = x m^K(x)``; the conditional mean of the next density."""
        x = np.asarray(x, dtype=float)
        return x * self.mean(x, K)

    def to_dict(self) -> dict:
        d = {"family": self.family}
        d.update(self.params())
        return d


@dataclass(frozen=True)
class BinarySplit(OffspringLaw):
    """Each individual leaves one or two offspring (PCR-style replication).

    ``P(xi = 2 | x) = p0 / (1 + beta x)``.  With ``p0 = 1`` the initial
    replication is deterministic doubling.
    """

    p0: float
    beta: float = 0.0
    kappa: float = 0.0

    family: ClassVar[str] = "BinarySplit"
    support_max: ClassVar[float] = 2

    def __post_init__(self):
        if not 0.0 < self.p0 <= 1.0:
            raise ValueError(f"p0 must lie in (0, 1], got {self.p0}")
        if self.beta < 0.0:
            raise ValueError(f"beta must be >= 0, got {self.beta}")
        if self.kappa < 0.0:
            raise ValueError(f"kappa must be >= 0, got {self.kappa}")

    def split_probability(self, x, K=INF):
        x = np.asarray(x, dtype=float)
        return self.p0 * _capacity_factor(self.kappa, K) / (1.0 + self.beta * x)

    def mean(self, x, K=INF):
        return 1.0 + self.split_probability(x, K)

    def variance(self, x, K=INF):
        p = self.split_probability(x, K)
        return p * (1.0 - p)

    def pmf(self, x, K=INF) -> np.ndarray:
        p = float(self.split_probability(x, K))
        return np.array([0.0, 1.0 - p, p])

    def quantile(self, u, x, K=INF):
        p = self.split_probability(x, K)
        u = np.clip(np.asarray(u, dtype=float), _U_FLOOR, 1.0)
        return np.where(u > 1.0 - p, 2, 1).astype(np.int64)

    def _p(self, x: float, K: float) -> float:
        # scalar path; the aggregate samplers run once per generation
        return self.p0 * _capacity_factor(self.kappa, K) / (1.0 + self.beta * x)

    def sample_total(self, z, x, K, rng):
        if z == 0:
            return 0
        return z + int(rng.binomial(z, self._p(x, K)))

    def sample_total_coupled(self, z, zt, x, K, rng):
        # Individual j splits under the limit law iff U_j > 1 - p0, and under
        # the density law iff U_j > 1 - p(x) (a subset): binomial thinning.
        p_eta = self.p0
        p = self._p(x, K)
        shared = int(rng.binomial(z, p_eta)) if z else 0
        rest = int(rng.binomial(zt - z, p_eta)) if zt > z else 0
        kept = int(rng.binomial(shared, min(1.0, p / p_eta))) if shared else 0
        return z + kept, zt + shared + rest

    def pgf(self, s, x=0.0, K=INF):
        p = self.split_probability(x, K)
        s = np.asarray(s, dtype=float)
        return (1.0 - p) * s + p * s * s

    def params(self):
        return {"p0": self.p0, "beta": self.beta, "kappa": self.kappa}


@dataclass(frozen=True)
class BevertonHoltPoisson(OffspringLaw):
    """Poisson offspring with Beverton-Holt mean ``a / (1 + b x)``."""

    a_param: float
    b: float
    kappa: float = 0.0

    family: ClassVar[str] = "BevertonHoltPoisson"

    def __post_init__(self):
        if not self.a_param > 1.0:
            raise ValueError(f"a must exceed 1 (supercritical), got {self.a_param}")
        if not self.b > 0.0:
            raise ValueError(f"b must be > 0, got {self.b}")
        if self.kappa < 0.0:
            raise ValueError(f"kappa must be >= 0, got {self.kappa}")

    def mean(self, x, K=INF):
        x = np.asarray(x, dtype=float)
        return self.a_param * _capacity_factor(self.kappa, K) / (1.0 + self.b * x)

    variance = mean

    def quantile(self, u, x, K=INF):
        mu = float(self.mean(x, K))
        u = np.clip(np.asarray(u, dtype=float), _U_FLOOR, 1.0)
        kmax = int(stats.poisson.ppf(1.0 - 1e-16, mu)) + 1
        cdf = stats.poisson.cdf(np.arange(kmax + 1), mu)
        k = np.searchsorted(cdf, u, side="left")
        tail = k > kmax
        if np.any(tail):
            k = k.astype(float)
            k[tail] = stats.poisson.ppf(u[tail], mu)
        return np.asarray(k, dtype=np.int64)

    def _mu(self, x: float, K: float) -> float:
        return self.a_param * _capacity_factor(self.kappa, K) / (1.0 + self.b * x)

    def sample_total(self, z, x, K, rng):
        if z == 0:
            return 0
        return int(rng.poisson(z * self._mu(x, K)))

    def sample_total_coupled(self, z, zt, x, K, rng):
        # Superposition: Poisson(z a) = Poisson(z mu) + Poisson(z (a - mu)).
        mu = self._mu(x, K)
        new_z = int(rng.poisson(z * mu)) if z else 0
        extra_rate = z * (self.a_param - mu) + (zt - z) * self.a_param
        extra = int(rng.poisson(extra_rate)) if extra_rate > 0 else 0
        return new_z, new_z + extra

    def pgf(self, s, x=0.0, K=INF):
        mu = self.mean(x, K)
        return np.exp(mu * (np.asarray(s, dtype=float) - 1.0))

    def params(self):
        return {"a": self.a_param, "b": self.b, "kappa": self.kappa}


@dataclass(frozen=True, eq=False)
class UserTabulated(OffspringLaw):
    """Finite pmf tabulated at density knots; no capacity dependence.

    At density ``x`` the law of the nearest knot at or above ``x`` is used
    (the last knot beyond the table), which keeps stochastic ordering in ``x``
    whenever the knot laws are ordered.
    """

    knots: np.ndarray
    probs: np.ndarray  # shape (n_knots, k_max + 1)
    _cdf: np.ndarray = field(init=False, repr=False)

    family: ClassVar[str] = "UserTabulated"
    kappa: ClassVar[float] = 0.0

    def __post_init__(self):
        knots = np.asarray(self.knots, dtype=float)
        probs = np.atleast_2d(np.asarray(self.probs, dtype=float))
        if knots.ndim != 1 or probs.shape[0] != knots.size:
            raise ValueError("need one pmf row per knot")
        if np.any(np.diff(knots) <= 0) or knots[0] < 0:
            raise ValueError("knots must be non-negative and strictly increasing")
        if np.any(probs < 0):
            raise ValueError("negative probability in table")
        bad = np.abs(probs.sum(axis=1) - 1.0) > 1e-12
        if np.any(bad):
            raise ValueError(f"pmf at knot x={knots[bad][0]} does not sum to 1")
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "_cdf", np.cumsum(probs, axis=1))

    @property
    def support_max(self):  # type: ignore[override]
        return self.probs.shape[1] - 1

    def _row(self, x):
        x = np.asarray(x, dtype=float)
        idx = np.searchsorted(self.knots, x, side="left")
        return np.minimum(idx, self.knots.size - 1)

    def pmf(self, x, K=INF) -> np.ndarray:
        return self.probs[self._row(x)]

    def mean(self, x, K=INF):
        ks = np.arange(self.probs.shape[1])
        return self.probs[self._row(x)] @ ks

    def variance(self, x, K=INF):
        ks = np.arange(self.probs.shape[1])
        p = self.probs[self._row(x)]
        m = p @ ks
        return p @ (ks * ks) - m * m

    def quantile(self, u, x, K=INF):
        cdf = self._cdf[int(self._row(float(x)))]
        u = np.clip(np.asarray(u, dtype=float), _U_FLOOR, 1.0)
        k = np.searchsorted(cdf, u, side="left")
        return np.minimum(k, cdf.size - 1).astype(np.int64)

    def sample_total(self, z, x, K, rng):
        if z == 0:
            return 0
        counts = rng.multinomial(z, self.probs[int(self._row(float(x)))])
        return int(counts @ np.arange(counts.size))

    def sample_total_coupled(self, z, zt, x, K, rng):
        raise NotImplementedError("aggregate coupling is not available for tabulated laws")

    def pgf(self, s, x=0.0, K=INF):
        p = self.probs[int(self._row(float(x)))]
        return np.polynomial.polynomial.polyval(np.asarray(s, dtype=float), p)

    def params(self):
        return {"knots": self.knots.tolist(), "probs": self.probs.tolist()}

    @classmethod
    def from_csv(cls, path) -> "UserTabulated":
        """Load rows ``(x_knot, k, probability)`` with a header line."""
        table: dict[float, dict[int, float]] = {}
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                x = float(row["x_knot"])
                table.setdefault(x, {})[int(row["k"])] = float(row["probability"])
        knots = sorted(table)
        kmax = max(max(d) for d in table.values())
        probs = np.zeros((len(knots), kmax + 1))
        for i, x in enumerate(knots):
            for k, p in table[x].items():
                probs[i, k] = p
        return cls(np.array(knots), probs)


def make_law(desc: dict) -> OffspringLaw:
    """Build a law from a ``{"family": ..., **params}`` mapping."""
    desc = dict(desc)
    family = desc.pop("family")
    if family == "BinarySplit":
        return BinarySplit(**desc)
    if family == "BevertonHoltPoisson":
        return BevertonHoltPoisson(a_param=desc.pop("a"), **desc)
    if family == "UserTabulated":
        if "path" in desc:
            return UserTabulated.from_csv(desc["path"])
        return UserTabulated(np.asarray(desc["knots"]), np.asarray(desc["probs"]))
    raise ValueError(f"unknown law family {family!r}")


# -- module-level operations ------------------------------------------------

def offspring_mean(law: OffspringLaw, x, K=INF):
    """``m^K(x)``, or the limiting mean ``m(x)`` for ``K = inf``."""
    return law.mean(x, K)


def offspring_variance(law: OffspringLaw, x, K=INF):
    """``sigma_K^2(x)``, or ``sigma^2(x)`` for ``K = inf``."""
    return law.variance(x, K)


def sample_offspring(law: OffspringLaw, x, K, u):
    """Generalized inverse CDF of the offspring law at ``u``.

    Returns the smallest count ``k`` with ``P(xi <= k | x, K) >= u``.
    """
    out = law.quantile(u, x, K)
    return int(out) if np.ndim(u) == 0 else out


def fixed_point_density(law: OffspringLaw, x_hi: float = 1e6) -> float | None:
    """Positive root of ``m(x) = 1``, or ``None`` when ``m > 1`` throughout."""
    from scipy.optimize import brentq

    g = lambda x: float(law.mean(x, INF)) - 1.0
    if g(x_hi) > 0:
        return None
    return brentq(g, 0.0, x_hi, xtol=1e-14, rtol=1e-15)


def mean_slope_constant(law: OffspringLaw, x_max: float, n: int = 2001) -> float:
    """``C = 2 sup_{[0, x_max]} |m'|``, so that ``f'(x) >= a - C x`` on that range.

    The derivative is taken by central differences on a uniform grid.
    """
    x = np.linspace(0.0, x_max, n)
    dx = x[1] - x[0]
    lo = np.maximum(x - dx / 2, 0.0)
    hi = x + dx / 2
    dm = (law.mean(hi, INF) - law.mean(lo, INF)) / (hi - lo)
    return 2.0 * float(np.max(np.abs(dm)))
