"""The deterministic density map, its iterates and the Schroeder limit ``h``.

``h(x) = lim_n f_n(x / a^n)`` turns the martingale limit of the early,
branching-like phase into the density reached after ``log_a K`` generations.
It is tabulated on a uniform grid and interpolated with a cubic spline,
falling back to a shape-preserving cubic whenever the spline would lose
monotonicity, so evaluation and inversion stay monotone.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicSpline, PchipInterpolator
from scipy.optimize import brentq

from .laws import INF, OffspringLaw, fixed_point_density, make_law

MAX_ITER = 200


@dataclass(frozen=True)
class IteratedMap:
    """``f(x) = x m(x)`` and its capacity-``K`` version ``f^K``."""

    law: OffspringLaw

    @property
    def a(self) -> float:
        return self.law.a

    def f(self, x, K=INF):
        return self.law.density_map(x, K)

    def inverse(self, y, K=INF, x_hi: float | None = None):
        """``f^{-1}(y)`` by bisection; ``f`` is strictly increasing."""
        y = np.asarray(y, dtype=float)
        hi = np.full_like(y, max(1.0, float(np.max(y, initial=0.0))) if x_hi is None else x_hi)
        # f(x) >= x m(x) and m may fall below 1, so grow the bracket as needed
        while np.any(self.f(hi, K) < y):
            hi = np.where(self.f(hi, K) < y, 2 * hi, hi)
        return _bisect(lambda x: self.f(x, K), y, np.zeros_like(y), hi)


def _bisect(g, y, lo, hi, iters: int = 200, xtol: float = 0.0):
    """Vectorized bisection for increasing ``g``: solves ``g(x) = y`` on ``[lo, hi]``."""
    lo, hi = lo.astype(float).copy(), hi.astype(float).copy()
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if np.all((mid == lo) | (mid == hi)) or np.all(hi - lo <= xtol):
            break
        below = g(mid) < y
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return 0.5 * (lo + hi)


def iterate_f(fmap: IteratedMap, x0, n: int, K=INF):
    """``f_n(x0)`` (limit map) or ``f^K_n(x0)``; ``n = 0`` returns ``x0``."""
    if n < 0:
        raise ValueError("n must be >= 0")
    x = np.asarray(x0, dtype=float)
    for _ in range(n):
        x = fmap.f(x, K)
    return x if x.ndim else float(x)


def h_n(fmap: IteratedMap, x, n: int):
    """Approximant ``f_n(x / a^n)``."""
    return iterate_f(fmap, np.asarray(x, dtype=float) / fmap.a ** n, n)


class MonotonicityError(RuntimeError):
    pass


@dataclass
class SchroederH:
    x: np.ndarray
    values: np.ndarray
    a: float
    n_trunc: int
    tol: float
    sup_gap: float
    law: dict = field(default_factory=dict)

    def __post_init__(self):
        self._interp = _monotone_interpolant(self.x, self.values)

    @property
    def x_max(self) -> float:
        return float(self.x[-1])

    def __call__(self, x):
        return h_eval(self, x)

    def to_csv(self, path) -> None:
        path = Path(path)
        with open(path, "w", newline="") as fh:
            fh.write("x,h\r\n")
            for xi, hi in zip(self.x, self.values):
                fh.write(f"{float(xi)!r},{float(hi)!r}\r\n")
        meta = {"law": self.law, "a": self.a, "n_trunc": self.n_trunc,
                "tol": self.tol, "sup_gap": self.sup_gap}
        path.with_suffix(".json").write_text(json.dumps(meta, indent=2, sort_keys=True))

    @classmethod
    def from_csv(cls, path) -> "SchroederH":
        path = Path(path)
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        meta = json.loads(path.with_suffix(".json").read_text())
        return cls(data[:, 0], data[:, 1], meta["a"], meta["n_trunc"], meta["tol"],
                   meta["sup_gap"], meta["law"])


def _monotone_interpolant(x, y, refine: int = 8):
    # the spline is far more accurate for smooth h; keep it only if it is
    # increasing on a grid finer than the knots
    if x.size >= 4:
        spline = CubicSpline(x, y, extrapolate=False)
        fine = np.linspace(x[0], x[-1], (x.size - 1) * refine + 1)
        if np.all(np.diff(spline(fine)) > 0):
            return spline
    return PchipInterpolator(x, y, extrapolate=False)


def default_x_max(law: OffspringLaw) -> float:
    xs = fixed_point_density(law)
    if xs is None:
        raise ValueError("law has no positive fixed point; pass x_max explicitly")
    return law.a * xs


def compute_h(fmap: IteratedMap, x_max: float | None = None, knots: int = 1025,
              tol: float = 1e-8, max_iter: int = MAX_ITER) -> SchroederH:
    """Tabulate ``h`` on ``knots`` equally spaced points of ``[0, x_max]``.

    Iterates ``h_n(x) = f_n(x / a^n)`` until two successive approximants are
    within ``tol`` in sup-norm.  The approximants must decrease in ``n`` at
    every knot; an increase beyond round-off raises :class:`MonotonicityError`.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    x_max = default_x_max(fmap.law) if x_max is None else float(x_max)
    a = fmap.a
    x = np.linspace(0.0, x_max, knots)
    prev = x.copy()  # h_0(x) = x
    for n in range(max_iter):
        cur = iterate_f(fmap, x / a ** (n + 1), n + 1)
        rise = cur - prev
        slack = 1e-12 * np.maximum(1.0, np.abs(prev))
        if np.any(rise > slack):
            j = int(np.argmax(rise - slack))
            raise MonotonicityError(
                f"f_n(x/a^n) increased at x={x[j]:.6g} between n={n} and n={n + 1}; "
                "the map is not of the required form (f increasing, m decreasing)")
        gap = float(np.max(np.abs(rise)))
        if gap < tol:
            return SchroederH(x, cur, a, n, tol, gap, fmap.law.to_dict())
        prev = cur
    raise RuntimeError(f"h did not converge to tol={tol} within {max_iter} iterations "
                       f"(last gap {gap:.3g})")


def h_eval(H: SchroederH, x):
    """Interpolated ``h``; exact at the knots, error beyond ``[0, x_max]``."""
    xa = np.asarray(x, dtype=float)
    if np.any(xa < 0) or np.any(xa > H.x_max * (1 + 1e-12)):
        raise ValueError(f"h evaluated outside its table [0, {H.x_max}]")
    out = H._interp(np.minimum(xa, H.x_max))
    return out if out.ndim else float(out)


def h_inverse(H: SchroederH, y, tol: float | None = None):
    """The ``x`` with ``h(x) = y``, by bisection on the interpolant."""
    ya = np.asarray(y, dtype=float)
    if np.any(ya < 0) or np.any(ya > H.values[-1]):
        raise ValueError(f"value outside the range of h [0, {H.values[-1]}]")
    tol = H.tol if tol is None else tol
    lo = np.zeros_like(ya)
    hi = np.full_like(ya, H.x_max)
    out = _bisect(lambda t: H._interp(t), ya, lo, hi, xtol=tol * 1e-3)
    out = np.where(ya == 0, 0.0, out)
    return out if out.ndim else float(out)


def fixed_points(fmap: IteratedMap, domain=(0.0, 10.0), n: int = 4001):
    """Positive roots of ``f(x) = x`` with a stability label.

    Returns ``[(x_star, slope, label), ...]``; ``slope`` is ``f'(x_star)`` by
    central differences and ``label`` one of attracting / repelling / neutral.
    """
    lo, hi = domain
    grid = np.linspace(lo, hi, n)
    grid = grid[grid > 0]
    g = fmap.f(grid) - grid
    out = []
    for i in np.flatnonzero(np.sign(g[:-1]) * np.sign(g[1:]) < 0):
        xs = brentq(lambda t: float(fmap.f(t)) - t, grid[i], grid[i + 1], xtol=1e-14)
        out.append(xs)
    out += [float(grid[i]) for i in np.flatnonzero(g == 0)]
    result = []
    for xs in sorted(out):
        d = 1e-6 * max(1.0, xs)
        slope = float((fmap.f(xs + d) - fmap.f(xs - d)) / (2 * d))
        if abs(abs(slope) - 1.0) < 1e-6:
            label = "neutral"
        else:
            label = "attracting" if abs(slope) < 1 else "repelling"
        result.append((xs, slope, label))
    return result


def slope_floor_region(law: OffspringLaw, x_max: float) -> float:
    """Upper end ``min(eps, 1/C)`` of the interval where ``h' >= e^{-a}``.

    ``C = 2 sup |m'|`` on ``[0, x_max]`` gives ``f'(x) >= a - C x``, positive
    for ``x < eps = a / C``.
    """
    from .laws import mean_slope_constant

    C = mean_slope_constant(law, x_max)
    if C == 0:
        return x_max
    return min(law.a / C, 1.0 / C, x_max)


def schroeder_residual(H: SchroederH, fmap: IteratedMap) -> np.ndarray:
    """``|h(x) - f(h(x/a))|`` at every knot."""
    return np.abs(H.values - fmap.f(h_eval(H, H.x / H.a)))


def load_h(path) -> tuple[SchroederH, IteratedMap]:
    H = SchroederH.from_csv(path)
    return H, IteratedMap(make_law(H.law))
