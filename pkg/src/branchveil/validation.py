"""Grid-based checks of the regularity conditions on an offspring law.

Every condition gets one of three statuses: verified on the grid, violated
(with a witness point), or not checkable from the law alone.  The checks never
raise on a violation.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .laws import INF, OffspringLaw, fixed_point_density, mean_slope_constant

VERIFIED = "verified-on-grid"
VIOLATED = "violated"
NOT_CHECKABLE = "not-checkable"

_TOL = 1e-12


@dataclass
class Status:
    kind: str
    detail: str = ""
    witness: dict | None = None

    @property
    def ok(self) -> bool:
        return self.kind != VIOLATED

    def to_dict(self):
        return {"status": self.kind, "detail": self.detail, "witness": self.witness}


@dataclass
class AssumptionReport:
    statuses: dict[str, Status]
    constants: dict[str, float]
    x_grid: list[float]
    K_grid: list[float]
    notes: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(s.ok for s in self.statuses.values())

    def violated(self) -> list[str]:
        return [k for k, s in self.statuses.items() if not s.ok]

    def to_dict(self):
        return {
            "ok": self.ok,
            "statuses": {k: s.to_dict() for k, s in self.statuses.items()},
            "constants": self.constants,
            "x_grid": self.x_grid,
            "K_grid": self.K_grid,
            "notes": self.notes,
        }


def default_x_grid(law: OffspringLaw, n: int = 201) -> np.ndarray:
    xs = fixed_point_density(law)
    return np.linspace(0.0, 2.0 * (xs if xs else 1.0), n)


def default_K_grid() -> np.ndarray:
    return 10.0 ** np.arange(1, 7)


def _first(mask, *arrays):
    idx = np.argwhere(mask)[0]
    return [float(a[tuple(idx)]) if np.ndim(a) else float(a) for a in arrays]


def _check_a0(law, x, Ks):
    Kall = list(Ks) + [INF]
    m = np.array([law.mean(x, K) for K in Kall])  # (nK, nx)
    if not np.all(np.isfinite(m)):
        i, j = np.argwhere(~np.isfinite(m))[0]
        return Status(VIOLATED, "improper law (non-finite mean)",
                      {"x": float(x[j]), "K": Kall[i]})
    dx = np.diff(m, axis=1)
    if np.any(dx > _TOL):
        i, j = np.argwhere(dx > _TOL)[0]
        return Status(VIOLATED, "mean increases with density",
                      {"x": float(x[j + 1]), "K": Kall[i]})
    dK = np.diff(m, axis=0)
    if np.any(dK < -_TOL):
        i, j = np.argwhere(dK < -_TOL)[0]
        return Status(VIOLATED, "mean decreases with capacity",
                      {"x": float(x[j]), "K": Kall[i + 1]})
    # first-order stochastic dominance through the quantile functions
    u = (np.arange(199) + 0.5) / 199
    q = np.array([[law.quantile(u, xi, K) for xi in x] for K in Kall])  # (nK, nx, nu)
    bad_x = np.diff(q, axis=1) > 0
    if np.any(bad_x):
        i, j, k = np.argwhere(bad_x)[0]
        return Status(VIOLATED, "quantile increases with density",
                      {"x": float(x[j + 1]), "K": Kall[i], "u": float(u[k])})
    bad_K = np.diff(q, axis=0) < 0
    if np.any(bad_K):
        i, j, k = np.argwhere(bad_K)[0]
        return Status(VIOLATED, "quantile decreases with capacity",
                      {"x": float(x[j]), "K": Kall[i + 1], "u": float(u[k])})
    return Status(VERIFIED, "mean and quantiles ordered in x and K; proper at every knot")


def _check_a1_derivative(law, x):
    a = law.a
    if not a > 1.0:
        return Status(VIOLATED, "not supercritical at zero density", {"x": 0.0, "m": a})
    scale = max(float(x[-1]), 1.0)
    near = x[: max(3, x.size // 10)]
    hs = scale * np.array([1e-3, 1e-4, 1e-5])
    D = np.array([(law.mean(near + h, INF) - law.mean(near, INF)) / h for h in hs])
    if not np.all(np.isfinite(D)):
        return Status(VIOLATED, "non-finite derivative near origin")
    coarse = np.max(np.abs(D[1] - D[0]))
    fine = np.max(np.abs(D[2] - D[1]))
    if fine > 0.2 * coarse + 1e-6:
        j = int(np.argmax(np.abs(D[2] - D[1])))
        return Status(VIOLATED, "difference quotients of m do not settle (kink or jump)",
                      {"x": float(near[j])})
    return Status(VERIFIED, f"m'(0) ~ {D[2][0]:.6g}; difference quotients settle near origin")


def _check_a1_convergence(law, x, Ks):
    m = law.mean(x, INF)
    gaps = np.array([m - law.mean(x, K) for K in Ks])
    if np.any(gaps < -_TOL):
        i, j = np.argwhere(gaps < -_TOL)[0]
        return Status(VIOLATED, "m^K exceeds m", {"x": float(x[j]), "K": float(Ks[i])})
    sup = gaps.max(axis=1)
    if np.any(np.diff(sup) > _TOL):
        i = int(np.argmax(np.diff(sup) > _TOL))
        return Status(VIOLATED, "sup |m - m^K| not decreasing in K", {"K": float(Ks[i + 1])})
    # 0 <= m(x) - m^K(x) <= C x + o(x) forces equality at x = 0
    if x[0] == 0.0 and np.any(gaps[:, 0] > _TOL):
        i = int(np.argmax(gaps[:, 0] > _TOL))
        return Status(VIOLATED, "m(0) - m^K(0) > 0, incompatible with a Cx + o(x) bound",
                      {"x": 0.0, "K": float(Ks[i]), "gap": float(gaps[i, 0])})
    return Status(VERIFIED, "m^K -> m uniformly on grid with zero gap at the origin")


def _check_a2(law, x):
    f = law.density_map(x, INF)
    bad = np.diff(f) <= 0
    if np.any(bad):
        j = int(np.argmax(bad))
        return Status(VIOLATED, "f(x) = x m(x) not strictly increasing",
                      {"x": float(x[j + 1]), "f_prev": float(f[j]), "f": float(f[j + 1])})
    return Status(VERIFIED, "f strictly increasing on grid")


def _check_a4(law, x, Ks):
    v = np.array([law.variance(x, K) for K in list(Ks) + [INF]])
    if not np.all(np.isfinite(v)):
        return Status(VIOLATED, "unbounded variance on grid"), float("inf")
    bound = float(v.max())
    sup = np.abs(v[:-1] - v[-1]).max(axis=1)
    if np.any(np.diff(sup) > _TOL):
        i = int(np.argmax(np.diff(sup) > _TOL))
        return Status(VIOLATED, "variance gap not decreasing in K", {"K": float(Ks[i + 1])}), bound
    return Status(VERIFIED, f"sigma_K^2 <= {bound:.6g} on grid; converges uniformly"), bound


def _rate(Ks, d):
    """Log-log slope of a positive sequence against K; 0 when identically 0."""
    if np.all(d <= _TOL):
        return None
    keep = d > _TOL
    return float(np.polyfit(np.log(Ks[keep]), np.log(d[keep]), 1)[0])


def _check_a5(law, x, Ks):
    a = law.a
    consts = {}
    m = np.array([law.mean(x, K) for K in Ks])
    if np.any(m > a + _TOL):
        i, j = np.argwhere(m > a + _TOL)[0]
        return Status(VIOLATED, "m^K exceeds a", {"x": float(x[j]), "K": float(Ks[i])}), consts
    x1 = float(x[1])
    C_K = (m[:, 0] - m[:, 1]) / x1
    consts["C_local"] = float(C_K.max())
    if np.any(C_K <= _TOL):
        return Status(VIOLATED, "no linear decrease of m^K at the origin (C = 0)",
                      {"x": x1, "K": float(Ks[int(np.argmin(C_K))])}), consts
    d0 = a - m[:, 0]
    f_inf = law.density_map(x, INF)
    dsup = np.array([np.max(np.abs(law.density_map(x, K) - f_inf)) for K in Ks])
    r0, rs = _rate(Ks, d0), _rate(Ks, dsup)
    consts["rate_mean_at_0"] = 0.0 if r0 is None else r0
    consts["rate_sup_f"] = 0.0 if rs is None else rs
    for name, r in (("a - m^K(0)", r0), ("sup |f^K - f|", rs)):
        if r is not None and r > -0.5 + 0.05:
            return Status(VIOLATED, f"{name} decays slower than K^-1/2 (slope {r:.3f})"), consts
    return Status(VERIFIED, "m^K <= a, linear decrease at origin, O(K^-1/2) rates"), consts


def validate_assumptions(law: OffspringLaw, x_grid=None, K_grid=None) -> AssumptionReport:
    """Check the law against the regularity conditions on the given grids."""
    x = default_x_grid(law) if x_grid is None else np.asarray(x_grid, dtype=float)
    Ks = default_K_grid() if K_grid is None else np.asarray(K_grid, dtype=float)
    if x.size < 2 or Ks.size < 1:
        raise ValueError("need at least two densities and one capacity")
    if np.any(np.diff(x) <= 0) or np.any(np.diff(Ks) <= 0):
        raise ValueError("grids must be sorted and strictly increasing")

    statuses = {"A0": _check_a0(law, x, Ks),
                "A1_derivative": _check_a1_derivative(law, x),
                "A1_convergence": _check_a1_convergence(law, x, Ks),
                "A2": _check_a2(law, x),
                "A3": Status(NOT_CHECKABLE, "concerns the initial density X_0, not the law")}
    statuses["A4"], vbound = _check_a4(law, x, Ks)
    statuses["A5"], consts = _check_a5(law, x, Ks)
    consts.update({"a": law.a, "variance_bound": vbound,
                   "C_slope": mean_slope_constant(law, float(x[-1]))})
    return AssumptionReport(statuses, consts, x.tolist(), Ks.tolist())
