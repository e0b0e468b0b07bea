"""Fire spread sets and their convex relaxations.

The Rothermel-style spread set bounds the one-period fire displacement d by
an increasing function of the wind projection onto d.  This module provides
the exact set, the angle-relaxed and ball-shaped outer sets, and the
inner-product hypograph relaxations (McCormick, rotated McCormick, and
second-order minors) as evaluable predicates and closed-form geometry.  The
predicates serve both as ground-truth oracles in tests and as the source of
the constraint shapes emitted by the adversarial model builder.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Ball, PolytopeH, contains_h

# Predicate tolerance, stricter than the 1e-5 solve tolerance.
PREDICATE_TOL = 1e-9


@dataclass(frozen=True)
class SpreadParams:
    """Rothermel calibration constants and the wind forecast.

    B is the dimensionless wind exponent, C the wind coefficient in
    (mi/hr)^-B, V the base rate of spread in mi/hr (periods are hours),
    epsilon the wind uncertainty radius in mi/hr, and nominal_wind the
    forecast schedule with horizon+1 rows (one per period t = 0..T).
    """

    B: float
    C: float
    V: float
    epsilon: float
    nominal_wind: np.ndarray
    horizon: int

    def __post_init__(self):
        if not (self.B > 0 and self.C >= 0 and self.V > 0 and self.epsilon >= 0):
            raise ValueError("SpreadParams requires B > 0, C >= 0, V > 0, epsilon >= 0")
        w = np.atleast_2d(np.asarray(self.nominal_wind, dtype=float))
        if w.shape != (self.horizon + 1, 2):
            raise ValueError(
                f"nominal_wind must have shape ({self.horizon + 1}, 2), got {w.shape}"
            )
        if not np.all(np.isfinite(w)):
            raise ValueError("nominal_wind must be finite")
        object.__setattr__(self, "nominal_wind", w)
        self.nominal_wind.setflags(write=False)

    def max_wind(self) -> float:
        """W-bar: the largest possible wind magnitude over the horizon."""
        return float(np.max(np.linalg.norm(self.nominal_wind, axis=1))) + self.epsilon

    def radius_bound(self) -> float:
        """R-bar: upper bound on one-period displacement at base rate V."""
        return self.V * (1.0 + self.C * self.max_wind() ** self.B)


@dataclass(frozen=True)
class RegionSet:
    """Polyhedral partition of a bounding box with spread multipliers.

    Each region is a (PolytopeH, mu) pair with mu in (0, 1]; the local base
    rate of spread at x is mu_r * V for the region containing x.
    """

    regions: tuple
    bbox: PolytopeH

    def __post_init__(self):
        regs = tuple((P, float(mu)) for P, mu in self.regions)
        if not regs:
            raise ValueError("RegionSet needs at least one region")
        for i, (P, mu) in enumerate(regs):
            if not isinstance(P, PolytopeH):
                raise ValueError(f"region {i} is not a PolytopeH")
            if not (0.0 < mu <= 1.0):
                raise ValueError(f"region {i} multiplier {mu} outside (0, 1]")
        object.__setattr__(self, "regions", regs)

    def __len__(self) -> int:
        return len(self.regions)

    def region_index(self, x, tol: float = PREDICATE_TOL):
        """Index of the first region containing x (facet ties go to the
        lower index), or None if x is outside every region."""
        for i, (P, _mu) in enumerate(self.regions):
            if contains_h(P, x, tol):
                return i
        return None

    def multiplier_at(self, x, tol: float = PREDICATE_TOL) -> float:
        i = self.region_index(x, tol)
        if i is None:
            raise ValueError(f"point {x!r} is outside the region bounding box")
        return self.regions[i][1]


_RELAXATIONS = ("mc", "rmc", "2m", "rmc2m")


@dataclass(frozen=True)
class SpreadVariant:
    """Which spread-set formulation to use.

    kind is one of "rothermel" (exact, only valid with zero wind
    uncertainty in the MICP), "ip" (inner-product relaxation, B <= 1), or
    "ball" (B >= 1).  For "ip", relaxation selects the hypograph relaxation.
    """

    kind: str
    relaxation: str | None = None

    def __post_init__(self):
        if self.kind not in ("rothermel", "ip", "ball"):
            raise ValueError(f"unknown spread variant kind {self.kind!r}")
        if self.kind == "ip":
            if self.relaxation not in _RELAXATIONS:
                raise ValueError(
                    f"ip variant needs relaxation in {_RELAXATIONS}, got {self.relaxation!r}"
                )
        elif self.relaxation is not None:
            raise ValueError(f"{self.kind} variant takes no relaxation")


ROTHERMEL = SpreadVariant("rothermel")
BALL = SpreadVariant("ball")
IP_MC = SpreadVariant("ip", "mc")
IP_RMC = SpreadVariant("ip", "rmc")
IP_2M = SpreadVariant("ip", "2m")
IP_RMC2M = SpreadVariant("ip", "rmc2m")


def rothermel_rate(d, w, V_loc: float, p: SpreadParams) -> float:
    """Spread rate V_loc * (1 + C * proj^B) in the direction d under wind w.

    proj is the wind component along d, clamped at 0 (no upwind
    amplification; 0/0 is taken as 0 so d = 0 returns V_loc).
    """
    d = np.asarray(d, dtype=float).reshape(2)
    w = np.asarray(w, dtype=float).reshape(2)
    nd = float(np.linalg.norm(d))
    if nd == 0.0:
        return float(V_loc)
    proj = max(0.0, float(d @ w) / nd)
    return float(V_loc) * (1.0 + p.C * proj**p.B)


def rothermel_member(x_next, x, w, V_loc: float, p: SpreadParams,
                     tol: float = PREDICATE_TOL) -> bool:
    """Whether x_next is reachable from x in one period under wind w."""
    x_next = np.asarray(x_next, dtype=float).reshape(2)
    x = np.asarray(x, dtype=float).reshape(2)
    d = x_next - x
    return float(np.linalg.norm(d)) <= rothermel_rate(d, w, V_loc, p) + tol


def tau(nu: float, V_loc: float, p: SpreadParams) -> float:
    """Radius of the ball spread set at wind magnitude nu."""
    return float(V_loc) + 0.5 * p.C * float(V_loc) * nu**p.B


def sigma(nu: float, V_loc: float, p: SpreadParams) -> float:
    """Center scaling of the ball spread set at wind magnitude nu."""
    if nu == 0.0:
        # sigma multiplies w, which has magnitude <= nu = 0, so the value is
        # irrelevant; 0 avoids 0^(B-1) blowups for B < 1.
        return 0.0
    return 0.5 * p.C * float(V_loc) * nu ** (p.B - 1.0)


def ball_spread(w, x, V_loc: float, p: SpreadParams, t: int = 0) -> Ball:
    """Ball outer approximation of the spread set at period t.

    The radius and center scaling are evaluated at the worst-case wind
    magnitude ||w_bar_t|| + epsilon, so the ball is valid for every
    realization w in the uncertainty ball.  Intended for B >= 1.
    """
    w = np.asarray(w, dtype=float).reshape(2)
    x = np.asarray(x, dtype=float).reshape(2)
    nu = float(np.linalg.norm(p.nominal_wind[t])) + p.epsilon
    return Ball(sigma(nu, V_loc, p) * w + x, tau(nu, V_loc, p))


def angle_member(x_next, x, w, V_loc: float, p: SpreadParams,
                 tol: float = PREDICATE_TOL) -> bool:
    """Membership in the angle-relaxed spread set (exact ball form).

    The angle relaxation replaces the wind projection with the full wind
    magnitude on the downwind component; its exact characterization is the
    ball of radius tau(||w||) centered at sigma(||w||) * w + x.  Valid for
    B >= 1.
    """
    x_next = np.asarray(x_next, dtype=float).reshape(2)
    x = np.asarray(x, dtype=float).reshape(2)
    w = np.asarray(w, dtype=float).reshape(2)
    nu = float(np.linalg.norm(w))
    c = sigma(nu, V_loc, p) * w + x
    return float(np.linalg.norm(x_next - c)) <= tau(nu, V_loc, p) + tol


def mc_bound(d, w_dev, Rbar: float, eps: float) -> float:
    """Largest z allowed by the McCormick upper envelope at (d, w_dev)."""
    d = np.asarray(d, dtype=float).reshape(2)
    w = np.asarray(w_dev, dtype=float).reshape(2)
    per = np.minimum(eps * (d + Rbar) - Rbar * w, Rbar * (w + eps) - eps * d)
    return float(per.sum())


def rmc_residual(d, w_dev, z: float, Rbar: float, eps: float) -> float:
    """lhs - rhs of the rotated McCormick SOC row (<= 0 means feasible)."""
    d = np.asarray(d, dtype=float).reshape(2)
    w = np.asarray(w_dev, dtype=float).reshape(2)
    vec = np.array([
        Rbar * (w[0] + w[1]) - eps * (d[0] + d[1]),
        Rbar * (w[0] - w[1]) - eps * (d[0] - d[1]),
        z,
    ])
    return float(np.linalg.norm(vec)) - (2.0 * eps * Rbar - z)


def two_minor_max(d, w_dev, Rbar: float, eps: float) -> float:
    """Largest z in the second-order-minor relaxation at (d, w_dev).

    Maximizes sum(zeta) over the auxiliary (delta, omega, zeta) system
    delta_i >= d_i^2, omega_i >= w_i^2, zeta_i^2 <= delta_i * omega_i,
    sum(delta) <= Rbar^2, sum(omega) <= eps^2, solved through the embedded
    conic solver.
    """
    from .conic import ConicModel
    from .solver import SolveOptions, solve

    d = np.asarray(d, dtype=float).reshape(2)
    w = np.asarray(w_dev, dtype=float).reshape(2)
    zcap = Rbar * eps
    m = ConicModel()
    dl, om, ze = [], [], []
    for i in range(2):
        dl.append(m.add_var(f"delta{i}", lb=float(d[i] ** 2), ub=Rbar**2))
        om.append(m.add_var(f"omega{i}", lb=float(w[i] ** 2), ub=eps**2))
        ze.append(m.add_var(f"zeta{i}", lb=-zcap, ub=zcap))
    m.add_linear({dl[0]: 1.0, dl[1]: 1.0}, "<=", Rbar**2)
    m.add_linear({om[0]: 1.0, om[1]: 1.0}, "<=", eps**2)
    for i in range(2):
        # zeta_i^2 <= delta_i * omega_i as ||(2 zeta, delta - omega)|| <= delta + omega
        m.add_soc(
            [({ze[i]: 2.0}, 0.0), ({dl[i]: 1.0, om[i]: -1.0}, 0.0)],
            {dl[i]: 1.0, om[i]: 1.0},
            0.0,
        )
    m.set_objective("max", {ze[0]: 1.0, ze[1]: 1.0})
    # 1e-7 is the reliable floor for the LP-based cut loop
    sol = solve(m, SolveOptions(feas_tol=1e-7, opt_tol=1e-7, max_cut_rounds=5000))
    if sol.status not in ("Optimal", "IterLimit") or not np.isfinite(sol.objective):
        raise RuntimeError(f"two-minor subproblem solve failed: {sol.status}")
    return float(sol.objective)


def ip_relax_member(d, w_dev, z: float, variant, Rbar: float, eps: float,
                    tol: float = PREDICATE_TOL) -> bool:
    """Whether (d, w_dev, z) lies in the named inner-product relaxation.

    d must lie in the radius-Rbar ball and w_dev (the wind deviation from
    nominal) in the radius-eps ball; violations beyond 1e-9 are errors.
    variant may be a SpreadVariant of kind "ip" or a relaxation name.
    """
    if isinstance(variant, SpreadVariant):
        if variant.kind != "ip":
            raise ValueError(f"ip_relax_member needs an ip variant, got {variant.kind}")
        relax = variant.relaxation
    else:
        relax = str(variant)
    if relax not in _RELAXATIONS:
        raise ValueError(f"unknown relaxation {relax!r}")
    d = np.asarray(d, dtype=float).reshape(2)
    w = np.asarray(w_dev, dtype=float).reshape(2)
    if np.linalg.norm(d) > Rbar + tol:
        raise ValueError(f"d outside its radius-{Rbar} ball: {d}")
    if np.linalg.norm(w) > eps + tol:
        raise ValueError(f"w_dev outside its radius-{eps} ball: {w}")
    ok = True
    if relax in ("mc",):
        ok = z <= mc_bound(d, w, Rbar, eps) + tol
    if relax in ("rmc", "rmc2m"):
        ok = ok and rmc_residual(d, w, z, Rbar, eps) <= tol
    if relax in ("2m", "rmc2m"):
        ok = ok and z <= two_minor_max(d, w, Rbar, eps) + tol
    return bool(ok)


def recommend_variant(p: SpreadParams, Wbar: float | None = None) -> SpreadVariant:
    """Preferred spread formulation given the calibration and wind scale.

    Inner-product relaxations are preferred for small wind exponents, and
    near B = 1 only when the flux multiplier C * Wbar^B is of moderate size
    (within [0.5, 2]); otherwise the ball formulation is tighter.  B values
    of 2 or more always map to the ball formulation.
    """
    W = p.max_wind() if Wbar is None else float(Wbar)
    if p.B < 0.5:
        return IP_RMC2M
    if p.B >= 2.0:
        return BALL
    flux = p.C * W**p.B
    if 0.5 <= flux <= 2.0:
        return IP_RMC2M
    return BALL
