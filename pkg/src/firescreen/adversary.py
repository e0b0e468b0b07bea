"""Adversarial wildfire MICP: build, solve, and decode.

The model tracks one fire path per grid element from a shared ignition
point, driven by shared per-period wind variables inside an uncertainty
ball.  Binary outage indicators freeze a path once its element is outaged,
a Balas disjunction selects the spread-rate region at each location, and
the chosen spread-set formulation (ball or inner-product relaxation) links
consecutive path points.  Decoded trajectories are re-validated against the
exact variant predicates rather than trusted from the solver.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

from .conic import ConicModel, rationalize, rewrite_power
from .geometry import PolytopeV, contains_h, convex_coeffs, polytope_bounds
from .spread import (
    RegionSet,
    SpreadParams,
    SpreadVariant,
    ball_spread,
    mc_bound,
    two_minor_max,
)
from .solver import SolveOptions, Solution, solve

MIN_TIME = "min_time"
DEFAULT_MAX_RHO = 4


class SolveLimit(RuntimeError):
    """The solver hit a node or time limit before proving optimality."""


@dataclass(frozen=True)
class Scenario:
    """Elements, horizon, spread physics, regions, ignition, and weights.

    elements maps element id to its geometry (PolytopeV).  ignition is a
    fixed point (length-2 array) or None for a free ignition anywhere in
    the region bounding box.  weights is either the MIN_TIME marker or a
    map (period, frozenset of element ids) -> nonnegative cost; only the
    listed subset-period pairs are weighted.
    """

    elements: dict
    horizon: int
    spread: SpreadParams
    regions: RegionSet
    ignition: object = None
    weights: object = MIN_TIME

    def __post_init__(self):
        if self.horizon < 0:
            raise ValueError("horizon must be nonnegative")
        if self.spread.horizon < self.horizon:
            raise ValueError("spread wind schedule shorter than scenario horizon")
        if not self.elements:
            raise ValueError("scenario needs at least one element")
        for eid, V in self.elements.items():
            if not isinstance(V, PolytopeV):
                raise ValueError(f"element {eid!r} geometry is not a PolytopeV")
            for v in V.vertices:
                if not contains_h(self.regions.bbox, v, 1e-9):
                    raise ValueError(
                        f"element {eid!r} vertex {v} lies outside the region bounding box"
                    )
        for P, _mu in self.regions.regions:
            polytope_bounds(P)  # raises if empty or unbounded
        if self.ignition is not None:
            ig = np.asarray(self.ignition, dtype=float).reshape(2)
            if not contains_h(self.regions.bbox, ig, 1e-9):
                raise ValueError(f"ignition point {ig} outside the region bounding box")
            object.__setattr__(self, "ignition", ig)
        if self.weights != MIN_TIME:
            wts = {}
            for (t, sub), c in dict(self.weights).items():
                sub = frozenset(sub)
                if not sub <= set(self.elements):
                    raise ValueError(f"weighted subset {sorted(sub)} has unknown elements")
                if not 0 <= int(t) <= self.horizon:
                    raise ValueError(f"weighted period {t} outside horizon")
                if c < 0:
                    raise ValueError("weights must be nonnegative")
                wts[(int(t), sub)] = float(c)
            object.__setattr__(self, "weights", wts)

    def element_ids(self) -> list:
        return sorted(self.elements)

    def restricted(self, subset) -> "Scenario":
        """Copy with only the given elements and min-time weights."""
        subset = set(subset)
        if not subset <= set(self.elements):
            raise ValueError("subset contains unknown elements")
        return Scenario(
            {e: g for e, g in self.elements.items() if e in subset},
            self.horizon,
            self.spread,
            self.regions,
            self.ignition,
            MIN_TIME,
        )


@dataclass
class FireTrajectory:
    ignition: np.ndarray
    winds: np.ndarray  # (T, 2), one row per spread step
    paths: dict  # element id -> (T+1, 2)
    outages: dict  # element id -> list of 0/1 per period
    active_regions: dict  # element id -> list of region index per period
    objective: float

    def first_outage(self, eid) -> int | None:
        for t, o in enumerate(self.outages[eid]):
            if o:
                return t
        return None


def _effective_exponent(variant: SpreadVariant, B: float) -> float:
    if variant.kind == "ball":
        return max(1.0, B)
    return min(1.0, B)


def _weight_items(s: Scenario):
    """Deterministic (t, subset, cost) list; min-time maps to indicators."""
    if s.weights == MIN_TIME:
        full = frozenset(s.elements)
        return [(t, full, 1.0) for t in range(s.horizon + 1)]
    items = [(t, sub, c) for (t, sub), c in s.weights.items() if c > 0]
    items.sort(key=lambda it: (it[0], tuple(sorted(it[1]))))
    return items


def build_micp(s: Scenario, variant: SpreadVariant,
               max_rho: int = DEFAULT_MAX_RHO) -> ConicModel:
    """Assemble the full mixed-integer conic model for a scenario.

    Power-cone rows of the inner-product formulation are already lowered to
    SOC form in the returned model.  The rothermel variant is exact only
    with zero wind uncertainty and requires epsilon = 0.
    """
    p = s.spread
    T = s.horizon
    eids = s.element_ids()
    if variant.kind == "rothermel" and p.epsilon != 0.0:
        raise ValueError("rothermel variant is exact only with epsilon = 0")
    B = _effective_exponent(variant, p.B)
    Wbar = p.max_wind()
    Rbar = p.V * (1.0 + p.C * Wbar**B)
    bbox = s.regions.bbox
    xmin, xmax, ymin, ymax = polytope_bounds(bbox)
    reg_bounds = [polytope_bounds(P) for P, _ in s.regions.regions]
    m = ConicModel()

    # outage indicators and weighted subset indicators
    for e in eids:
        for t in range(T + 1):
            m.add_var(f"o_{e}_{t}", binary=True, priority=10)
        for t in range(T):
            m.add_linear({f"o_{e}_{t}": 1.0, f"o_{e}_{t + 1}": -1.0}, "<=", 0.0)
    items = _weight_items(s)
    obj = {}
    by_period = {}
    for idx, (t, sub, cost) in enumerate(items):
        name = m.add_var(f"ob_{idx}_{t}", binary=True, priority=1)
        obj[name] = cost
        by_period.setdefault(t, []).append(name)
        for e in eids:
            if e in sub:
                m.add_linear({name: 1.0, f"o_{e}_{t}": -1.0}, "<=", 0.0)
            else:
                m.add_linear({name: 1.0, f"o_{e}_{t}": 1.0}, "<=", 1.0)
    for t, names in sorted(by_period.items()):
        if len(names) > 1:
            m.add_linear({n: 1.0 for n in names}, "<=", 1.0)
    if s.weights == MIN_TIME:
        # indicator sum is monotone, so the optimum counts T+1 - t*
        for t in range(T):
            m.add_linear({f"ob_{t}_{t}": 1.0, f"ob_{t + 1}_{t + 1}": -1.0}, "<=", 0.0)
    m.set_objective("max", obj)

    # fire locations and Balas region selection
    for e in eids:
        for t in range(T + 1):
            m.add_var(f"x_{e}_{t}_0", lb=xmin, ub=xmax)
            m.add_var(f"x_{e}_{t}_1", lb=ymin, ub=ymax)
            total = [{}, {}]
            for r, (P, _mu) in enumerate(s.regions.regions):
                m.add_var(f"p_{e}_{r}_{t}", binary=True, priority=5)
                rx0, rx1, ry0, ry1 = reg_bounds[r]
                m.add_var(f"xr_{e}_{r}_{t}_0", lb=min(0.0, rx0), ub=max(0.0, rx1))
                m.add_var(f"xr_{e}_{r}_{t}_1", lb=min(0.0, ry0), ub=max(0.0, ry1))
                for i in range(P.nrows):
                    m.add_linear(
                        {
                            f"xr_{e}_{r}_{t}_0": float(P.A[i, 0]),
                            f"xr_{e}_{r}_{t}_1": float(P.A[i, 1]),
                            f"p_{e}_{r}_{t}": -float(P.b[i]),
                        },
                        "<=",
                        0.0,
                    )
                for c in range(2):
                    total[c][f"xr_{e}_{r}_{t}_{c}"] = 1.0
            m.add_linear(
                {f"p_{e}_{r}_{t}": 1.0 for r in range(len(s.regions.regions))},
                "==",
                1.0,
            )
            for c in range(2):
                total[c][f"x_{e}_{t}_{c}"] = -1.0
                m.add_linear(total[c], "==", 0.0)

    # ignition
    if s.ignition is None:
        m.add_var("x0_0", lb=xmin, ub=xmax)
        m.add_var("x0_1", lb=ymin, ub=ymax)
        for e in eids:
            for c in range(2):
                m.add_linear({f"x_{e}_0_{c}": 1.0, f"x0_{c}": -1.0}, "==", 0.0)
    else:
        for e in eids:
            for c in range(2):
                m.add_linear({f"x_{e}_0_{c}": 1.0}, "==", float(s.ignition[c]))

    # wind variables, one per spread step
    for t in range(T):
        wb = p.nominal_wind[t]
        for c in range(2):
            if p.epsilon == 0.0:
                m.add_var(f"w_{t}_{c}", lb=float(wb[c]), ub=float(wb[c]))
            else:
                m.add_var(f"w_{t}_{c}", lb=float(wb[c]) - p.epsilon,
                          ub=float(wb[c]) + p.epsilon)
        if p.epsilon > 0.0:
            m.add_soc(
                [({f"w_{t}_0": 1.0}, -float(wb[0])), ({f"w_{t}_1": 1.0}, -float(wb[1]))],
                {},
                p.epsilon,
            )

    # per-region spread proxies, gating, freezing, and region-change cuts
    mus = [mu for _P, mu in s.regions.regions]
    for e in eids:
        for t in range(T):
            step = [{}, {}]
            for r, mu in enumerate(mus):
                cap = mu * Rbar
                for c in range(2):
                    v = m.add_var(f"d_{e}_{r}_{t}_{c}", lb=-cap, ub=cap)
                    step[c][v] = 1.0
                    # gate on the active region and freeze after outage
                    for sign in (1.0, -1.0):
                        m.add_linear(
                            {v: sign, f"p_{e}_{r}_{t}": -cap}, "<=", 0.0
                        )
                        if variant.kind == "ball":
                            m.add_linear(
                                {v: sign, f"o_{e}_{t}": cap}, "<=", cap
                            )
                m.add_linear(
                    {f"p_{e}_{r}_{t + 1}": 1.0, f"p_{e}_{r}_{t}": -1.0,
                     f"o_{e}_{t}": 1.0},
                    "<=",
                    1.0,
                )
                m.add_linear(
                    {f"p_{e}_{r}_{t}": 1.0, f"p_{e}_{r}_{t + 1}": -1.0,
                     f"o_{e}_{t}": 1.0},
                    "<=",
                    1.0,
                )
            for c in range(2):
                step[c][f"x_{e}_{t + 1}_{c}"] = -1.0
                step[c][f"x_{e}_{t}_{c}"] = 1.0
                m.add_linear(step[c], "==", 0.0)

    # spread-set rows
    if variant.kind == "ball":
        _add_ball_rows(m, s, B, eids)
    else:
        _add_ip_rows(m, s, variant, B, Rbar, Wbar, eids, max_rho)

    # terminal geometry intersection
    for e in eids:
        verts = s.elements[e].vertices
        J = verts.shape[0]
        for j in range(J):
            m.add_var(f"lam_{e}_{j}", lb=0.0, ub=1.0)
        m.add_linear({f"lam_{e}_{j}": 1.0 for j in range(J)}, "==", 1.0)
        for c in range(2):
            coeffs = {f"lam_{e}_{j}": float(verts[j, c]) for j in range(J)}
            coeffs[f"x_{e}_{T}_{c}"] = coeffs.get(f"x_{e}_{T}_{c}", 0.0) - 1.0
            m.add_linear(coeffs, "==", 0.0)

    if variant.kind in ("ip", "rothermel"):
        m = rewrite_power(m)
    return m


def _add_ball_rows(m: ConicModel, s: Scenario, B: float, eids):
    p = s.spread
    for t in range(s.horizon):
        nu = float(np.linalg.norm(p.nominal_wind[t])) + p.epsilon
        tau_bar = p.V + 0.5 * p.C * p.V * nu**B
        sig_bar = 0.0 if nu == 0.0 else 0.5 * p.C * p.V * nu ** (B - 1.0)
        for e in eids:
            rows = []
            for c in range(2):
                coeffs = {f"w_{t}_{c}": sig_bar}
                for r, (_P, mu) in enumerate(s.regions.regions):
                    coeffs[f"d_{e}_{r}_{t}_{c}"] = -1.0 / mu
                rows.append((coeffs, 0.0))
            m.add_soc(rows, {}, tau_bar)


def _add_ip_rows(m: ConicModel, s: Scenario, variant: SpreadVariant, B: float,
                 Rbar: float, Wbar: float, eids, max_rho: int):
    p = s.spread
    T = s.horizon
    eps = p.epsilon
    relax = variant.relaxation if variant.kind == "ip" else None
    exp_b = rationalize(B, max_rho)
    exp_inv = rationalize(1.0 / (1.0 + B), max_rho)
    mu_scale = {
        r: mu ** (exp_inv.N / exp_inv.D) for r, (_P, mu) in enumerate(s.regions.regions)
    }
    qmax = Wbar * Rbar
    zbig = qmax + 2.0 * eps * Rbar + 1.0
    need_2m = relax in ("2m", "rmc2m")
    if need_2m and eps > 0.0:
        for t in range(T):
            for i in range(2):
                om = m.add_var(f"om_{t}_{i}", lb=0.0, ub=eps**2)
                # omega_i >= (w_i - wbar_i)^2, shared across elements
                m.add_soc(
                    [({f"w_{t}_{i}": 2.0}, -2.0 * float(p.nominal_wind[t][i])),
                     ({om: 1.0}, -1.0)],
                    {om: 1.0},
                    1.0,
                )
            m.add_linear({f"om_{t}_0": 1.0, f"om_{t}_1": 1.0}, "<=", eps**2)
    for e in eids:
        for t in range(T):
            wb = p.nominal_wind[t]
            # total step proxy and its norm bound
            for c in range(2):
                dv = m.add_var(f"dt_{e}_{t}_{c}", lb=-Rbar, ub=Rbar)
                coeffs = {dv: -1.0}
                for r in range(len(s.regions.regions)):
                    coeffs[f"d_{e}_{r}_{t}_{c}"] = 1.0
                m.add_linear(coeffs, "==", 0.0)
            m.add_soc([({f"dt_{e}_{t}_0": 1.0}, 0.0),
                       ({f"dt_{e}_{t}_1": 1.0}, 0.0)], {}, Rbar)
            g1 = m.add_var(f"g1_{e}_{t}", lb=0.0, ub=Rbar)
            g2 = m.add_var(f"g2_{e}_{t}", lb=0.0, ub=p.V * Rbar**B)
            g3cap = p.C * p.V * qmax**B if qmax > 0 else 0.0
            g3 = m.add_var(f"g3_{e}_{t}", lb=0.0, ub=g3cap)
            z = m.add_var(f"z_{e}_{t}", lb=-zbig, ub=eps * Rbar)
            q = m.add_var(f"q_{e}_{t}", lb=0.0, ub=max(qmax, 0.0))
            # q <= <wbar, d> + z
            m.add_linear(
                {q: 1.0, f"dt_{e}_{t}_0": -float(wb[0]),
                 f"dt_{e}_{t}_1": -float(wb[1]), z: -1.0},
                "<=",
                0.0,
            )
            # per-region norm rows ||d_ert|| <= mu^(1/(1+B)) * g1
            for r in range(len(s.regions.regions)):
                m.add_soc(
                    [({f"d_{e}_{r}_{t}_0": 1.0}, 0.0),
                     ({f"d_{e}_{r}_{t}_1": 1.0}, 0.0)],
                    {g1: mu_scale[r]},
                    0.0,
                )
            # freeze after outage
            m.add_linear({g1: 1.0, f"o_{e}_{t}": Rbar}, "<=", Rbar)
            # gamma tower: g1 <= (g2+g3)^(1/(1+B)), g2 <= V g1^B, g3 <= CV q^B
            g23 = m.add_var(f"g23_{e}_{t}", lb=0.0, ub=p.V * Rbar**B + g3cap)
            m.add_linear({g23: 1.0, g2: -1.0, g3: -1.0}, "==", 0.0)
            m.add_power(g1, g23, exp_inv)
            u2 = m.add_var(f"u2_{e}_{t}", lb=0.0, ub=Rbar**B)
            m.add_linear({g2: 1.0, u2: -p.V}, "==", 0.0)
            m.add_power(u2, g1, exp_b)
            if p.C > 0.0 and qmax > 0.0:
                u3 = m.add_var(f"u3_{e}_{t}", lb=0.0, ub=qmax**B)
                m.add_linear({g3: 1.0, u3: -p.C * p.V}, "==", 0.0)
                m.add_power(u3, q, exp_b)
            else:
                m.add_linear({g3: 1.0}, "==", 0.0)
            # hypograph relaxation rows on (dt, w - wbar, z)
            if eps == 0.0 or variant.kind == "rothermel":
                m.add_linear({z: 1.0}, "<=", 0.0)
                continue
            if relax in ("mc",):
                zparts = {}
                for i in range(2):
                    zi = m.add_var(f"zmc_{e}_{t}_{i}", lb=-2.0 * eps * Rbar,
                                   ub=eps * Rbar)
                    zparts[zi] = -1.0
                    # z_i <= eps (d_i + Rbar) - Rbar (w_i - wbar_i)
                    m.add_linear(
                        {zi: 1.0, f"dt_{e}_{t}_{i}": -eps, f"w_{t}_{i}": Rbar},
                        "<=",
                        eps * Rbar + Rbar * float(wb[i]),
                    )
                    # z_i <= Rbar (w_i - wbar_i + eps) - eps d_i
                    m.add_linear(
                        {zi: 1.0, f"w_{t}_{i}": -Rbar, f"dt_{e}_{t}_{i}": eps},
                        "<=",
                        eps * Rbar - Rbar * float(wb[i]),
                    )
                zparts[z] = 1.0
                m.add_linear(zparts, "<=", 0.0)
            if relax in ("rmc", "rmc2m"):
                rows = [
                    (
                        {f"w_{t}_0": Rbar, f"w_{t}_1": Rbar,
                         f"dt_{e}_{t}_0": -eps, f"dt_{e}_{t}_1": -eps},
                        -Rbar * float(wb[0] + wb[1]),
                    ),
                    (
                        {f"w_{t}_0": Rbar, f"w_{t}_1": -Rbar,
                         f"dt_{e}_{t}_0": -eps, f"dt_{e}_{t}_1": eps},
                        -Rbar * float(wb[0] - wb[1]),
                    ),
                    ({z: 1.0}, 0.0),
                ]
                m.add_soc(rows, {z: -1.0}, 2.0 * eps * Rbar)
            if need_2m:
                zeta = []
                for i in range(2):
                    dl = m.add_var(f"dl_{e}_{t}_{i}", lb=0.0, ub=Rbar**2)
                    # delta_i >= d_i^2
                    m.add_soc(
                        [({f"dt_{e}_{t}_{i}": 2.0}, 0.0), ({dl: 1.0}, -1.0)],
                        {dl: 1.0},
                        1.0,
                    )
                    zt = m.add_var(f"zt_{e}_{t}_{i}", lb=-eps * Rbar, ub=eps * Rbar)
                    # zeta_i^2 <= delta_i * omega_i
                    m.add_soc(
                        [({zt: 2.0}, 0.0), ({dl: 1.0, f"om_{t}_{i}": -1.0}, 0.0)],
                        {dl: 1.0, f"om_{t}_{i}": 1.0},
                        0.0,
                    )
                    zeta.append(zt)
                m.add_linear({dl_name: 1.0 for dl_name in
                              (f"dl_{e}_{t}_0", f"dl_{e}_{t}_1")}, "<=", Rbar**2)
                m.add_linear({zeta[0]: 1.0, zeta[1]: 1.0, z: -1.0}, ">=", 0.0)


def _ip_step_member(d, w_dev, wbar, mu, variant: SpreadVariant, p: SpreadParams,
                    B: float, Rbar: float, max_rho: int, tol: float) -> bool:
    """Exact membership of one decoded step in the variant's spread set.

    Uses the same rationalized exponents as the model: the step is feasible
    iff some gamma_1 >= ||d|| mu^(-1/(1+B)) satisfies the gamma tower, which
    reduces to a closed-form check on the scalar f(g) = g^a - V g^b.
    """
    eps = p.epsilon
    exp_b = rationalize(B, max_rho)
    exp_inv = rationalize(1.0 / (1.0 + B), max_rho)
    a = exp_inv.D / exp_inv.N  # g1^a <= g2 + g3
    b = exp_b.N / exp_b.D
    d = np.asarray(d, dtype=float).reshape(2)
    w_dev = np.asarray(w_dev, dtype=float).reshape(2)
    if variant.kind == "rothermel" or eps == 0.0:
        zstar = 0.0
    else:
        caps = []
        relax = variant.relaxation
        if relax in ("mc",):
            caps.append(mc_bound(d, w_dev, Rbar, eps))
        if relax in ("rmc", "rmc2m"):
            v1 = Rbar * (w_dev[0] + w_dev[1]) - eps * (d[0] + d[1])
            v2 = Rbar * (w_dev[0] - w_dev[1]) - eps * (d[0] - d[1])
            caps.append((4.0 * eps**2 * Rbar**2 - v1**2 - v2**2) / (4.0 * eps * Rbar))
        if relax in ("2m", "rmc2m"):
            caps.append(two_minor_max(d, w_dev, Rbar, eps))
        zstar = min(caps)
    q = max(0.0, float(d @ np.asarray(wbar, dtype=float)) + zstar)
    g = float(np.linalg.norm(d)) * mu ** (-exp_inv.N / exp_inv.D)
    rhs = p.C * p.V * q**b
    if g <= 0.0:
        return True
    # f(g1) = g1^a - V g1^b is minimized at g_crit; any g below it is free
    g_crit = (b * p.V / a) ** (1.0 / (a - b))
    if g <= g_crit:
        return True
    return g**a - p.V * g**b <= rhs + tol


def decode_solution(s: Scenario, variant: SpreadVariant, sol: Solution,
                    feas_tol: float = 1e-5,
                    max_rho: int = DEFAULT_MAX_RHO) -> FireTrajectory:
    """Extract and re-validate the trajectory embedded in a solution.

    Every spread step is checked against the exact variant predicate and
    every outage against a convex-combination witness; failures raise with
    the offending element and period.
    """
    if sol.status not in ("Optimal", "IterLimit"):
        raise ValueError(f"cannot decode a solution with status {sol.status}")
    p = s.spread
    T = s.horizon
    B = _effective_exponent(variant, p.B)
    Rbar = p.V * (1.0 + p.C * p.max_wind() ** B)
    vals = sol.values
    eids = s.element_ids()
    winds = np.array(
        [[vals.get(f"w_{t}_{c}", float(p.nominal_wind[t][c])) for c in range(2)]
         for t in range(T)]
    ).reshape(T, 2)
    paths, outages, active = {}, {}, {}
    problems = []
    for e in eids:
        path = np.array(
            [[vals[f"x_{e}_{t}_{c}"] for c in range(2)] for t in range(T + 1)]
        )
        paths[e] = path
        outages[e] = [int(round(vals[f"o_{e}_{t}"])) for t in range(T + 1)]
        regs = []
        for t in range(T + 1):
            pr = [vals[f"p_{e}_{r}_{t}"] for r in range(len(s.regions.regions))]
            regs.append(int(np.argmax(pr)))
        active[e] = regs
        for t in range(T):
            if outages[e][t] and not outages[e][t + 1]:
                problems.append(f"element {e}: outage not monotone at period {t}")
        for t in range(T):
            mu = s.regions.regions[regs[t]][1]
            d = path[t + 1] - path[t]
            if outages[e][t]:
                if float(np.max(np.abs(d))) > feas_tol:
                    problems.append(
                        f"element {e} period {t}: fire moved after outage"
                    )
                continue
            if variant.kind == "ball":
                pb = p if B == p.B else replace(p, B=B)
                ball = ball_spread(winds[t], path[t], mu * p.V, pb, t)
                ok = ball.contains(path[t + 1], feas_tol)
            else:
                w_dev = winds[t] - p.nominal_wind[t]
                ok = _ip_step_member(d, w_dev, p.nominal_wind[t], mu, variant,
                                     p, B, Rbar, max_rho, feas_tol)
            if not ok:
                problems.append(
                    f"element {e} period {t}: spread step violates the "
                    f"{variant.kind} set"
                )
        for t in range(T + 1):
            if outages[e][t] and convex_coeffs(s.elements[e], path[t], feas_tol) is None:
                problems.append(
                    f"element {e} period {t}: outaged outside its geometry"
                )
        if convex_coeffs(s.elements[e], path[T], feas_tol) is None:
            problems.append(f"element {e}: terminal point outside its geometry")
    if problems:
        raise ValueError("trajectory validation failed: " + "; ".join(problems))
    ignition = paths[eids[0]][0].copy()
    return FireTrajectory(ignition, winds, paths, outages, active, sol.objective)


def _full_set_indicators(s: Scenario, sol: Solution):
    items = _weight_items(s)
    full = frozenset(s.elements)
    out = {}
    for idx, (t, sub, _c) in enumerate(items):
        if sub == full:
            out[t] = sol.values.get(f"ob_{idx}_{t}", 0.0)
    return out


def min_time_to_outage(s: Scenario, subset, variant: SpreadVariant,
                       opts: SolveOptions | None = None,
                       max_rho: int = DEFAULT_MAX_RHO):
    """Earliest period by which all subset elements can be outaged.

    Returns (t*, trajectory, gap) with t* = None (and no trajectory) when
    no feasible fire outages the whole subset within the horizon.  Raises
    SolveLimit if the solver stopped on a limit without an answer.
    """
    sub = s.restricted(subset)
    model = build_micp(sub, variant, max_rho)
    sol = solve(model, opts or SolveOptions())
    if sol.status == "Infeasible":
        return None, None, 0.0
    if sol.status == "IterLimit":
        raise SolveLimit("solver limit reached before proving min time-to-outage")
    if sol.status != "Optimal":
        raise RuntimeError(f"min-time solve returned {sol.status}")
    indicators = _full_set_indicators(sub, sol)
    actives = [t for t, v in sorted(indicators.items()) if v > 0.5]
    if not actives:
        return None, None, sol.gap
    traj = decode_solution(sub, variant, sol, max_rho=max_rho)
    return actives[0], traj, sol.gap


def max_shed_sequence(s: Scenario, variant: SpreadVariant,
                      opts: SolveOptions | None = None,
                      max_rho: int = DEFAULT_MAX_RHO):
    """Optimal weighted outage sequence (objective $, FireTrajectory)."""
    if s.weights == MIN_TIME:
        raise ValueError("max_shed_sequence needs a populated weight table")
    model = build_micp(s, variant, max_rho)
    sol = solve(model, opts or SolveOptions())
    if sol.status == "IterLimit":
        raise SolveLimit("solver limit reached during sequence optimization")
    if sol.status != "Optimal":
        raise RuntimeError(f"sequence solve returned {sol.status}")
    traj = decode_solution(s, variant, sol, max_rho=max_rho)
    return sol.objective, traj


# serialization -------------------------------------------------------------

def scenario_from_dict(data: dict, regions: RegionSet | None = None) -> Scenario:
    from .regions import load_regions, regionset_from_dict

    sp = data["spread"]
    T = int(data["horizon"])
    params = SpreadParams(
        float(sp["B"]), float(sp["C"]), float(sp["V"]), float(sp["epsilon"]),
        np.array(sp["nominal_wind"], dtype=float), int(sp.get("horizon", T)),
    )
    elements = {
        str(el["id"]): PolytopeV(np.array(el["vertices"], dtype=float))
        for el in data["elements"]
    }
    if regions is None:
        reg = data["regions"]
        regions = load_regions(reg["file"]) if "file" in reg else regionset_from_dict(reg)
    ig = data.get("ignition", {"mode": "free"})
    point = None if ig.get("mode") == "free" else np.array(ig["point"], dtype=float)
    weights = data.get("weights", MIN_TIME)
    if weights != MIN_TIME:
        weights = {
            (int(w["t"]), frozenset(str(x) for x in w["subset"])): float(w["cost"])
            for w in weights
        }
    return Scenario(elements, T, params, regions, point, weights)


def load_scenario(path) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        return scenario_from_dict(json.load(fh))


def trajectory_to_dict(traj: FireTrajectory) -> dict:
    return {
        "ignition": [float(v) for v in traj.ignition],
        "winds": [[float(c) for c in w] for w in traj.winds],
        "objective": traj.objective,
        "elements": {
            e: {
                "path": [[float(c) for c in pt] for pt in traj.paths[e]],
                "outage": traj.outages[e],
                "region": traj.active_regions[e],
            }
            for e in sorted(traj.paths)
        },
    }


def trajectory_csv_rows(traj: FireTrajectory) -> list:
    """Per-period rows: element, t, x, y, outaged, region."""
    rows = [("element", "t", "x", "y", "outaged", "region")]
    for e in sorted(traj.paths):
        for t, pt in enumerate(traj.paths[e]):
            rows.append(
                (e, t, f"{pt[0]:.10g}", f"{pt[1]:.10g}",
                 traj.outages[e][t], traj.active_regions[e][t])
            )
    return rows
