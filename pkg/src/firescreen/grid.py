"""Security-constrained DC optimal power flow with contingency recourse.

Base multi-period operation covers generation, storage, load shed, and DC
line flows.  A contingency outages a set of lines in one period; recourse
may shed additional load and reduce injections, never increase them, which
makes every contingency subproblem feasible (relatively complete recourse).
The SCOPF couples the base dispatch with one recourse block per contingency
in a single linear program.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np

from .conic import ConicModel
from .geometry import PolytopeH, segment_intersects_h
from .solver import SolveOptions, solve_lp

DEFAULT_SHED_COST = 10_000.0


def _per_period(value, T: int, what: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        arr = np.full(T + 1, float(arr))
    if arr.shape != (T + 1,):
        raise ValueError(f"{what} must be a scalar or a length-{T + 1} schedule")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{what} must be finite")
    return arr


@dataclass(frozen=True)
class Bus:
    id: int
    x: float
    y: float


@dataclass(frozen=True)
class Line:
    id: str
    from_bus: int
    to_bus: int
    reactance: float
    limit: float

    def __post_init__(self):
        if self.reactance <= 0:
            raise ValueError(f"line {self.id}: reactance must be positive")
        if self.limit < 0:
            raise ValueError(f"line {self.id}: flow limit must be nonnegative")


@dataclass(frozen=True)
class Generator:
    bus: int
    gtype: str
    cap: object  # scalar MW or per-period schedule
    cost: float  # $/MWh
    energy_cap: float | None = None  # MWh over the horizon


@dataclass(frozen=True)
class Storage:
    bus: int
    energy_cap: float
    power_cap: float
    eta_plus: float = 1.0
    eta_minus: float = 1.0
    cost: float = 0.0  # discharge $/MWh

    def __post_init__(self):
        if not (0 < self.eta_plus <= 1 and 0 < self.eta_minus <= 1):
            raise ValueError("storage efficiencies must lie in (0, 1]")
        if self.energy_cap < 0 or self.power_cap < 0:
            raise ValueError("storage caps must be nonnegative")


@dataclass(frozen=True)
class LoadPoint:
    bus: int
    demand: object  # scalar MW or per-period schedule


@dataclass(frozen=True)
class Grid:
    buses: tuple
    lines: tuple
    generators: tuple
    storage: tuple
    loads: tuple
    horizon: int
    shed_cost: float = DEFAULT_SHED_COST

    def __post_init__(self):
        ids = [b.id for b in self.buses]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate bus ids")
        known = set(ids)
        for ln in self.lines:
            if ln.from_bus not in known or ln.to_bus not in known:
                raise ValueError(f"line {ln.id} references an undeclared bus")
        lids = [ln.id for ln in self.lines]
        if len(set(lids)) != len(lids):
            raise ValueError("duplicate line ids")
        for dev in list(self.generators) + list(self.storage) + list(self.loads):
            if dev.bus not in known:
                raise ValueError(f"device at bus {dev.bus} references an undeclared bus")
        if self.horizon < 0:
            raise ValueError("horizon must be nonnegative")
        if self.shed_cost < 0:
            raise ValueError("shed cost must be nonnegative")

    @property
    def periods(self) -> range:
        return range(self.horizon + 1)

    def demand(self, bus: int, t: int) -> float:
        total = 0.0
        for ld in self.loads:
            if ld.bus == bus:
                total += _per_period(ld.demand, self.horizon, "demand")[t]
        return total


@dataclass
class BaseDispatch:
    """Base-case dispatch pulled out of a solved model by variable name."""

    pg: dict  # (bus, gtype, t) -> MW
    soc: dict  # (storage index, t) -> MWh
    charge: dict  # (storage index, t) -> MW
    discharge: dict  # (storage index, t) -> MW
    shed: dict  # (bus, t) -> MW
    flow: dict  # (line id, t) -> MW
    theta: dict  # (bus, t) -> rad


# variable-name helpers shared by the base and SCOPF builders
def _vg(i, g, t):
    return f"pg_{i}_{g}_{t}"


def _vsoc(s, t):
    return f"pb_{s}_{t}"


def _vch(s, t):
    return f"pcp_{s}_{t}"


def _vdis(s, t):
    return f"pcm_{s}_{t}"


def _vshed(i, t):
    return f"ps_{i}_{t}"


def _vflow(j, t):
    return f"f_{j}_{t}"


def _vth(i, t):
    return f"th_{i}_{t}"


def _add_base(m: ConicModel, g: Grid) -> dict:
    """Add base operational variables/constraints; return objective coeffs."""
    T = g.horizon
    obj = {}
    for gi, gen in enumerate(g.generators):
        cap = _per_period(gen.cap, T, f"generator {gi} cap")
        for t in g.periods:
            v = m.add_var(_vg(gen.bus, gen.gtype, t), lb=0.0, ub=float(cap[t]))
            obj[v] = obj.get(v, 0.0) + gen.cost
        if gen.energy_cap is not None:
            m.add_linear(
                {_vg(gen.bus, gen.gtype, t): 1.0 for t in g.periods},
                "<=",
                float(gen.energy_cap),
            )
    for si, st in enumerate(g.storage):
        for t in g.periods:
            m.add_var(_vsoc(si, t), lb=0.0, ub=st.energy_cap)
            m.add_var(_vch(si, t), lb=0.0, ub=st.power_cap)
            v = m.add_var(_vdis(si, t), lb=0.0, ub=st.power_cap)
            obj[v] = obj.get(v, 0.0) + st.cost
        for t in g.periods:
            prev = _vsoc(si, T) if t == 0 else _vsoc(si, t - 1)
            m.add_linear(
                {_vsoc(si, t): 1.0, prev: -1.0, _vch(si, t): -1.0, _vdis(si, t): 1.0},
                "==",
                0.0,
            )
    for bus in g.buses:
        for t in g.periods:
            v = m.add_var(_vshed(bus.id, t), lb=0.0, ub=g.demand(bus.id, t))
            obj[v] = obj.get(v, 0.0) + g.shed_cost
    ref = min(b.id for b in g.buses) if g.buses else None
    for bus in g.buses:
        for t in g.periods:
            if bus.id == ref:
                m.add_var(_vth(bus.id, t), lb=0.0, ub=0.0)
            else:
                m.add_var(_vth(bus.id, t))
    for ln in g.lines:
        for t in g.periods:
            m.add_var(_vflow(ln.id, t), lb=-ln.limit, ub=ln.limit)
            m.add_linear(
                {
                    _vflow(ln.id, t): 1.0,
                    _vth(ln.to_bus, t): -1.0 / ln.reactance,
                    _vth(ln.from_bus, t): 1.0 / ln.reactance,
                },
                "==",
                0.0,
            )
    for bus in g.buses:
        for t in g.periods:
            coeffs = {_vshed(bus.id, t): 1.0}
            for gen in g.generators:
                if gen.bus == bus.id:
                    v = _vg(gen.bus, gen.gtype, t)
                    coeffs[v] = coeffs.get(v, 0.0) + 1.0
            for si, st in enumerate(g.storage):
                if st.bus == bus.id:
                    coeffs[_vdis(si, t)] = coeffs.get(_vdis(si, t), 0.0) + st.eta_minus
                    coeffs[_vch(si, t)] = coeffs.get(_vch(si, t), 0.0) - 1.0 / st.eta_plus
            for ln in g.lines:
                if ln.to_bus == bus.id:
                    coeffs[_vflow(ln.id, t)] = coeffs.get(_vflow(ln.id, t), 0.0) + 1.0
                if ln.from_bus == bus.id:
                    coeffs[_vflow(ln.id, t)] = coeffs.get(_vflow(ln.id, t), 0.0) - 1.0
            m.add_linear(coeffs, "==", g.demand(bus.id, t))
    return obj


def build_base_opf(g: Grid) -> ConicModel:
    """Multi-period base DC-OPF as a ConicModel (pure LP)."""
    m = ConicModel()
    obj = _add_base(m, g)
    m.set_objective("min", obj)
    return m


def extract_dispatch(g: Grid, values: dict) -> BaseDispatch:
    d = BaseDispatch({}, {}, {}, {}, {}, {}, {})
    for gen in g.generators:
        for t in g.periods:
            d.pg[(gen.bus, gen.gtype, t)] = values[_vg(gen.bus, gen.gtype, t)]
    for si in range(len(g.storage)):
        for t in g.periods:
            d.soc[(si, t)] = values[_vsoc(si, t)]
            d.charge[(si, t)] = values[_vch(si, t)]
            d.discharge[(si, t)] = values[_vdis(si, t)]
    for bus in g.buses:
        for t in g.periods:
            d.shed[(bus.id, t)] = values[_vshed(bus.id, t)]
            d.theta[(bus.id, t)] = values[_vth(bus.id, t)]
    for ln in g.lines:
        for t in g.periods:
            d.flow[(ln.id, t)] = values[_vflow(ln.id, t)]
    return d


def base_cost(g: Grid, d: BaseDispatch) -> float:
    total = 0.0
    for (bus, gtype, t), v in d.pg.items():
        cost = next(gen.cost for gen in g.generators
                    if gen.bus == bus and gen.gtype == gtype)
        total += cost * v
    for (si, t), v in d.discharge.items():
        total += g.storage[si].cost * v
    for v in d.shed.values():
        total += g.shed_cost * v
    return total


def balance_residuals(g: Grid, d: BaseDispatch) -> float:
    """Largest nodal balance violation of a dispatch, in MW."""
    worst = 0.0
    for bus in g.buses:
        for t in g.periods:
            lhs = d.shed[(bus.id, t)]
            for gen in g.generators:
                if gen.bus == bus.id:
                    lhs += d.pg[(gen.bus, gen.gtype, t)]
            for si, st in enumerate(g.storage):
                if st.bus == bus.id:
                    lhs += st.eta_minus * d.discharge[(si, t)]
                    lhs -= d.charge[(si, t)] / st.eta_plus
            for ln in g.lines:
                if ln.to_bus == bus.id:
                    lhs += d.flow[(ln.id, t)]
                if ln.from_bus == bus.id:
                    lhs -= d.flow[(ln.id, t)]
            worst = max(worst, abs(lhs - g.demand(bus.id, t)))
    return worst


def _ctg_bounds(g: Grid, base: BaseDispatch, bus: int, t: int):
    """(shed lb, shed ub, injection ub) for the recourse block at a bus."""
    shed_lb = base.shed[(bus, t)]
    shed_ub = g.demand(bus, t)
    inj_ub = 0.0
    for gen in g.generators:
        if gen.bus == bus:
            inj_ub += base.pg[(gen.bus, gen.gtype, t)]
    for si, st in enumerate(g.storage):
        if st.bus == bus:
            inj_ub += st.eta_minus * base.discharge[(si, t)]
            shed_ub += base.charge[(si, t)] / st.eta_plus
    return shed_lb, shed_ub, inj_ub


def contingency_cost(g: Grid, base: BaseDispatch, outaged, t: int,
                     opts: SolveOptions | None = None) -> float:
    """Minimum extra shed cost when the given lines fail in period t.

    The recourse decision may only increase shed (up to demand plus base
    storage charging) and decrease injections; outaged lines carry no flow.
    """
    outaged = frozenset(outaged)
    known = {ln.id for ln in g.lines}
    if not outaged <= known:
        raise ValueError(f"unknown line ids in contingency: {sorted(outaged - known)}")
    m = ConicModel()
    obj = {}
    shed_base_total = 0.0
    ref = min(b.id for b in g.buses)
    for bus in g.buses:
        lb, ub, inj = _ctg_bounds(g, base, bus.id, t)
        ub = max(ub, lb)  # guard tiny negative slack from solver noise
        vs = m.add_var(f"ks_{bus.id}", lb=lb, ub=ub)
        m.add_var(f"kg_{bus.id}", lb=0.0, ub=inj)
        obj[vs] = g.shed_cost
        shed_base_total += lb
        if bus.id == ref:
            m.add_var(f"kth_{bus.id}", lb=0.0, ub=0.0)
        else:
            m.add_var(f"kth_{bus.id}")
    for ln in g.lines:
        if ln.id in outaged:
            m.add_var(f"kf_{ln.id}", lb=0.0, ub=0.0)
        else:
            m.add_var(f"kf_{ln.id}", lb=-ln.limit, ub=ln.limit)
            m.add_linear(
                {
                    f"kf_{ln.id}": 1.0,
                    f"kth_{ln.to_bus}": -1.0 / ln.reactance,
                    f"kth_{ln.from_bus}": 1.0 / ln.reactance,
                },
                "==",
                0.0,
            )
    for bus in g.buses:
        _lb, ub, _inj = _ctg_bounds(g, base, bus.id, t)
        coeffs = {f"ks_{bus.id}": 1.0, f"kg_{bus.id}": 1.0}
        for ln in g.lines:
            if ln.to_bus == bus.id:
                coeffs[f"kf_{ln.id}"] = coeffs.get(f"kf_{ln.id}", 0.0) + 1.0
            if ln.from_bus == bus.id:
                coeffs[f"kf_{ln.id}"] = coeffs.get(f"kf_{ln.id}", 0.0) - 1.0
        # demand + base charging: the shed upper bound equals exactly this
        m.add_linear(coeffs, "==", ub)
    m.set_objective("min", obj)
    sol = solve_lp(m, opts or SolveOptions())
    if sol.status != "Optimal":
        raise RuntimeError(f"contingency recourse LP returned {sol.status}")
    return max(0.0, sol.objective - g.shed_cost * shed_base_total)


@dataclass
class ScopfResult:
    objective: float  # (1/T) base + averaged contingency cost, $/hr
    base_cost: float  # O^b over the whole horizon, $
    contingency_costs: list  # O^ctg per contingency, $, aligned with K
    dispatch: BaseDispatch
    values: dict


def solve_scopf(g: Grid, K, opts: SolveOptions | None = None) -> ScopfResult:
    """Single monolithic LP over base and all recourse blocks.

    K is a list of (line id set, period).  The objective is
    (1/T) O^b + (1/(T |K|)) sum of recourse shed costs; with K empty this is
    the plain base OPF.  T is max(horizon, 1) so a single-period grid is
    still well defined.
    """
    K = [(frozenset(sub), int(t)) for sub, t in K]
    T = max(g.horizon, 1)
    m = ConicModel()
    obj = _add_base(m, g)
    obj = {v: c / T for v, c in obj.items()}
    ref = min(b.id for b in g.buses)
    scale = 1.0 / (T * len(K)) if K else 0.0
    for k, (outaged, t) in enumerate(K):
        if t not in g.periods:
            raise ValueError(f"contingency {k} period {t} outside horizon")
        for bus in g.buses:
            i = bus.id
            vs = m.add_var(f"c{k}_ks_{i}", lb=0.0)
            vg = m.add_var(f"c{k}_kg_{i}", lb=0.0)
            if i == ref:
                m.add_var(f"c{k}_kth_{i}", lb=0.0, ub=0.0)
            else:
                m.add_var(f"c{k}_kth_{i}")
            # shed bracket: ps_it <= ks <= P^d + charge / eta+
            m.add_linear({vs: 1.0, _vshed(i, t): -1.0}, ">=", 0.0)
            ub_coeffs = {vs: 1.0}
            for si, st in enumerate(g.storage):
                if st.bus == i:
                    ub_coeffs[_vch(si, t)] = ub_coeffs.get(_vch(si, t), 0.0) - 1.0 / st.eta_plus
            m.add_linear(ub_coeffs, "<=", g.demand(i, t))
            # injection cap: kg <= sum pg + eta- * discharge
            cap_coeffs = {vg: 1.0}
            for gen in g.generators:
                if gen.bus == i:
                    v = _vg(gen.bus, gen.gtype, t)
                    cap_coeffs[v] = cap_coeffs.get(v, 0.0) - 1.0
            for si, st in enumerate(g.storage):
                if st.bus == i:
                    cap_coeffs[_vdis(si, t)] = cap_coeffs.get(_vdis(si, t), 0.0) - st.eta_minus
            m.add_linear(cap_coeffs, "<=", 0.0)
            obj[vs] = obj.get(vs, 0.0) + scale * g.shed_cost
            obj[_vshed(i, t)] = obj.get(_vshed(i, t), 0.0) - scale * g.shed_cost
        for ln in g.lines:
            if ln.id in outaged:
                m.add_var(f"c{k}_kf_{ln.id}", lb=0.0, ub=0.0)
            else:
                m.add_var(f"c{k}_kf_{ln.id}", lb=-ln.limit, ub=ln.limit)
                m.add_linear(
                    {
                        f"c{k}_kf_{ln.id}": 1.0,
                        f"c{k}_kth_{ln.to_bus}": -1.0 / ln.reactance,
                        f"c{k}_kth_{ln.from_bus}": 1.0 / ln.reactance,
                    },
                    "==",
                    0.0,
                )
        for bus in g.buses:
            i = bus.id
            coeffs = {f"c{k}_ks_{i}": 1.0, f"c{k}_kg_{i}": 1.0}
            for si, st in enumerate(g.storage):
                if st.bus == i:
                    coeffs[_vch(si, t)] = coeffs.get(_vch(si, t), 0.0) - 1.0 / st.eta_plus
            for ln in g.lines:
                if ln.to_bus == i:
                    coeffs[f"c{k}_kf_{ln.id}"] = coeffs.get(f"c{k}_kf_{ln.id}", 0.0) + 1.0
                if ln.from_bus == i:
                    coeffs[f"c{k}_kf_{ln.id}"] = coeffs.get(f"c{k}_kf_{ln.id}", 0.0) - 1.0
            m.add_linear(coeffs, "==", g.demand(i, t))
    m.set_objective("min", obj)
    sol = solve_lp(m, opts or SolveOptions())
    if sol.status != "Optimal":
        raise RuntimeError(f"SCOPF LP returned {sol.status}")
    d = extract_dispatch(g, sol.values)
    ctg_costs = []
    for k, (_outaged, t) in enumerate(K):
        extra = sum(
            sol.values[f"c{k}_ks_{bus.id}"] - sol.values[_vshed(bus.id, t)]
            for bus in g.buses
        )
        ctg_costs.append(g.shed_cost * extra)
    return ScopfResult(sol.objective, base_cost(g, d), ctg_costs, d, sol.values)


def threshold_contingencies(tstar: dict, T: int, subsets) -> list:
    """K = {(subset, t) : t* is finite and t >= t*(subset)}."""
    K = []
    for sub in subsets:
        key = frozenset(sub)
        ts = tstar.get(key)
        if ts is None:
            continue
        for t in range(int(ts), T + 1):
            K.append((key, t))
    return K


def select_elements(g: Grid, perimeter: PolytopeH, buffer: float,
                    base: BaseDispatch, count: int) -> list:
    """The `count` lines crossing the buffered perimeter that cost the most.

    Lines are ranked by total post-contingency shed cost over the horizon
    under the given base dispatch; ties break by line id.  Buffering pushes
    every half-plane outward by `buffer` miles.
    """
    bA = perimeter.A
    norms = np.linalg.norm(bA, axis=1)
    buffered = PolytopeH(bA, perimeter.b + buffer * norms)
    coords = {b.id: (b.x, b.y) for b in g.buses}
    candidates = []
    for ln in g.lines:
        p0, p1 = coords[ln.from_bus], coords[ln.to_bus]
        if segment_intersects_h(p0, p1, buffered):
            total = sum(contingency_cost(g, base, {ln.id}, t) for t in g.periods)
            candidates.append((-total, ln.id))
    candidates.sort()
    if len(candidates) < count:
        warnings.warn(
            f"only {len(candidates)} lines intersect the buffered perimeter "
            f"(requested {count})"
        )
    return [lid for _neg, lid in candidates[:count]]


def grid_from_dict(data: dict) -> Grid:
    T = int(data["horizon"])
    buses = tuple(Bus(int(b["id"]), float(b["x"]), float(b["y"])) for b in data["buses"])
    lines = tuple(
        Line(str(l["id"]), int(l["from"]), int(l["to"]),
             float(l["reactance"]), float(l["limit"]))
        for l in data["lines"]
    )
    gens = tuple(
        Generator(int(gn["bus"]), str(gn["type"]), gn["cap"], float(gn["cost"]),
                  None if gn.get("energy_cap") is None else float(gn["energy_cap"]))
        for gn in data.get("generators", ())
    )
    stor = tuple(
        Storage(int(s["bus"]), float(s["energy_cap"]), float(s["power_cap"]),
                float(s.get("eta_plus", 1.0)), float(s.get("eta_minus", 1.0)),
                float(s.get("cost", 0.0)))
        for s in data.get("storage", ())
    )
    loads = tuple(LoadPoint(int(l["bus"]), l["demand"]) for l in data.get("loads", ()))
    return Grid(buses, lines, gens, stor, loads, T,
                float(data.get("shed_cost", DEFAULT_SHED_COST)))


def load_grid(path) -> Grid:
    with open(path, encoding="utf-8") as fh:
        return grid_from_dict(json.load(fh))
