"""Exact desk-scale solver for the conic model IR.

The continuous core is an LP solve (HiGHS via scipy); second-order-cone rows
are enforced lazily by supporting-hyperplane cuts, and binaries by a
deterministic best-bound branch-and-bound.  Power rows must be lowered with
:func:`firescreen.conic.rewrite_power` before solving.
"""

from __future__ import annotations

import heapq
import time
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .conic import ConicModel, SOCConstraint


@dataclass
class SolveOptions:
    feas_tol: float = 1e-5
    opt_tol: float = 1e-5
    node_limit: int = 200_000
    time_limit: float | None = None
    seed: int = 0
    int_tol: float = 1e-6
    max_cut_rounds: int = 400
    cut_pool_cap: int = 500
    node_log: str | None = None

    def __post_init__(self):
        if self.feas_tol <= 0 or self.opt_tol <= 0:
            raise ValueError("tolerances must be positive")


@dataclass
class Solution:
    status: str  # "Optimal" | "Infeasible" | "Unbounded" | "IterLimit"
    objective: float
    values: dict
    gap: float = 0.0


class _Compiled:
    """Arrays for the LP relaxation plus the original SOC rows."""

    def __init__(self, model: ConicModel):
        self.names = list(model.variables)
        self.index = {n: i for i, n in enumerate(self.names)}
        n = len(self.names)
        self.n = n
        self.lb = np.array([model.variables[v].lb for v in self.names])
        self.ub = np.array([model.variables[v].ub for v in self.names])
        self.binary = [i for i, v in enumerate(self.names) if model.variables[v].binary]
        self.priority = np.array(
            [model.variables[v].priority for v in self.names], dtype=int
        )
        rows_ub, rhs_ub, rows_eq, rhs_eq = [], [], [], []
        for c in model.linear:
            row = self._row(c.coeffs)
            if c.sense == "<=":
                rows_ub.append(row)
                rhs_ub.append(c.rhs)
            elif c.sense == ">=":
                rows_ub.append({k: -v for k, v in row.items()})
                rhs_ub.append(-c.rhs)
            else:
                rows_eq.append(row)
                rhs_eq.append(c.rhs)
        self.A_ub = self._matrix(rows_ub)
        self.b_ub = np.array(rhs_ub)
        self.A_eq = self._matrix(rows_eq)
        self.b_eq = np.array(rhs_eq)
        sense = 1.0 if model.objective_sense == "max" else -1.0
        self.obj_sign = sense  # internal objective is maximize
        self.c_max = np.zeros(n)
        for v, coef in model.objective.items():
            self.c_max[self.index[v]] += sense * coef
        self.socs = [self._soc(s) for s in model.socs]

    def _row(self, coeffs: dict) -> dict:
        return {self.index[v]: float(c) for v, c in coeffs.items()}

    def _matrix(self, rows: list) -> sp.csr_matrix:
        m = sp.lil_matrix((len(rows), self.n))
        for i, row in enumerate(rows):
            for j, c in row.items():
                m[i, j] = c
        return m.tocsr()

    def _soc(self, s: SOCConstraint):
        A = np.zeros((len(s.rows), self.n))
        b = np.zeros(len(s.rows))
        for i, (coeffs, const) in enumerate(s.rows):
            for v, coef in coeffs.items():
                A[i, self.index[v]] = coef
            b[i] = const
        c = np.zeros(self.n)
        for v, coef in s.rhs[0].items():
            c[self.index[v]] = coef
        return (A, b, c, s.rhs[1])


def _check(model: ConicModel, allow_soc: bool):
    if model.powers:
        raise ValueError("rewrite power constraints with conic.rewrite_power first")
    if not allow_soc and model.socs:
        raise ValueError("solve_lp accepts linear rows only; pass SOC rows as cuts")


def solve_lp(model: ConicModel, opts: SolveOptions | None = None) -> Solution:
    """Solve the linear relaxation (binaries relaxed to [0, 1])."""
    opts = opts or SolveOptions()
    _check(model, allow_soc=False)
    comp = _Compiled(model)
    status, obj, x = _lp(comp, [], {})
    values = {} if x is None else {n: float(x[i]) for i, n in enumerate(comp.names)}
    objective = comp.obj_sign * obj if obj is not None else float("nan")
    return Solution(status, objective, values, 0.0)


def _lp(comp: _Compiled, cuts: list, overrides: dict):
    """Maximize c_max over the compiled LP plus cut rows.

    cuts: list of (coef ndarray-or-dict, rhs) meaning coef.x <= rhs.
    overrides: var index -> (lb, ub).
    Returns (status, objective-in-original-sense?, x).  Objective returned in
    the internal maximize sense; callers convert.
    """
    n = comp.n
    lb = comp.lb.copy()
    ub = comp.ub.copy()
    for i, (lo, hi) in overrides.items():
        lb[i] = max(lb[i], lo)
        ub[i] = min(ub[i], hi)
    if np.any(lb > ub + 1e-12):
        return "Infeasible", None, None
    if n == 0:
        return "Optimal", 0.0, np.zeros(0)
    A_ub = comp.A_ub
    b_ub = comp.b_ub
    if cuts:
        rows = np.array([c for c, _ in cuts])
        A_ub = sp.vstack([A_ub, sp.csr_matrix(rows)]) if A_ub.shape[0] else sp.csr_matrix(rows)
        b_ub = np.concatenate([b_ub, np.array([r for _, r in cuts])])
    res = linprog(
        -comp.c_max,
        A_ub=A_ub if A_ub.shape[0] else None,
        b_ub=b_ub if A_ub.shape[0] else None,
        A_eq=comp.A_eq if comp.A_eq.shape[0] else None,
        b_eq=comp.b_eq if comp.A_eq.shape[0] else None,
        bounds=list(zip(lb, ub)),
        method="highs",
    )
    if res.status == 0:
        return "Optimal", float(-res.fun), res.x
    if res.status == 2:
        return "Infeasible", None, None
    if res.status == 3:
        return "Unbounded", None, None
    return "IterLimit", None, None


def soc_separate(point: dict, soc: SOCConstraint, feas_tol: float = 1e-5):
    """Supporting-hyperplane cut for a violated SOC row, or None if satisfied.

    The returned cut is (coeffs dict, rhs) with meaning ``coeffs . x <= rhs``;
    it is valid for every point of the cone and violated by ``point``.
    """
    names = sorted(
        set().union(*(c.keys() for c, _ in soc.rows), soc.rhs[0].keys(), point.keys())
    )
    idx = {n: i for i, n in enumerate(names)}
    x = np.array([point.get(n, 0.0) for n in names])
    A = np.zeros((len(soc.rows), len(names)))
    b = np.zeros(len(soc.rows))
    for i, (coeffs, const) in enumerate(soc.rows):
        for v, coef in coeffs.items():
            A[i, idx[v]] = coef
        b[i] = const
    c = np.zeros(len(names))
    for v, coef in soc.rhs[0].items():
        c[idx[v]] = coef
    d = soc.rhs[1]
    cut = _separate_arrays(x, A, b, c, d, feas_tol)
    if cut is None:
        return None
    coef, rhs = cut
    return ({names[i]: float(coef[i]) for i in np.nonzero(coef)[0]}, float(rhs))


def _separate_arrays(x, A, b, c, d, feas_tol):
    u = A @ x + b
    lhs = float(np.linalg.norm(u))
    rhs = float(c @ x + d)
    if lhs <= rhs + feas_tol:
        return None
    if lhs > 0:
        uhat = u / lhs
        coef = uhat @ A - c
        cut_rhs = d - float(uhat @ b)
    else:
        coef = -c
        cut_rhs = d
    return coef, cut_rhs


class _Node:
    __slots__ = ("overrides", "cuts", "bound")

    def __init__(self, overrides, cuts, bound):
        self.overrides = overrides
        self.cuts = cuts
        self.bound = bound


def solve(model: ConicModel, opts: SolveOptions | None = None) -> Solution:
    """Branch-and-bound with lazy SOC outer approximation.

    Deterministic for a fixed model and options: best-bound node selection,
    branching on the highest-priority fractional binary (ties by largest
    fractionality, then lowest index).
    """
    opts = opts or SolveOptions()
    _check(model, allow_soc=True)
    comp = _Compiled(model)
    t0 = time.monotonic()
    log = open(opts.node_log, "w", encoding="utf-8") if opts.node_log else None
    if log:
        log.write("node,bound,incumbent,depth,cuts_added\n")
    try:
        return _branch_and_bound(comp, opts, t0, log)
    finally:
        if log:
            log.close()


def _branch_and_bound(comp: _Compiled, opts: SolveOptions, t0, log) -> Solution:
    inc_obj = -np.inf
    inc_x = None
    limit_hit = False
    counter = 0
    heap = []
    root = _Node({}, [], np.inf)
    heapq.heappush(heap, (-root.bound, counter, root, 0))
    nodes_processed = 0
    root_unbounded = False

    while heap:
        neg_bound, _, node, depth = heapq.heappop(heap)
        if -neg_bound <= inc_obj + opts.opt_tol and inc_x is not None:
            continue
        nodes_processed += 1
        if nodes_processed > opts.node_limit or (
            opts.time_limit is not None and time.monotonic() - t0 > opts.time_limit
        ):
            limit_hit = True
            heapq.heappush(heap, (neg_bound, counter, node, depth))
            break

        cuts = list(node.cuts)
        cuts_added = 0
        status = obj = x = None
        exhausted = False
        for _round in range(opts.max_cut_rounds + 1):
            status, obj, x = _lp(comp, cuts, node.overrides)
            if status != "Optimal":
                break
            if obj <= inc_obj + 1e-9 and inc_x is not None:
                break
            new_cuts = []
            for A, b, c, d in comp.socs:
                cut = _separate_arrays(x, A, b, c, d, opts.feas_tol)
                if cut is not None:
                    new_cuts.append(cut)
            if not new_cuts:
                break
            cuts.extend(new_cuts)
            cuts_added += len(new_cuts)
            if len(cuts) > opts.cut_pool_cap:
                cuts = cuts[len(cuts) - opts.cut_pool_cap :]
        else:
            # Cut rounds exhausted with a violation remaining: the point may
            # be cone-infeasible, so never accept it as an incumbent.
            limit_hit = True
            exhausted = True

        if log:
            log.write(
                f"{nodes_processed},{obj if obj is not None else ''},"
                f"{inc_obj if np.isfinite(inc_obj) else ''},{depth},{cuts_added}\n"
            )

        if status == "Unbounded":
            if depth == 0 and not comp.binary:
                root_unbounded = True
                break
            # Unbounded relaxation with binaries: cannot bound; report it.
            root_unbounded = True
            break
        if status != "Optimal" or exhausted or (
            obj <= inc_obj + 1e-9 and inc_x is not None
        ):
            continue

        fractional = [
            i for i in comp.binary if opts.int_tol < x[i] < 1.0 - opts.int_tol
        ]
        if not fractional:
            xi = x.copy()
            for i in comp.binary:
                xi[i] = round(xi[i])
            if obj > inc_obj:
                inc_obj = obj
                inc_x = xi
            continue

        # branch: highest priority, then largest fractionality, then lowest index
        def key(i):
            return (-comp.priority[i], abs(x[i] - 0.5), i)

        j = min(fractional, key=key)
        for val in (0.0, 1.0):
            child_over = dict(node.overrides)
            child_over[j] = (val, val)
            child = _Node(child_over, cuts, obj)
            counter += 1
            heapq.heappush(heap, (-obj, counter, child, depth + 1))

    if root_unbounded:
        return Solution("Unbounded", float("inf") * comp.obj_sign, {}, float("inf"))

    best_bound = max((-hb for hb, *_ in heap), default=inc_obj)
    if inc_x is None:
        if limit_hit:
            return Solution("IterLimit", float("nan"), {}, float("inf"))
        return Solution("Infeasible", float("nan"), {}, 0.0)
    gap = max(0.0, best_bound - inc_obj)
    if not heap and not limit_hit:
        gap = 0.0
    status = "Optimal" if not limit_hit else ("Optimal" if gap <= opts.opt_tol else "IterLimit")
    values = {n: float(inc_x[i]) for i, n in enumerate(comp.names)}
    return Solution(status, comp.obj_sign * inc_obj, values, gap)
