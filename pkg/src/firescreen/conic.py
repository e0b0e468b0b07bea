"""Solver-agnostic optimization model IR.

A :class:`ConicModel` holds continuous/binary variables, linear rows,
second-order-cone rows ``||A x + b||_2 <= c.x + d``, and rational-power rows
``x <= y**(N/D)`` (with ``y >= 0`` implied).  :func:`rewrite_power` lowers the
power rows to SOC rows through a geometric-mean tower, and
:func:`export_model` / :func:`import_model` give a deterministic line-oriented
text serialization.

Serialization format (UTF-8, one record per line, floats with 17 significant
digits, variable references sorted by name):

    FIRESCREEN-CONIC 1
    VAR name lb ub [BIN] [PRIO k]
    LIN sense rhs n (coef var)*n
    SOC dim EXPR_rhs EXPR_row_1 ... EXPR_row_dim
    POW xvar yvar N D rho
    OBJ sense n (coef var)*n

where EXPR = ``const n (coef var)*n``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

INF = float("inf")


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


@dataclass(frozen=True)
class RationalExponent:
    """Reduced fraction N/D in (0, 1] with D <= 2**rho."""

    N: int
    D: int
    rho: int

    def __post_init__(self):
        if self.N <= 0 or self.D <= 0 or self.N > self.D:
            raise ValueError("need 0 < N <= D")
        if math.gcd(self.N, self.D) != 1:
            raise ValueError("N/D must be in lowest terms")
        if self.D > 2**self.rho:
            raise ValueError("need D <= 2**rho")

    @property
    def value(self) -> float:
        return self.N / self.D


@dataclass
class Variable:
    name: str
    lb: float = -INF
    ub: float = INF
    binary: bool = False
    priority: int = 0


@dataclass
class LinearConstraint:
    coeffs: dict
    sense: str  # "<=", ">=", "=="
    rhs: float


@dataclass
class SOCConstraint:
    """||A x + b||_2 <= c.x + d, rows as (coeffs, const) pairs."""

    rows: list  # [(dict, float), ...]
    rhs: tuple  # (dict, float)


@dataclass
class PowerConstraint:
    xvar: str
    yvar: str
    exponent: RationalExponent


class ConicModel:
    """Mutable while being built; treat as immutable once handed to a solver."""

    def __init__(self):
        self.variables: dict[str, Variable] = {}
        self.linear: list[LinearConstraint] = []
        self.socs: list[SOCConstraint] = []
        self.powers: list[PowerConstraint] = []
        self.objective_sense: str = "min"
        self.objective: dict = {}

    # -- construction -----------------------------------------------------

    def add_var(self, name, lb=-INF, ub=INF, binary=False, priority=0) -> str:
        if name in self.variables:
            raise ValueError(f"duplicate variable {name!r}")
        if binary:
            lb = max(lb, 0.0)
            ub = min(ub, 1.0)
        if lb > ub:
            raise ValueError(f"variable {name!r} has lb > ub")
        self.variables[name] = Variable(name, float(lb), float(ub), binary, int(priority))
        return name

    def _check_refs(self, coeffs: dict):
        for v in coeffs:
            if v not in self.variables:
                raise ValueError(f"unknown variable {v!r}")

    def add_linear(self, coeffs: dict, sense: str, rhs: float):
        if sense not in ("<=", ">=", "=="):
            raise ValueError(f"bad sense {sense!r}")
        self._check_refs(coeffs)
        self.linear.append(LinearConstraint(dict(coeffs), sense, float(rhs)))

    def add_soc(self, rows, rhs_coeffs, rhs_const):
        rows = [(dict(c), float(b)) for c, b in rows]
        for c, _ in rows:
            self._check_refs(c)
        self._check_refs(rhs_coeffs)
        self.socs.append(SOCConstraint(rows, (dict(rhs_coeffs), float(rhs_const))))

    def add_power(self, xvar: str, yvar: str, exponent: RationalExponent):
        for v in (xvar, yvar):
            if v not in self.variables:
                raise ValueError(f"unknown variable {v!r}")
        self.powers.append(PowerConstraint(xvar, yvar, exponent))

    def set_objective(self, sense: str, coeffs: dict):
        if sense not in ("min", "max"):
            raise ValueError(f"bad sense {sense!r}")
        self._check_refs(coeffs)
        self.objective_sense = sense
        self.objective = dict(coeffs)

    # -- introspection ----------------------------------------------------

    def num_binary(self) -> int:
        return sum(1 for v in self.variables.values() if v.binary)

    def copy(self) -> "ConicModel":
        m = ConicModel()
        for v in self.variables.values():
            m.variables[v.name] = Variable(v.name, v.lb, v.ub, v.binary, v.priority)
        m.linear = [LinearConstraint(dict(c.coeffs), c.sense, c.rhs) for c in self.linear]
        m.socs = [
            SOCConstraint([(dict(c), b) for c, b in s.rows], (dict(s.rhs[0]), s.rhs[1]))
            for s in self.socs
        ]
        m.powers = [PowerConstraint(p.xvar, p.yvar, p.exponent) for p in self.powers]
        m.objective_sense = self.objective_sense
        m.objective = dict(self.objective)
        return m


# -- rational exponents ---------------------------------------------------


def rationalize(r: float, max_rho: int) -> RationalExponent:
    """Best fraction N/D for r in (0, 1] over D <= 2**max_rho, ties to smaller D."""
    if not 0.0 < r <= 1.0:
        raise ValueError("exponent must be in (0, 1]")
    best = None
    for D in range(1, 2**max_rho + 1):
        for N in {max(1, min(D, round(r * D) + k)) for k in (-1, 0, 1)}:
            err = abs(N / D - r)
            if best is None or err < best[0] - 1e-15:
                best = (err, N, D)
    _, N, D = best
    g = math.gcd(N, D)
    N, D = N // g, D // g
    rho = max(0, math.ceil(math.log2(D))) if D > 1 else 0
    return RationalExponent(N, D, rho)


# -- power-cone lowering --------------------------------------------------


def _chain_assignment(targets: tuple[int, int, int], rho: int):
    """Assign the weight multiset {1, 1, 2, ..., 2**(rho-1)} to three targets.

    Returns a list of atom indices (0=x, 1=y, 2=one), one per weight in the
    order [1, 1, 2, 4, ...], or None if no exact assignment exists.
    """
    weights = [1, 1] + [2**k for k in range(1, rho)]

    def rec(i, remaining):
        if i < 0:
            return [] if remaining == (0, 0, 0) else None
        w = weights[i]
        for a in range(3):
            if remaining[a] >= w:
                nxt = list(remaining)
                nxt[a] -= w
                sub = rec(i - 1, tuple(nxt))
                if sub is not None:
                    return sub + [a]
        return None

    out = rec(len(weights) - 1, targets)
    return None if out is None else out


def _add_geomean_square(model, lhs, fac1, fac2, tag):
    """Add SOC row for lhs**2 <= fac1 * fac2; factors are var names or None (constant 1)."""

    def expr(v, sign):
        return ({} if v is None else {v: sign}, sign if v is None else 0.0)

    c1, b1 = expr(fac1, 1.0)
    c2, b2 = expr(fac2, -1.0)
    diff = dict(c1)
    for k, v in c2.items():
        diff[k] = diff.get(k, 0.0) + v
    diff_const = b1 + b2
    c2s, b2s = expr(fac2, 1.0)
    rhs = dict(c1)
    for k, v in c2s.items():
        rhs[k] = rhs.get(k, 0.0) + v
    model.add_soc([({lhs: 2.0}, 0.0), (diff, diff_const)], rhs, b1 + b2s)


def rewrite_power(model: ConicModel) -> ConicModel:
    """Replace each rational-power row by an equivalent SOC tower.

    ``x <= y**(N/D)`` with ``Pi = 2**rho`` becomes the geometric mean
    ``x**Pi <= x**(Pi-D) * y**N * 1**(D-N)``, realized as a chain of rho
    rotated-SOC rows with rho-1 proxy variables (repeated factors are wired to
    the shared variable/constant).  Requires ``x`` to have lower bound >= 0.
    Exponents whose weight multiset does not admit a chain fall back to a
    balanced-tree tower, which may use a few extra rows.
    """
    out = model.copy()
    out.powers = []
    for k, pc in enumerate(model.powers):
        ex = pc.exponent
        xv, yv = pc.xvar, pc.yvar
        if out.variables[xv].lb < 0.0:
            raise ValueError(f"power constraint on {xv!r} requires lb >= 0")
        if out.variables[yv].lb < 0.0:
            out.variables[yv].lb = 0.0  # nonnegativity of the power argument
        if ex.N == ex.D:
            out.add_linear({xv: 1.0, yv: -1.0}, "<=", 0.0)
            continue
        Pi = 2**ex.rho
        targets = (Pi - ex.D, ex.N, ex.D - ex.N)
        atoms = {0: xv, 1: yv, 2: None}
        chain = _chain_assignment(targets, ex.rho)
        if chain is not None:
            prev = atoms[chain[0]]
            for level in range(1, ex.rho + 1):
                partner = atoms[chain[level]]
                if level < ex.rho:
                    lhs = out.add_var(f"_pw{k}_u{level}", lb=0.0)
                else:
                    lhs = xv
                _add_geomean_square(out, lhs, prev, partner, f"pw{k}l{level}")
                prev = lhs
        else:
            _rewrite_tree(out, k, xv, yv, targets, ex.rho)
    return out


def _rewrite_tree(out, k, xv, yv, targets, rho):
    # Fallback balanced tower for exponents without a chain assignment.
    atoms = [xv] * targets[0] + [yv] * targets[1] + [None] * targets[2]
    counter = [0]

    def geo(leaves, top=False):
        if all(a == leaves[0] for a in leaves) and not top:
            return leaves[0]
        half = len(leaves) // 2
        f1 = geo(leaves[:half])
        f2 = geo(leaves[half:])
        if top:
            lhs = xv
        else:
            counter[0] += 1
            lhs = out.add_var(f"_pw{k}_t{counter[0]}", lb=0.0)
        _add_geomean_square(out, lhs, f1, f2, f"pw{k}")
        return lhs

    geo(atoms, top=True)


# -- serialization --------------------------------------------------------


def _expr_tokens(coeffs: dict, const: float) -> list[str]:
    items = sorted(coeffs.items())
    toks = [_fmt(const), str(len(items))]
    for v, c in items:
        toks.extend([_fmt(c), v])
    return toks


def _terms_tokens(coeffs: dict) -> list[str]:
    items = sorted(coeffs.items())
    toks = [str(len(items))]
    for v, c in items:
        toks.extend([_fmt(c), v])
    return toks


def model_to_string(model: ConicModel) -> str:
    lines = ["FIRESCREEN-CONIC 1"]
    for v in model.variables.values():
        toks = ["VAR", v.name, _fmt(v.lb), _fmt(v.ub)]
        if v.binary:
            toks.append("BIN")
        if v.priority:
            toks.extend(["PRIO", str(v.priority)])
        lines.append(" ".join(toks))
    for c in model.linear:
        lines.append(" ".join(["LIN", c.sense, _fmt(c.rhs)] + _terms_tokens(c.coeffs)))
    for s in model.socs:
        toks = ["SOC", str(len(s.rows))] + _expr_tokens(s.rhs[0], s.rhs[1])
        for coeffs, const in s.rows:
            toks.extend(_expr_tokens(coeffs, const))
        lines.append(" ".join(toks))
    for p in model.powers:
        lines.append(f"POW {p.xvar} {p.yvar} {p.exponent.N} {p.exponent.D} {p.exponent.rho}")
    lines.append(" ".join(["OBJ", model.objective_sense] + _terms_tokens(model.objective)))
    return "\n".join(lines) + "\n"


def export_model(model: ConicModel, path):
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(model_to_string(model))
    except OSError as exc:
        raise OSError(f"cannot write model file {path!r}: {exc}") from exc


class _TokenReader:
    def __init__(self, toks):
        self.toks = toks
        self.i = 0

    def next(self):
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def expr(self):
        const = float(self.next())
        n = int(self.next())
        coeffs = {}
        for _ in range(n):
            c = float(self.next())
            v = self.next()
            coeffs[v] = c
        return coeffs, const


def import_model(path) -> ConicModel:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    if not lines or lines[0] != "FIRESCREEN-CONIC 1":
        raise ValueError(f"{path!r} is not a conic model file")
    m = ConicModel()
    for ln in lines[1:]:
        toks = ln.split()
        kind = toks[0]
        if kind == "VAR":
            name, lb, ub = toks[1], float(toks[2]), float(toks[3])
            rest = toks[4:]
            binary = "BIN" in rest
            prio = int(rest[rest.index("PRIO") + 1]) if "PRIO" in rest else 0
            m.add_var(name, lb=lb, ub=ub, binary=binary, priority=prio)
        elif kind == "LIN":
            n = int(toks[3])
            coeffs = {}
            i = 4
            for _ in range(n):
                coeffs[toks[i + 1]] = float(toks[i])
                i += 2
            m.add_linear(coeffs, toks[1], float(toks[2]))
        elif kind == "SOC":
            dim = int(toks[1])
            rd = _TokenReader(toks[2:])
            rhs_coeffs, rhs_const = rd.expr()
            rows = [rd.expr() for _ in range(dim)]
            m.add_soc(rows, rhs_coeffs, rhs_const)
        elif kind == "POW":
            m.add_power(toks[1], toks[2], RationalExponent(int(toks[3]), int(toks[4]), int(toks[5])))
        elif kind == "OBJ":
            n = int(toks[2])
            coeffs = {}
            i = 3
            for _ in range(n):
                coeffs[toks[i + 1]] = float(toks[i])
                i += 2
            m.set_objective(toks[1], coeffs)
        else:
            raise ValueError(f"unknown record {kind!r}")
    return m
