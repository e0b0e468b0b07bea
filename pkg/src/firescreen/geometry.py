"""Planar convex geometry primitives shared by the other modules.

Polytopes come in two flavors: half-space (H) representation ``A x <= b``
and vertex (V) representation ``conv({v_j})``.  Euclidean balls support the
Minkowski-sum identity used by the ball-shaped spread sets.  All types are
immutable and all operations are pure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Membership tolerance, deliberately stricter than the 1e-5 solve tolerance.
MEMBERSHIP_TOL = 1e-9


def _as_point(p) -> np.ndarray:
    a = np.asarray(p, dtype=float).reshape(2)
    if not np.all(np.isfinite(a)):
        raise ValueError(f"point has non-finite components: {p!r}")
    return a


@dataclass(frozen=True)
class Point2:
    """A point in the plane, coordinates in miles."""

    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError("Point2 components must be finite")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=float)


@dataclass(frozen=True)
class PolytopeH:
    """Polytope in half-space form {x : A x <= b}.

    Rows of ``A`` must be nonzero; the set is expected to be nonempty and
    bounded (validated lazily by callers that rely on it).
    """

    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        b = np.asarray(self.b, dtype=float).reshape(-1)
        if A.shape[0] != b.shape[0] or A.shape[1] != 2:
            raise ValueError("PolytopeH needs A of shape (m, 2) and b of shape (m,)")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
            raise ValueError("PolytopeH data must be finite")
        if np.any(np.linalg.norm(A, axis=1) == 0.0):
            raise ValueError("PolytopeH rows must be nonzero")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        self.A.setflags(write=False)
        self.b.setflags(write=False)

    @property
    def nrows(self) -> int:
        return self.A.shape[0]


@dataclass(frozen=True)
class PolytopeV:
    """Polytope as the convex hull of a list of vertices (J >= 1)."""

    vertices: np.ndarray

    def __post_init__(self):
        v = np.atleast_2d(np.asarray(self.vertices, dtype=float))
        if v.ndim != 2 or v.shape[1] != 2 or v.shape[0] < 1:
            raise ValueError("PolytopeV needs vertices of shape (J, 2), J >= 1")
        if not np.all(np.isfinite(v)):
            raise ValueError("PolytopeV vertices must be finite")
        object.__setattr__(self, "vertices", v)
        self.vertices.setflags(write=False)

    @property
    def nvertices(self) -> int:
        return self.vertices.shape[0]


@dataclass(frozen=True)
class Ball:
    """Euclidean ball with a center (miles) and nonnegative radius (miles)."""

    center: np.ndarray
    radius: float

    def __post_init__(self):
        c = _as_point(self.center)
        if not math.isfinite(self.radius) or self.radius < 0:
            raise ValueError("Ball radius must be finite and >= 0")
        object.__setattr__(self, "center", c)
        self.center.setflags(write=False)

    def contains(self, x, tol: float = MEMBERSHIP_TOL) -> bool:
        return float(np.linalg.norm(_as_point(x) - self.center)) <= self.radius + tol


def contains_h(P: PolytopeH, x, tol: float = MEMBERSHIP_TOL) -> bool:
    """Half-space membership test, inclusive of the boundary within ``tol``."""
    xa = _as_point(x)
    return bool(np.all(P.A @ xa <= P.b + tol))


def convex_coeffs(V: PolytopeV, x, tol: float = MEMBERSHIP_TOL):
    """Convex-combination witness for ``x in conv(V)``.

    Returns coefficients ``lam >= 0`` with ``sum(lam) == 1`` and
    ``sum(lam_j * v_j) == x`` if such exist (any valid witness), else None.
    Closed form for J <= 2; a small feasibility LP otherwise.
    """
    xa = _as_point(x)
    verts = V.vertices
    if V.nvertices == 1:
        if np.linalg.norm(verts[0] - xa) <= tol:
            return np.array([1.0])
        return None
    if V.nvertices == 2:
        seg = verts[1] - verts[0]
        den = float(seg @ seg)
        if den == 0.0:
            return convex_coeffs(PolytopeV(verts[:1]), xa, tol)
        t = float((xa - verts[0]) @ seg) / den
        t = min(1.0, max(0.0, t))
        if np.linalg.norm(verts[0] + t * seg - xa) <= tol:
            return np.array([1.0 - t, t])
        return None
    return _convex_coeffs_lp(verts, xa, tol)


def _convex_coeffs_lp(verts: np.ndarray, xa: np.ndarray, tol: float):
    # Feasibility LP: lam >= 0, sum lam = 1, V^T lam = x, through the
    # embedded LP core so the logic is not duplicated here.
    from .conic import ConicModel
    from .solver import SolveOptions, solve_lp

    m = ConicModel()
    names = [m.add_var(f"lam{j}", lb=0.0) for j in range(verts.shape[0])]
    m.add_linear({n: 1.0 for n in names}, "==", 1.0)
    for k in range(2):
        m.add_linear({n: float(verts[j, k]) for j, n in enumerate(names)}, "==", float(xa[k]))
    m.set_objective("min", {})
    sol = solve_lp(m, SolveOptions())
    if sol.status != "Optimal":
        return None
    lam = np.array([max(0.0, sol.values[n]) for n in names])
    resid = np.linalg.norm(verts.T @ lam - xa)
    if resid > max(tol, 1e-8) or abs(lam.sum() - 1.0) > max(tol, 1e-8):
        return None
    return lam / lam.sum()


def ball_sum(A: Ball, B: Ball) -> Ball:
    """Minkowski sum of two Euclidean balls (center sum, radius sum)."""
    return Ball(A.center + B.center, A.radius + B.radius)


def box_h(xmin: float, xmax: float, ymin: float, ymax: float) -> PolytopeH:
    """Axis-aligned box as a PolytopeH."""
    A = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
    b = np.array([xmax, -xmin, ymax, -ymin], dtype=float)
    return PolytopeH(A, b)


def polytope_bounds(P: PolytopeH) -> tuple[float, float, float, float]:
    """Tight axis-aligned bounds (xmin, xmax, ymin, ymax) of a bounded polytope.

    Raises ValueError if the polytope is empty or unbounded.
    """
    from .conic import ConicModel
    from .solver import SolveOptions, solve_lp

    out = []
    for k, sense in ((0, "min"), (0, "max"), (1, "min"), (1, "max")):
        m = ConicModel()
        vx = m.add_var("x")
        vy = m.add_var("y")
        coords = (vx, vy)
        for i in range(P.nrows):
            m.add_linear({vx: float(P.A[i, 0]), vy: float(P.A[i, 1])}, "<=", float(P.b[i]))
        m.set_objective(sense, {coords[k]: 1.0})
        sol = solve_lp(m, SolveOptions())
        if sol.status != "Optimal":
            raise ValueError(f"polytope is empty or unbounded ({sol.status})")
        out.append(sol.objective)
    return out[0], out[1], out[2], out[3]


def segment_intersects_h(p0, p1, P: PolytopeH, eps: float = 1e-12) -> bool:
    """Whether the segment p0-p1 meets the polytope, by half-plane clipping."""
    a = _as_point(p0)
    d = _as_point(p1) - a
    tlo, thi = 0.0, 1.0
    for i in range(P.nrows):
        num = float(P.b[i] - P.A[i] @ a)
        den = float(P.A[i] @ d)
        if abs(den) <= eps:
            if num < -eps:
                return False
            continue
        t = num / den
        if den > 0:
            thi = min(thi, t)
        else:
            tlo = max(tlo, t)
        if tlo > thi + eps:
            return False
    return tlo <= thi + eps
