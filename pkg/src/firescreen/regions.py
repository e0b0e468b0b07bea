"""Fire-potential raster to polyhedral region pipeline.

A WFPI-style raster (values in [0, 100]) is wind-rescaled, fit with a greedy
bivariate regression tree whose internal rules are affine half-planes, and
the leaves become the polyhedral regions with spread multipliers mu = label
divided by 100.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .geometry import PolytopeH, box_h
from .spread import RegionSet

DEFAULT_DEPTH = 3
DEFAULT_REG = 25.0
MIN_MULTIPLIER = 0.01
N_ANGLES = 16


@dataclass(frozen=True)
class Raster:
    """Row-major grid of fire-potential values in [0, 100].

    Rows are listed north to south: row 0 is the top of the grid.  Missing
    cells carry nan internally and the nodata sentinel on disk.  Coordinates
    are planar miles with (xll, yll) the lower-left corner.
    """

    xll: float
    yll: float
    cellsize: float
    values: np.ndarray

    def __post_init__(self):
        v = np.atleast_2d(np.asarray(self.values, dtype=float))
        if self.cellsize <= 0:
            raise ValueError("cellsize must be positive")
        finite = v[np.isfinite(v)]
        if finite.size and (finite.min() < 0 or finite.max() > 100):
            raise ValueError("raster values must lie in [0, 100]")
        object.__setattr__(self, "values", v)
        self.values.setflags(write=False)

    @property
    def nrows(self) -> int:
        return self.values.shape[0]

    @property
    def ncols(self) -> int:
        return self.values.shape[1]

    def cell_centers(self) -> np.ndarray:
        """(nrows*ncols, 2) array of cell-center coordinates, row-major."""
        xs = self.xll + (np.arange(self.ncols) + 0.5) * self.cellsize
        ys = self.yll + (self.nrows - 1 - np.arange(self.nrows) + 0.5) * self.cellsize
        gx, gy = np.meshgrid(xs, ys)
        return np.column_stack([gx.ravel(), gy.ravel()])

    def bounds(self) -> tuple[float, float, float, float]:
        return (
            self.xll,
            self.xll + self.ncols * self.cellsize,
            self.yll,
            self.yll + self.nrows * self.cellsize,
        )


def read_raster(path) -> Raster:
    """Read the ASCII-grid raster format (ncols/nrows/xll/yll/cellsize/nodata
    header lines followed by row-major values, top row first)."""
    with open(path, encoding="utf-8") as fh:
        toks = fh.read().split()
    header = {}
    i = 0
    for _ in range(6):
        header[toks[i].lower()] = float(toks[i + 1])
        i += 2
    for key in ("ncols", "nrows", "xll", "yll", "cellsize", "nodata"):
        if key not in header:
            raise ValueError(f"raster {path} missing header field {key!r}")
    ncols, nrows = int(header["ncols"]), int(header["nrows"])
    vals = np.array([float(t) for t in toks[i:]], dtype=float)
    if vals.size != nrows * ncols:
        raise ValueError(
            f"raster {path} has {vals.size} values, expected {nrows * ncols}"
        )
    vals = vals.reshape(nrows, ncols)
    vals = np.where(vals == header["nodata"], np.nan, vals)
    return Raster(header["xll"], header["yll"], header["cellsize"], vals)


def write_raster(r: Raster, path, nodata: float = -9999.0) -> None:
    vals = np.where(np.isfinite(r.values), r.values, nodata)
    lines = [
        f"ncols {r.ncols}",
        f"nrows {r.nrows}",
        f"xll {r.xll:.17g}",
        f"yll {r.yll:.17g}",
        f"cellsize {r.cellsize:.17g}",
        f"nodata {nodata:.17g}",
    ]
    for row in vals:
        lines.append(" ".join(f"{v:.17g}" for v in row))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def rescale_wfpi(r: Raster, s: float) -> Raster:
    """Divide every value by (1 + 0.6 s / 35), s the wind speed in knots.

    Stronger wind makes a given fuel load spread faster, so the fire
    potential that a fixed spread multiplier represents is reached at a
    lower raw index; missing cells pass through unchanged.
    """
    if s < 0:
        raise ValueError("wind speed must be nonnegative")
    factor = 1.0 / (1.0 + 0.6 * s / 35.0)
    return Raster(r.xll, r.yll, r.cellsize, r.values * factor)


@dataclass(frozen=True)
class TreeNode:
    """Internal rule a . x <= b sends points to `low`, else `high`;
    leaves have children None and carry the fitted label."""

    a: tuple | None
    b: float
    low: "TreeNode | None"
    high: "TreeNode | None"
    label: float


@dataclass(frozen=True)
class RegionTree:
    root: TreeNode
    depth: int

    def predict(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        out = np.empty(pts.shape[0])
        for k, pt in enumerate(pts):
            node = self.root
            while node.a is not None:
                node = node.low if pt @ np.array(node.a) <= node.b else node.high
            out[k] = node.label
        return out

    def leaves(self):
        """Leaf list as (inequality list [(a1, a2, b, sense<=?)], label)."""
        out = []

        def walk(node, ineqs):
            if node.a is None:
                out.append((list(ineqs), node.label))
                return
            a = np.array(node.a)
            walk(node.low, ineqs + [(a, node.b)])
            walk(node.high, ineqs + [(-a, -node.b)])

        walk(self.root, [])
        return out


def _split_candidates(pts: np.ndarray):
    """Yield (normal, offset) candidate rules: 16 orientations, offsets at
    midpoints between consecutive distinct data projections."""
    for k in range(N_ANGLES):
        theta = k * math.pi / N_ANGLES
        a = np.array([math.cos(theta), math.sin(theta)])
        proj = np.unique(np.round(pts @ a, 12))
        for b in 0.5 * (proj[:-1] + proj[1:]):
            yield a, float(b)


def _sse(vals: np.ndarray) -> float:
    return float(np.sum((vals - vals.mean()) ** 2)) if vals.size else 0.0


def _grow(pts, vals, depth_left, reg, n_total):
    label = float(vals.mean())
    if depth_left == 0 or vals.size < 2:
        return TreeNode(None, 0.0, None, None, label)
    parent_sse = _sse(vals)
    best = None
    for a, b in _split_candidates(pts):
        mask = pts @ a <= b
        if not mask.any() or mask.all():
            continue
        child_sse = _sse(vals[mask]) + _sse(vals[~mask])
        if best is None or child_sse < best[0] - 1e-12:
            best = (child_sse, a, b, mask)
    if best is None:
        return TreeNode(None, 0.0, None, None, label)
    child_sse, a, b, mask = best
    # Accept only if the mean-squared-error reduction beats the penalty.
    if (parent_sse - child_sse) / n_total <= reg:
        return TreeNode(None, 0.0, None, None, label)
    low = _grow(pts[mask], vals[mask], depth_left - 1, reg, n_total)
    high = _grow(pts[~mask], vals[~mask], depth_left - 1, reg, n_total)
    return TreeNode((float(a[0]), float(a[1])), b, low, high, label)


def train_tree(r: Raster, depth: int = DEFAULT_DEPTH, reg: float = DEFAULT_REG) -> RegionTree:
    """Greedy top-down bivariate regression tree on non-missing cells.

    At each node the best half-plane rule over 16 orientations and all data
    offsets is taken, and kept only when it reduces the tree's mean squared
    error by more than reg.  Deterministic; degenerate data yields a single
    leaf.
    """
    pts = r.cell_centers()
    vals = r.values.ravel()
    keep = np.isfinite(vals)
    if not keep.any():
        raise ValueError("raster has no non-missing cells")
    pts, vals = pts[keep], vals[keep]
    return RegionTree(_grow(pts, vals, depth, reg, vals.size), depth)


def extract_regions(t: RegionTree, bbox: PolytopeH) -> RegionSet:
    """One polyhedral region per leaf, clipped to bbox, mu = label / 100.

    Zero or tiny labels clamp to 0.01 so multipliers stay in (0, 1].
    """
    regions = []
    for ineqs, label in t.leaves():
        A = list(bbox.A)
        b = list(bbox.b)
        for a, off in ineqs:
            A.append(a)
            b.append(off)
        mu = min(1.0, max(MIN_MULTIPLIER, label / 100.0))
        regions.append((PolytopeH(np.array(A), np.array(b)), mu))
    return RegionSet(tuple(regions), bbox)


def raster_regions(r: Raster, wind_knots: float, depth: int = DEFAULT_DEPTH,
                   reg: float = DEFAULT_REG) -> RegionSet:
    """Full pipeline: rescale, train, extract over the raster's bounds."""
    rescaled = rescale_wfpi(r, wind_knots)
    tree = train_tree(rescaled, depth, reg)
    xmin, xmax, ymin, ymax = r.bounds()
    return extract_regions(tree, box_h(xmin, xmax, ymin, ymax))


def regionset_to_dict(rs: RegionSet) -> dict:
    return {
        "bbox": [[float(rs.bbox.A[i, 0]), float(rs.bbox.A[i, 1]), float(rs.bbox.b[i])]
                 for i in range(rs.bbox.nrows)],
        "regions": [
            {
                "ineqs": [[float(P.A[i, 0]), float(P.A[i, 1]), float(P.b[i])]
                          for i in range(P.nrows)],
                "mu": mu,
            }
            for P, mu in rs.regions
        ],
    }


def regionset_from_dict(data: dict) -> RegionSet:
    def poly(rows):
        arr = np.array(rows, dtype=float)
        return PolytopeH(arr[:, :2], arr[:, 2])

    bbox = poly(data["bbox"])
    regions = tuple((poly(r["ineqs"]), float(r["mu"])) for r in data["regions"])
    return RegionSet(regions, bbox)


def save_regions(rs: RegionSet, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(regionset_to_dict(rs), fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_regions(path) -> RegionSet:
    with open(path, encoding="utf-8") as fh:
        return regionset_from_dict(json.load(fh))
