"""Shared fixtures: small scenarios, grids, and raster fixtures."""

import json

import numpy as np
import pytest

from firescreen.geometry import PolytopeV, box_h
from firescreen.grid import grid_from_dict
from firescreen.spread import RegionSet, SpreadParams


def point_element(cx, cy, h=0.01):
    """A small triangle standing in for a point target."""
    return PolytopeV(np.array([[cx - h, cy - h], [cx + h, cy - h], [cx, cy + h]]))


def unit_regions(xmax=1.0, ymax=1.0, mu=1.0):
    bbox = box_h(0.0, xmax, 0.0, ymax)
    return RegionSet(((bbox, mu),), bbox)


def zero_wind_params(T, V=0.05, eps=0.0, B=0.9093, C=2.5010):
    return SpreadParams(B, C, V, eps, np.zeros((T + 1, 2)), T)


def two_bus_grid(demand=60.0, limit=100.0, horizon=1, cost=20.0, cap=100.0):
    return grid_from_dict({
        "horizon": horizon,
        "buses": [{"id": 1, "x": 0.0, "y": 0.0}, {"id": 2, "x": 1.0, "y": 0.0}],
        "lines": [{"id": "L1", "from": 1, "to": 2,
                   "reactance": 0.1, "limit": limit}],
        "generators": [{"bus": 1, "type": "gas", "cap": cap, "cost": cost}],
        "loads": [{"bus": 2, "demand": demand}],
    })


def triangle_grid(limit_b=40.0, horizon=0):
    """3-bus triangle: cheap gen at 1, expensive at 2, 90 MW load at 3.

    With equal reactances the direct line 1-3 carries (2 g1 + g2) / 3, so a
    40 MW limit forces g1 <= 30 and the analytic cost is 30*10 + 60*50.
    """
    return grid_from_dict({
        "horizon": horizon,
        "buses": [{"id": 1, "x": 0.0, "y": 0.0}, {"id": 2, "x": 1.0, "y": 0.0},
                  {"id": 3, "x": 0.5, "y": 1.0}],
        "lines": [
            {"id": "A", "from": 1, "to": 2, "reactance": 0.1, "limit": 1000.0},
            {"id": "B", "from": 1, "to": 3, "reactance": 0.1, "limit": limit_b},
            {"id": "C", "from": 2, "to": 3, "reactance": 0.1, "limit": 1000.0},
        ],
        "generators": [
            {"bus": 1, "type": "cheap", "cap": 100.0, "cost": 10.0},
            {"bus": 2, "type": "dear", "cap": 100.0, "cost": 50.0},
        ],
        "loads": [{"bus": 3, "demand": 90.0}],
    })


def half_split_raster_text():
    lines = ["ncols 4", "nrows 4", "xll 0", "yll 0", "cellsize 0.25",
             "nodata -9999"]
    lines += ["20 20 80 80"] * 4
    return "\n".join(lines) + "\n"


@pytest.fixture
def half_raster(tmp_path):
    path = tmp_path / "raster.txt"
    path.write_text(half_split_raster_text())
    return path


def scenario_json(T=2, ids=("L1",), centers=((0.48, 0.5),),
                  ignition=(0.4, 0.5), eps=0.0, wind=(0.0, 0.0)):
    bbox = [[-1.0, 0.0, 0.0], [1.0, 0.0, 1.0], [0.0, -1.0, 0.0], [0.0, 1.0, 1.0]]
    elements = []
    for eid, (cx, cy) in zip(ids, centers):
        elements.append({"id": eid, "vertices": [
            [cx - 0.02, cy - 0.02], [cx + 0.02, cy - 0.02], [cx, cy + 0.02]]})
    return {
        "horizon": T,
        "elements": elements,
        "spread": {"B": 0.9093, "C": 2.5010, "V": 0.05, "epsilon": eps,
                   "nominal_wind": [list(wind)] * (T + 1)},
        "ignition": {"mode": "fixed", "point": list(ignition)},
        "regions": {"bbox": bbox, "regions": [{"ineqs": bbox, "mu": 1.0}]},
        "weights": "min_time",
    }


@pytest.fixture
def small_scenario_file(tmp_path):
    path = tmp_path / "scenario.json"
    path.write_text(json.dumps(scenario_json()))
    return path


@pytest.fixture
def small_grid_file(tmp_path):
    path = tmp_path / "grid.json"
    path.write_text(json.dumps({
        "horizon": 2,
        "buses": [{"id": 1, "x": 0.3, "y": 0.5}, {"id": 2, "x": 0.6, "y": 0.5}],
        "lines": [{"id": "L1", "from": 1, "to": 2,
                   "reactance": 0.1, "limit": 100.0}],
        "generators": [{"bus": 1, "type": "gas", "cap": 100.0, "cost": 20.0}],
        "loads": [{"bus": 2, "demand": 50.0}],
    }))
    return path
