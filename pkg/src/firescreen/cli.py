"""Command-line front end.

Subcommands: regions (raster -> region file), screen (t* for every element
subset), sequence (load-shed-weighted outage schedule), opf (security
constrained dispatch), export (write the conic model of a scenario).

Output data files are deterministic given identical inputs and seed;
wall-clock timings are printed to stdout at 0.1 s resolution and kept out
of the data files.  Exit codes: 0 success, 1 solver limit or non-optimal
status, 2 input or validation error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np

from .adversary import (
    Scenario,
    SolveLimit,
    build_micp,
    load_scenario,
    max_shed_sequence,
    min_time_to_outage,
    trajectory_csv_rows,
)
from .conic import export_model
from .grid import (
    build_base_opf,
    base_cost,
    contingency_cost,
    extract_dispatch,
    load_grid,
    solve_scopf,
    threshold_contingencies,
)
from .regions import (
    DEFAULT_DEPTH,
    DEFAULT_REG,
    raster_regions,
    read_raster,
    save_regions,
)
from .solver import SolveOptions, solve_lp
from .spread import (
    BALL,
    IP_2M,
    IP_MC,
    IP_RMC,
    IP_RMC2M,
    ROTHERMEL,
    recommend_variant,
    sigma,
    tau,
)

MAX_ELEMENTS = 12
LF_EPSILON = 10.0
HF_EXTRA = 10.0

VARIANTS = {
    "ball": BALL,
    "ip-mc": IP_MC,
    "ip-rmc": IP_RMC,
    "ip-2m": IP_2M,
    "ip-rmc2m": IP_RMC2M,
    "rothermel-oracle": ROTHERMEL,
}


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--variant", choices=sorted(VARIANTS), default=None,
                   help="spread formulation (default: chosen from the calibration)")
    p.add_argument("--flex", choices=("lf", "hf"), default=None,
                   help="low/high flexibility wind-uncertainty preset")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--feas-tol", type=float, default=1e-5)
    p.add_argument("--opt-tol", type=float, default=1e-5)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--plot-data", action="store_true",
                   help="also write per-figure CSV data")


def _solve_options(args) -> SolveOptions:
    return SolveOptions(feas_tol=args.feas_tol, opt_tol=args.opt_tol,
                        seed=args.seed)


def _apply_flex(s: Scenario, mode) -> Scenario:
    """LF fixes the ignition and adds a 10 mi/hr wind ball around the
    forecast; HF zeroes the forecast, widens the ball by the forecast's
    peak speed, and frees the ignition."""
    if mode is None:
        return s
    sp = s.spread
    if mode == "lf":
        if s.ignition is None:
            raise ValueError("lf mode requires a fixed ignition point")
        return Scenario(s.elements, s.horizon, replace(sp, epsilon=LF_EPSILON),
                        s.regions, s.ignition, s.weights)
    peak = float(np.max(np.linalg.norm(sp.nominal_wind, axis=1)))
    sp2 = replace(sp, nominal_wind=np.zeros_like(sp.nominal_wind),
                  epsilon=peak + HF_EXTRA)
    return Scenario(s.elements, s.horizon, sp2, s.regions, None, s.weights)


def _pick_variant(args, s: Scenario):
    if args.variant is None:
        return recommend_variant(s.spread)
    v = VARIANTS[args.variant]
    if v.kind == "rothermel" and s.spread.epsilon != 0.0:
        raise ValueError(
            "rothermel-oracle requires epsilon = 0 (it is exact only without "
            "wind uncertainty)"
        )
    return v


def _write_csv(path, rows, comments=()):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for c in comments:
            fh.write(f"# {c}\n")
        for row in rows:
            fh.write(",".join(str(v) for v in row) + "\n")


def _fmt(x: float) -> str:
    return f"{x:.10g}"


def _subset_ids(mask: int, eids) -> frozenset:
    return frozenset(e for i, e in enumerate(eids) if mask >> i & 1)


def _enumerate_masks(n: int):
    if n > MAX_ELEMENTS:
        raise ValueError(
            f"subset screening is capped at {MAX_ELEMENTS} elements, got {n}"
        )
    return range(1, 2**n)


def _screen_one(payload):
    s, mask, eids, variant, opts = payload
    t0 = time.monotonic()
    tstar, _traj, gap = min_time_to_outage(s, _subset_ids(mask, eids), variant, opts)
    return mask, tstar, gap, time.monotonic() - t0


# subcommands ---------------------------------------------------------------

def cmd_regions(args) -> int:
    t0 = time.monotonic()
    raster = read_raster(args.raster)
    rs = raster_regions(raster, args.wind_speed, args.depth, args.reg)
    os.makedirs(args.out, exist_ok=True)
    out = os.path.join(args.out, "regions.json")
    save_regions(rs, out)
    print(f"regions: {len(rs)} region(s) written to {out}")
    print(f"time: {time.monotonic() - t0:.1f} s")
    return 0


def _spread_boundary_rows(s: Scenario, n: int = 256):
    """Boundary samples of the exact and ball spread sets at the period-0
    nominal wind, unit multiplier, origin ignition (figure 1/2 data)."""
    p = s.spread
    w = p.nominal_wind[0]
    speed = float(np.linalg.norm(w))
    nu = speed + p.epsilon
    phi = math.atan2(w[1], w[0]) if speed > 0 else 0.0
    center = sigma(nu, p.V, p) * w
    radius = tau(nu, p.V, p)
    rows = [("angle", "exact_x", "exact_y", "ball_x", "ball_y")]
    for k in range(n):
        th = 2.0 * math.pi * k / n
        align = max(0.0, speed * math.cos(th - phi))
        r = p.V * (1.0 + p.C * align**p.B)
        rows.append((
            _fmt(th),
            _fmt(r * math.cos(th)), _fmt(r * math.sin(th)),
            _fmt(center[0] + radius * math.cos(th)),
            _fmt(center[1] + radius * math.sin(th)),
        ))
    return rows


def cmd_screen(args) -> int:
    s = _apply_flex(load_scenario(args.scenario), args.flex)
    variant = _pick_variant(args, s)
    opts = _solve_options(args)
    eids = s.element_ids()
    masks = list(_enumerate_masks(len(eids)))
    payloads = [(s, mask, eids, variant, opts) for mask in masks]
    t0 = time.monotonic()
    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            results = list(pool.map(_screen_one, payloads))
    else:
        results = [_screen_one(p) for p in payloads]
    results.sort(key=lambda r: r[0])
    total = time.monotonic() - t0
    os.makedirs(args.out, exist_ok=True)
    rows = [("subset", "elements", "tstar", "gap")]
    tstars = {}
    for mask, tstar, gap, _dt in results:
        tstars[mask] = tstar
        ids = ";".join(sorted(_subset_ids(mask, eids)))
        rows.append((mask, ids, "none" if tstar is None else tstar, _fmt(gap)))
    out = os.path.join(args.out, "screen.csv")
    _write_csv(out, rows, [f"elements: {','.join(eids)}"])
    violations = []
    for m1 in masks:
        for m2 in masks:
            if m1 != m2 and m1 & m2 == m1:
                t1 = math.inf if tstars[m1] is None else tstars[m1]
                t2 = math.inf if tstars[m2] is None else tstars[m2]
                if t1 > t2:
                    violations.append((m1, m2))
    for mask, tstar, _gap, dt in results:
        label = "none" if tstar is None else tstar
        print(f"subset {mask}: t* = {label} ({dt:.1f} s)")
    if violations:
        print(f"monotonicity check: {len(violations)} violation(s): {violations}")
    else:
        print("monotonicity check: OK")
    print(f"screen: {len(masks)} subset(s) written to {out}")
    print(f"time: {total:.1f} s")
    if args.plot_data:
        _write_csv(
            os.path.join(args.out, "fig4_outage_times.csv"),
            [("subset", "size", "tstar")] + [
                (mask, bin(mask).count("1"),
                 "none" if tstars[mask] is None else tstars[mask])
                for mask in masks
            ],
        )
        _write_csv(os.path.join(args.out, "fig1_spread_boundary.csv"),
                   _spread_boundary_rows(s))
    return 1 if violations else 0


def _weight_table(g, dispatch, s: Scenario, opts):
    """c_t(subset) = extra recourse shed cost for every subset and period."""
    eids = s.element_ids()
    weights = {}
    for mask in _enumerate_masks(len(eids)):
        sub = _subset_ids(mask, eids)
        for t in range(s.horizon + 1):
            weights[(t, sub)] = contingency_cost(g, dispatch, sub, t, opts)
    return weights


def cmd_sequence(args) -> int:
    s = _apply_flex(load_scenario(args.scenario), args.flex)
    g = load_grid(args.grid)
    line_ids = {ln.id for ln in g.lines}
    unknown = [e for e in s.element_ids() if e not in line_ids]
    if unknown:
        raise ValueError(f"scenario elements missing from the grid: {unknown}")
    if g.horizon < s.horizon:
        raise ValueError("grid horizon is shorter than the scenario horizon")
    variant = _pick_variant(args, s)
    opts = _solve_options(args)
    t0 = time.monotonic()
    base_sol = solve_lp(build_base_opf(g), opts)
    if base_sol.status != "Optimal":
        raise RuntimeError(f"base OPF returned {base_sol.status}")
    dispatch = extract_dispatch(g, base_sol.values)
    weights = _weight_table(g, dispatch, s, opts)
    if all(c <= 0.0 for c in weights.values()):
        raise ValueError("no weighted subsets: every contingency is costless")
    sw = Scenario(s.elements, s.horizon, s.spread, s.regions, s.ignition, weights)
    full = frozenset(s.element_ids())
    tstar, _traj0, _gap = min_time_to_outage(sw, full, variant, opts)
    if tstar is None:
        print("sequence: no feasible outage of all elements within the horizon; "
              "consider increasing T")
        base_obj = 0.0
        opt_obj, traj = 0.0, None
    else:
        base_obj = sum(weights[(t, full)] for t in range(tstar, s.horizon + 1))
        opt_obj, traj = max_shed_sequence(sw, variant, opts)
    total = time.monotonic() - t0
    os.makedirs(args.out, exist_ok=True)
    rows = [
        ("measure", "value"),
        ("base_cost_usd", _fmt(base_cost(g, dispatch))),
        ("tstar_full", "none" if tstar is None else tstar),
        ("base_shed_cost_usd", _fmt(base_obj)),
        ("optimal_shed_cost_usd", _fmt(opt_obj)),
        ("base_shed_mwh", _fmt(base_obj / g.shed_cost)),
        ("optimal_shed_mwh", _fmt(opt_obj / g.shed_cost)),
    ]
    out = os.path.join(args.out, "sequence.csv")
    _write_csv(out, rows)
    counts = [("t", "outaged_total", "outaged_new")]
    if traj is not None:
        for t in range(s.horizon + 1):
            tot = sum(traj.outages[e][t] for e in traj.outages)
            new = sum(
                traj.outages[e][t] and (t == 0 or not traj.outages[e][t - 1])
                for e in traj.outages
            )
            counts.append((t, tot, new))
        _write_csv(os.path.join(args.out, "trajectory.csv"),
                   trajectory_csv_rows(traj))
    _write_csv(os.path.join(args.out, "outage_counts.csv"), counts)
    if args.plot_data:
        _write_csv(os.path.join(args.out, "fig5_outage_counts.csv"), counts)
    print(f"sequence: base {base_obj / g.shed_cost:.6g} MWh shed, "
          f"optimal {opt_obj / g.shed_cost:.6g} MWh shed, written to {out}")
    print(f"time: {total:.1f} s")
    return 0


def _parse_tstar_csv(path):
    """Read a screen.csv back into (element list, {subset mask: t* or None})."""
    eids = None
    tstars = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line.startswith("# elements:"):
                eids = [e for e in line.split(":", 1)[1].strip().split(",") if e]
                continue
            if not line or line.startswith("#") or line.startswith("subset,"):
                continue
            parts = line.split(",")
            mask = int(parts[0])
            tstars[mask] = None if parts[2] == "none" else int(parts[2])
    if eids is None:
        raise ValueError(f"{path} is missing the '# elements:' header")
    return eids, tstars


def _recourse_shed(g, dispatch, K, opts) -> float:
    """Total shed MWh over the contingency set under a fixed dispatch."""
    total = 0.0
    for sub, t in K:
        extra = contingency_cost(g, dispatch, sub, t, opts) / g.shed_cost
        base = sum(dispatch.shed[(b.id, t)] for b in g.buses)
        total += extra + base
    return total


def cmd_opf(args) -> int:
    g = load_grid(args.grid)
    opts = _solve_options(args)
    mode = args.contingencies
    if args.elements:
        eids = [e.strip() for e in args.elements.split(",") if e.strip()]
        unknown = [e for e in eids if e not in {ln.id for ln in g.lines}]
        if unknown:
            raise ValueError(f"unknown element line ids: {unknown}")
    else:
        eids = sorted(ln.id for ln in g.lines)
    masks = list(_enumerate_masks(len(eids)))
    K_all = [(_subset_ids(mask, eids), t)
             for mask in masks for t in g.periods]
    K_thr = None
    tstar_path = args.tstar
    if mode.startswith("threshold:"):
        tstar_path = mode.split(":", 1)[1]
        mode = "threshold"
    if tstar_path:
        teids, tstars = _parse_tstar_csv(tstar_path)
        subsets = {mask: _subset_ids(mask, teids) for mask in tstars}
        K_thr = threshold_contingencies(
            {subsets[mask]: ts for mask, ts in tstars.items()},
            g.horizon,
            list(subsets.values()),
        )
    if mode == "none":
        K = []
    elif mode == "all":
        K = K_all
    elif mode == "threshold":
        if K_thr is None:
            raise ValueError("threshold mode needs a tstar CSV path")
        K = K_thr
    else:
        raise ValueError(f"unknown contingency mode {mode!r}")
    t0 = time.monotonic()
    result = solve_scopf(g, K, opts)
    shed_thr = (_recourse_shed(g, result.dispatch, K_thr, opts)
                if K_thr is not None else None)
    shed_all = _recourse_shed(g, result.dispatch, K_all, opts)
    total = time.monotonic() - t0
    os.makedirs(args.out, exist_ok=True)
    rows = [
        ("measure", "value"),
        ("mode", mode),
        ("contingency_count", len(K)),
        ("objective_usd_per_hr", _fmt(result.objective)),
        ("base_cost_usd", _fmt(result.base_cost)),
        ("shed_threshold_mwh", "" if shed_thr is None else _fmt(shed_thr)),
        ("shed_all_mwh", _fmt(shed_all)),
    ]
    out = os.path.join(args.out, "opf.csv")
    _write_csv(out, rows, [
        "contingency counting: all nonempty subsets of "
        f"{len(eids)} element(s) x periods 0..{g.horizon}",
    ])
    print(f"opf: |K| = {len(K)}, base cost {result.base_cost:.6g} $, "
          f"written to {out}")
    print(f"time: {total:.1f} s")
    return 0


def cmd_export(args) -> int:
    s = _apply_flex(load_scenario(args.scenario), args.flex)
    variant = _pick_variant(args, s)
    t0 = time.monotonic()
    model = build_micp(s, variant)
    os.makedirs(args.out, exist_ok=True)
    out = os.path.join(args.out, "model.txt")
    export_model(model, out)
    print(f"export: {len(model.variables)} variable(s), "
          f"{len(model.linear)} linear row(s), {len(model.socs)} cone(s) "
          f"written to {out}")
    print(f"time: {time.monotonic() - t0:.1f} s")
    if args.plot_data:
        _write_csv(os.path.join(args.out, "fig1_spread_boundary.csv"),
                   _spread_boundary_rows(s))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="firescreen",
        description="Adversarial wildfire trajectories and grid contingency "
                    "screening",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("regions", help="build a region file from a raster")
    p.add_argument("--raster", required=True)
    p.add_argument("--wind-speed", type=float, default=0.0,
                   help="mean wind speed in knots for the WFPI rescale")
    p.add_argument("--depth", type=int, default=DEFAULT_DEPTH)
    p.add_argument("--reg", type=float, default=DEFAULT_REG)
    _add_common(p)
    p.set_defaults(func=cmd_regions)

    p = sub.add_parser("screen", help="min time-to-outage for every subset")
    p.add_argument("--scenario", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_screen)

    p = sub.add_parser("sequence", help="load-shed-weighted outage schedule")
    p.add_argument("--scenario", required=True)
    p.add_argument("--grid", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_sequence)

    p = sub.add_parser("opf", help="security constrained dispatch")
    p.add_argument("--grid", required=True)
    p.add_argument("--contingencies", default="none",
                   help="none | all | threshold:screen.csv")
    p.add_argument("--elements", default=None,
                   help="comma-separated line ids (default: every line)")
    p.add_argument("--tstar", default=None,
                   help="screen.csv for threshold-set shed evaluation")
    _add_common(p)
    p.set_defaults(func=cmd_opf)

    p = sub.add_parser("export", help="write the conic model of a scenario")
    p.add_argument("--scenario", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_export)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (OSError, json.JSONDecodeError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (SolveLimit, RuntimeError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
