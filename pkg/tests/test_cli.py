import json


from firescreen.cli import main

from conftest import scenario_json


def _read(path):
    return path.read_text()


def test_regions_command(tmp_path, half_raster):
    out = tmp_path / "out"
    rc = main(["regions", "--raster", str(half_raster), "--wind-speed", "0",
               "--out", str(out)])
    assert rc == 0
    data = json.loads((out / "regions.json").read_text())
    assert len(data["regions"]) == 2


def test_regions_missing_file_exit_2(tmp_path, capsys):
    rc = main(["regions", "--raster", str(tmp_path / "nope.txt"),
               "--out", str(tmp_path / "o")])
    assert rc == 2
    assert "nope.txt" in capsys.readouterr().err


def test_screen_single_element(tmp_path, small_scenario_file):
    out = tmp_path / "out"
    rc = main(["screen", "--scenario", str(small_scenario_file),
               "--variant", "ball", "--out", str(out)])
    assert rc == 0
    lines = _read(out / "screen.csv").splitlines()
    assert lines[0] == "# elements: L1"
    assert lines[1] == "subset,elements,tstar,gap"
    assert lines[2].startswith("1,L1,2,")


def test_screen_subset_count_and_monotonicity(tmp_path):
    data = scenario_json(T=3, ids=("a", "b"),
                         centers=((0.46, 0.5), (0.42, 0.56)))
    path = tmp_path / "s.json"
    path.write_text(json.dumps(data))
    out = tmp_path / "out"
    rc = main(["screen", "--scenario", str(path), "--variant", "ball",
               "--out", str(out), "--plot-data"])
    assert rc == 0
    rows = [l for l in _read(out / "screen.csv").splitlines()
            if l and not l.startswith(("#", "subset"))]
    assert len(rows) == 3  # 2^2 - 1
    assert (out / "fig4_outage_times.csv").exists()
    assert (out / "fig1_spread_boundary.csv").exists()


def test_screen_ignition_inside_element(tmp_path):
    data = scenario_json(T=1, centers=((0.4, 0.5),), ignition=(0.4, 0.5))
    path = tmp_path / "s.json"
    path.write_text(json.dumps(data))
    out = tmp_path / "out"
    assert main(["screen", "--scenario", str(path), "--variant", "ball",
                 "--out", str(out)]) == 0
    assert "1,L1,0," in _read(out / "screen.csv")


def test_opf_modes(tmp_path, small_scenario_file, small_grid_file):
    outs = tmp_path / "screen"
    assert main(["screen", "--scenario", str(small_scenario_file),
                 "--variant", "ball", "--out", str(outs)]) == 0
    out0 = tmp_path / "none"
    assert main(["opf", "--grid", str(small_grid_file),
                 "--contingencies", "none", "--out", str(out0)]) == 0
    assert "contingency_count,0" in _read(out0 / "opf.csv")
    out1 = tmp_path / "thr"
    assert main(["opf", "--grid", str(small_grid_file),
                 "--contingencies", f"threshold:{outs / 'screen.csv'}",
                 "--out", str(out1)]) == 0
    assert "contingency_count,1" in _read(out1 / "opf.csv")
    out2 = tmp_path / "all"
    assert main(["opf", "--grid", str(small_grid_file),
                 "--contingencies", "all", "--out", str(out2)]) == 0
    assert "contingency_count,3" in _read(out2 / "opf.csv")


def test_opf_threshold_all_none_matches_mode_none(tmp_path, small_grid_file):
    screen = tmp_path / "screen.csv"
    screen.write_text("# elements: L1\nsubset,elements,tstar,gap\n"
                      "1,L1,none,0\n")
    out = tmp_path / "out"
    assert main(["opf", "--grid", str(small_grid_file),
                 "--contingencies", f"threshold:{screen}",
                 "--out", str(out)]) == 0
    text = _read(out / "opf.csv")
    assert "contingency_count,0" in text


def test_sequence_single_weighted_subset(tmp_path, small_scenario_file,
                                         small_grid_file):
    out = tmp_path / "out"
    rc = main(["sequence", "--scenario", str(small_scenario_file),
               "--grid", str(small_grid_file), "--variant", "ball",
               "--out", str(out)])
    assert rc == 0
    text = _read(out / "sequence.csv")
    # one element: base and optimal must agree
    base = [l for l in text.splitlines() if l.startswith("base_shed_mwh")][0]
    opt = [l for l in text.splitlines() if l.startswith("optimal_shed_mwh")][0]
    assert base.split(",")[1] == opt.split(",")[1]
    assert (out / "outage_counts.csv").exists()


def test_sequence_unknown_element_exit_2(tmp_path, small_grid_file, capsys):
    data = scenario_json(ids=("BOGUS",))
    path = tmp_path / "s.json"
    path.write_text(json.dumps(data))
    rc = main(["sequence", "--scenario", str(path),
               "--grid", str(small_grid_file), "--out", str(tmp_path / "o")])
    assert rc == 2
    assert "BOGUS" in capsys.readouterr().err


def test_export_and_rothermel_guard(tmp_path, small_scenario_file, capsys):
    out = tmp_path / "out"
    assert main(["export", "--scenario", str(small_scenario_file),
                 "--variant", "ip-rmc2m", "--out", str(out)]) == 0
    assert (out / "model.txt").exists()
    # rothermel-oracle with eps > 0 must be an input error
    data = scenario_json(eps=2.0)
    path = tmp_path / "s.json"
    path.write_text(json.dumps(data))
    rc = main(["export", "--scenario", str(path),
               "--variant", "rothermel-oracle", "--out", str(out)])
    assert rc == 2


def test_flex_modes(tmp_path, small_scenario_file):
    out = tmp_path / "lf"
    assert main(["export", "--scenario", str(small_scenario_file),
                 "--variant", "ball", "--flex", "lf",
                 "--out", str(out)]) == 0
    out2 = tmp_path / "hf"
    assert main(["export", "--scenario", str(small_scenario_file),
                 "--variant", "ball", "--flex", "hf",
                 "--out", str(out2)]) == 0
    # hf frees the ignition: the model gains shared x0 variables
    assert "x0_0" in (out2 / "model.txt").read_text()
    assert "x0_0" not in (out / "model.txt").read_text()


def test_element_cap(tmp_path):
    ids = [f"e{i}" for i in range(13)]
    centers = [(0.4 + 0.004 * i, 0.5) for i in range(13)]
    data = scenario_json(T=1, ids=tuple(ids), centers=tuple(centers))
    path = tmp_path / "s.json"
    path.write_text(json.dumps(data))
    rc = main(["screen", "--scenario", str(path), "--variant", "ball",
               "--out", str(tmp_path / "o")])
    assert rc == 2
