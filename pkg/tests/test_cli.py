import csv
import json

import pytest

from caasim.cli import (
    _parse_sweep_expr,
    bundled_scenario_path,
    main,
    parse_scenario,
)
from caasim.errors import ScenarioError

TINY = {
    "name": "tiny",
    "seed": 5,
    "duration_s": 30.0,
    "area": {"lat_min_deg": -3.0, "lat_max_deg": 3.0, "lon_min_deg": -8.0, "lon_max_deg": 8.0},
    "ue_count": 3,
    "shells": [
        {
            "shell_id": "mini",
            "satellite_count": 40,
            "plane_count": 8,
            "inclination_deg": 53.0,
            "altitude_km": 550.0,
        }
    ],
}


@pytest.fixture
def tiny_path(tmp_path):
    p = tmp_path / "tiny.json"
    p.write_text(json.dumps(TINY))
    return p


class TestParseScenario:
    def test_bundled_scenario_values(self):
        sc = parse_scenario(bundled_scenario_path())
        assert [s.satellite_count for s in sc.shells] == [1584, 648]
        assert [s.plane_count for s in sc.shells] == [72, 18]
        assert [s.inclination_deg for s in sc.shells] == [53.0, 86.4]
        assert [s.altitude_km for s in sc.shells] == [550.0, 1200.0]
        assert sc.area.lat_min_deg == 0.0 and sc.area.lat_max_deg == 7.0
        assert sc.area.lon_min_deg == 95.0 and sc.area.lon_max_deg == 115.0
        assert sc.link.carrier_frequency_hz == 2e9
        assert sc.link.bandwidth_hz == 30e6
        assert sc.link.tx_power_dbw == 34.0
        assert sc.link.sat_antenna_gain_dbi == 30.0
        assert sc.duration_s == 600.0
        assert sc.ue_count == 40

    def test_empty_file_is_parse_error(self, tmp_path):
        p = tmp_path / "empty.json"
        p.write_text("")
        with pytest.raises(ScenarioError):
            parse_scenario(p)

    def test_out_of_range_inclination_names_key_path(self, tmp_path):
        bad = dict(TINY)
        bad["shells"] = [dict(TINY["shells"][0], inclination_deg=190.0)]
        p = tmp_path / "bad.json"
        p.write_text(json.dumps(bad))
        with pytest.raises(ScenarioError) as err:
            parse_scenario(p)
        assert "shells[0].inclination" in str(err.value)

    def test_unknown_key_rejected_with_path(self, tmp_path):
        bad = dict(TINY)
        bad["link"] = {"warp_factor": 9}
        p = tmp_path / "bad.json"
        p.write_text(json.dumps(bad))
        with pytest.raises(ScenarioError) as err:
            parse_scenario(p)
        assert "link.warp_factor" in str(err.value)

    def test_missing_required_key(self, tmp_path):
        bad = {k: v for k, v in TINY.items() if k != "seed"}
        p = tmp_path / "bad.json"
        p.write_text(json.dumps(bad))
        with pytest.raises(ScenarioError) as err:
            parse_scenario(p)
        assert "seed" in str(err.value)

    def test_defaults_applied(self, tiny_path):
        sc = parse_scenario(tiny_path)
        assert sc.time_step_s == 1.0
        assert sc.elevation_mask_deg == 10.0
        assert sc.link.spectral_efficiency_cap == 7.8
        assert sc.standalone.grid_beams is None


class TestSweepExpr:
    def test_range(self):
        assert _parse_sweep_expr("20..120:20") == [20, 40, 60, 80, 100, 120]

    def test_single_point(self):
        assert _parse_sweep_expr("40..40:1") == [40]

    def test_bare_number(self):
        assert _parse_sweep_expr("40") == [40]

    def test_malformed(self):
        with pytest.raises(ScenarioError):
            _parse_sweep_expr("a..b:c")
        with pytest.raises(ScenarioError):
            _parse_sweep_expr("40..20:5")


class TestMain:
    def test_simulate_byte_identical(self, tiny_path, tmp_path):
        out1, out2 = tmp_path / "r1", tmp_path / "r2"
        assert main(["simulate", "--scenario", str(tiny_path), "--strategy", "caas",
                     "--out-dir", str(out1)]) == 0
        assert main(["simulate", "--scenario", str(tiny_path), "--strategy", "caas",
                     "--out-dir", str(out2)]) == 0
        assert (out1 / "metrics.json").read_bytes() == (out2 / "metrics.json").read_bytes()
        assert (out1 / "events.jsonl").read_bytes() == (out2 / "events.jsonl").read_bytes()

    def test_simulate_verbose_writes_allocations(self, tiny_path, tmp_path):
        out = tmp_path / "v"
        assert main(["simulate", "--scenario", str(tiny_path), "--strategy", "standalone",
                     "--out-dir", str(out), "--verbose"]) == 0
        with open(out / "allocations.csv") as fh:
            header = next(csv.reader(fh))
        assert header == ["time_s", "sat_id", "ue_id", "power_w", "sinr_db", "rate_bps"]

    def test_coverage_csv(self, tiny_path, tmp_path):
        out = tmp_path / "w.csv"
        assert main(["coverage", "--scenario", str(tiny_path), "--out", str(out)]) == 0
        with open(out) as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["satellite_id", "ue_id", "start_s", "end_s", "peak_elevation_deg"]
        assert len(rows) > 1
        # no temp files left behind
        assert not list(tmp_path.glob("*.tmp"))

    def test_compare_csv_shape(self, tiny_path, tmp_path):
        out = tmp_path / "cmp.csv"
        assert main(["compare", "--scenario", str(tiny_path), "--ues", "2..4:2",
                     "--seeds", "1", "--out", str(out)]) == 0
        with open(out) as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == [
            "ue_count", "strategy", "atr_mean_bps", "atr_std",
            "ho_per_ue_mean", "ho_per_ue_std", "pingpong_mean", "signaling_mean",
        ]
        assert len(rows) == 1 + 2 * 2  # two counts x two strategies

    def test_hgm_prints_graph(self, tiny_path, tmp_path, capsys):
        dot = tmp_path / "g.dot"
        code = main(["hgm", "--scenario", str(tiny_path), "--ue", "ue-000", "--dot", str(dot)])
        out = capsys.readouterr().out
        assert code == 0
        assert "handover graph for ue-000" in out
        assert dot.read_text().startswith("digraph")

    def test_validation_error_exit_1(self, tmp_path, capsys):
        p = tmp_path / "bad.json"
        p.write_text("{}")
        assert main(["simulate", "--scenario", str(p)]) == 1
        assert "error" in capsys.readouterr().err

    def test_io_error_exit_2(self, tmp_path, capsys):
        assert main(["simulate", "--scenario", str(tmp_path / "absent.json")]) == 2

    def test_bad_cli_args_exit_1(self, tiny_path):
        assert main(["simulate", "--scenario", str(tiny_path), "--strategy", "nope"]) == 1

    def test_help_lists_flags(self, capsys):
        assert main(["simulate", "--help"]) == 0
        out = capsys.readouterr().out
        for flag in ("--scenario", "--seed", "--strategy", "--out-dir", "--verbose"):
            assert flag in out

    def test_seed_override_changes_results(self, tiny_path, tmp_path):
        o1, o2 = tmp_path / "a", tmp_path / "b"
        main(["simulate", "--scenario", str(tiny_path), "--out-dir", str(o1)])
        main(["simulate", "--scenario", str(tiny_path), "--seed", "99", "--out-dir", str(o2)])
        assert (o1 / "metrics.json").read_text() != (o2 / "metrics.json").read_text()
