# test_cli.py: scenario parsing, exit codes and the command outputs
import json
from pathlib import Path

import numpy as np
import pytest

from cli import EXIT_CHECK_FAILED, EXIT_OK, EXIT_USAGE, main, parse_scenario
from errors import FrameViolation, ScenarioError
from grid_fields import read_raster
from oracles import BallOracle, CrossOracle, SquareL1Oracle

SCENARIOS = Path(__file__).parent / "scenarios"


def _write(tmp_path, payload, name="tiny.json"):
    path = tmp_path / name
    path.write_text(json.dumps(payload, indent=2))
    return path


@pytest.fixture
def tiny(tmp_path):
    return {
        "domain": {"origin": [-0.6, -0.6], "extent": [1.2, 1.2], "cells": [32, 32]},
        "shape": {"kind": "ball", "radius": 0.4},
        "phi": "euclidean",
        "psi": "euclidean",
        "h": 0.02,
        "t_max": 0.5,
        "solver": {"tol_gap": 1e-4, "max_iters": 5000},
        "probes": [0.02],
        "output": str(tmp_path / "out"),
    }


class TestScenario:
    @pytest.mark.parametrize("name", ["cross", "disk", "square_l1", "disk_family", "wulff_hex"])
    def test_shipped_scenarios_parse(self, name):
        scenario = parse_scenario(SCENARIOS / f"{name}.json")
        assert scenario.name == name
        assert scenario.h > 0 and scenario.t_max > 0

    def test_oracles(self):
        assert isinstance(parse_scenario(SCENARIOS / "cross.json").oracle(), CrossOracle)
        assert isinstance(parse_scenario(SCENARIOS / "disk.json").oracle(), BallOracle)
        assert isinstance(parse_scenario(SCENARIOS / "square_l1.json").oracle(), SquareL1Oracle)

    def test_solver_options(self):
        scenario = parse_scenario(SCENARIOS / "cross.json")
        assert scenario.solver.tol_gap == 1e-6
        assert scenario.distance == "subcell"
        assert scenario.scheme().h == scenario.h

    def test_no_oracle_when_gauges_differ(self, tmp_path, tiny):
        tiny["psi"] = "l1"
        assert parse_scenario(_write(tmp_path, tiny)).oracle() is None

    def test_missing_h(self, tmp_path, tiny):
        del tiny["h"]
        with pytest.raises(ScenarioError, match="h required"):
            parse_scenario(_write(tmp_path, tiny))

    def test_unknown_key_has_line(self, tmp_path, tiny):
        tiny["bogus"] = 1
        with pytest.raises(ScenarioError, match=r"^line \d+: unknown key bogus") as info:
            parse_scenario(_write(tmp_path, tiny))
        assert info.value.line is not None

    def test_unknown_solver_key(self, tmp_path, tiny):
        tiny["solver"]["tolerance"] = 1.0
        with pytest.raises(ScenarioError, match="solver.tolerance"):
            parse_scenario(_write(tmp_path, tiny))

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"h": 0.1,\n  "t_max": }')
        with pytest.raises(ScenarioError, match="^line 2"):
            parse_scenario(path)

    def test_frame_violation(self, tmp_path, tiny):
        tiny["shape"]["radius"] = 0.58
        with pytest.raises(FrameViolation, match=r"^line \d+: frame violation"):
            parse_scenario(_write(tmp_path, tiny))

    def test_probe_outside_run(self, tmp_path, tiny):
        tiny["probes"] = [2.0]
        with pytest.raises(ScenarioError):
            parse_scenario(_write(tmp_path, tiny))

    def test_generated_disk_union(self, tmp_path, tiny):
        tiny["domain"] = {"origin": [-1.2, -1.2], "extent": [2.4, 2.4], "cells": [64, 64]}
        tiny["shape"] = {"kind": "disk-union", "generate": 3, "seed": 5}
        scenario = parse_scenario(_write(tmp_path, tiny))
        dom, e0, level = scenario.build()
        assert len(scenario.oracle().radii) == 3
        assert level is not None


class TestExitCodes:
    def test_usage_errors(self, tmp_path, tiny):
        tiny["shape"]["radius"] = 0.58
        assert main(["run", "--scenario", str(_write(tmp_path, tiny))]) == EXIT_USAGE
        del tiny["h"]
        assert main(["step", "--scenario", str(_write(tmp_path, tiny))]) == EXIT_USAGE

    def test_missing_file(self, tmp_path):
        assert main(["run", "--scenario", str(tmp_path / "nope.json")]) == EXIT_USAGE

    def test_uncertified_run(self, tmp_path, tiny):
        tiny["solver"] = {"max_iters": 1}
        assert main(["run", "--scenario", str(_write(tmp_path, tiny))]) == EXIT_CHECK_FAILED
        report = json.loads((tmp_path / "out" / "report.json").read_text())
        assert report["passed"] is False and "aborted" in report

    @pytest.mark.parametrize("prop", ["lipschitz", "superharmonic"])
    def test_check_without_extinction_fails(self, tmp_path, tiny, prop):
        tiny["t_max"] = 0.04
        assert main(["check", "--scenario", str(_write(tmp_path, tiny)), "--property", prop]) == EXIT_CHECK_FAILED
        report = json.loads((tmp_path / "out" / "report.json").read_text())
        assert report["passed"] is False
        assert [c["name"] for c in report["checks"]] == [prop]
        assert "extinction" in report["checks"][0]["details"]["not_run"]

    def test_bad_worker_count(self, tmp_path, tiny, monkeypatch):
        monkeypatch.setenv("ATWFLOW_WORKERS", "many")
        assert main(["distance", "--scenario", str(_write(tmp_path, tiny))]) == EXIT_USAGE


class TestCommands:
    def test_run(self, tmp_path, tiny):
        assert main(["run", "--scenario", str(_write(tmp_path, tiny))]) == EXIT_OK
        out = tmp_path / "out"
        report = json.loads((out / "report.json").read_text())
        assert report["extinct"]
        assert report["oracle"]["kind"] == "shrinking_ball"
        assert report["extinction_time"] == pytest.approx(0.08, abs=0.1)
        assert (out / "trace.csv").read_text().startswith("n,t,volume,P_phi,delta_cert,residual")
        values, _, kind = read_raster(out / "arrival.atwf")
        assert kind == "scalar" and values.max() == pytest.approx(report["extinction_time"])
        assert (out / "arrival.png").exists()
        assert (out / "probe_0.02.svg").read_text().count("<path") >= 1

    def test_step(self, tmp_path, tiny):
        assert main(["step", "--scenario", str(_write(tmp_path, tiny)), "--h", "0.01"]) == EXIT_OK
        out = tmp_path / "out"
        record = json.loads((out / "step.json").read_text())
        assert record["certified"]
        assert record["h"] == 0.01
        assert record["volume"] < record["input_volume"]
        for name in ("next_set.atwf", "w.atwf", "z1.atwf", "z2.atwf", "next_set.svg"):
            assert (out / name).exists()

    def test_step_from_raster(self, tmp_path, tiny):
        path = str(_write(tmp_path, tiny))
        assert main(["step", "--scenario", path]) == EXIT_OK
        nxt = tmp_path / "out" / "next_set.atwf"
        second = tmp_path / "second"
        assert main(["step", "--scenario", path, "--set", str(nxt), "--output", str(second)]) == EXIT_OK
        first = json.loads((tmp_path / "out" / "step.json").read_text())
        again = json.loads((second / "step.json").read_text())
        assert again["input_volume"] == pytest.approx(first["volume"])

    def test_distance(self, tmp_path, tiny):
        assert main(["distance", "--scenario", str(_write(tmp_path, tiny)), "--method", "bruteforce"]) == EXIT_OK
        info = json.loads((tmp_path / "out" / "distance.json").read_text())
        assert info["method"] == "bruteforce"
        assert info["min"] < 0 < info["max"]
        values, _, _ = read_raster(tmp_path / "out" / "distance.atwf")
        assert values.shape == (32, 32)

    def test_check_mc_delta(self, tmp_path, tiny):
        code = main(["check", "--scenario", str(_write(tmp_path, tiny)), "--property", "mc-delta", "--samples", "16"])
        assert code == EXIT_OK
        report = json.loads((tmp_path / "out" / "report.json").read_text())
        assert [c["name"] for c in report["checks"]] == ["mc-delta"]

    def test_check_lipschitz_uses_certificate(self, tmp_path, tiny):
        code = main(["check", "--scenario", str(_write(tmp_path, tiny)), "--property", "lipschitz"])
        report = json.loads((tmp_path / "out" / "report.json").read_text())
        assert code in (EXIT_OK, EXIT_CHECK_FAILED)
        assert report["passed"] == (code == EXIT_OK)
        assert report["checks"][0]["details"]["delta"] > 0

    def test_check_refine(self, tmp_path, tiny):
        code = main(["check", "--scenario", str(_write(tmp_path, tiny)), "--property", "refine", "--levels", "2"])
        assert code in (EXIT_OK, EXIT_CHECK_FAILED)
        report = json.loads((tmp_path / "out" / "report.json").read_text())
        rows = report["checks"][0]["details"]["rows"]
        assert [r["h"] for r in rows] == [0.04, 0.02]
        assert [r["cells"] for r in rows] == [[16, 16], [32, 32]]


class TestOracleCommand:
    def test_cross_svg(self, capsys):
        assert main(["oracle", "cross", "--t", "0.5", "--emit", "svg"]) == EXIT_OK
        out = capsys.readouterr().out
        assert out.startswith("<?xml")
        assert out.count("<path") == 1

    def test_cross_csv(self, capsys):
        assert main(["oracle", "cross", "--t", "0.5", "--emit", "csv"]) == EXIT_OK
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == "x,y"
        assert len(lines) == 13

    def test_cross_json_arrival(self, capsys):
        assert main(["oracle", "cross", "--x", "0,0"]) == EXIT_OK
        payload = json.loads(capsys.readouterr().out)
        assert payload["arrival"] == pytest.approx(1.5)
        assert payload["volume"] == pytest.approx(12.0)
        assert len(payload["vertices"]) == 12

    def test_ball(self, capsys):
        assert main(["oracle", "ball", "--t", "0.375", "--R0", "1"]) == EXIT_OK
        payload = json.loads(capsys.readouterr().out)
        assert payload["perimeter"] == pytest.approx(np.pi)
        assert payload["extinction_time"] == pytest.approx(0.5)

    def test_calibration(self, capsys):
        assert main(["oracle", "calibration"]) == EXIT_OK
        payload = json.loads(capsys.readouterr().out)
        assert payload["passed"] is True
        assert payload["details"]["max_dual"] <= 1.0

    def test_disk_family(self, capsys):
        assert main(["oracle", "disk-family", "--n-disks", "3", "--seed", "2"]) == EXIT_OK
        payload = json.loads(capsys.readouterr().out)
        assert len(payload["radii"]) == 3
        assert payload["delta"] == 0.25

    def test_writes_file(self, tmp_path):
        assert main(["oracle", "square", "--t", "0.1", "--emit", "csv", "--output", str(tmp_path)]) == EXIT_OK
        assert (tmp_path / "square.csv").read_text().startswith("x,y")

    def test_bad_point(self):
        assert main(["oracle", "cross", "--x", "a,b"]) == EXIT_USAGE
