import json

import numpy as np
import pytest

from hsh.cli import SCHEMA_VERSION, main, substream

GOLDEN_ARGS = ["--scenario", "golden", "--j", "1"]


def report(out):
    return json.loads((out / "report.json").read_text())


def test_simulate_writes_outputs(tmp_path):
    assert main(["simulate", "--scenario", "golden", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "trajectory.csv").read_text().startswith("time,particle,")
    events = json.loads((tmp_path / "events.json").read_text())
    assert len(events) == 4


def test_verify_golden(tmp_path):
    assert main(["verify", *GOLDEN_ARGS, "--out", str(tmp_path)]) == 0
    rep = report(tmp_path)
    assert rep["pass"] and rep["audit"]["clean"]
    assert all(r["residual"] <= 1e-9 for r in rep["results"])
    assert rep["config"]["schema_version"] == SCHEMA_VERSION


def test_reports_are_reproducible(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert main(["verify", *GOLDEN_ARGS, "--seed", "3", "--out", str(out)]) == 0
    ra, rb = report(a), report(b)
    ra.pop("timestamp"), rb.pop("timestamp")
    ra["config"].pop("out"), rb["config"].pop("out")
    assert json.dumps(ra, sort_keys=True) == json.dumps(rb, sort_keys=True)


def test_injected_sign_fault_fails_verification(tmp_path):
    assert main(["verify", *GOLDEN_ARGS, "--inject-fault", "sign", "--out", str(tmp_path)]) == 2
    assert not report(tmp_path)["pass"]


def test_policy_none_is_pathology(tmp_path):
    assert main(["enskog", "--policy", "none", "--n-max", "2", "--out", str(tmp_path)]) == 3
    rep = report(tmp_path)
    assert rep["divergence"]["error"] == "AmbiguityError" and rep["divergence"]["term"]["tree"]
    assert rep["none_policy"]["error"] == "AmbiguityError"


def test_enskog_outputs(tmp_path):
    assert main(["enskog", "--n-max", "2", "--out", str(tmp_path)]) == 0
    rows = (tmp_path / "partial_sums.csv").read_text().strip().splitlines()
    assert len(rows) >= 2
    rep = report(tmp_path)
    assert rep["half_check"]["pass"] and rep["renormalized"]["pass"]
    assert rep["policy"]["kind"] == "symmetric"


def test_grazing_scenario_is_pathology(tmp_path):
    bad = tmp_path / "graze.json"
    bad.write_text(json.dumps({"epsilon": 1.0, "horizon": 3.0, "particles": [
        {"x": [0, 0, 0], "v": [1, 0, 0]}, {"x": [3, 1.0, 0], "v": [-1, 0, 0]}]}))
    assert main(["simulate", "--scenario", str(bad), "--out", str(tmp_path / "o")]) == 3


@pytest.mark.parametrize("extra", [
    ["--tol-override", "bogus=1"],
    ["--tol-override", "verify"],
    ["--scenario", "no-such-scenario"],
    ["--j", "0"],
])
def test_config_errors(tmp_path, extra):
    assert main(["verify", *extra, "--out", str(tmp_path)]) == 4


def test_schema_version_mismatch(tmp_path):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"schema_version": SCHEMA_VERSION + 1, "command": "simulate"}))
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path)]) == 4


def test_config_file_with_flag_override(tmp_path):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"schema_version": SCHEMA_VERSION, "command": "verify", "scenario": "golden",
                               "tolerances": {"verify": 1e-10}}))
    out = tmp_path / "o"
    assert main(["verify", "--config", str(cfg), "--tol-override", "verify=1e-12", "--out", str(out)]) == 0
    assert report(out)["tolerances"]["verify"] == 1e-12


def test_tolerance_override_can_fail(tmp_path):
    assert main(["jacobian", "--samples", "5", "--tol-override", "jacobian_n1=1e-30",
                 "--out", str(tmp_path)]) == 2


def test_search_exhausted(tmp_path):
    assert main(["search", "--target", "1-2,1-2", "--budget", "100", "--out", str(tmp_path)]) == 2
    assert report(tmp_path)["found"] is False


def test_partition_writes_scenario(tmp_path):
    assert main(["partition", "--scenario", "two-sphere", "--out", str(tmp_path)]) == 0
    sc = json.loads((tmp_path / "scenario.json").read_text())
    assert len(sc["partition"]) == 3


def test_substreams_are_independent():
    def draw(name):
        return np.random.default_rng(substream(0, name)).random(3)

    a = draw("search")
    assert (a != draw("jacobian")).all()
    assert (draw("search") == a).all()
