import json
import os

import pandas as pd
import pytest

from app import build_parser, main
from tests.conftest import SCENARIOS

SIGMA2 = """{
  "case_id": "sigma2",
  "dim": 1,
  "density": {"family": "scaled_gaussian", "sigma": 2.0},
  "method": "quantile",
  "degree": 21,
  "checks": ["identities", "theorem", "proposition"]
}"""

SHIFT = """{
  "case_id": "shift",
  "dim": 1,
  "density": {"family": "wick_shift", "h": [1.0]},
  "degree": 30,
  "checks": ["theorem", "chaos:6"]
}"""

FAKE_KERNEL = """{
  "case_id": "fake_kernel",
  "dim": 1,
  "density": {"family": "uniform"},
  "kernel": [[-2.0]],
  "checks": ["convexity:1"]
}"""


def read_json(path):
    with open(path, encoding="utf-8") as handle:
        return json.load(handle)


def test_verify_writes_a_report(write_config, tmp_path):
    out = tmp_path / "reports" / "sigma2.json"
    assert main(["verify", write_config("sigma2.json", SIGMA2), "--out", str(out), "--quiet"]) == 0
    payload = read_json(out)
    assert payload["checks"]["theorem"]["margin"] == pytest.approx(0.5, abs=1e-6)
    assert payload["checks"]["theorem"]["pass"] is True
    assert payload["versions"]["chaosbound"]


def test_verify_exit_code_on_failed_check(write_config, tmp_path):
    path = write_config("fake.json", FAKE_KERNEL)
    assert main(["verify", path, "--out", str(tmp_path / "fake.report.json"), "--quiet"]) == 2


def test_verify_exit_code_on_bad_config(write_config, tmp_path):
    path = write_config("broken.json", '{"case_id": "b", "dim": 1}')
    assert main(["verify", path, "--out", str(tmp_path / "b.json"), "--quiet"]) == 1
    assert not (tmp_path / "b.json").exists()


def test_tolerance_override_reaches_the_report(write_config, tmp_path):
    out = tmp_path / "fake.json.out"
    main(["verify", write_config("fake.json", FAKE_KERNEL), "--out", str(out), "--tol-override", "2.0", "--quiet"])
    payload = read_json(out)
    assert payload["tolerances"]["closed_form_tol"] == 2.0
    assert payload["checks"]["convexity"]["pass"] is True


def test_suite_isolates_broken_configs(tmp_path):
    suite = tmp_path / "suite"
    suite.mkdir()
    (suite / "a_sigma2.json").write_text(SIGMA2, encoding="utf-8")
    (suite / "b_broken.json").write_text('{"case_id": "b", "dim": 1, "density": ', encoding="utf-8")
    (suite / "c_shift.json").write_text(SHIFT, encoding="utf-8")
    out = tmp_path / "out"

    assert main(["suite", str(suite), "--workers", "1", "--out", str(out), "--quiet"]) == 1
    index = read_json(out / "index.json")
    assert index["total"] == 3 and index["errors"] == 1 and index["passed"] == 2
    assert (out / "a_sigma2.json").exists() and (out / "c_shift.json").exists()
    broken = next(case for case in index["cases"] if case["config"] == "b_broken.json")
    assert "b_broken.json" in broken["error"]


def test_suite_with_failures_exits_two(tmp_path):
    suite = tmp_path / "suite"
    suite.mkdir()
    (suite / "fake.json").write_text(FAKE_KERNEL, encoding="utf-8")
    assert main(["suite", str(suite), "--workers", "1", "--out", str(tmp_path / "out"), "--quiet"]) == 2


def test_empty_suite_is_an_error(tmp_path):
    assert main(["suite", str(tmp_path), "--quiet"]) == 1


def test_export_map_rows_follow_the_quantile_map(write_config, tmp_path):
    out = tmp_path / "map.csv"
    assert main(["export", write_config("sigma2.json", SIGMA2), "--what", "map", "--out", str(out), "--quiet"]) == 0
    frame = pd.read_csv(out)
    assert list(frame.columns) == ["x_1", "T_1"]
    assert len(frame) == 21
    assert (frame["T_1"] - 2.0 * frame["x_1"]).abs().max() <= 1e-6
    assert (frame["x_1"].abs() <= 1e-12).any()


def test_export_chaos_coefficients(write_config, tmp_path):
    out = tmp_path / "chaos.csv"
    assert main(["export", write_config("shift.json", SHIFT), "--what", "chaos", "--out", str(out), "--quiet"]) == 0
    frame = pd.read_csv(out, dtype={"alpha": str})
    assert frame.loc[frame["alpha"] == "1", "coefficient"].iloc[0] == pytest.approx(1.0, abs=1e-8)
    assert len(frame) == 7


def test_export_potential(write_config, tmp_path):
    out = tmp_path / "phi.csv"
    assert main(["export", write_config("shift.json", SHIFT), "--what", "potential", "--out", str(out), "--quiet"]) == 0
    frame = pd.read_csv(out)
    # phi(x) = x for the unit shift, pinned at phi(0) = 0
    assert (frame["phi"] - frame["x_1"]).abs().max() <= 1e-6


def test_export_needs_a_density(write_config, tmp_path):
    path = write_config("m.json", '{"case_id": "m", "dim": 1, "measure": {"discretized_gaussian": 4}, '
                                  '"checks": ["corollary2"]}')
    assert main(["export", path, "--what", "map", "--out", str(tmp_path / "m.csv"), "--quiet"]) == 1


def test_parser_rejects_unknown_export():
    with pytest.raises(SystemExit):
        build_parser().parse_args(["export", "x.json", "--what", "plan"])


@pytest.mark.slow
def test_bundled_closed_form_suite(tmp_path):
    code = main(["suite", os.path.join(SCENARIOS, "closed_form"), "--workers", "2",
                 "--out", str(tmp_path / "closed_form"), "--quiet"])
    index = read_json(tmp_path / "closed_form" / "index.json")
    failing = [case["case_id"] for case in index["cases"] if case["exit_code"] != 0]
    assert code == 0, failing


@pytest.mark.slow
def test_bundled_random_suite(tmp_path):
    code = main(["suite", os.path.join(SCENARIOS, "random_1d"), "--workers", "2",
                 "--out", str(tmp_path / "random_1d"), "--quiet"])
    index = read_json(tmp_path / "random_1d" / "index.json")
    assert len(index["cases"]) == 50
    failing = [case["case_id"] for case in index["cases"] if case["exit_code"] != 0]
    assert code == 0, failing
