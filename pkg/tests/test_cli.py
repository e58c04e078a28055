import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from conftest import SCENARIOS
from tierdb.config_manager import ConfigManager
from tierdb.eula import library_text
from tierdb.main import cli
from tierdb.snapshot import load_snapshot, query_snapshot

CASE_STUDY = str(SCENARIOS / "transformer_case_study.scn")
GOLDEN = Path(__file__).resolve().parent / "golden" / "transformer_case_study.json"


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def case_study_snapshot(runner, tmp_path):
    path = tmp_path / "state.json"
    result = runner.invoke(cli, ["run", CASE_STUDY, "--snapshot", str(path)])
    assert result.exit_code == 0, result.output
    return path


def test_run_case_study(runner):
    result = runner.invoke(cli, ["run", CASE_STUDY])
    assert result.exit_code == 0, result.output
    report = json.loads(result.output)
    assert len(report["cycles"]) == 6
    assert report["assertions_passed"] == 33
    assert report["seed"] == 0


def test_case_study_snapshot_matches_golden(case_study_snapshot):
    assert GOLDEN.is_file(), f"缺少黄金文件 {GOLDEN}"
    golden = json.loads(GOLDEN.read_text(encoding="utf-8"))
    state = load_snapshot(str(case_study_snapshot))
    assert (state["clock"], state["cycle"]) == (golden["clock"], golden["cycle"])
    for query, lines in golden["queries"].items():
        assert query_snapshot(state, query) == lines, query


def test_runs_are_byte_identical(runner, tmp_path):
    texts = []
    for name in ("a.json", "b.json"):
        path = tmp_path / name
        runner.invoke(cli, ["run", CASE_STUDY, "--snapshot", str(path)])
        texts.append(path.read_text(encoding="utf-8"))
    assert texts[0] == texts[1]


def test_empty_scenario(runner):
    result = runner.invoke(cli, ["run", str(SCENARIOS / "empty.scn")])
    assert result.exit_code == 0
    assert json.loads(result.output)["cycles"] == []


def test_failed_assertion_exits_1(runner):
    result = runner.invoke(cli, ["run", str(SCENARIOS / "policy_leak.scn")])
    assert result.exit_code == 1
    assert "第14行" in result.output


def test_parse_error_exits_2(runner, tmp_path):
    path = tmp_path / "bad.scn"
    path.write_text("cycle\nfrobnicate now\n", encoding="utf-8")
    result = runner.invoke(cli, ["run", str(path)])
    assert result.exit_code == 2
    assert "第2行" in result.output
    assert runner.invoke(cli, ["run", str(tmp_path / "missing.scn")]).exit_code == 2


def test_inspect_records(runner, case_study_snapshot):
    result = runner.invoke(cli, ["inspect", str(case_study_snapshot), "local-1/grid/health/TX-17/score"])
    assert result.exit_code == 0
    assert result.output.splitlines() == [
        "local-1/grid/health/TX-17/score ts=3600000 rev=1 origin=local-1/grid 70.0",
        "local-1/grid/health/TX-17/score ts=7200000 rev=1 origin=local-1/grid 95.0",
    ]


def test_inspect_work_requests(runner, case_study_snapshot):
    result = runner.invoke(cli, ["inspect", str(case_study_snapshot), "work:*"])
    assert result.output.splitlines() == [
        "local-1/grid/work wr-local-1-0001 completed fleet-report -> regional-1",
        "regional-1/fleet/work wr-local-1-0001 completed fleet-report -> regional-1",
    ]


def test_inspect_missing_snapshot(runner, tmp_path):
    result = runner.invoke(cli, ["inspect", str(tmp_path / "nope.json"), "work:*"])
    assert result.exit_code == 2


def test_policies(runner):
    listed = runner.invoke(cli, ["policies", "list"]).output.splitlines()
    assert [line.split("\t")[0] for line in listed] == [
        "deny-all", "share-downsampled-1min", "share-full", "share-outbound-only", "share-summarized-hourly"]
    shown = runner.invoke(cli, ["policies", "show", "share-full"])
    assert shown.exit_code == 0 and shown.output == library_text("share-full")
    assert runner.invoke(cli, ["policies", "show", "share-nothing"]).exit_code == 2


def test_catalog_list(runner):
    result = runner.invoke(cli, ["catalog", "list", CASE_STUDY])
    assert result.exit_code == 0
    assert [line.split("\t")[0] for line in result.output.splitlines()] == [
        "asset-monitor@1.0.0", "fleet@1.0.0", "fleet-health@1.0.0", "fleet-monitor@1.0.0", "grid@1.0.0",
        "transformer-health@1.1.0", "transformer-health@1.0.0",
    ]
    assert all("by=vendor" in line for line in result.output.splitlines())


def test_run_with_config_watches_the_file(runner, tmp_path, monkeypatch):
    calls = []
    monkeypatch.setattr(ConfigManager, "start_watching", lambda self: calls.append(("start", self.config_path)))
    monkeypatch.setattr(ConfigManager, "stop_watching", lambda self: calls.append(("stop", self.config_path)))
    path = tmp_path / "tierdb.json"
    result = runner.invoke(cli, ["run", str(SCENARIOS / "empty.scn"), "--config", str(path)])
    assert result.exit_code == 0, result.output
    assert calls[:2] == [("start", path.resolve()), ("stop", path.resolve())]
