import asyncio
import json
from pathlib import Path

import numpy as np
import pytest

from app.main import main, resolve_log_level
from app.models.run_config import CheckToggles, ConfigError, RunConfig
from app.schemas.report import TABLE_HEADER, EstimateReport, RunReport
from app.services.run_service import run_service

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
FIVE_PI2_OVER_8 = 5.0 * np.pi ** 2 / 8.0

INSTANCE_TOML = """
grid_sizes = [33]

[[instances]]
id = "wide"
R = {R}

[instances.phase]
kind = "constant"
value = 0.0

[instances.boundary]
kind = "quadratic"
a11 = 1.0
"""


# ----------------------------------------------------------------------
# Config loading
# ----------------------------------------------------------------------
def test_load_minimal_config():
    config = RunConfig.from_toml(str(CONFIGS / "minimal.toml"))
    assert config.name == "minimal"
    assert config.grid_sizes == [33]
    inst = config.instances[0]
    assert inst.id == "flat_saddle" and inst.exact
    assert inst.ball_center() == (0.0, 0.0)
    assert inst.boundary.kind == "quadratic"


@pytest.mark.parametrize("name", ["full.toml", "unsolvable.toml"])
def test_shipped_configs_validate(name):
    config = RunConfig.from_toml(str(CONFIGS / name))
    assert config.instances


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        RunConfig.from_toml(str(tmp_path / "absent.toml"))


def test_invalid_toml(tmp_path):
    path = tmp_path / "broken.toml"
    path.write_text("grid_sizes = [33\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        RunConfig.from_toml(str(path))


def test_config_name_defaults_to_file_stem(tmp_path):
    path = tmp_path / "small_run.toml"
    path.write_text(INSTANCE_TOML.format(R=0.4), encoding="utf-8")
    assert RunConfig.from_toml(str(path)).name == "small_run"


def test_ball_that_does_not_fit_is_rejected(tmp_path):
    # B_2R with R = 0.6 leaves the unit square
    path = tmp_path / "wide.toml"
    path.write_text(INSTANCE_TOML.format(R=0.6), encoding="utf-8")
    with pytest.raises(ConfigError, match="B_2R"):
        RunConfig.from_toml(str(path))


@pytest.mark.parametrize(
    "data",
    [
        {"grid_sizes": [65, 33]},
        {"grid_sizes": [7]},
        {"instances": [{"id": "m", "boundary": {"kind": "quadratic"}}]},
        {"instances": [{"id": "m", "mode": "manufactured", "phase": {"kind": "constant", "value": 0.0},
                        "boundary": {"kind": "quadratic"}}]},
        {"instances": [{"id": "c", "convergence": True, "phase": {"kind": "constant", "value": 0.0},
                        "boundary": {"kind": "quadratic"}}]},
    ],
)
def test_invalid_run_configs(data):
    with pytest.raises(ValueError):
        RunConfig.model_validate(data)


def test_only_toggles_one_family():
    toggles = CheckToggles().only("cutoffs")
    assert toggles.cutoffs
    assert not toggles.jacobi and not toggles.identities
    with pytest.raises(ConfigError):
        CheckToggles().only("everything")


# ----------------------------------------------------------------------
# Reports on disk
# ----------------------------------------------------------------------
def test_emit_empty_report(tmp_path):
    report = RunReport(app_version="test", seed=1).refresh_status()
    asyncio.run(run_service.emit_reports(report, str(tmp_path)))
    lines = (tmp_path / "checks.tsv").read_text(encoding="utf-8").splitlines()
    assert lines == ["\t".join(TABLE_HEADER)]
    assert json.loads((tmp_path / "report.json").read_text(encoding="utf-8"))["exit_code"] == 0


def test_emit_single_check(tmp_path):
    check = EstimateReport(name="cutoffs", lhs=1.0, rhs=2.0, defect=1.0)
    report = RunReport(app_version="test", seed=1, global_checks=[check]).refresh_status()
    asyncio.run(run_service.emit_reports(report, str(tmp_path)))
    lines = (tmp_path / "checks.tsv").read_text(encoding="utf-8").splitlines()
    assert len(lines) == 2
    assert lines[1].split("\t") == ["global", "cutoffs", "1.0", "2.0", "1.0", "", "pass"]


def test_failing_check_sets_checker_exit():
    check = EstimateReport(name="jacobi", lhs=0.0, rhs=0.0, defect=-1.0)
    report = RunReport(app_version="test", seed=1, global_checks=[check]).refresh_status()
    assert not report.passed
    assert report.exit_code == 3 and report.failed_stage == "checker"


# ----------------------------------------------------------------------
# End-to-end runs
# ----------------------------------------------------------------------
def _minimal(out):
    return run_service.run(str(CONFIGS / "minimal.toml"), out=str(out))


def test_minimal_run_passes(tmp_path):
    assert _minimal(tmp_path) == 0
    for name in ("checks.tsv", "convergence.tsv", "report.json"):
        assert (tmp_path / name).is_file()
    report = json.loads((tmp_path / "report.json").read_text(encoding="utf-8"))
    assert report["passed"] and report["exit_code"] == 0
    jacobi = [c for c in report["instances"][0]["checks"] if c["name"] == "jacobi"]
    assert jacobi[0]["defect"] == pytest.approx(FIVE_PI2_OVER_8, abs=1e-6)

    u_dump = tmp_path / "fields" / "flat_saddle_u.txt"
    header = u_dump.read_text(encoding="utf-8").splitlines()[0].split()
    assert header[1:4] == ["33", "33", "0.0625"]
    values = np.loadtxt(u_dump)
    assert values.shape == (33, 33)
    # values[i, j] sits at (x0 + i h, y0 + j h)
    assert values[0, 16] == pytest.approx(0.25)
    assert values[16, 0] == pytest.approx(-0.25)


def test_minimal_run_is_deterministic(tmp_path):
    first, second = tmp_path / "a", tmp_path / "b"
    assert _minimal(first) == 0
    assert _minimal(second) == 0
    assert (first / "report.json").read_bytes() == (second / "report.json").read_bytes()
    assert (first / "checks.tsv").read_bytes() == (second / "checks.tsv").read_bytes()


def test_only_cutoffs(tmp_path):
    assert run_service.run(str(CONFIGS / "minimal.toml"), out=str(tmp_path), only="cutoffs") == 0
    lines = (tmp_path / "checks.tsv").read_text(encoding="utf-8").splitlines()
    assert len(lines) == 3
    assert {line.split("\t")[1] for line in lines[1:]} == {"cutoffs", "sec_csc_bound"}


def test_unknown_only_is_a_config_error(tmp_path):
    assert run_service.run(str(CONFIGS / "minimal.toml"), out=str(tmp_path), only="nope") == 1


def test_missing_config_exit_code(tmp_path):
    assert run_service.run(str(tmp_path / "absent.toml")) == 1


def test_unsolvable_run_stops_at_solver(tmp_path):
    assert run_service.run(str(CONFIGS / "unsolvable.toml"), out=str(tmp_path)) == 2
    report = json.loads((tmp_path / "report.json").read_text(encoding="utf-8"))
    assert report["failed_stage"] == "solver"
    solve = report["instances"][0]["solves"][0]
    assert solve["converged"] is False
    assert solve["residual_history"]
    assert solve["message"]


def test_main_entry_point(tmp_path):
    code = main(["run", str(CONFIGS / "minimal.toml"), "--out", str(tmp_path), "--seed", "3",
                 "--log-level", "WARNING"])
    assert code == 0
    assert json.loads((tmp_path / "report.json").read_text(encoding="utf-8"))["seed"] == 3


def test_minimal_run_reports_gradient_rows(tmp_path):
    assert _minimal(tmp_path) == 0
    report = json.loads((tmp_path / "report.json").read_text(encoding="utf-8"))
    rows = {c["name"]: c for c in report["global_checks"]}
    family = rows["gradient_ratio_family"]
    assert family["details"]["family_size"] == 1
    assert family["rhs"] == 10.0
    assert rows["gradient_scaling"]["lhs"] <= 1e-12
    tilt = [c for c in report["instances"][0]["checks"] if c["name"] == "gradient_tilt"]
    assert tilt and tilt[0]["defect"] > 0


def test_ledger_rejection_names_failing_family():
    family, rejection = run_service.ledger_family(seed=7, count=4)
    assert family.passed
    assert "feasibility_pair" in rejection.details["failing_families"]
    assert rejection.passed
    assert rejection.lhs > rejection.rhs


# ----------------------------------------------------------------------
# Log level
# ----------------------------------------------------------------------
def test_debug_setting_drives_log_level(monkeypatch):
    from app.core.config import settings

    monkeypatch.setattr(settings, "debug", True)
    assert resolve_log_level(None) == "DEBUG"
    assert resolve_log_level("warning") == "WARNING"
    monkeypatch.setattr(settings, "debug", False)
    monkeypatch.setattr(settings, "log_level", "info")
    assert resolve_log_level(None) == "INFO"
