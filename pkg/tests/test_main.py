import json
import logging
from collections.abc import Callable
from pathlib import Path

import pytest
from click.testing import CliRunner

from upwind_lab.main import cli
from upwind_lab.settings import ExperimentConfig, FieldSource, MeshSource
from upwind_lab.utils.logging import LOGGING_TRACE, level_for

SMALL_ADVECT = """
experiment = "advect"
seed = 5

[mesh]
generator = "cartesian"
params = { nx = 8, ny = 8 }

[field]
name = "rotation"

[params]
t_end = 0.05
outputs = 1
"""


@pytest.fixture
def runner() -> CliRunner:
    """Click test runner."""
    return CliRunner()


def _run(runner: CliRunner, *args: str) -> tuple[int, str]:
    result = runner.invoke(cli, ["-q", *args])
    return result.exit_code, result.output


def test_catalog_json(runner: CliRunner) -> None:
    """Test that the JSON catalog parses and carries the declared regularity."""
    code, output = _run(runner, "catalog", "--json")
    assert code == 0, output
    entries = json.loads(output)
    alternating = next(e for e in entries["meshes"] if e["token"] == "alternating")
    assert "h" in alternating["params"]
    rough = next(e for e in entries["fields"] if e["token"] == "rough")
    assert rough["sobolev"] == "W^{1,2}"


def test_catalog_table(runner: CliRunner) -> None:
    """Test the human readable catalog."""
    code, output = _run(runner, "catalog")
    assert code == 0, output
    assert "vcoords-scan" in output


def test_catalog_feeds_experiment_configs(runner: CliRunner) -> None:
    """Test that catalog entries are valid config sections."""
    _, output = _run(runner, "catalog", "--json")
    entries = json.loads(output)
    for mesh in entries["meshes"]:
        for field in entries["fields"]:
            config = ExperimentConfig(
                mesh=MeshSource(generator=mesh["token"], params=mesh["params"]),
                field=FieldSource(name=field["token"], params=field["params"]),
            )
            assert config.mesh.generator == mesh["token"]


def test_vcoords_scan_run(
    runner: CliRunner, write_config: Callable[..., Path], tmp_path: Path
) -> None:
    """Test a virtual-coordinate scan end to end."""
    path = write_config(
        """
experiment = "vcoords-scan"

[mesh]
generator = "cartesian"
params = { nx = 8, ny = 8 }

[params]
direction_count = 4
dump_assembly = true
"""
    )
    out = tmp_path / "scan"
    code, output = _run(runner, "run", "--config", str(path), "--out", str(out))
    assert code == 0, output
    summary = json.loads((out / "summary.json").read_text(encoding="utf-8"))
    assert summary["version"]
    assert summary["status"] == "ok"
    assert summary["results"]["directions"] == 4
    assert summary["results"]["interior_residue"] <= 1e-9
    assert sorted(summary["artifacts"]) == [
        "assembly.csv",
        "family.csv",
        "residue.csv",
    ]
    lines = (out / "residue.csv").read_text(encoding="utf-8").splitlines()
    interior = [line for line in lines[1:] if line.split(",")[1] == "1"]
    assert all(abs(float(line.split(",")[2])) <= 1e-9 for line in interior)


def test_advect_is_reproducible(
    runner: CliRunner, write_config: Callable[..., Path], tmp_path: Path
) -> None:
    """Test that two runs with the same seed write identical trajectories."""
    path = write_config(SMALL_ADVECT)
    for name in ("first", "second"):
        code, output = _run(
            runner, "run", "--config", str(path), "--out", str(tmp_path / name)
        )
        assert code == 0, output
    first = (tmp_path / "first" / "trajectory.csv").read_bytes()
    second = (tmp_path / "second" / "trajectory.csv").read_bytes()
    assert first == second
    summary = json.loads((tmp_path / "first" / "summary.json").read_text("utf-8"))
    assert summary["config"]["seed"] == 5
    assert summary["results"]["mass_defect"] <= 1e-10


def test_missing_config_exits_with_config_error(
    runner: CliRunner, tmp_path: Path
) -> None:
    """Test exit code 2 for a config file that does not exist."""
    code, _ = _run(runner, "run", "--config", str(tmp_path / "missing.toml"))
    assert code == 2


def test_unknown_parameter_exits_with_config_error(
    runner: CliRunner, write_config: Callable[..., Path], tmp_path: Path
) -> None:
    """Test exit code 2 for a parameter the experiment does not know."""
    path = write_config(SMALL_ADVECT)
    code, _ = _run(
        runner,
        "run",
        "--config",
        str(path),
        "--out",
        str(tmp_path / "out"),
        "--set",
        "params.nope=1",
    )
    assert code == 2


def test_cfl_violation_exits_with_numerical_failure(
    runner: CliRunner, write_config: Callable[..., Path], tmp_path: Path
) -> None:
    """Test exit code 3 and a failed summary for a step above the CFL bound."""
    path = write_config(SMALL_ADVECT)
    out = tmp_path / "out"
    code, output = _run(
        runner,
        "run",
        "--config",
        str(path),
        "--out",
        str(out),
        "--set",
        'stepper={"method": "euler", "dt": 10.0}',
    )
    assert code == 3, output
    summary = json.loads((out / "summary.json").read_text(encoding="utf-8"))
    assert summary["status"] == "failed"
    assert summary["error"]


@pytest.mark.parametrize(
    ("verbose", "quiet", "level"),
    [
        (0, False, logging.WARNING),
        (1, False, logging.INFO),
        (2, False, logging.DEBUG),
        (5, False, LOGGING_TRACE),
        (3, True, logging.ERROR),
    ],
)
def test_verbosity_levels(verbose: int, *, quiet: bool, level: int) -> None:
    """Test the mapping of -v counts and -q to logging levels."""
    assert level_for(verbose, quiet=quiet) == level


def test_advect_records_every_output_time(
    runner: CliRunner, write_config: Callable[..., Path], tmp_path: Path
) -> None:
    """Test a trajectory with several equispaced output times."""
    path = write_config(SMALL_ADVECT)
    out = tmp_path / "outputs"
    code, output = _run(
        runner,
        "run",
        "--config",
        str(path),
        "--out",
        str(out),
        "--set",
        "params.outputs=3",
    )
    assert code == 0, output
    lines = (out / "trajectory.csv").read_text(encoding="utf-8").splitlines()
    times = sorted({float(line.split(",")[0]) for line in lines[1:]})
    assert len(times) == 4
    assert times[0] == 0.0
    assert times[-1] == pytest.approx(0.05)
