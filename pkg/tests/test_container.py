import json
import math
from collections.abc import Callable
from pathlib import Path

import numpy as np
import pytest

from upwind_lab.container import (
    EXPERIMENT_BASE,
    EXPERIMENTS,
    FIELD_BASE,
    FIELDS,
    MESH_GENERATORS,
    _resolve,
    build_experiment,
    build_field,
    build_generator,
    build_mesh,
    catalog,
    run_experiment,
)
from upwind_lab.data_types import CFLViolationError
from upwind_lab.experiments.residue_decay import ResidueDecayParams
from upwind_lab.experiments.vcoords_scan import VcoordsScanExperiment
from upwind_lab.fields.constant import ConstantField
from upwind_lab.fields.oscillating import OscillatingField
from upwind_lab.fields.rotation import RotationField
from upwind_lab.fields.rough import RoughField
from upwind_lab.settings import ExperimentConfig, FieldSource, MeshSource
from upwind_lab.vcoords.averaging import MIN_BOX_CELLS, partition_parameters


def test_declared_regularity_of_fields() -> None:
    """Test the Sobolev labels and time dependence of the catalog fields."""
    assert RoughField().sobolev == "W^{1,2}"
    assert RoughField(q=4.0).sobolev == "W^{1,4}"
    assert ConstantField().sobolev == "W^{1,inf}"
    assert RotationField().sobolev == "W^{1,inf}"
    assert OscillatingField.time_dependent
    assert not RoughField.time_dependent


def test_rough_field_is_a_horizontal_shear(rng: np.random.Generator) -> None:
    """Test that the rough field only has a horizontal component."""
    points = rng.uniform(size=(50, 2))
    values = RoughField(seed=3)(0.0, points)
    assert values.shape == (50, 2)
    assert (values[:, 1] == 0.0).all()
    assert np.isfinite(values).all()


def test_rotation_field_vanishes_at_its_center() -> None:
    """Test the rotation field at and away from its center."""
    field = RotationField(omega=2.0)
    values = field(0.0, np.array([[0.5, 0.5], [1.0, 0.5]]))
    assert np.allclose(values[0], 0.0)
    assert np.isclose(np.linalg.norm(values[1]), 1.0)
    assert (field.divergence(0.0, np.zeros((3, 2))) == 0.0).all()


@pytest.mark.parametrize(
    ("token", "name"),
    [
        ("advect", "AdvectExperiment"),
        ("example16", "Example16Experiment"),
        ("vcoords-scan", "VcoordsScanExperiment"),
        ("seminorm-propagation", "SeminormPropagationExperiment"),
        ("residue-decay", "ResidueDecayExperiment"),
        ("coupled", "CoupledExperiment"),
    ],
)
def test_resolve_experiment_tokens(token: str, name: str) -> None:
    """Test that every short token resolves to its experiment class."""
    cls = _resolve(token, base=EXPERIMENT_BASE, suffix="Experiment")
    assert cls.__name__ == name


def test_resolve_dotted_paths_and_types() -> None:
    """Test dotted paths, classes passed through and unknown tokens."""
    dotted = _resolve("upwind_lab.fields.rough.RoughField", base=FIELD_BASE, suffix="")
    assert dotted is RoughField
    direct = _resolve(VcoordsScanExperiment, base=EXPERIMENT_BASE, suffix="Experiment")
    assert direct is VcoordsScanExperiment
    with pytest.raises(ImportError):
        _resolve("nowhere", base=FIELD_BASE, suffix="Field")


def test_build_field_and_generator() -> None:
    """Test instantiation from config sources."""
    field = build_field(FieldSource(name="rough", params={"q": 3}))
    assert field.sobolev == "W^{1,3}"
    generator = build_generator(
        MeshSource(generator="alternating", params={"h": 0.25})
    )
    assert generator.build().n_cells == 24


def test_catalog_lists_every_token() -> None:
    """Test that the catalog holds every mesh, field and experiment."""
    entries = catalog()
    assert [e["token"] for e in entries["meshes"]] == list(MESH_GENERATORS)
    assert [e["token"] for e in entries["fields"]] == list(FIELDS)
    assert [e["token"] for e in entries["experiments"]] == list(EXPERIMENTS)
    alternating = next(e for e in entries["meshes"] if e["token"] == "alternating")
    assert alternating["params"]["h"] == 0.125
    rough = next(e for e in entries["fields"] if e["token"] == "rough")
    assert rough["sobolev"] == "W^{1,2}"
    json.dumps(entries)


def test_catalog_entries_build() -> None:
    """Test that catalog parameters feed back into config sources."""
    entries = catalog()
    for entry in entries["meshes"]:
        build_generator(MeshSource(generator=entry["token"], params=entry["params"]))
    for entry in entries["fields"]:
        field = build_field(FieldSource(name=entry["token"], params=entry["params"]))
        assert field.sobolev == entry["sobolev"]


def test_failed_run_writes_summary(
    write_config: Callable[..., Path], tmp_path: Path
) -> None:
    """Test that a numerical failure still leaves a summary with its status."""
    path = write_config(
        f"""
experiment = "advect"
output = "{(tmp_path / "out").as_posix()}"

[mesh]
generator = "cartesian"
params = {{ nx = 8, ny = 8 }}

[stepper]
method = "euler"
dt = 10.0
"""
    )
    config = ExperimentConfig.from_toml(path)
    with pytest.raises(CFLViolationError):
        run_experiment(config)
    summary = json.loads((tmp_path / "out" / "summary.json").read_text("utf-8"))
    assert summary["status"] == "failed"
    assert summary["experiment"] == "advect"
    assert summary["error"]


def test_environment_overrides_config_file(
    write_config: Callable[..., Path], monkeypatch: pytest.MonkeyPatch
) -> None:
    """Test that env variables beat the file and dotted overrides beat both."""
    path = write_config(
        """
experiment = "advect"
seed = 3

[stepper]
method = "euler"
cfl = 0.5

[params]
t_end = 0.2
"""
    )
    monkeypatch.setenv("UPWIND_LAB_EXPERIMENT__SEED", "11")
    monkeypatch.setenv("UPWIND_LAB_EXPERIMENT__STEPPER__CFL", "0.25")
    config = ExperimentConfig.from_toml(path)
    assert config.seed == 11
    assert config.stepper.cfl == 0.25
    assert config.stepper.method == "euler"
    assert config.params == {"t_end": 0.2}

    config = ExperimentConfig.from_toml(path, {"seed": 5, "params.outputs": 2})
    assert config.seed == 5
    assert config.params == {"t_end": 0.2, "outputs": 2}


def test_config_file_is_not_read_twice(write_config: Callable[..., Path]) -> None:
    """Test that a loaded file does not leak into configs built afterwards."""
    ExperimentConfig.from_toml(write_config('experiment = "coupled"\nseed = 9\n'))
    assert ExperimentConfig.from_toml().seed == 0
    assert ExperimentConfig().experiment == "advect"


CONFIG_DIR = Path(__file__).resolve().parents[1] / "configs"


@pytest.mark.parametrize(
    "path", sorted(CONFIG_DIR.glob("*.toml")), ids=lambda path: path.stem
)
def test_shipped_configs_are_valid(path: Path) -> None:
    """Test that every shipped config validates and names buildable components."""
    config = ExperimentConfig.from_toml(path)
    experiment = build_experiment(config)
    assert experiment.config is config
    assert build_generator(config.mesh).build().n_cells > 0
    build_field(config.field)


def test_residue_decay_refinements_admit_a_partition() -> None:
    """Test that every refinement of the shipped config fits a box of 8 cells."""
    config = ExperimentConfig.from_toml(CONFIG_DIR / "residue_decay.toml")
    params = ResidueDecayParams.model_validate(config.params)
    for overrides in params.refinements:
        source = config.mesh.model_copy(
            update={"params": {**config.mesh.params, **overrides}}
        )
        bundle = build_mesh(source, periodic=False)
        partition = partition_parameters(
            bundle.mesh.dx, 1.0, params.p, math.inf, 1.0, 1.0, horizon=params.horizon
        )
        assert partition.eta >= MIN_BOX_CELLS * bundle.mesh.dx
        assert partition.eta <= 1.0
