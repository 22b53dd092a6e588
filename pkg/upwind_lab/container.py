import importlib
import json
import logging
import re
from dataclasses import dataclass
from typing import Any, Literal, TypeVar

import numpy as np
from pydantic import BaseModel, Field

from upwind_lab import __version__
from upwind_lab.core import Discretization, Experiment, MeshGenerator, VectorField
from upwind_lab.data_types import PeriodicityError
from upwind_lab.mesh.io import PeriodicBlock, read_mesh
from upwind_lab.mesh.mollified import mollify_polygon_mesh
from upwind_lab.mesh.periodic import (
    PeriodicStructure,
    declare_periodic,
    pattern_declaration,
)
from upwind_lab.mesh.polygon import PolygonMesh
from upwind_lab.mesh.structural import StructuralReport, validate_structural
from upwind_lab.settings import (
    ExperimentConfig,
    FieldSource,
    MeshSource,
    get_settings,
    reset_settings,
    set_settings,
)
from upwind_lab.utils.csv import SCHEMA_VERSION

logger = logging.getLogger(__name__)

T = TypeVar("T")

MESH_BASE = "upwind_lab.mesh.generators"
FIELD_BASE = "upwind_lab.fields"
EXPERIMENT_BASE = "upwind_lab.experiments"

MESH_GENERATORS = ("cartesian", "alternating", "hexagonal", "disc")
FIELDS = ("constant", "rotation", "shear", "rough", "oscillating")
EXPERIMENTS = (
    "advect",
    "example16",
    "vcoords-scan",
    "seminorm-propagation",
    "residue-decay",
    "coupled",
)


def _resolve(spec: str | type[T], *, base: str, suffix: str) -> type[T]:
    """Turn direct type, dotted path, or short token into a class object."""
    if isinstance(spec, type):
        return spec

    if "." in spec:
        # fully qualified
        mod, _, cls = spec.rpartition(".")
    else:
        # short token: "vcoords-scan" -> vcoords_scan.VcoordsScan<suffix>
        parts = [p for p in re.split(r"[_\- ]+", spec) if p]
        if parts and parts[-1].lower() == suffix.lower():
            parts = parts[:-1]
        mod = f"{base}.{'_'.join(p.lower() for p in parts)}"
        cls = "".join(p.capitalize() for p in parts) + suffix

    try:
        module = importlib.import_module(mod)
    except ModuleNotFoundError as e:
        if e.name == mod:
            msg = f"Module '{mod}' not found."
        else:
            msg = f"Missing dependency '{e.name}' when importing module '{mod}'."
        raise ImportError(msg) from e

    try:
        return getattr(module, cls)
    except AttributeError as e:
        msg = f"Cannot resolve class '{cls}' in module '{mod}'"
        raise ImportError(msg) from e


def build_generator(source: MeshSource) -> MeshGenerator:
    """Instantiate the mesh generator of a mesh source."""
    cls = _resolve(source.generator or "cartesian", base=MESH_BASE, suffix="Generator")
    return cls(**source.params)


def build_field(source: FieldSource) -> VectorField:
    """Instantiate the velocity field of a field source."""
    cls = _resolve(source.name, base=FIELD_BASE, suffix="Field")
    return cls(**source.params)


@dataclass(frozen=True, slots=True)
class MeshBundle:
    """A mesh ready for an experiment.

    Attributes:
        mesh (Discretization): The discretization the scheme runs on.
        polygon (PolygonMesh | None): The polygon mesh it was built from, if any.
        structure (PeriodicStructure | None): The validated periodic pattern.
        report (StructuralReport): Measured structural constants.
    """

    mesh: Discretization
    polygon: PolygonMesh | None
    structure: PeriodicStructure | None
    report: StructuralReport


def _periodic_structure(
    mesh: Discretization, block: PeriodicBlock | None, seed: int
) -> PeriodicStructure | None:
    try:
        pattern, lattice, sigma = pattern_declaration(mesh)
    except PeriodicityError:
        if block is None or len(block.sigma) != mesh.n_cells:
            logger.debug("Mesh has no periodic pattern")
            return None
        pattern = np.asarray(block.pattern_indices, dtype=np.int64)
        lattice = np.asarray(block.lattice, dtype=float)
        sigma = np.asarray(block.sigma, dtype=np.int64)
    return declare_periodic(mesh, pattern, lattice, sigma, seed=seed)


def build_mesh(
    source: MeshSource, *, periodic: bool = True, seed: int = 0
) -> MeshBundle:
    """Build, mollify and validate the mesh of a mesh source.

    Args:
        source: Generator or file, with the mollification settings.
        periodic: Whether to declare and validate the periodic pattern.
        seed: Seed of the periodicity sampling.

    Returns:
        MeshBundle: The mesh with its polygon form, structure and report.
    """
    block: PeriodicBlock | None = None
    if source.file is not None:
        built: Any = None
        built, block = read_mesh(source.file)
    else:
        built = build_generator(source).build()

    polygon = built if isinstance(built, PolygonMesh) else None
    mesh: Discretization = built
    if polygon is not None and source.mollify:
        mesh = mollify_polygon_mesh(
            polygon, source.radius, unity_margin=source.unity_margin
        )
    structure = _periodic_structure(mesh, block, seed) if periodic else None
    report = validate_structural(mesh)
    logger.info(
        "Mesh with %d cells (%d interior), dx = %.4g%s",
        mesh.n_cells,
        int(mesh.interior.sum()),
        mesh.dx,
        ", periodic" if structure is not None else "",
    )
    return MeshBundle(mesh, polygon, structure, report)


def build_experiment(config: ExperimentConfig) -> Experiment:
    """Instantiate the experiment named by a config."""
    cls = _resolve(config.experiment, base=EXPERIMENT_BASE, suffix="Experiment")
    return cls(config)


class RunSummary(BaseModel):
    """Machine interface of a run, written as ``summary.json``.

    Attributes:
        version (str): Library version.
        csv_schema (int): Version of the CSV layouts of the artifacts.
        experiment (str): Experiment token.
        status (Literal["ok", "failed"]): Outcome of the run.
        error (str | None): Message of the numerical failure, if any.
        config (dict[str, Any]): The fully resolved configuration.
        results (dict[str, Any]): Measured constants.
        artifacts (list[str]): Files written, relative to the output directory.
    """

    version: str = __version__
    csv_schema: int = SCHEMA_VERSION
    experiment: str
    status: Literal["ok", "failed"] = "ok"
    error: str | None = None
    config: dict[str, Any]
    results: dict[str, Any] = Field(default_factory=dict)
    artifacts: list[str] = Field(default_factory=list)


def _artifacts(experiment: Experiment) -> list[str]:
    output = experiment.output
    paths = getattr(experiment, "artifacts", [])
    return sorted(str(p.relative_to(output)) for p in paths)


def run_experiment(config: ExperimentConfig) -> RunSummary:
    """Run an experiment and write its summary JSON.

    The seed and quadrature of the config replace the process settings for the
    duration of the run. When the run fails, the summary is written with status
    "failed" and the error propagates.
    """
    settings = get_settings().model_copy(
        update={"seed": config.seed, "quadrature": config.quadrature}
    )
    experiment = build_experiment(config)
    token = set_settings(settings)
    summary = RunSummary(
        experiment=config.experiment, config=config.model_dump(mode="json")
    )
    config.output.mkdir(parents=True, exist_ok=True)
    path = config.output / "summary.json"
    try:
        summary.results = experiment.run()
    except Exception as exc:
        summary.status = "failed"
        summary.error = str(exc)
        raise
    finally:
        reset_settings(token)
        summary.artifacts = _artifacts(experiment)
        path.write_text(summary.model_dump_json(indent=2) + "\n", encoding="utf-8")
        logger.info("Wrote summary of %s to %s", config.experiment, path)
    return summary


def _defaults(cls: type[BaseModel]) -> dict[str, Any]:
    return {
        name: info.get_default(call_default_factory=True)
        for name, info in cls.model_fields.items()
    }


def _describe(cls: type) -> str:
    return (cls.__doc__ or "").strip().split("\n")[0]


def catalog() -> dict[str, list[dict[str, Any]]]:
    """Built-in mesh generators, fields and experiments with their parameters."""
    meshes = []
    for token in MESH_GENERATORS:
        cls = _resolve(token, base=MESH_BASE, suffix="Generator")
        meshes.append(
            {"token": token, "description": _describe(cls), "params": _defaults(cls)}
        )
    fields = []
    for token in FIELDS:
        cls = _resolve(token, base=FIELD_BASE, suffix="Field")
        instance = cls()
        fields.append(
            {
                "token": token,
                "description": _describe(cls),
                "sobolev": instance.sobolev,
                "time_dependent": instance.time_dependent,
                "params": _defaults(cls),
            }
        )
    experiments = [
        {
            "token": token,
            "description": _describe(
                _resolve(token, base=EXPERIMENT_BASE, suffix="Experiment")
            ),
        }
        for token in EXPERIMENTS
    ]
    # tuples become lists, as in a TOML file
    return json.loads(
        json.dumps({"meshes": meshes, "fields": fields, "experiments": experiments})
    )
