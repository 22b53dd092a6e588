import logging
from typing import Any

from pydantic import BaseModel, ConfigDict, Field

from upwind_lab.container import build_mesh
from upwind_lab.experiments.base import BaseExperiment, plain
from upwind_lab.settings import ExperimentConfig
from upwind_lab.vcoords.admissible import FAMILY_HEADER, build_admissible_family
from upwind_lab.vcoords.periodic_system import assemble_periodic_system
from upwind_lab.vcoords.residue import residue_norms

logger = logging.getLogger(__name__)

RESIDUE_HEADER = ("cell_id", "interior", "residue_max")
ASSEMBLY_HEADER = ("row", "column", "value")


class VcoordsScanParams(BaseModel):
    """Parameters of the virtual-coordinate scan.

    Attributes:
        direction_count (int | None): Size of the direction grid; defaults to
            the process settings.
        exponent (float): Exponent p of the residue bound M_ξ.
        dump_assembly (bool): Whether to write the operator of the first direction.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    direction_count: int | None = Field(default=None, ge=1)
    exponent: float = Field(default=1.0, ge=1.0)
    dump_assembly: bool = False


class VcoordsScanExperiment(BaseExperiment):
    """Admissible family of a periodic mesh over a grid of directions."""

    def __init__(self, config: ExperimentConfig) -> None:
        """Initialize the experiment."""
        super().__init__(config)
        self.params = VcoordsScanParams.model_validate(config.params)

    def run(self) -> dict[str, Any]:
        """Solve every direction and write the family and its residues."""
        config, params = self.config, self.params
        bundle = build_mesh(config.mesh, seed=config.seed)
        mesh = bundle.mesh
        family = build_admissible_family(
            mesh,
            bundle.structure,
            params.direction_count,
            spec=config.quadrature,
            exponent=params.exponent,
        )
        with self.writer("family.csv", FAMILY_HEADER) as writer:
            writer.write_rows(family.rows())
        with self.writer("residue.csv", RESIDUE_HEADER) as writer:
            writer.write_rows(
                (i, int(inside), float(r))
                for i, (inside, r) in enumerate(
                    zip(mesh.interior, family.residue_max, strict=True)
                )
            )
        if params.dump_assembly:
            assembly = assemble_periodic_system(
                bundle.structure, family.directions[0], spec=config.quadrature
            )
            with self.writer("assembly.csv", ASSEMBLY_HEADER) as writer:
                writer.write_rows(assembly.triplets())

        return plain(
            {
                "structural": bundle.report.as_dict(),
                "directions": len(family.directions),
                "pattern_size": bundle.structure.pattern_size
                if bundle.structure
                else 0,
                "M_beta": family.drift_absolute,
                "M_gamma": family.drift_relative,
                "M_xi": family.residue_bound,
                "residue_exponent": family.residue_exponent,
                "residue_norms": residue_norms(mesh, family.residue_max[:, None]),
                "interior_residue": family.interior_residue,
                "column_defect": family.column_defect,
            }
        )
