import logging
import math
from typing import Any

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from upwind_lab.container import MeshBundle, build_field, build_mesh
from upwind_lab.core import VectorField
from upwind_lab.discretize.projections import project_to_face
from upwind_lab.experiments.base import BaseExperiment, plain
from upwind_lab.seminorm.seminorm import VirtualCoordinates
from upwind_lab.settings import ExperimentConfig
from upwind_lab.utils.csv import CsvWriter
from upwind_lab.vcoords.admissible import build_admissible_family
from upwind_lab.vcoords.averaging import average_field, partition_parameters
from upwind_lab.vcoords.residue import residue_field, residue_norms

logger = logging.getLogger(__name__)

RESIDUE_DECAY_HEADER = (
    "dx",
    "eta",
    "tau",
    "slab",
    "t",
    "norm",
    "virtual",
    "barycentric",
)


class ResidueDecayParams(BaseModel):
    """Parameters of the residue decay experiment.

    Attributes:
        refinements (list[dict[str, Any]]): Generator parameters overriding
            ``mesh.params``, one mesh per entry.
        horizon (float): Final time T of the averaging.
        p (float): Integrability exponent of the data.
        q (float | None): Sobolev exponent of the field; defaults to its declaration.
        s (float | None): Time regularity of the field; defaults to its declaration.
        direction_count (int | None): Size of the direction grid.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    refinements: list[dict[str, Any]] = Field(default_factory=lambda: [{}])
    horizon: float = Field(default=1.0, gt=0.0)
    p: float = Field(default=1.0, ge=1.0)
    q: float | None = Field(default=None, gt=1.0)
    s: float | None = Field(default=None, gt=0.0, le=1.0)
    direction_count: int | None = Field(default=None, ge=1)


class ResidueDecayExperiment(BaseExperiment):
    """Residues of the averaged field under virtual coordinates, over refinements."""

    def __init__(self, config: ExperimentConfig) -> None:
        """Initialize the experiment."""
        super().__init__(config)
        self.params = ResidueDecayParams.model_validate(config.params)

    def _refinement(
        self, bundle: MeshBundle, field: VectorField, writer: CsvWriter
    ) -> dict[str, Any]:
        config, params = self.config, self.params
        mesh = bundle.mesh
        spec = config.quadrature
        family = build_admissible_family(
            mesh,
            bundle.structure,
            params.direction_count,
            spec=spec,
            exponent=params.p,
        )
        x0, y0, x1, y1 = mesh.domain.bounds
        partition = partition_parameters(
            mesh.dx,
            params.s or getattr(field, "time_regularity", 1.0),
            params.p,
            params.q or getattr(field, "sobolev_exponent", math.inf),
            family.drift_absolute,
            family.drift_relative,
            horizon=params.horizon,
            eta_max=min(x1 - x0, y1 - y0),
        )
        averaged = average_field(
            field, mesh, params.horizon, partition.tau, partition.eta, spec=spec
        )
        barycenters = VirtualCoordinates.barycenters(mesh)
        virtual: list[dict[str, float]] = []
        barycentric: list[dict[str, float]] = []
        for slab, t in enumerate(averaged.times[:-1].tolist()):
            coeffs = project_to_face(mesh, averaged.at(t), spec, time=t)
            b_tilde = averaged.cell_values(t, spec)
            coords = family.coordinates_for(b_tilde)
            with_coords = residue_norms(
                mesh, residue_field(mesh, coeffs, b_tilde, coords), mesh.interior
            )
            without = residue_norms(
                mesh, residue_field(mesh, coeffs, b_tilde, barycenters), mesh.interior
            )
            writer.write_rows(
                (
                    mesh.dx,
                    partition.eta,
                    partition.tau,
                    slab,
                    t,
                    key,
                    value,
                    without[key],
                )
                for key, value in with_coords.items()
            )
            virtual.append(with_coords)
            barycentric.append(without)

        def mean(norms: list[dict[str, float]]) -> dict[str, float]:
            return {key: float(np.mean([n[key] for n in norms])) for key in norms[0]}

        logger.info(
            "dx = %.4g: %d slabs of %d boxes, mean L1 residue %.3e (barycenters %.3e)",
            mesh.dx,
            len(virtual),
            len(averaged.boxes),
            mean(virtual)["L1"],
            mean(barycentric)["L1"],
        )
        return {
            "dx": mesh.dx,
            "eta": partition.eta,
            "tau": partition.tau,
            "eta_raw": partition.eta_raw,
            "tau_raw": partition.tau_raw,
            "clamped": list(partition.clamped),
            "M_beta": family.drift_absolute,
            "M_gamma": family.drift_relative,
            "M_xi": family.residue_bound,
            "virtual": mean(virtual),
            "barycentric": mean(barycentric),
        }

    def run(self) -> dict[str, Any]:
        """Average the field on every refinement and measure its residues."""
        config = self.config
        field = build_field(config.field)
        levels: list[dict[str, Any]] = []
        with self.writer("residue_decay.csv", RESIDUE_DECAY_HEADER) as writer:
            for overrides in self.params.refinements:
                source = config.mesh.model_copy(
                    update={"params": {**config.mesh.params, **overrides}}
                )
                bundle = build_mesh(source, seed=config.seed)
                levels.append(self._refinement(bundle, field, writer))

        results: dict[str, Any] = {"levels": levels}
        if len(levels) > 1:
            dx = np.log([level["dx"] for level in levels])
            residues = [max(level["virtual"]["L1"], 1e-300) for level in levels]
            results["decay_rate"] = float(np.polyfit(dx, np.log(residues), 1)[0])
            logger.info("L1 residue decays like dx^%.3f", results["decay_rate"])
        return plain(results)
