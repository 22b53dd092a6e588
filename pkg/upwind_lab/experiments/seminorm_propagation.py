import logging
from contextlib import ExitStack
from typing import Any, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from upwind_lab.container import build_field, build_mesh
from upwind_lab.data_types import KERNEL_WIDTH_SUP, SchemeState
from upwind_lab.discretize.projections import discrete_divergence, project_to_cell
from upwind_lab.experiments.base import BaseExperiment, BumpSpec, plain
from upwind_lab.seminorm.gap import mollification_gap
from upwind_lab.seminorm.kernel import KernelSpec
from upwind_lab.seminorm.kruzkov import KRUZKOV_HEADER, kruzkov_decomposition
from upwind_lab.seminorm.seminorm import VirtualCoordinates, discrete_seminorm
from upwind_lab.settings import ExperimentConfig
from upwind_lab.upwind.integrate import FieldProvider, integrate
from upwind_lab.vcoords.admissible import AdmissibleFamily, build_admissible_family

logger = logging.getLogger(__name__)

SEMINORM_HEADER = ("t", "h", "raw_double_sum", "weighted_value")


class SeminormPropagationParams(BaseModel):
    """Parameters of the semi-norm propagation experiment.

    Attributes:
        t_end (float): Final time.
        outputs (int): Number of equispaced evaluation times after t = 0.
        bump (BumpSpec): Initial density.
        coordinates (Literal["barycenters", "family"]): Points x̃_i of the
            kernel; "family" looks up the admissible family at P_C b(t).
        kruzkov (bool): Whether to write the Kruzkov decomposition per time.
        kruzkov_h (float): Kernel width of the decomposition.
        gap (bool): Whether to measure the mollification gap at h₀.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    t_end: float = Field(default=0.5, gt=0.0)
    outputs: int = Field(default=5, ge=1)
    bump: BumpSpec = Field(default_factory=BumpSpec)
    coordinates: Literal["barycenters", "family"] = "barycenters"
    kruzkov: bool = False
    kruzkov_h: float = Field(default=0.1, gt=0.0, lt=KERNEL_WIDTH_SUP)
    gap: bool = True


class SeminormPropagationExperiment(BaseExperiment):
    """Log-scale semi-norm of a transported density along its trajectory."""

    def __init__(self, config: ExperimentConfig) -> None:
        """Initialize the experiment."""
        super().__init__(config)
        self.params = SeminormPropagationParams.model_validate(config.params)

    def run(self) -> dict[str, Any]:
        """Integrate the scheme and evaluate the semi-norm at the output times."""
        config, params = self.config, self.params
        periodic = params.coordinates == "family"
        bundle = build_mesh(config.mesh, periodic=periodic, seed=config.seed)
        mesh = bundle.mesh
        field = build_field(config.field)
        provider = FieldProvider(mesh, field, config.quadrature)
        family: AdmissibleFamily | None = None
        if periodic:
            family = build_admissible_family(
                mesh, bundle.structure, spec=config.quadrature
            )

        def coordinates(t: float) -> VirtualCoordinates:
            if family is None:
                return VirtualCoordinates.barycenters(mesh)
            values = project_to_cell(mesh, lambda x: field(t, x), config.quadrature)
            return family.coordinates_for(values)

        u0 = params.bump.density(mesh, config.quadrature)
        times = np.linspace(0.0, params.t_end, params.outputs + 1)[1:]
        trajectory = integrate(
            mesh,
            SchemeState(0.0, u0),
            provider,
            params.t_end,
            config.stepper,
            output_times=times,
        )

        values: list[float] = []
        maximizers: list[float] = []
        gaps: list[float] = []
        with ExitStack() as stack:
            writer = stack.enter_context(self.writer("seminorm.csv", SEMINORM_HEADER))
            kruzkov = (
                stack.enter_context(self.writer("kruzkov.csv", KRUZKOV_HEADER))
                if params.kruzkov
                else None
            )
            for state in trajectory.states:
                coords = coordinates(state.t)
                result = discrete_seminorm(mesh, state.u, config.seminorm, coords)
                writer.write_rows((state.t, *row) for row in result.rows())
                values.append(result.value)
                maximizers.append(result.h_max)
                if params.gap:
                    gaps.append(
                        mollification_gap(
                            mesh, state.u, config.seminorm.h0, config.seminorm.p
                        )
                    )
                if kruzkov is not None:
                    report = kruzkov_decomposition(
                        mesh,
                        provider(state.t),
                        state.u,
                        KernelSpec(params.kruzkov_h, mesh.dim),
                        coords=coords,
                    )
                    kruzkov.write_rows([report.row(state.t)])

        divergence = discrete_seminorm(
            mesh,
            discrete_divergence(mesh, provider(0.0)),
            config.seminorm.divergence_params(),
            coordinates(0.0),
        )
        logger.info(
            "Semi-norm went from %.6g to %.6g over [0, %.4g]",
            values[0],
            values[-1],
            params.t_end,
        )
        results: dict[str, Any] = {
            "structural": bundle.report.as_dict(),
            "times": [state.t for state in trajectory.states],
            "seminorm": values,
            "h_max": maximizers,
            "growth": values[-1] / values[0] if values[0] > 0.0 else None,
            "leaked": trajectory.final.leaked,
            "divergence_seminorm": divergence.value,
            "divergence_log_exponent": config.seminorm.divergence_log_exponent,
            "negative_log_exponent": divergence.negative_log_exponent,
        }
        if gaps:
            results["mollification_gap"] = gaps
        if family is not None:
            results["M_beta"] = family.drift_absolute
            results["M_gamma"] = family.drift_relative
        return plain(results)
