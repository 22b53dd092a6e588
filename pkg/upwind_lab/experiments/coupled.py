import logging
from dataclasses import asdict
from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field

from upwind_lab.container import build_mesh
from upwind_lab.coupling.coupled import (
    COUPLED_HEADER,
    jump_rate_bound,
    leak_bound_check,
    linear_source,
    run_coupled,
    saturating_source,
)
from upwind_lab.coupling.fem import P1Space
from upwind_lab.data_types import InvalidParameterError
from upwind_lab.experiments.base import BaseExperiment, BumpSpec, plain
from upwind_lab.mesh.hat import HatMesh
from upwind_lab.settings import ExperimentConfig

logger = logging.getLogger(__name__)


class CoupledParams(BaseModel):
    """Parameters of the coupled advection-Poisson experiment.

    Attributes:
        t_end (float): Final time.
        bump (BumpSpec): Initial density.
        source (Literal["saturating", "linear"]): Nonlinearity g of the source.
        scale (float): Amplitude of g.
        stage_exact (bool): Whether Poisson is re-solved at every RK stage.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    t_end: float = Field(default=0.25, gt=0.0)
    bump: BumpSpec = Field(
        default_factory=lambda: BumpSpec(center=(0.0, 0.0), radius=0.4)
    )
    source: Literal["saturating", "linear"] = "saturating"
    scale: float = 1.0
    stage_exact: bool = False


class CoupledExperiment(BaseExperiment):
    """Density advected by the gradient of its own Dirichlet Poisson potential."""

    def __init__(self, config: ExperimentConfig) -> None:
        """Initialize the experiment."""
        super().__init__(config)
        self.params = CoupledParams.model_validate(config.params)

    def run(self) -> dict[str, Any]:
        """Run the coupled scheme and check its identities.

        Raises:
            InvalidParameterError: If the mesh does not carry hat cell functions.
        """
        config, params = self.config, self.params
        bundle = build_mesh(config.mesh, periodic=False, seed=config.seed)
        mesh = bundle.mesh
        if not isinstance(mesh, HatMesh):
            msg = (
                f"The coupled experiment needs a triangulated mesh with hat cell "
                f"functions, got {type(mesh).__name__}"
            )
            raise InvalidParameterError(msg)
        space = P1Space(mesh)
        g = (saturating_source if params.source == "saturating" else linear_source)(
            params.scale
        )
        u0 = params.bump.density(mesh, config.quadrature)
        with self.writer("coupled.csv", COUPLED_HEADER) as writer:
            trajectory = run_coupled(
                space,
                u0,
                g,
                params.t_end,
                config.stepper,
                stage_exact=params.stage_exact,
                writer=writer,
            )

        final = trajectory.final
        mass0 = float(u0 @ mesh.volumes)
        jump_rate = max(
            jump_rate_bound(mesh, current.coefficients) for current in trajectory.states
        )
        report = leak_bound_check(
            final.state.leaked / max(mass0, 1e-300),
            params.bump.boundary_distance(mesh),
            jump_rate,
            mesh.dx,
            params.t_end,
        )
        return plain(
            {
                "structural": bundle.report.as_dict(),
                "source": g.name,
                "steps": len(trajectory.states) - 1,
                "mass_initial": mass0,
                "mass_final": float(final.state.u @ mesh.volumes),
                "leaked": final.state.leaked,
                "mass_defect": trajectory.mass_defect,
                "identity_defect": trajectory.identity_defect,
                "envelope": final.envelope,
                "envelope_violations": trajectory.envelope_violations,
                "potential_range": [
                    float(final.potential.min()),
                    float(final.potential.max()),
                ],
                "h1_seminorm": space.h1_seminorm(final.potential),
                "leak_bound": asdict(report),
            }
        )
