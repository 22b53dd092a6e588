import logging
from dataclasses import asdict
from typing import Any

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from upwind_lab.container import build_field, build_mesh
from upwind_lab.coupling.coupled import jump_rate_bound, leak_bound_check
from upwind_lab.data_types import SchemeState
from upwind_lab.experiments.base import BaseExperiment, BumpSpec, plain
from upwind_lab.settings import ExperimentConfig
from upwind_lab.upwind.integrate import TRAJECTORY_HEADER, FieldProvider, integrate
from upwind_lab.upwind.monte_carlo import monte_carlo_oracle

logger = logging.getLogger(__name__)

MONTE_CARLO_HEADER = ("cell_id", "u_ode", "u_mc", "stderr")


class AdvectParams(BaseModel):
    """Parameters of the advect experiment.

    Attributes:
        t_end (float): Final time.
        outputs (int): Number of equispaced output times after t = 0.
        bump (BumpSpec): Initial density.
        walkers (int): Monte Carlo walkers; 0 skips the oracle.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    t_end: float = Field(default=0.2, gt=0.0)
    outputs: int = Field(default=4, ge=1)
    bump: BumpSpec = Field(default_factory=BumpSpec)
    walkers: int = Field(default=0, ge=0)


class AdvectExperiment(BaseExperiment):
    """Advection of a bump with mass ledger, leak bound and Monte Carlo oracle."""

    def __init__(self, config: ExperimentConfig) -> None:
        """Initialize the experiment."""
        super().__init__(config)
        self.params = AdvectParams.model_validate(config.params)

    def run(self) -> dict[str, Any]:
        """Integrate the scheme and compare it with its oracles."""
        config, params = self.config, self.params
        bundle = build_mesh(config.mesh, periodic=False, seed=config.seed)
        mesh = bundle.mesh
        field = build_field(config.field)
        provider = FieldProvider(mesh, field, config.quadrature)

        u0 = params.bump.density(mesh, config.quadrature)
        times = np.linspace(0.0, params.t_end, params.outputs + 1)[1:]
        with self.writer("trajectory.csv", TRAJECTORY_HEADER) as writer:
            trajectory = integrate(
                mesh,
                SchemeState(0.0, u0),
                provider,
                params.t_end,
                config.stepper,
                output_times=times,
                writer=writer,
            )

        final = trajectory.final
        mass0 = float(u0 @ mesh.volumes)
        results: dict[str, Any] = {
            "structural": bundle.report.as_dict(),
            "mass_initial": mass0,
            "mass_final": float(final.u @ mesh.volumes),
            "leaked": final.leaked,
            "mass_defect": trajectory.mass_defect,
            "steps": trajectory.steps,
        }

        if field.time_dependent:
            logger.info("Leak bound and Monte Carlo oracle need a stationary field")
            return plain(results)

        coeffs = provider(0.0)
        report = leak_bound_check(
            final.leaked / max(mass0, 1e-300),
            params.bump.boundary_distance(mesh),
            jump_rate_bound(mesh, coeffs),
            mesh.dx,
            params.t_end,
        )
        results["leak_bound"] = asdict(report)

        if params.walkers:
            estimate = monte_carlo_oracle(
                mesh, coeffs, u0, params.t_end, params.walkers, config.seed
            )
            with self.writer("monte_carlo.csv", MONTE_CARLO_HEADER) as writer:
                writer.write_rows(
                    zip(
                        range(mesh.n_cells),
                        final.u,
                        estimate.u,
                        estimate.stderr,
                        strict=True,
                    )
                )
            gap = np.abs(final.u - estimate.u)
            # cells with zero standard error must match exactly
            within = gap <= 3.0 * estimate.stderr + 1e-12
            results["monte_carlo"] = {
                "walkers": params.walkers,
                "within_3_stderr": float(within.mean()),
                "p_value": estimate.chi_square(final.u, mesh.volumes),
                "leaked_fraction": estimate.leaked,
                "leaked_fraction_stderr": estimate.leaked_stderr,
                "leaked_fraction_ode": final.leaked / max(mass0, 1e-300),
            }
            logger.info(
                "Monte Carlo: %.1f%% of cells within 3 standard errors",
                100.0 * float(within.mean()),
            )
        return plain(results)
