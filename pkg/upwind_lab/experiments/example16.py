import logging
from typing import Any, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from upwind_lab.container import build_field
from upwind_lab.core import Discretization
from upwind_lab.data_types import SchemeState
from upwind_lab.experiments.base import BaseExperiment, BumpSpec, plain
from upwind_lab.mesh.generators.alternating import build_alternating_mesh
from upwind_lab.mesh.mollified import mollify_polygon_mesh
from upwind_lab.seminorm.fractional import fractional_sobolev
from upwind_lab.settings import ExperimentConfig
from upwind_lab.upwind.integrate import FieldProvider, integrate

logger = logging.getLogger(__name__)

FRACTIONAL_HEADER = ("h", "s", "t", "value")


class Example16Params(BaseModel):
    """Parameters of the alternating-rows experiment.

    Attributes:
        h_values (tuple[float, ...]): Row heights of the refinements.
        s_values (tuple[float, ...]): Smoothness exponents of the W^{s,1} sums.
        t_end (float): Final time.
        bounds (tuple[float, float, float, float]): Domain rectangle.
        bump (BumpSpec): Initial density.
        scheme (Literal["sharp", "mollified"]): Cell functions 1_{V_i} or their
            ball averages.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    h_values: tuple[float, ...] = (0.25, 0.125, 0.0625)
    s_values: tuple[float, ...] = (0.3, 0.4, 0.5, 0.6, 0.7)
    t_end: float = Field(default=1.0, gt=0.0)
    bounds: tuple[float, float, float, float] = (0.0, 0.0, 2.0, 1.0)
    bump: BumpSpec = Field(default_factory=lambda: BumpSpec(radius=0.3))
    scheme: Literal["sharp", "mollified"] = "sharp"


class Example16Experiment(BaseExperiment):
    """W^{s,1} sums of a transported bump on meshes with two horizontal resolutions."""

    def __init__(self, config: ExperimentConfig) -> None:
        """Initialize the experiment."""
        super().__init__(config)
        self.params = Example16Params.model_validate(config.params)

    def _mesh(self, h: float) -> Discretization:
        polygon = build_alternating_mesh(h, self.params.bounds)
        if self.params.scheme == "sharp":
            return polygon
        return mollify_polygon_mesh(polygon, self.config.mesh.radius)

    def run(self) -> dict[str, Any]:
        """Transport the bump on every refinement and scan the smoothness exponents."""
        config, params = self.config, self.params
        field = build_field(config.field)
        values = np.zeros((len(params.h_values), len(params.s_values)))
        with self.writer("example16.csv", FRACTIONAL_HEADER) as writer:
            for k, h in enumerate(params.h_values):
                mesh = self._mesh(h)
                u0 = params.bump.density(mesh, config.quadrature)
                provider = FieldProvider(mesh, field, config.quadrature)
                trajectory = integrate(
                    mesh, SchemeState(0.0, u0), provider, params.t_end, config.stepper
                )
                for t, u in ((0.0, u0), (params.t_end, trajectory.final.u)):
                    rows = [
                        (h, s, t, fractional_sobolev(mesh, u, s))
                        for s in params.s_values
                    ]
                    writer.write_rows(rows)
                values[k] = [row[3] for row in rows]
                logger.info("h = %.4g: %d cells transported", h, mesh.n_cells)

        growth: dict[str, float] = {}
        if len(params.h_values) > 1:
            x = np.log(1.0 / np.asarray(params.h_values))
            for j, s in enumerate(params.s_values):
                slope = np.polyfit(x, np.log(np.maximum(values[:, j], 1e-300)), 1)[0]
                growth[f"{s:g}"] = float(slope)
                logger.info("s = %.2f: W^{s,1} sum grows like h^-%.3f", s, slope)
        return plain(
            {
                "h_values": list(params.h_values),
                "s_values": list(params.s_values),
                "final_values": values,
                "growth_exponents": growth,
            }
        )
