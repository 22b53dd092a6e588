import logging
import math
from collections.abc import Sequence
from pathlib import Path
from typing import Any

import numpy as np
import shapely
from numpy.typing import NDArray
from pydantic import BaseModel, ConfigDict, Field

from upwind_lab.core import Discretization
from upwind_lab.data_types import CellValues, QuadratureSpec
from upwind_lab.discretize.projections import project_to_cell
from upwind_lab.settings import ExperimentConfig
from upwind_lab.utils.csv import CsvWriter

logger = logging.getLogger(__name__)


class BumpSpec(BaseModel):
    """Smooth initial density u₀(x) = (1 − |x − c|²/ρ²)²₊.

    Attributes:
        center (tuple[float, float]): Center c.
        radius (float): Support radius ρ.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    center: tuple[float, float] = (0.5, 0.5)
    radius: float = Field(default=0.2, gt=0.0)

    def __call__(self, x: NDArray[np.float64]) -> NDArray[np.float64]:
        """Evaluate the bump."""
        r2 = ((np.atleast_2d(x) - np.asarray(self.center)) ** 2).sum(axis=1)
        return np.maximum(1.0 - r2 / self.radius**2, 0.0) ** 2

    def density(
        self, mesh: Discretization, spec: QuadratureSpec | None = None
    ) -> CellValues:
        """P_C u₀ on the interior cells."""
        return project_to_cell(mesh, self, spec)

    def boundary_distance(self, mesh: Discretization) -> float:
        """Distance L from the support of u₀ to ∂Ω, less one support diameter."""
        distance = mesh.domain.boundary.distance(shapely.Point(self.center))
        return float(distance - self.radius - mesh.support_diameters.max())


def plain(value: Any) -> Any:  # noqa: ANN401
    """Convert numpy scalars and arrays to JSON compatible values."""
    if isinstance(value, dict):
        return {str(k): plain(v) for k, v in value.items()}
    if isinstance(value, list | tuple):
        return [plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return plain(value.tolist())
    if isinstance(value, np.integer | np.bool_):
        return value.item()
    if isinstance(value, float | np.floating):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


class BaseExperiment:
    """Shared plumbing of the experiments: output files and parameters.

    Attributes:
        config (ExperimentConfig): The resolved configuration.
        output (Path): Directory receiving the artifacts.
        artifacts (list[Path]): Files written so far.
    """

    def __init__(self, config: ExperimentConfig) -> None:
        """Initialize the experiment."""
        self.config = config
        self.output: Path = config.output
        self.artifacts: list[Path] = []

    def writer(self, name: str, header: Sequence[str]) -> CsvWriter:
        """Open a CSV artifact in the output directory."""
        path = self.output / name
        self.artifacts.append(path)
        logger.debug("Writing %s", path)
        return CsvWriter(path, header)

    def run(self) -> dict[str, Any]:
        """Run the experiment."""
        raise NotImplementedError
