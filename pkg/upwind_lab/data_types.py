from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from numpy.typing import NDArray
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy import sparse

type CellValues = NDArray[np.float64]
"""Per-cell scalars (shape ``(n,)``) or vectors (shape ``(n, d)``).

Values on cells outside the interior set are exactly zero.
"""


class UpwindLabError(Exception):
    """Base class of all errors raised by the library."""


class ConfigurationError(UpwindLabError, ValueError):
    """Raised when user input or parameters are invalid."""


class InvalidParameterError(ConfigurationError):
    """Raised when a numerical parameter lies outside its documented range."""


class MeshValidationError(ConfigurationError):
    """Raised when a mesh violates a structural requirement."""


class NonConformingMeshError(MeshValidationError):
    """Raised when two cells share only part of a face."""

    _TEMPLATE = "Cells %d and %d overlap on a partial face (%s)"

    def __init__(self, first: int, second: int, detail: str = "") -> None:
        """Initialize the error with the offending cell pair."""
        self.cells: tuple[int, int] = (first, second)
        self.detail: str = detail
        super().__init__(self.__str__())

    def __str__(self) -> str:
        """Return a string representation of the error."""
        return self._TEMPLATE % (self.cells[0], self.cells[1], self.detail)


class DegenerateCellError(MeshValidationError):
    """Raised when a cell has (numerically) zero volume."""


class PeriodicityError(ConfigurationError):
    """Raised when a declared periodic pattern does not match the mesh."""


class NumericalError(UpwindLabError):
    """Base class of failures raised while computing."""


class CFLViolationError(NumericalError):
    """Raised when a fixed time step exceeds the stability bound."""

    _TEMPLATE = "Time step %.6g exceeds the CFL bound %.6g set by cell %d"

    def __init__(self, dt: float, bound: float, cell: int) -> None:
        """Initialize the error with the step, the bound and the limiting cell."""
        self.dt: float = dt
        self.bound: float = bound
        self.cell: int = cell
        super().__init__(self.__str__())

    def __str__(self) -> str:
        """Return a string representation of the error."""
        return self._TEMPLATE % (self.dt, self.bound, self.cell)


class QuadratureError(NumericalError):
    """Raised when a quadrature cannot be evaluated on a face or cell."""


class PositivityError(NumericalError):
    """Raised when an explicit step produces negative densities."""


class DiffusionMatrixError(NumericalError):
    """Raised when a matrix is not a discrete diffusion operator."""


class RangeConditionError(NumericalError):
    """Raised when a right-hand side is not in the range of a diffusion operator."""

    _TEMPLATE = "Block %d violates the range condition: sum of rhs = %s"

    def __init__(self, block: int, block_sum: NDArray[np.float64]) -> None:
        """Initialize the error with the offending block and its rhs sum."""
        self.block: int = block
        self.block_sum: NDArray[np.float64] = block_sum
        super().__init__(self.__str__())

    def __str__(self) -> str:
        """Return a string representation of the error."""
        return self._TEMPLATE % (self.block, np.array2string(self.block_sum))


class UnsolvableDirectionError(NumericalError):
    """Raised when the periodic system cannot be solved for a direction."""


class FEMError(NumericalError):
    """Raised when the finite element system cannot be assembled or solved."""


class QuadratureSpec(BaseModel):
    """Point counts of the quadrature rules.

    Attributes:
        face_points (int): Gauss-Legendre points along each face segment. The
            default is twice what a smooth integrand would need because of the
            kink of the positive part.
        ball_radial (int): Gauss-Legendre points in the radius of ball averages.
        ball_angular (int): Equispaced angles of ball averages.
        cell_points (int): Collapsed Gauss points per direction on each triangle.
        time_points (int): Gauss-Legendre points per time slab.
        seed (int): Seed of the sampling used by validation routines.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    face_points: int = Field(default=8, ge=1)
    ball_radial: int = Field(default=4, ge=1)
    ball_angular: int = Field(default=16, ge=3)
    cell_points: int = Field(default=4, ge=1)
    time_points: int = Field(default=3, ge=1)
    seed: int = 0

    def refined(self) -> "QuadratureSpec":
        """Return a copy with every point count doubled."""
        return self.model_copy(
            update={
                "face_points": 2 * self.face_points,
                "ball_radial": 2 * self.ball_radial,
                "ball_angular": 2 * self.ball_angular,
                "cell_points": 2 * self.cell_points,
                "time_points": 2 * self.time_points,
            }
        )


class StepperSpec(BaseModel):
    """Time discretization of the semi-discrete scheme.

    Attributes:
        method (Literal["euler", "rk4"]): Explicit Euler or classical Runge-Kutta.
        cfl (float): Safety factor c in (0, 1] applied to the CFL bound.
        dt (float | None): Fixed time step, or None for the largest admissible step.
        max_step (float | None): Upper bound of adaptive steps; None leaves them
            limited by the CFL bounds at the stage times only.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    method: Literal["euler", "rk4"] = "rk4"
    cfl: float = Field(default=0.5, gt=0.0, le=1.0)
    dt: float | None = Field(default=None, gt=0.0)
    max_step: float | None = Field(default=None, gt=0.0)


KERNEL_WIDTH_SUP = 0.5
_WIDTH_TOP = float(np.nextafter(KERNEL_WIDTH_SUP, 0.0))


class SemiNormParams(BaseModel):
    """Parameters of the discrete log-scale semi-norm.

    Attributes:
        h0 (float): Smallest kernel width, in (0, 1/2).
        p (float): Exponent of the increments, at least 1.
        theta (float): Exponent of the logarithmic weight, in (0, 1].
        n_h (int): Number of points of the geometric h-grid from h0 to the
            largest float below 1/2.
        h_values (tuple[float, ...] | None): Explicit h-grid replacing the
            geometric one.
        p_star (float | None): Conjugate exponent used by the divergence semi-norm.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    h0: float = Field(default=0.05, gt=0.0, lt=KERNEL_WIDTH_SUP)
    p: float = Field(default=1.0, ge=1.0)
    theta: float = Field(default=0.5, gt=0.0, le=1.0)
    n_h: int = Field(default=24, ge=0)
    h_values: tuple[float, ...] | None = None
    p_star: float | None = Field(default=None, ge=1.0)

    @field_validator("h_values")
    @classmethod
    def _check_h_values(
        cls, value: tuple[float, ...] | None
    ) -> tuple[float, ...] | None:
        if value is not None and any(not 0.0 < h < KERNEL_WIDTH_SUP for h in value):
            msg = f"Kernel widths must lie in (0, 1/2), got {value}"
            raise ValueError(msg)
        return value

    @model_validator(mode="after")
    def _check_grid(self) -> "SemiNormParams":
        if self.h_values is not None and any(h < self.h0 for h in self.h_values):
            msg = f"Kernel widths {self.h_values} must not be below h0 = {self.h0}"
            raise ValueError(msg)
        return self

    def h_grid(self) -> NDArray[np.float64]:
        """Return the kernel widths over which the supremum is taken."""
        if self.h_values is not None:
            return np.asarray(self.h_values, dtype=float)
        if self.n_h == 1:
            return np.array([self.h0])
        if not self.n_h:
            return np.empty(0)
        return np.geomspace(self.h0, _WIDTH_TOP, self.n_h)

    @property
    def divergence_log_exponent(self) -> float:
        """Log exponent p(θ − 1/p*) of the divergence semi-norm."""
        p_star = self.p_star if self.p_star is not None else np.inf
        return self.p * (self.theta - 1.0 / p_star)

    def divergence_params(self) -> "SemiNormParams":
        """Return the parameters of the divergence semi-norm.

        The log exponent may be negative; validation is bypassed on purpose and
        callers are expected to flag that case.
        """
        return self.model_copy(update={"theta": self.divergence_log_exponent})


@dataclass(frozen=True, slots=True)
class FaceCoeffs:
    """Upwind transfer coefficients on the faces of a mesh.

    Faces are stored once as ``(p, q)``; ``forward[f]`` is a_{q,p}, the transfer
    from p into q, and ``backward[f]`` is a_{p,q}.

    Attributes:
        faces (NDArray[np.int64]): Face index pairs, shape ``(F, 2)``.
        forward (NDArray[np.float64]): Coefficients a_{q,p} >= 0.
        backward (NDArray[np.float64]): Coefficients a_{p,q} >= 0.
        n_cells (int): Number of cells of the mesh.
        time (float | None): Time at which a time-dependent field was projected.
        error_estimate (float | None): Quadrature self-estimate, if requested.
    """

    faces: NDArray[np.int64]
    forward: NDArray[np.float64]
    backward: NDArray[np.float64]
    n_cells: int
    time: float | None = None
    error_estimate: float | None = None

    def __post_init__(self) -> None:
        """Check shapes and nonnegativity."""
        if self.forward.shape != (len(self.faces),) or (
            self.backward.shape != (len(self.faces),)
        ):
            msg = "Coefficient arrays must have one entry per face"
            raise ValueError(msg)
        if (self.forward < 0).any() or (self.backward < 0).any():
            msg = "Upwind coefficients must be nonnegative"
            raise ValueError(msg)

    @classmethod
    def zeros(cls, faces: NDArray[np.int64], n_cells: int) -> "FaceCoeffs":
        """Return vanishing coefficients on the given faces."""
        return cls(faces, np.zeros(len(faces)), np.zeros(len(faces)), n_cells)

    def matrix(self) -> sparse.csr_matrix:
        """Return the sparse matrix with entries ``A[i, j] = a_{i,j}``."""
        p, q = self.faces[:, 0], self.faces[:, 1]
        rows = np.concatenate([q, p])
        cols = np.concatenate([p, q])
        values = np.concatenate([self.forward, self.backward])
        return sparse.coo_matrix(
            (values, (rows, cols)), shape=(self.n_cells, self.n_cells)
        ).tocsr()

    def scaled(self, factor: float) -> "FaceCoeffs":
        """Return the coefficients multiplied by a nonnegative factor."""
        return FaceCoeffs(
            self.faces,
            factor * self.forward,
            factor * self.backward,
            self.n_cells,
            self.time,
        )


@dataclass(frozen=True, slots=True)
class SchemeState:
    """State of the semi-discrete scheme.

    Attributes:
        t (float): Time.
        u (CellValues): Densities, zero outside the interior cells.
        leaked (float): Cumulative mass lost through non-interior cells.
    """

    t: float
    u: CellValues
    leaked: float = 0.0


@dataclass(slots=True)
class LeakLedger:
    """Record of the leak terms R_i along an integration.

    Attributes:
        times (list[float]): Times at which the leak was evaluated.
        rates (list[float]): Values of Σ R_i π_i at those times.
        cells (list[CellValues]): Per-cell R_i at those times.
    """

    times: list[float] = field(default_factory=list)
    rates: list[float] = field(default_factory=list)
    cells: list[CellValues] = field(default_factory=list)

    def record(self, t: float, leak: CellValues, volumes: CellValues) -> None:
        """Append the leak field observed at time t."""
        self.times.append(t)
        self.rates.append(float(leak @ volumes))
        self.cells.append(leak)
