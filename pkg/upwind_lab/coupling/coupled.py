"""Upwind transport driven by the gradient of a Poisson potential.

At every step the source g^χ = Σ_j g(u_j) χ_j is rebuilt from the densities,
−Δφ = g^χ is solved with φ = 0 on the boundary, b = ∇φ is projected exactly on
the faces of the hat mesh and the upwind scheme is advanced.
"""

import logging
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray
from scipy import stats

from upwind_lab.core import Discretization
from upwind_lab.coupling.fem import P1Space, PoissonSolution, fem_poisson_solve
from upwind_lab.data_types import (
    CellValues,
    CFLViolationError,
    FaceCoeffs,
    InvalidParameterError,
    SchemeState,
    StepperSpec,
)
from upwind_lab.discretize.projections import discrete_divergence
from upwind_lab.mesh.hat import hat_exact_coefficients
from upwind_lab.upwind.scheme import UpwindOperator
from upwind_lab.utils.csv import CsvWriter
from upwind_lab.utils.logging import LOGGING_TRACE

logger = logging.getLogger(__name__)

COUPLED_HEADER = (
    "t",
    "mass",
    "leak_total",
    "potential_min",
    "potential_max",
    "div_sup",
    "div_inf",
    "identity_defect",
    "u_max",
    "envelope",
)

_CONCAVITY_SAMPLES = 65
_CONCAVITY_TOL = 1e-12
_MAX_HALVINGS = 60


@dataclass(frozen=True, slots=True)
class SourceTerm:
    """Nonlinearity g of the Poisson source.

    Attributes:
        function (Callable[[NDArray[np.float64]], NDArray[np.float64]]): g,
            evaluated elementwise.
        lipschitz (float): Declared Lipschitz constant.
        name (str): Label used in reports.
    """

    function: Callable[[NDArray[np.float64]], NDArray[np.float64]]
    lipschitz: float
    name: str = "g"

    def __call__(self, u: NDArray[np.float64]) -> NDArray[np.float64]:
        """Evaluate g."""
        return np.asarray(self.function(np.asarray(u, dtype=float)), dtype=float)

    def spot_check(self, upper: float = 1.0) -> list[str]:
        """Check g(0) = 0, the Lipschitz bound and concavity on a grid of [0, upper].

        Violations are logged as warnings and returned.
        """
        grid = np.linspace(0.0, upper, _CONCAVITY_SAMPLES)
        values = self(grid)
        problems = []
        if abs(float(values[0])) > _CONCAVITY_TOL:
            problems.append(f"{self.name}(0) = {values[0]:.3e} is not zero")
        slopes = np.diff(values) / np.diff(grid)
        if np.abs(slopes).max() > self.lipschitz * (1.0 + 1e-9):
            problems.append(
                f"slope {np.abs(slopes).max():.4g} exceeds the Lipschitz constant "
                f"{self.lipschitz:.4g}"
            )
        if (np.diff(slopes) > _CONCAVITY_TOL * max(1.0, self.lipschitz)).any():
            problems.append(f"{self.name} is not concave on [0, {upper:g}]")
        for problem in problems:
            logger.warning("Source term: %s", problem)
        return problems


def saturating_source(scale: float = 1.0) -> SourceTerm:
    """g(u) = scale·u / (1 + u), bounded, Lipschitz and concave on u >= 0."""
    return SourceTerm(lambda u: scale * u / (1.0 + np.abs(u)), abs(scale), "u/(1+u)")


def linear_source(scale: float = 0.0) -> SourceTerm:
    """g(u) = scale·u; the zero source freezes the densities."""
    return SourceTerm(lambda u: scale * u, abs(scale), f"{scale:g}u")


@dataclass(frozen=True, slots=True)
class CoupledState:
    """State of the coupled scheme.

    Attributes:
        state (SchemeState): Densities, time and leaked mass.
        potential (NDArray[np.float64]): Nodal values of φ.
        gradient (NDArray[np.float64]): b = ∇φ on every triangle.
        coefficients (FaceCoeffs): P_F b on the hat mesh.
        divergence (CellValues): Discrete divergence D_i of the coefficients.
        source (CellValues): g(u_j) at the nodes.
        envelope (float): A priori bound on max u, grown with the measured
            sup of −D.
    """

    state: SchemeState
    potential: NDArray[np.float64]
    gradient: NDArray[np.float64]
    coefficients: FaceCoeffs
    divergence: CellValues
    source: CellValues
    envelope: float


def _field_state(
    space: P1Space, state: SchemeState, g: SourceTerm, envelope: float
) -> CoupledState:
    source = np.where(space.free, g(state.u), 0.0)
    solution: PoissonSolution = fem_poisson_solve(space, source)
    coeffs = hat_exact_coefficients(space.mesh, solution.gradient, state.t)
    return CoupledState(
        state=state,
        potential=solution.potential,
        gradient=solution.gradient,
        coefficients=coeffs,
        divergence=discrete_divergence(space.mesh, coeffs),
        source=source,
        envelope=envelope,
    )


def initial_state(space: P1Space, u0: CellValues, g: SourceTerm) -> CoupledState:
    """Solve the potential of the initial densities."""
    u0 = np.where(space.free, np.asarray(u0, dtype=float), 0.0)
    return _field_state(
        space, SchemeState(0.0, u0), g, float(np.abs(u0).max(initial=0.0))
    )


def divergence_identity(space: P1Space, current: CoupledState) -> float:
    """max_i |D_i + Σ_j A_ij g(u_j)| on free nodes with A_ij = (1/π_i) ∫ χ_j χ_i."""
    mesh = space.mesh
    expected = -(space.mass @ current.source) / mesh.volumes
    return float(np.abs(current.divergence - expected)[space.free].max(initial=0.0))


def divergence_bounds(
    g: SourceTerm, u: CellValues, samples: int = _CONCAVITY_SAMPLES
) -> tuple[float, float]:
    """Interval [−sup g, −inf g] over the range of u containing every D_i."""
    low = min(float(u.min(initial=0.0)), 0.0)
    grid = np.linspace(low, float(u.max(initial=0.0)), samples)
    values = g(grid)
    return -float(values.max()), -float(values.min())


def _stage_rate(
    space: P1Space,
    operator: UpwindOperator | None,
    u: CellValues,
    t: float,
    g: SourceTerm,
) -> tuple[CellValues, float]:
    if operator is None:
        current = _field_state(space, SchemeState(t, u), g, 0.0)
        operator = UpwindOperator(space.mesh, current.coefficients)
    rate, leak = operator.apply(u)
    return rate, float(leak @ operator.volumes)


def coupled_step(
    space: P1Space,
    current: CoupledState,
    g: SourceTerm,
    stepper: StepperSpec | None = None,
    *,
    t_end: float | None = None,
    stage_exact: bool = False,
) -> CoupledState:
    """Advance the coupled scheme by one explicit step.

    The step is the CFL step of the coefficients at its start (or the fixed step
    of the stepper), capped by ``stepper.max_step`` and shortened to reach
    ``t_end``. An adaptive step is halved until it also satisfies the CFL bound of
    the coefficients at its end. By default the potential is solved once per
    step; with ``stage_exact`` it is re-solved at every stage.

    Args:
        space: The P1 space over the hat mesh.
        current: State at the start of the step, with its potential.
        g: Source nonlinearity.
        stepper: Time discretization; defaults to RK4 with CFL factor 0.5.
        t_end: Time not to step past.
        stage_exact: Whether every stage re-solves the Poisson problem.

    Returns:
        CoupledState: The advanced state with the potential of its densities.

    Raises:
        CFLViolationError: If a fixed step exceeds a CFL bound or no halving of
            an adaptive step satisfies them.
        FEMError: If a Poisson solve fails.
    """
    stepper = stepper or StepperSpec()
    state = current.state
    operator = UpwindOperator(space.mesh, current.coefficients)
    bound, cell = operator.cfl_bound()
    limit = stepper.cfl * bound
    if stepper.dt is not None and stepper.dt > limit * (1.0 + 1e-12):
        raise CFLViolationError(stepper.dt, limit, cell)
    dt = stepper.dt if stepper.dt is not None else limit
    if t_end is not None:
        if t_end <= state.t:
            msg = f"Final time {t_end} does not follow the current time {state.t}"
            raise InvalidParameterError(msg)
        dt = min(dt, t_end - state.t)
    dt = min(dt, stepper.max_step or math.inf)
    if not math.isfinite(dt):
        dt = t_end - state.t if t_end is not None else 1.0

    end_limit, end_cell = limit, cell
    for _ in range(_MAX_HALVINGS):
        advanced = _advance(space, current, operator, g, stepper, dt, stage_exact)
        end_bound, end_cell = UpwindOperator(
            space.mesh, advanced.coefficients
        ).cfl_bound()
        end_limit = stepper.cfl * end_bound
        if dt <= end_limit * (1.0 + 1e-12):
            return advanced
        if stepper.dt is not None:
            raise CFLViolationError(stepper.dt, end_limit, end_cell)
        logger.log(
            LOGGING_TRACE,
            "Coupled step %.3e at t=%.6g exceeds end bound %.3e (cell %d)",
            dt,
            state.t,
            end_limit,
            end_cell,
        )
        dt = min(0.5 * dt, end_limit)
    raise CFLViolationError(dt, end_limit, end_cell)


def _advance(
    space: P1Space,
    current: CoupledState,
    operator: UpwindOperator,
    g: SourceTerm,
    stepper: StepperSpec,
    dt: float,
    stage_exact: bool,
) -> CoupledState:
    state = current.state
    if stepper.method == "euler":
        rate, leak = _stage_rate(space, operator, state.u, state.t, g)
        u = state.u + dt * rate
        lost = -dt * leak
    else:
        nodes = (0.0, 0.5, 0.5, 1.0)
        weights = (1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0)
        du = np.zeros_like(state.u)
        rate = np.zeros_like(state.u)
        lost = 0.0
        for k, (c, w) in enumerate(zip(nodes, weights, strict=True)):
            stage_operator = operator if k == 0 or not stage_exact else None
            rate, leak = _stage_rate(
                space, stage_operator, state.u + c * dt * rate, state.t + c * dt, g
            )
            du += w * rate
            lost -= w * dt * leak
        u = state.u + dt * du

    growth = max(-float(current.divergence[space.free].min(initial=0.0)), 0.0)
    envelope = current.envelope * math.exp(growth * dt)
    advanced = SchemeState(state.t + dt, u, state.leaked + lost)
    return _field_state(space, advanced, g, envelope)


@dataclass(slots=True)
class CoupledTrajectory:
    """Recorded states of a coupled run.

    Attributes:
        states (list[CoupledState]): States at every accepted step.
        identity_defect (float): Largest defect of the divergence identity.
        mass_defect (float): Largest |mass + leaked − initial mass|.
        envelope_violations (int): Steps where max u exceeded its a priori bound.
    """

    states: list[CoupledState] = field(default_factory=list)
    identity_defect: float = 0.0
    mass_defect: float = 0.0
    envelope_violations: int = 0

    @property
    def final(self) -> CoupledState:
        """The last state."""
        return self.states[-1]


def _row(space: P1Space, current: CoupledState, defect: float) -> tuple[float, ...]:
    state = current.state
    free = current.divergence[space.free]
    return (
        state.t,
        float(state.u @ space.mesh.volumes),
        state.leaked,
        float(current.potential.min()),
        float(current.potential.max()),
        float(free.max(initial=0.0)),
        float(free.min(initial=0.0)),
        defect,
        float(state.u.max(initial=0.0)),
        current.envelope,
    )


def run_coupled(  # noqa: PLR0913
    space: P1Space,
    u0: CellValues,
    g: SourceTerm,
    t_end: float,
    stepper: StepperSpec | None = None,
    *,
    stage_exact: bool = False,
    writer: CsvWriter | None = None,
) -> CoupledTrajectory:
    """Integrate the coupled scheme to ``t_end``, checking its identities at every step.

    Rows of ``COUPLED_HEADER`` are written for every accepted step.
    """
    g.spot_check(max(float(np.max(u0)), 1.0))
    current = initial_state(space, u0, g)
    mass0 = float(current.state.u @ space.mesh.volumes)
    trajectory = CoupledTrajectory()
    while True:
        defect = divergence_identity(space, current)
        trajectory.states.append(current)
        trajectory.identity_defect = max(trajectory.identity_defect, defect)
        state = current.state
        mass = float(state.u @ space.mesh.volumes)
        trajectory.mass_defect = max(
            trajectory.mass_defect, abs(mass + state.leaked - mass0)
        )
        if float(state.u.max(initial=0.0)) > current.envelope * (1.0 + 1e-9) + 1e-14:
            trajectory.envelope_violations += 1
        if writer is not None:
            writer.write_rows([_row(space, current, defect)])
        if state.t >= t_end * (1.0 - 1e-12):
            break
        current = coupled_step(
            space, current, g, stepper, t_end=t_end, stage_exact=stage_exact
        )
    logger.info(
        "Coupled run to t = %.4g in %d steps: identity defect %.2e, leaked %.3e",
        t_end,
        len(trajectory.states) - 1,
        trajectory.identity_defect,
        trajectory.final.state.leaked,
    )
    return trajectory


def jump_rate_bound(mesh: Discretization, coeffs: FaceCoeffs) -> float:
    """M_λ = δx · max_i Σ_{i'} a_{i',i} / π_i over the interior cells."""
    outflow = np.asarray(coeffs.matrix().sum(axis=0)).ravel()
    rates = (outflow / mesh.volumes)[mesh.interior]
    return mesh.dx * float(rates.max(initial=0.0))


@dataclass(frozen=True, slots=True)
class LeakBoundReport:
    """Measured leak against the exponential and Poisson tail bounds.

    Attributes:
        dx (float): Mesh size δx.
        horizon (float): Final time T.
        distance (float): Distance L from the initial support to the boundary.
        jump_rate (float): M_λ, so that jumps happen at rate at most M_λ/δx.
        leaked (float): Mass lost through the boundary up to T.
        lambda_t (float): Λ_T = (L − M_λ T) / 2.
        exponential (float): exp(−Λ_T / δx), nan when skipped.
        poisson_tail (float): P{N(T) ≥ ⌊L/δx⌋ − 1} for N of rate M_λ/δx.
        skipped (bool): Whether Λ_T ≤ 0 made the check meaningless.
        reason (str): Diagnostic of a skipped check.
    """

    dx: float
    horizon: float
    distance: float
    jump_rate: float
    leaked: float
    lambda_t: float
    exponential: float
    poisson_tail: float
    skipped: bool = False
    reason: str = ""


def leak_bound_check(
    leaked: float,
    distance: float,
    jump_rate: float,
    dx: float,
    horizon: float,
) -> LeakBoundReport:
    """Compare the leaked mass with exp(−Λ_T/δx) and the jump-count tail.

    A walker must jump at least ⌊L/δx⌋ − 1 times to reach the boundary, so the
    leaked fraction is at most the Poisson tail of that count.
    """
    if dx <= 0.0 or horizon < 0.0:
        msg = f"Mesh size must be positive and horizon nonnegative, got {dx}, {horizon}"
        raise InvalidParameterError(msg)
    lambda_t = 0.5 * (distance - jump_rate * horizon)
    jumps = max(math.floor(distance / dx) - 1, 0)
    tail = 1.0
    if jumps:
        tail = float(stats.poisson.sf(jumps - 1, jump_rate * horizon / dx))
    if lambda_t <= 0.0:
        reason = (
            f"Lambda_T = {lambda_t:.4g} <= 0: the horizon {horizon:.4g} exceeds "
            f"L / M_lambda = {distance / max(jump_rate, 1e-300):.4g}"
        )
        logger.warning("Leak bound check skipped: %s", reason)
        return LeakBoundReport(
            dx,
            horizon,
            distance,
            jump_rate,
            leaked,
            lambda_t,
            math.nan,
            tail,
            skipped=True,
            reason=reason,
        )
    exponential = math.exp(-lambda_t / dx)
    logger.info(
        "Leak %.3e against exp(-Lambda_T/dx) = %.3e and Poisson tail %.3e",
        leaked,
        exponential,
        tail,
    )
    return LeakBoundReport(
        dx, horizon, distance, jump_rate, leaked, lambda_t, exponential, tail
    )


def leak_trend(reports: Sequence[LeakBoundReport]) -> float:
    """Slope of log(leak) against 1/δx over the reports with positive leak.

    Returns:
        float: The fitted slope; nan with fewer than two usable reports.
    """
    usable = [r for r in reports if r.leaked > 0.0 and not r.skipped]
    if len(usable) < 2:  # noqa: PLR2004
        return math.nan
    x = np.array([1.0 / r.dx for r in usable])
    y = np.log([r.leaked for r in usable])
    return float(np.polyfit(x, y, 1)[0])
