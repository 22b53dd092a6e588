"""Explicit time integration of the semi-discrete upwind scheme."""

import logging
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from upwind_lab.core import Discretization, VectorField
from upwind_lab.data_types import (
    CellValues,
    CFLViolationError,
    FaceCoeffs,
    InvalidParameterError,
    LeakLedger,
    PositivityError,
    QuadratureSpec,
    SchemeState,
    StepperSpec,
)
from upwind_lab.discretize.projections import project_to_face
from upwind_lab.upwind.scheme import UpwindOperator
from upwind_lab.utils.csv import CsvWriter
from upwind_lab.utils.logging import LOGGING_TRACE

logger = logging.getLogger(__name__)

type CoefficientProvider = Callable[[float], FaceCoeffs]
"""Returns the coefficients a_{i,j}(t) at a time t."""

TRAJECTORY_HEADER = ("t", "cell_id", "u", "pi", "leaked_total")

_POSITIVITY_TOL = 1e-12
_MAX_HALVINGS = 60


def constant_provider(coeffs: FaceCoeffs) -> CoefficientProvider:
    """Provider returning the same coefficients at every time."""
    return lambda _t: coeffs


class FieldProvider:
    """Coefficients of a time-dependent field, projected at each requested time.

    Projections are cached by time so that repeated stage times share them.
    A time-independent field is projected once.
    """

    __slots__ = ("_cache", "_field", "_mesh", "_spec")

    def __init__(
        self,
        mesh: Discretization,
        vector_field: VectorField,
        spec: QuadratureSpec | None = None,
    ) -> None:
        """Initialize the provider.

        Args:
            mesh: The mesh.
            vector_field: The velocity field b(t, x).
            spec: Quadrature point counts.
        """
        self._mesh = mesh
        self._field = vector_field
        self._spec = spec
        self._cache: dict[float, FaceCoeffs] = {}

    def __call__(self, t: float) -> FaceCoeffs:
        """Return the coefficients at time t."""
        key = float(t) if self._field.time_dependent else 0.0
        coeffs = self._cache.get(key)
        if coeffs is None:
            coeffs = project_to_face(
                self._mesh,
                lambda x: self._field(key, x),
                self._spec,
                time=key if self._field.time_dependent else None,
            )
            if len(self._cache) > 64:  # noqa: PLR2004
                self._cache.clear()
            self._cache[key] = coeffs
        return coeffs


@dataclass(slots=True)
class Trajectory:
    """States of an integration at the output times.

    Attributes:
        states (list[SchemeState]): Initial state followed by one state per output time.
        ledger (LeakLedger): Leak terms observed at the start of every step.
        steps (int): Number of accepted steps.
        mass_defect (float): Largest |Δ(Σ u_i π_i) + Δ(leaked)| over the steps.
    """

    states: list[SchemeState] = field(default_factory=list)
    ledger: LeakLedger = field(default_factory=LeakLedger)
    steps: int = 0
    mass_defect: float = 0.0

    @property
    def final(self) -> SchemeState:
        """The last state."""
        return self.states[-1]


class _OperatorCache:
    __slots__ = ("_entries", "_interior", "_mesh")

    _SIZE = 8

    def __init__(
        self, mesh: Discretization, interior: NDArray[np.bool_] | None
    ) -> None:
        self._mesh = mesh
        self._interior = interior
        self._entries: dict[int, tuple[FaceCoeffs, UpwindOperator]] = {}

    def __call__(self, coeffs: FaceCoeffs) -> UpwindOperator:
        entry = self._entries.get(id(coeffs))
        if entry is not None and entry[0] is coeffs:
            return entry[1]
        operator = UpwindOperator(self._mesh, coeffs, self._interior)
        if len(self._entries) >= self._SIZE:
            self._entries.pop(next(iter(self._entries)))
        self._entries[id(coeffs)] = (coeffs, operator)
        return operator


def _stage_limit(
    t: float,
    dt: float,
    nodes: tuple[float, ...],
    provider: CoefficientProvider,
    operators: _OperatorCache,
) -> tuple[float, int]:
    limit, limiting = np.inf, -1
    for c in nodes:
        bound, cell = operators(provider(t + c * dt)).cfl_bound()
        if bound < limit:
            limit, limiting = bound, cell
    return limit, limiting


def _step_size(
    t: float,
    remaining: float,
    stepper: StepperSpec,
    provider: CoefficientProvider,
    operators: _OperatorCache,
) -> float:
    """Largest step from t whose CFL bounds hold at the start and at every stage.

    Adaptive steps start from the bound at t, capped by ``max_step``, and are
    halved until the bounds at the later stage times admit them.
    """
    nodes = (0.0, 1.0) if stepper.method == "euler" else (0.0, 0.5, 1.0)
    if stepper.dt is not None:
        dt = min(stepper.dt, remaining)
        bound, cell = _stage_limit(t, dt, nodes, provider, operators)
        if dt > stepper.cfl * bound * (1.0 + 1e-12):
            raise CFLViolationError(stepper.dt, stepper.cfl * bound, cell)
        return dt

    bound, _ = operators(provider(t)).cfl_bound()
    dt = min(stepper.cfl * bound, remaining, stepper.max_step or np.inf)
    limit, cell = np.inf, -1
    for _ in range(_MAX_HALVINGS):
        bound, cell = _stage_limit(t, dt, nodes, provider, operators)
        limit = stepper.cfl * bound
        if dt <= limit * (1.0 + 1e-12):
            return dt
        logger.log(
            LOGGING_TRACE,
            "Step %.3e at t = %.6g rejected: stage bound %.3e (cell %d)",
            dt,
            t,
            limit,
            cell,
        )
        dt = min(0.5 * dt, limit)
    raise CFLViolationError(dt, limit, cell)


def _euler(
    state: SchemeState,
    dt: float,
    provider: CoefficientProvider,
    operators: _OperatorCache,
) -> tuple[CellValues, float]:
    operator = operators(provider(state.t))
    rate, leak = operator.apply(state.u)
    return state.u + dt * rate, -dt * float(leak @ operator.volumes)


def _rk4(
    state: SchemeState,
    dt: float,
    provider: CoefficientProvider,
    operators: _OperatorCache,
) -> tuple[CellValues, float]:
    t, u = state.t, state.u
    nodes = (0.0, 0.5, 0.5, 1.0)
    weights = (1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0)
    du = np.zeros_like(u)
    lost = 0.0
    rate = np.zeros_like(u)
    for c, w in zip(nodes, weights, strict=True):
        operator = operators(provider(t + c * dt))
        rate, leak = operator.apply(u + c * dt * rate)
        du += w * rate
        lost -= w * float(leak @ operator.volumes)
    return u + dt * du, dt * lost


def integrate(  # noqa: C901, PLR0913
    mesh: Discretization,
    state: SchemeState,
    provider: CoefficientProvider,
    t_end: float,
    stepper: StepperSpec | None = None,
    *,
    output_times: Sequence[float] | NDArray[np.float64] | None = None,
    interior: NDArray[np.bool_] | None = None,
    writer: CsvWriter | None = None,
) -> Trajectory:
    """Integrate the upwind scheme from ``state.t`` to ``t_end``.

    Each step is as large as the CFL bounds of the coefficients at its start
    and at its stage times allow, shortened to hit the output times and capped
    by ``stepper.max_step``. Coefficients of time-dependent
    fields are evaluated at the stage times. The leaked mass is integrated
    with the same stages as the densities.

    Args:
        mesh: The mesh.
        state: Initial state.
        provider: Coefficients as a function of time.
        t_end: Final time.
        stepper: Time discretization; defaults to RK4 with CFL factor 0.5.
        output_times: Times at which states are recorded; ``t_end`` is always included.
        interior: Active cells; defaults to the interior cells of the mesh.
        writer: Trajectory CSV receiving ``TRAJECTORY_HEADER`` rows at output times.

    Returns:
        Trajectory: States at the output times and the leak ledger.

    Raises:
        InvalidParameterError: If ``t_end`` precedes the initial time.
        CFLViolationError: If a fixed step exceeds the CFL bound.
        PositivityError: If an explicit Euler step produces negative densities.
    """
    stepper = stepper or StepperSpec()
    if t_end < state.t:
        msg = f"Final time {t_end} precedes the initial time {state.t}"
        raise InvalidParameterError(msg)
    requested = (
        () if output_times is None else np.asarray(output_times, dtype=float).ravel()
    )
    targets = sorted({float(t) for t in requested if state.t < t < t_end})
    targets.append(float(t_end))

    operators = _OperatorCache(mesh, interior)
    advance = _euler if stepper.method == "euler" else _rk4
    trajectory = Trajectory(states=[state])
    volumes = mesh.volumes
    _write(writer, state, volumes)
    warned = False

    for target in targets:
        while state.t < target:
            operator = operators(provider(state.t))
            _, leak = operator.apply(state.u)
            trajectory.ledger.record(state.t, leak, volumes)
            dt = _step_size(state.t, target - state.t, stepper, provider, operators)

            u, lost = advance(state, dt, provider, operators)
            defect = abs(float((u - state.u) @ volumes) + lost)
            trajectory.mass_defect = max(trajectory.mass_defect, defect)

            floor = -_POSITIVITY_TOL * max(1.0, float(np.abs(u).max(initial=0.0)))
            if state.u.min(initial=0.0) >= 0.0 and u.min(initial=0.0) < floor:
                if stepper.method == "euler":
                    cell = int(np.argmin(u))
                    msg = (
                        f"Explicit Euler step at t = {state.t:.6g} produced "
                        f"u = {u[cell]:.3e} in cell {cell}"
                    )
                    raise PositivityError(msg)
                if not warned:
                    logger.warning(
                        "RK4 step at t = %.6g produced negative densities (min %.3e)",
                        state.t,
                        u.min(),
                    )
                    warned = True

            t_next = state.t + dt
            if target - t_next <= 1e-12 * max(1.0, abs(target)):
                t_next = target
            state = SchemeState(t_next, u, state.leaked + lost)
            trajectory.steps += 1
            logger.log(
                LOGGING_TRACE,
                "t = %.6g, dt = %.3e, leaked = %.3e",
                state.t,
                dt,
                state.leaked,
            )

        trajectory.states.append(state)
        _write(writer, state, volumes)

    logger.info(
        "Integrated to t = %.6g in %d steps; leaked %.3e, mass defect %.3e",
        state.t,
        trajectory.steps,
        state.leaked,
        trajectory.mass_defect,
    )
    return trajectory


def _write(
    writer: CsvWriter | None, state: SchemeState, volumes: NDArray[np.float64]
) -> None:
    if writer is None:
        return
    writer.write_rows(
        (state.t, i, float(u), float(pi), state.leaked)
        for i, (u, pi) in enumerate(zip(state.u, volumes, strict=True))
    )
