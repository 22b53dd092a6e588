from pathlib import Path

import numpy as np
import pytest

from upwind_lab.data_types import (
    CFLViolationError,
    FaceCoeffs,
    InvalidParameterError,
    SchemeState,
    StepperSpec,
)
from upwind_lab.discretize.projections import project_to_cell, project_to_face
from upwind_lab.fields.constant import ConstantField
from upwind_lab.fields.oscillating import OscillatingField
from upwind_lab.mesh.generators.cartesian import build_cartesian_mesh
from upwind_lab.mesh.mollified import MollifiedMesh
from upwind_lab.mesh.polygon import PolygonMesh
from upwind_lab.settings import Settings, reset_settings, set_settings
from upwind_lab.upwind.integrate import (
    TRAJECTORY_HEADER,
    FieldProvider,
    constant_provider,
    integrate,
)
from upwind_lab.upwind.monte_carlo import monte_carlo_oracle
from upwind_lab.upwind.scheme import UpwindOperator, assemble_rhs
from upwind_lab.utils.csv import CsvWriter
from tests.utils.oracles import exact_solution

FROZEN_LAST = np.array([True, True, False])


@pytest.fixture
def chain() -> PolygonMesh:
    """Three unit squares in a row."""
    return build_cartesian_mesh(3, 1, (0.0, 0.0, 3.0, 1.0))


@pytest.fixture
def chain_coeffs(chain: PolygonMesh) -> FaceCoeffs:
    """Hand-picked coefficients on the two faces of the chain."""
    return FaceCoeffs(
        chain.faces, np.array([1.0, 0.5]), np.array([0.3, 0.8]), chain.n_cells
    )


def _bump(x: np.ndarray) -> np.ndarray:
    r2 = ((x - 0.5) ** 2).sum(axis=1)
    return np.maximum(1.0 - r2 / 0.04, 0.0) ** 2


def test_rk4_matches_matrix_exponential(
    chain: PolygonMesh, chain_coeffs: FaceCoeffs
) -> None:
    """Test RK4 with a small fixed step against exp(tL) u0."""
    u0 = np.array([1.0, 0.0, 2.0])
    trajectory = integrate(
        chain,
        SchemeState(0.0, u0),
        constant_provider(chain_coeffs),
        1.0,
        StepperSpec(dt=0.01),
        output_times=[0.5],
    )
    assert [state.t for state in trajectory.states] == [0.0, 0.5, 1.0]
    for state in trajectory.states[1:]:
        reference = exact_solution(chain_coeffs, chain.volumes, u0, state.t)
        error = float(np.abs(state.u - reference).max())
        assert error <= 1e-7, f"RK4 error {error:.3e} at t = {state.t}"
    assert np.isclose(trajectory.final.u.sum(), 3.0)
    assert trajectory.final.leaked == 0.0


def test_frozen_cell_leak_closes_the_mass_ledger(
    chain: PolygonMesh, chain_coeffs: FaceCoeffs
) -> None:
    """Test that mass plus leaked mass is conserved when a cell is frozen."""
    u0 = np.array([1.0, 2.0, 0.0])
    trajectory = integrate(
        chain,
        SchemeState(0.0, u0),
        constant_provider(chain_coeffs),
        1.0,
        StepperSpec(dt=0.01),
        interior=FROZEN_LAST,
    )
    final = trajectory.final
    assert final.u[2] == 0.0
    assert final.leaked > 0.0
    defect = abs(final.u @ chain.volumes + final.leaked - 3.0)
    assert defect <= 1e-12, f"Mass ledger defect {defect:.3e}"
    assert trajectory.mass_defect <= 1e-12
    reference = exact_solution(chain_coeffs, chain.volumes, u0, 1.0, FROZEN_LAST)
    assert np.abs(final.u - reference).max() <= 1e-7
    assert len(trajectory.ledger.times) == trajectory.steps


def test_rates_and_leak_balance(chain: PolygonMesh, chain_coeffs: FaceCoeffs) -> None:
    """Test Σ (du_i/dt) π_i = Σ R_i π_i for arbitrary densities."""
    rate, leak = assemble_rhs(
        chain, chain_coeffs, np.array([0.7, 1.3, 0.0]), interior=FROZEN_LAST
    )
    assert leak[:2].tolist() == [0.0, 0.0]
    assert rate[2] == 0.0
    assert np.isclose(rate @ chain.volumes, leak @ chain.volumes)


def test_zero_coefficients_keep_the_density(chain: PolygonMesh) -> None:
    """Test that vanishing coefficients leave the density untouched."""
    u0 = np.array([0.5, 1.5, 2.5])
    coeffs = FaceCoeffs.zeros(chain.faces, chain.n_cells)
    trajectory = integrate(chain, SchemeState(0.0, u0), constant_provider(coeffs), 2.0)
    assert np.array_equal(trajectory.final.u, u0)
    assert trajectory.final.t == 2.0


def test_euler_at_the_cfl_bound_keeps_positivity(
    chain: PolygonMesh, chain_coeffs: FaceCoeffs
) -> None:
    """Test that Euler steps at the full CFL bound stay nonnegative."""
    trajectory = integrate(
        chain,
        SchemeState(0.0, np.array([0.0, 0.0, 1.0])),
        constant_provider(chain_coeffs),
        3.0,
        StepperSpec(method="euler", cfl=1.0),
    )
    assert trajectory.final.u.min() >= -1e-15
    bound, cell = UpwindOperator(chain, chain_coeffs).cfl_bound()
    assert np.isclose(bound, 1.0)
    assert cell == 0


def test_fixed_step_above_cfl_bound_fails(
    chain: PolygonMesh, chain_coeffs: FaceCoeffs
) -> None:
    """Test that a fixed step larger than the bound is refused."""
    with pytest.raises(CFLViolationError) as info:
        integrate(
            chain,
            SchemeState(0.0, np.ones(3)),
            constant_provider(chain_coeffs),
            1.0,
            StepperSpec(method="euler", dt=0.9),
        )
    assert info.value.cell == 0
    assert np.isclose(info.value.bound, 0.5)


def test_final_time_before_start_fails(
    chain: PolygonMesh, chain_coeffs: FaceCoeffs
) -> None:
    """Test that integrating backwards is refused."""
    with pytest.raises(InvalidParameterError):
        integrate(
            chain, SchemeState(1.0, np.ones(3)), constant_provider(chain_coeffs), 0.5
        )


def test_monte_carlo_agrees_with_exact_solution(
    chain: PolygonMesh, chain_coeffs: FaceCoeffs
) -> None:
    """Test the walker estimate against exp(tL) u0 with a frozen cell."""
    u0 = np.array([1.0, 2.0, 0.0])
    estimate = monte_carlo_oracle(
        chain, chain_coeffs, u0, 0.8, 20000, seed=7, interior=FROZEN_LAST
    )
    reference = exact_solution(chain_coeffs, chain.volumes, u0, 0.8, FROZEN_LAST)
    gap = np.abs(estimate.u - reference)
    assert (gap <= 4.0 * estimate.stderr + 1e-12).all(), (
        f"Walker estimate {estimate.u} too far from {reference}"
    )
    leaked = 1.0 - reference.sum() / 3.0
    assert abs(estimate.leaked - leaked) <= 4.0 * estimate.leaked_stderr
    assert estimate.chi_square(reference, chain.volumes) > 1e-3


def test_monte_carlo_does_not_depend_on_workers(
    chain: PolygonMesh, chain_coeffs: FaceCoeffs
) -> None:
    """Test that the walker streams are fixed by the seed alone."""
    u0 = np.array([1.0, 1.0, 1.0])
    walkers = 40000
    serial = monte_carlo_oracle(chain, chain_coeffs, u0, 0.5, walkers, seed=3)
    token = set_settings(Settings(workers=4))
    try:
        parallel = monte_carlo_oracle(chain, chain_coeffs, u0, 0.5, walkers, seed=3)
    finally:
        reset_settings(token)
    assert np.array_equal(serial.counts, parallel.counts)


def test_monte_carlo_rejects_bad_arguments(
    chain: PolygonMesh, chain_coeffs: FaceCoeffs
) -> None:
    """Test argument validation of the walker simulation."""
    with pytest.raises(InvalidParameterError):
        monte_carlo_oracle(chain, chain_coeffs, np.ones(3), 1.0, 0)
    with pytest.raises(InvalidParameterError):
        monte_carlo_oracle(chain, chain_coeffs, np.array([1.0, -1.0, 0.0]), 1.0, 10)


def test_field_provider_caches_projections(cartesian_mollified: MollifiedMesh) -> None:
    """Test that stationary fields are projected once and moving ones per time."""
    steady = FieldProvider(cartesian_mollified, ConstantField())
    assert steady(0.0) is steady(0.3)
    moving = FieldProvider(cartesian_mollified, OscillatingField())
    assert moving(0.1) is moving(0.1)
    assert moving(0.1) is not moving(0.2)
    assert moving(0.2).time == 0.2


def test_advection_on_mollified_mesh(
    cartesian_mollified: MollifiedMesh, tmp_path: Path
) -> None:
    """Test mass bookkeeping and the trajectory file of a transported bump."""
    mesh = cartesian_mollified
    u0 = project_to_cell(mesh, _bump)
    mass0 = float(u0 @ mesh.volumes)
    provider = FieldProvider(mesh, ConstantField(vector=(1.0, 0.5)))
    with CsvWriter(tmp_path / "trajectory.csv", TRAJECTORY_HEADER) as writer:
        trajectory = integrate(
            mesh,
            SchemeState(0.0, u0),
            provider,
            0.1,
            output_times=[0.05],
            writer=writer,
        )
    final = trajectory.final
    assert final.u.min() >= -1e-12
    assert (final.u[~mesh.interior] == 0.0).all()
    assert abs(final.u @ mesh.volumes + final.leaked - mass0) <= 1e-10 * mass0
    lines = (tmp_path / "trajectory.csv").read_text(encoding="utf-8").splitlines()
    assert lines[0] == ",".join(TRAJECTORY_HEADER)
    assert len(lines) == 1 + 3 * mesh.n_cells


def test_coefficients_growing_from_zero_take_several_steps() -> None:
    """Test that vanishing initial coefficients do not give one step to t_end."""
    mesh = build_cartesian_mesh(16, 1, (0.0, 0.0, 16.0, 1.0))
    ones = np.ones(len(mesh.faces))

    def provider(t: float) -> FaceCoeffs:
        return FaceCoeffs(mesh.faces, t * ones, t * ones, mesh.n_cells, time=t)

    u0 = np.zeros(mesh.n_cells)
    u0[8] = 1.0
    stepper = StepperSpec(method="euler")
    trajectory = integrate(mesh, SchemeState(0.0, u0), provider, 4.0, stepper)
    final = trajectory.final
    assert trajectory.steps > 1
    assert final.t == 4.0
    assert final.u[8] < 0.5, f"Mass stayed in its cell: u_8 = {final.u[8]:.3e}"
    assert final.u.min() >= -1e-15
    assert np.isclose(final.u @ mesh.volumes, 1.0)

    capped = integrate(
        mesh,
        SchemeState(0.0, u0),
        provider,
        4.0,
        StepperSpec(method="euler", max_step=0.01),
    )
    assert capped.steps >= 400
    assert capped.steps > trajectory.steps


def test_max_step_caps_adaptive_steps(
    chain: PolygonMesh, chain_coeffs: FaceCoeffs
) -> None:
    """Test that adaptive steps never exceed the configured largest step."""
    u0 = np.array([1.0, 0.0, 2.0])
    trajectory = integrate(
        chain,
        SchemeState(0.0, u0),
        constant_provider(chain_coeffs),
        1.0,
        StepperSpec(max_step=0.05),
    )
    assert 20 <= trajectory.steps <= 21
    reference = exact_solution(chain_coeffs, chain.volumes, u0, 1.0)
    assert np.abs(trajectory.final.u - reference).max() <= 1e-5


def test_output_times_accept_arrays(
    chain: PolygonMesh, chain_coeffs: FaceCoeffs
) -> None:
    """Test that output times given as an array are all recorded."""
    trajectory = integrate(
        chain,
        SchemeState(0.0, np.ones(3)),
        constant_provider(chain_coeffs),
        1.0,
        output_times=np.linspace(0.25, 0.75, 3),
    )
    assert [state.t for state in trajectory.states] == [0.0, 0.25, 0.5, 0.75, 1.0]


def test_monte_carlo_on_alternating_rows(
    alternating_polygon: PolygonMesh, rng: np.random.Generator
) -> None:
    """Test the walker estimate on a mesh with coarse and fine rows."""
    mesh = alternating_polygon
    coeffs = project_to_face(mesh, ConstantField(vector=(1.0, 0.5)).at(0.0))
    u0 = rng.uniform(0.5, 1.5, size=mesh.n_cells)
    estimate = monte_carlo_oracle(mesh, coeffs, u0, 0.3, 40000, seed=11)
    reference = exact_solution(coeffs, mesh.volumes, u0, 0.3)
    close = np.abs(estimate.u - reference) <= 3.0 * estimate.stderr + 1e-12
    assert int(close.sum()) >= mesh.n_cells - 1, (
        f"Cells {np.flatnonzero(~close).tolist()} outside three standard errors"
    )
    assert estimate.leaked == 0.0
    assert estimate.chi_square(reference, mesh.volumes) > 1e-3
