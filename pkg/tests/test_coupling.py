import itertools
import math

import numpy as np
import pytest

from upwind_lab.coupling.coupled import (
    LeakBoundReport,
    SourceTerm,
    divergence_bounds,
    jump_rate_bound,
    leak_bound_check,
    leak_trend,
    linear_source,
    run_coupled,
    saturating_source,
)
from upwind_lab.coupling.fem import P1Space, fem_poisson_solve
from upwind_lab.data_types import FaceCoeffs, InvalidParameterError, StepperSpec
from upwind_lab.mesh.hat import HatMesh
from upwind_lab.upwind.scheme import UpwindOperator


@pytest.fixture
def space(hat_mesh: HatMesh) -> P1Space:
    """P1 space over the 6 x 6 structured triangulation."""
    return P1Space(hat_mesh)


def _hump(space: P1Space) -> np.ndarray:
    nodes = space.mesh.triangulation.points
    r2 = ((nodes - 0.5) ** 2).sum(axis=1)
    return np.where(space.free, np.exp(-10.0 * r2), 0.0)


def test_mass_and_stiffness_matrices(space: P1Space) -> None:
    """Test that the mass matrix integrates one and constants lie in the kernel."""
    assert np.isclose(space.mass.sum(), 1.0)
    ones = np.ones(space.mesh.n_cells)
    assert np.abs(space.stiffness @ ones).max() <= 1e-12
    assert np.allclose(space.mass @ ones, space.mesh.volumes)


def test_poisson_solve_of_positive_source(space: P1Space) -> None:
    """Test the variational residual and the boundary values of the potential."""
    solution = fem_poisson_solve(space, np.where(space.free, 1.0, 0.0))
    assert solution.residual <= 1e-10, f"Poisson residual {solution.residual:.3e}"
    assert (solution.potential[~space.free] == 0.0).all()
    assert solution.potential.max() > 0.0
    assert solution.gradient.shape == (len(space.mesh.triangulation.triangles), 2)
    assert space.h1_seminorm(solution.potential) > 0.0


def test_poisson_solve_of_zero_source(space: P1Space) -> None:
    """Test that a vanishing source gives a vanishing potential."""
    solution = fem_poisson_solve(space, np.zeros(space.mesh.n_cells))
    assert (solution.potential == 0.0).all()
    assert solution.residual == 0.0


def test_zero_source_freezes_densities(space: P1Space) -> None:
    """Test that g = 0 leaves the densities untouched."""
    u0 = _hump(space)
    trajectory = run_coupled(space, u0, linear_source(0.0), 0.5)
    final = trajectory.final.state
    assert np.allclose(final.u, u0)
    assert final.leaked == 0.0
    assert trajectory.identity_defect == 0.0


def test_coupled_run_keeps_its_identities(space: P1Space) -> None:
    """Test the divergence identity and the mass ledger along a coupled run."""
    trajectory = run_coupled(
        space, _hump(space), saturating_source(), 0.05, StepperSpec(cfl=0.5)
    )
    assert len(trajectory.states) > 1
    assert trajectory.final.state.t == pytest.approx(0.05)
    assert trajectory.identity_defect <= 1e-9, (
        f"Divergence identity defect {trajectory.identity_defect:.3e}"
    )
    assert trajectory.mass_defect <= 1e-10
    assert trajectory.final.state.u.min() >= -1e-12


def test_source_spot_check() -> None:
    """Test that a convex source is reported and a concave one is not."""
    assert saturating_source(2.0).spot_check() == []
    squared = SourceTerm(lambda u: u * u, 2.0, "u^2")
    problems = squared.spot_check()
    assert any("concave" in problem for problem in problems)


def test_divergence_bounds_of_saturating_source() -> None:
    """Test the interval of the discrete divergence for g(u) = u/(1+u)."""
    low, high = divergence_bounds(saturating_source(), np.array([0.0, 1.0]))
    assert np.isclose(low, -0.5)
    assert high == 0.0


def test_jump_rate_of_zero_coefficients(space: P1Space) -> None:
    """Test that no flux means no jumps."""
    mesh = space.mesh
    assert jump_rate_bound(mesh, FaceCoeffs.zeros(mesh.faces, mesh.n_cells)) == 0.0


def test_leak_bound_is_skipped_for_long_horizons() -> None:
    """Test that Λ_T ≤ 0 skips the exponential bound."""
    report = leak_bound_check(1e-3, 0.3, 1.0, 0.05, 1.0)
    assert report.skipped
    assert report.lambda_t < 0.0
    assert math.isnan(report.exponential)
    assert 0.0 <= report.poisson_tail <= 1.0
    assert report.reason


def test_leak_bound_values() -> None:
    """Test Λ_T, the exponential bound and the Poisson tail."""
    report = leak_bound_check(0.0, 0.5, 0.1, 0.05, 1.0)
    assert not report.skipped
    assert np.isclose(report.lambda_t, 0.2)
    assert np.isclose(report.exponential, math.exp(-4.0))
    assert 0.0 < report.poisson_tail < 1e-2
    with pytest.raises(InvalidParameterError):
        leak_bound_check(0.0, 0.5, 0.1, 0.0, 1.0)


def test_leak_trend() -> None:
    """Test the fitted slope of log(leak) against 1/δx."""

    def report(dx: float, leaked: float) -> LeakBoundReport:
        return LeakBoundReport(dx, 1.0, 0.5, 0.1, leaked, 0.2, 0.0, 0.0)

    assert math.isnan(leak_trend([report(0.1, 1e-2)]))
    slope = leak_trend([report(0.1, 1e-2), report(0.05, 1e-4)])
    assert np.isclose(slope, math.log(1e-2) / 10.0)


def test_coupled_steps_respect_both_cfl_bounds(space: P1Space) -> None:
    """Test the largest step and the CFL bounds at both ends of every step."""
    stepper = StepperSpec(method="euler", cfl=0.5, max_step=0.004)
    trajectory = run_coupled(space, _hump(space), saturating_source(4.0), 0.02, stepper)
    states = trajectory.states
    assert len(states) >= 6
    for before, after in itertools.pairwise(states):
        dt = after.state.t - before.state.t
        assert dt <= 0.004 * (1.0 + 1e-12)
        for current in (before, after):
            bound, _ = UpwindOperator(space.mesh, current.coefficients).cfl_bound()
            assert dt <= 0.5 * bound * (1.0 + 1e-12)
