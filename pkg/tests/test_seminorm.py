from pathlib import Path
from types import SimpleNamespace

import numpy as np
import pytest
import shapely
from pydantic import ValidationError

from upwind_lab.data_types import InvalidParameterError, SemiNormParams
from upwind_lab.discretize.projections import project_to_face
from upwind_lab.experiments.example16 import Example16Experiment
from upwind_lab.fields.rotation import RotationField
from upwind_lab.mesh.generators.cartesian import build_cartesian_mesh
from upwind_lab.mesh.polygon import PolygonMesh
from upwind_lab.seminorm.comparability import (
    comparability_ratio,
    continuous_double_integral,
)
from upwind_lab.seminorm.fractional import fractional_sobolev
from upwind_lab.seminorm.gap import mollification_gap
from upwind_lab.seminorm.kernel import (
    KernelSpec,
    cutoff,
    kernel_eval,
    kernel_gradient,
    kernel_l1_norm,
    kernel_matrix,
)
from upwind_lab.seminorm.kruzkov import kernel_double_sum, kruzkov_decomposition
from upwind_lab.seminorm.seminorm import (
    VirtualCoordinates,
    coordinate_equivalence_ratio,
    discrete_seminorm,
    fit_equivalence_constant,
)
from upwind_lab.settings import ExperimentConfig, FieldSource
from tests.utils.oracles import exact_solution


@pytest.fixture
def small_grid() -> PolygonMesh:
    """A 5 x 5 cartesian grid of the unit square."""
    return build_cartesian_mesh(5, 5)


def test_cutoff_values() -> None:
    """Test the cutoff on its plateau, its midpoint and past its support."""
    values = cutoff(np.array([0.0, 1.0, 1.5, 2.0, 3.0]))
    assert np.allclose(values, [1.0, 1.0, 0.5, 0.0, 0.0])


def test_kernel_width_is_bounded() -> None:
    """Test that widths outside the open interval (0, 1/2) are rejected."""
    for h in (0.6, 0.5, 0.0):
        with pytest.raises(InvalidParameterError):
            KernelSpec(h)
    with pytest.raises(ValidationError):
        SemiNormParams(h_values=(0.1, 0.5))
    grid = SemiNormParams(h0=0.05, n_h=8).h_grid()
    assert grid[0] == 0.05
    assert grid[-1] < 0.5
    assert np.isclose(grid[-1], 0.5, rtol=1e-15)
    KernelSpec(float(grid[-1]))


def test_kernel_l1_norm_grows_like_log() -> None:
    """Test that ‖K^h‖_L1 grows as h shrinks, at the rate 2π|log h|."""
    narrow = kernel_l1_norm(0.01)
    assert narrow > kernel_l1_norm(0.1)
    ratio = narrow / (2.0 * np.pi * abs(np.log(0.01)))
    assert 0.5 <= ratio <= 1.5, f"Unexpected log rate {ratio:.3f}"


def test_fractional_sobolev_of_two_points() -> None:
    """Test the double sum on two unit-volume points of the line."""
    delta, s = 0.5, 0.5
    mesh = SimpleNamespace(
        barycenters=np.array([[0.0], [delta]]), volumes=np.ones(2)
    )
    value = fractional_sobolev(mesh, np.array([0.0, 1.0]), s)
    assert np.isclose(value, 2.0 / delta ** (1.0 + s))
    assert fractional_sobolev(mesh, np.array([2.0, 2.0]), s) == 0.0
    with pytest.raises(InvalidParameterError):
        fractional_sobolev(mesh, np.array([0.0, 1.0]), 1.0)


def test_seminorm_of_constant_vanishes(cartesian_polygon: PolygonMesh) -> None:
    """Test that constants have zero semi-norm at every width."""
    result = discrete_seminorm(
        cartesian_polygon, np.full(16, 4.0), SemiNormParams(n_h=6)
    )
    assert result.value == 0.0
    assert len(result.rows()) == 6


def test_seminorm_supremum_over_wider_grid(
    cartesian_polygon: PolygonMesh, rng: np.random.Generator
) -> None:
    """Test that adding widths to the grid can only raise the supremum."""
    u = rng.uniform(size=16)
    narrow = discrete_seminorm(
        cartesian_polygon, u, SemiNormParams(h0=0.05, h_values=(0.1,))
    )
    wide = discrete_seminorm(
        cartesian_polygon, u, SemiNormParams(h0=0.05, h_values=(0.05, 0.1, 0.3))
    )
    assert narrow.value > 0.0
    assert wide.value >= narrow.value
    assert wide.h_max in (0.05, 0.1, 0.3)


def test_empty_grid_is_rejected(cartesian_polygon: PolygonMesh) -> None:
    """Test that a semi-norm over no widths is refused."""
    with pytest.raises(InvalidParameterError):
        discrete_seminorm(cartesian_polygon, np.ones(16), SemiNormParams(n_h=0))


def test_equivalence_of_identical_coordinates(
    cartesian_polygon: PolygonMesh, rng: np.random.Generator
) -> None:
    """Test that equal coordinate sets give ratio one and no implied constant."""
    coords = VirtualCoordinates.barycenters(cartesian_polygon)
    result = coordinate_equivalence_ratio(
        cartesian_polygon, rng.uniform(size=16), SemiNormParams(), coords, coords
    )
    assert result.ratio == 1.0
    assert result.drift == 0.0
    assert result.constant == 0.0
    assert result.within(0.0)


def test_drifting_coordinates_are_rejected(cartesian_polygon: PolygonMesh) -> None:
    """Test that coordinates far from the barycenters are refused."""
    base = VirtualCoordinates.barycenters(cartesian_polygon)
    shifted = VirtualCoordinates(base.points + 0.1)
    with pytest.raises(InvalidParameterError):
        coordinate_equivalence_ratio(
            cartesian_polygon, np.ones(16), SemiNormParams(), base, shifted
        )


@pytest.mark.parametrize("frozen_border", [False, True])
def test_kruzkov_identity(
    small_grid: PolygonMesh, rng: np.random.Generator, *, frozen_border: bool
) -> None:
    """Test that the four terms add up to the derivative and N_K ≤ 0."""
    coeffs = project_to_face(small_grid, RotationField().at(0.0))
    interior = None
    if frozen_border:
        centers = small_grid.barycenters
        interior = ((centers > 0.2) & (centers < 0.8)).all(axis=1)
    report = kruzkov_decomposition(
        small_grid,
        coeffs,
        rng.uniform(size=small_grid.n_cells),
        KernelSpec(0.1),
        interior=interior,
    )
    scale = max(1.0, abs(report.derivative))
    assert report.defect <= 1e-9 * scale, f"Identity defect {report.defect:.3e}"
    assert report.dissipation <= 1e-12 * scale
    if not frozen_border:
        assert report.leak == 0.0


def test_kruzkov_rejects_asymmetric_kernel(small_grid: PolygonMesh) -> None:
    """Test that a kernel matrix must be symmetric."""
    coeffs = project_to_face(small_grid, RotationField().at(0.0))
    kernel = np.triu(np.ones((small_grid.n_cells, small_grid.n_cells)))
    with pytest.raises(InvalidParameterError):
        kruzkov_decomposition(small_grid, coeffs, np.ones(small_grid.n_cells), kernel)


def test_divergence_seminorm_flags_negative_exponent(
    cartesian_polygon: PolygonMesh, rng: np.random.Generator
) -> None:
    """Test that the divergence semi-norm may use a negative log exponent."""
    params = SemiNormParams(p=1.0, theta=0.5, p_star=1.0)
    divergence = params.divergence_params()
    assert np.isclose(divergence.theta, -0.5)
    result = discrete_seminorm(cartesian_polygon, rng.uniform(size=16), divergence)
    assert result.negative_log_exponent
    plain = discrete_seminorm(cartesian_polygon, rng.uniform(size=16), params)
    assert not plain.negative_log_exponent


def test_kernel_eval_and_gradient() -> None:
    """Test K^h at the origin, past its support and the sign of its gradient."""
    spec = KernelSpec(0.25)
    assert np.isclose(kernel_eval(spec, np.zeros(2)), 16.0)
    assert kernel_eval(spec, np.array([[3.0, 0.0]]))[0] == 0.0
    gradient = kernel_gradient(spec, np.array([[0.0, 0.0], [0.5, 0.0]]))
    assert (gradient[0] == 0.0).all()
    assert gradient[1, 0] < 0.0
    assert gradient[1, 1] == 0.0


def test_mollification_gap_of_zero_density(cartesian_polygon: PolygonMesh) -> None:
    """Test that a vanishing density has no gap and bad arguments are refused."""
    assert mollification_gap(cartesian_polygon, np.zeros(16), 0.1) == 0.0
    with pytest.raises(InvalidParameterError):
        mollification_gap(cartesian_polygon, np.ones(16), 0.1, 0.5)
    with pytest.raises(InvalidParameterError):
        mollification_gap(cartesian_polygon, np.ones(16), 0.1, spacing=1.0)


def test_comparability_of_affine_function(cartesian_polygon: PolygonMesh) -> None:
    """Test the discrete and continuous kernel sums of constants and of x."""
    flat = comparability_ratio(cartesian_polygon, lambda x: np.ones(len(x)), 0.1)
    assert flat.discrete <= 1e-20
    assert flat.continuous == 0.0
    slope = comparability_ratio(cartesian_polygon, lambda x: x[:, 0], 0.1)
    assert slope.discrete > 0.0
    assert slope.continuous > 0.0
    assert np.isfinite(slope.ratio)
    assert np.isclose(slope.dx_over_h, cartesian_polygon.dx / 0.1)
    with pytest.raises(InvalidParameterError):
        continuous_double_integral(
            lambda x: x[:, 0], 0.1, cartesian_polygon.domain, spacing=0.0
        )


def test_kruzkov_derivative_matches_finite_differences(
    rng: np.random.Generator,
) -> None:
    """Test the derivative of ΣΣ K |u_i − u_j| π_i π_j against central differences."""
    mesh = build_cartesian_mesh(3, 2)
    coeffs = project_to_face(mesh, RotationField().at(0.0))
    u0 = rng.permutation(np.linspace(0.2, 1.2, mesh.n_cells))
    kernel = kernel_matrix(mesh.barycenters, KernelSpec(0.2))
    report = kruzkov_decomposition(mesh, coeffs, u0, kernel)

    def double_sum(t: float) -> float:
        return kernel_double_sum(
            kernel, exact_solution(coeffs, mesh.volumes, u0, t), mesh.volumes
        )

    step = 1e-2
    errors = []
    for dt in (step, step / 2.0, step / 4.0):
        central = (double_sum(dt) - double_sum(-dt)) / (2.0 * dt)
        errors.append(abs(central - report.derivative))
    rates = np.log2(np.array(errors[:-1]) / np.array(errors[1:]))
    assert errors[-1] <= 1e-4 * max(1.0, abs(report.derivative))
    assert (rates >= 1.8).all(), f"Observed rates {rates}"
    total = report.transport + report.divergence + 2.0 * report.dissipation
    assert np.isclose(total + report.leak, report.derivative, atol=1e-10)


def test_seminorm_of_two_cells() -> None:
    """Test the weighted double sum of two unit-volume cells half a unit apart."""
    mesh = SimpleNamespace(
        barycenters=np.array([[0.0, 0.0], [0.5, 0.0]]), volumes=np.ones(2), n_cells=2
    )
    params = SemiNormParams(h0=0.1, h_values=(0.1,), theta=0.5)
    result = discrete_seminorm(mesh, np.array([0.0, 1.0]), params)
    expected = 2.0 / 0.6**2 / np.sqrt(np.log(10.0))
    assert np.isclose(result.value, expected, rtol=1e-12)
    assert result.h_max == 0.1
    squared = discrete_seminorm(
        mesh, np.array([0.0, 3.0]), params.model_copy(update={"p": 2.0})
    )
    assert np.isclose(squared.value, 9.0 * expected, rtol=1e-12)


def test_mollification_gap_of_constant_density() -> None:
    """Test that constants have no gap away from ∂Ω and a linear gap near it."""
    mesh = build_cartesian_mesh(16, 16, (0.0, 0.0, 8.0, 8.0))
    center = shapely.box(3.0, 3.0, 5.0, 5.0)
    u = np.full(mesh.n_cells, 2.0)
    assert mollification_gap(mesh, u, 0.1, region=center) <= 1e-10
    whole = mollification_gap(mesh, u, 0.1)
    assert whole > 0.0
    assert np.isclose(mollification_gap(mesh, 3.0 * u, 0.1), 3.0 * whole)


def test_random_coordinates_are_equivalent(
    cartesian_polygon: PolygonMesh, rng: np.random.Generator
) -> None:
    """Test the ratio bound 1 + C h₂/h₀ under shrinking random perturbations."""
    base = VirtualCoordinates.barycenters(cartesian_polygon)
    params = SemiNormParams(h0=0.05, n_h=6)
    u = rng.uniform(size=16)
    results = []
    for scale in (0.01, 0.005, 0.0025):
        shifted = VirtualCoordinates(
            base.points + rng.uniform(-scale, scale, size=base.points.shape)
        )
        results.append(
            coordinate_equivalence_ratio(cartesian_polygon, u, params, base, shifted)
        )
    constant = fit_equivalence_constant(results)
    assert 0.0 < constant <= 4.0
    assert all(result.within(constant + 1e-9) for result in results)
    assert all(result.within(4.0) for result in results)


def test_fractional_growth_increases_with_smoothness(tmp_path: Path) -> None:
    """Test that finer alternating rows raise the W^{s,1} sums faster for larger s."""
    config = ExperimentConfig(
        experiment="example16",
        output=tmp_path,
        field=FieldSource(name="constant", params={"vector": (1.0, 0.0)}),
        params={
            "h_values": (0.125, 0.0625),
            "s_values": (0.3, 0.5, 0.7),
            "t_end": 0.25,
        },
    )
    summary = Example16Experiment(config).run()
    growth = summary["growth_exponents"]
    assert growth["0.3"] < growth["0.5"] < growth["0.7"], f"Growth {growth}"
    assert (tmp_path / "example16.csv").is_file()
