"""Monte Carlo estimate of the scheme through its jump process.

A walker in an active cell i jumps to cell i' at rate a_{i',i}/π_i. It is
killed when it lands in a frozen cell. The density of the scheme satisfies
u_i(t) π_i = m P{alive at t, X(t) = i} where m is the initial mass.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray
from scipy import stats

from upwind_lab.core import Discretization
from upwind_lab.data_types import CellValues, FaceCoeffs, InvalidParameterError
from upwind_lab.settings import get_settings
from upwind_lab.upwind.scheme import UpwindOperator

logger = logging.getLogger(__name__)

_CHUNK = 1 << 14


@dataclass(frozen=True, slots=True)
class MonteCarloEstimate:
    """Empirical solution of the scheme.

    Attributes:
        u (CellValues): Estimated densities u_i(t).
        stderr (CellValues): Standard errors of ``u``.
        counts (NDArray[np.int64]): Walkers alive in each cell at time t.
        leaked (float): Fraction of walkers killed before t.
        leaked_stderr (float): Standard error of ``leaked``.
        mass (float): Initial mass Σ u_i π_i.
        walkers (int): Number of walkers.
    """

    u: CellValues
    stderr: CellValues
    counts: NDArray[np.int64]
    leaked: float
    leaked_stderr: float
    mass: float
    walkers: int

    def chi_square(
        self, u_reference: CellValues, volumes: NDArray[np.float64]
    ) -> float:
        """P-value of the walker histogram against reference densities.

        The killed walkers form one extra bin. Bins expecting fewer than five
        walkers are merged, and dropped when nothing is expected in them at all.

        Args:
            u_reference: Densities of the deterministic solution at the same time.
            volumes: Cell volumes π_i.

        Returns:
            float: The p-value of Pearson's test.
        """
        expected = np.maximum(u_reference * volumes / self.mass, 0.0)
        expected = np.append(expected, max(1.0 - expected.sum(), 0.0))
        outside = self.walkers - self.counts.sum()
        observed = np.append(self.counts, outside).astype(float)
        keep = expected * self.walkers >= 5.0  # noqa: PLR2004
        if (~keep).any():
            rest_expected = expected[~keep].sum()
            rest_observed = observed[~keep].sum()
            expected, observed = expected[keep], observed[keep]
            if rest_expected > 0.0:
                expected = np.append(expected, rest_expected)
                observed = np.append(observed, rest_observed)
        expected *= observed.sum() / expected.sum()
        return float(stats.chisquare(observed, expected).pvalue)


def _simulate(
    starts: NDArray[np.int64],
    t: float,
    rates: NDArray[np.float64],
    columns: tuple[NDArray[np.int32], NDArray[np.int32], NDArray[np.float64]],
    active: NDArray[np.bool_],
    generator: np.random.Generator,
) -> NDArray[np.int64]:
    """Run walkers to time t; returns final cells, −1 for killed walkers."""
    indptr, indices, cumulative = columns
    cell = starts.copy()
    clock = np.zeros(len(cell))
    running = np.flatnonzero(rates[cell] > 0.0)
    while len(running):
        current = cell[running]
        clock[running] += generator.exponential(1.0 / rates[current])
        jumping = clock[running] <= t
        running = running[jumping]
        if not len(running):
            break
        current = cell[running]
        lo, hi = indptr[current], indptr[current + 1]
        offset = np.where(lo > 0, cumulative[lo - 1], 0.0)
        total = cumulative[hi - 1] - offset
        target = offset + generator.random(len(running)) * total
        slot = np.clip(np.searchsorted(cumulative, target, side="right"), lo, hi - 1)
        cell[running] = indices[slot]
        dead = ~active[cell[running]]
        cell[running[dead]] = -1
        running = running[~dead]
        running = running[rates[cell[running]] > 0.0]
    return cell


def monte_carlo_oracle(  # noqa: PLR0913
    mesh: Discretization,
    coeffs: FaceCoeffs,
    u0: CellValues,
    t: float,
    walkers: int,
    seed: int = 0,
    *,
    interior: NDArray[np.bool_] | None = None,
) -> MonteCarloEstimate:
    """Estimate u(t) by simulating the jump process of the scheme.

    Walkers are split into fixed-size chunks, each driven by its own stream
    spawned from ``seed``, so the result does not depend on the worker count.

    Args:
        mesh: The mesh.
        coeffs: Time-independent upwind coefficients.
        u0: Nonnegative initial densities.
        t: Final time.
        walkers: Number of walkers N.
        seed: Root seed of the walker streams.
        interior: Active cells; defaults to the interior cells of the mesh.

    Returns:
        MonteCarloEstimate: Densities with standard errors and the leaked fraction.

    Raises:
        InvalidParameterError: If N ≤ 0, t < 0 or u0 has negative entries.
    """
    if walkers <= 0:
        msg = f"The number of walkers must be positive, got {walkers}"
        raise InvalidParameterError(msg)
    if t < 0.0:
        msg = f"Final time must be nonnegative, got {t}"
        raise InvalidParameterError(msg)
    operator = UpwindOperator(mesh, coeffs, interior)
    active = operator.active
    volumes = mesh.volumes
    u0 = np.where(active, np.asarray(u0, dtype=float), 0.0)
    if (u0 < 0.0).any():
        msg = "Initial densities must be nonnegative"
        raise InvalidParameterError(msg)

    n = mesh.n_cells
    mass = float(u0 @ volumes)
    if mass == 0.0:
        zeros = np.zeros(n)
        counts = np.zeros(n, np.int64)
        return MonteCarloEstimate(zeros, zeros.copy(), counts, 0.0, 0.0, 0.0, walkers)
    weights = u0 * volumes / mass

    matrix = coeffs.matrix().tocsc()
    matrix.sort_indices()
    outflow = np.asarray(matrix.sum(axis=0)).ravel()
    rates = np.where(active, outflow / volumes, 0.0)
    columns = (matrix.indptr, matrix.indices, np.cumsum(matrix.data))

    chunks = [min(_CHUNK, walkers - k) for k in range(0, walkers, _CHUNK)]
    streams = np.random.SeedSequence(seed).spawn(len(chunks))

    def run(chunk: int) -> NDArray[np.int64]:
        generator = np.random.Generator(np.random.Philox(streams[chunk]))
        starts = generator.choice(n, size=chunks[chunk], p=weights)
        final = _simulate(starts, t, rates, columns, active, generator)
        return np.bincount(final[final >= 0], minlength=n)

    with ThreadPoolExecutor(max_workers=get_settings().workers) as pool:
        counts = np.sum(list(pool.map(run, range(len(chunks)))), axis=0)

    fraction = counts / walkers
    stderr = np.sqrt(fraction * (1.0 - fraction) / walkers)
    leaked = 1.0 - fraction.sum()
    logger.debug(
        "Simulated %d walkers in %d chunks: leaked fraction %.4f",
        walkers,
        len(chunks),
        leaked,
    )
    return MonteCarloEstimate(
        u=mass * fraction / volumes,
        stderr=mass * stderr / volumes,
        counts=counts.astype(np.int64),
        leaked=float(leaked),
        leaked_stderr=float(np.sqrt(max(leaked * (1.0 - leaked), 0.0) / walkers)),
        mass=mass,
        walkers=walkers,
    )
