"""Quadrature rules on segments, triangles, convex polygons and discs.

All rules return physical points together with weights; weights of segment,
triangle and polygon rules sum to the measure of the domain, weights of the disc
rule sum to one (they compute ball averages).
"""

from functools import cache

import numpy as np
from numpy.typing import NDArray


@cache
def _gauss_legendre(n: int) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    nodes, weights = np.polynomial.legendre.leggauss(n)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def gauss_interval(
    a: float, b: float, n: int
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Gauss-Legendre nodes and weights on [a, b]."""
    nodes, weights = _gauss_legendre(n)
    half = 0.5 * (b - a)
    return a + half * (nodes + 1.0), half * weights


def gauss_segment(
    start: NDArray[np.float64], end: NDArray[np.float64], n: int
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Gauss-Legendre rule on the segment [start, end] in the plane.

    Args:
        start: First end point, shape ``(2,)``.
        end: Second end point, shape ``(2,)``.
        n: Number of points.

    Returns:
        Points of shape ``(n, 2)`` and weights summing to the segment length.
    """
    s, w = gauss_interval(0.0, 1.0, n)
    length = float(np.linalg.norm(end - start))
    points = start[None, :] + s[:, None] * (end - start)[None, :]
    return points, w * length


@cache
def reference_triangle_rule(n: int) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Collapsed Gauss rule on the reference triangle.

    Returns:
        Barycentric coordinates of shape ``(n*n, 3)`` and weights summing to one.
    """
    s, ws = gauss_interval(0.0, 1.0, n)
    u, v = np.meshgrid(s, s, indexing="ij")
    wu, wv = np.meshgrid(ws, ws, indexing="ij")
    x = u.ravel()
    y = (v * (1.0 - u)).ravel()
    weights = 2.0 * (wu * wv * (1.0 - u)).ravel()
    bary = np.column_stack([1.0 - x - y, x, y])
    bary.setflags(write=False)
    weights.setflags(write=False)
    return bary, weights


def triangle_area(vertices: NDArray[np.float64]) -> float:
    """Unsigned area of a triangle given as ``(3, 2)`` vertices."""
    e1 = vertices[1] - vertices[0]
    e2 = vertices[2] - vertices[0]
    return 0.5 * abs(float(e1[0] * e2[1] - e1[1] * e2[0]))


def triangle_quadrature(
    vertices: NDArray[np.float64], n: int
) -> tuple[NDArray[np.float64], NDArray[np.float64], NDArray[np.float64]]:
    """Quadrature on a triangle.

    Returns:
        Points ``(k, 2)``, weights summing to the area and the barycentric
        coordinates ``(k, 3)`` of the points.
    """
    bary, weights = reference_triangle_rule(n)
    return bary @ vertices, weights * triangle_area(vertices), bary


def polygon_quadrature(
    vertices: NDArray[np.float64], n: int
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Quadrature on a convex polygon by fan triangulation from its first vertex."""
    points: list[NDArray[np.float64]] = []
    weights: list[NDArray[np.float64]] = []
    for k in range(1, len(vertices) - 1):
        tri = vertices[[0, k, k + 1]]
        if triangle_area(tri) == 0.0:
            continue
        p, w, _ = triangle_quadrature(tri, n)
        points.append(p)
        weights.append(w)
    return np.concatenate(points), np.concatenate(weights)


@cache
def _disc_rule(
    n_radial: int, n_angular: int
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    rho, w_rho = gauss_interval(0.0, 1.0, n_radial)
    theta = 2.0 * np.pi * (np.arange(n_angular) + 0.5) / n_angular
    r, t = np.meshgrid(rho, theta, indexing="ij")
    offsets = np.column_stack([(r * np.cos(t)).ravel(), (r * np.sin(t)).ravel()])
    # area element rho drho dtheta over the unit disc area pi
    weights = np.repeat(w_rho * rho, n_angular) * (2.0 / n_angular)
    offsets.setflags(write=False)
    weights.setflags(write=False)
    return offsets, weights


def disc_average_rule(
    radius: float, n_radial: int, n_angular: int
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Rule computing averages over the disc B(0, radius).

    Returns:
        Offsets ``(k, 2)`` and weights summing to one.
    """
    offsets, weights = _disc_rule(n_radial, n_angular)
    return radius * offsets, weights


def convolve_rules(
    points: NDArray[np.float64],
    weights: NDArray[np.float64],
    offsets: NDArray[np.float64],
    offset_weights: NDArray[np.float64],
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Tensor a base rule with an averaging rule: x_k + y_l with weight w_k v_l."""
    combined = (points[:, None, :] + offsets[None, :, :]).reshape(-1, 2)
    combined_weights = (weights[:, None] * offset_weights[None, :]).ravel()
    return combined, combined_weights
