"""Exact planar geometry of polygons, segments and discs."""

import numpy as np
from numpy.typing import NDArray


def signed_area(vertices: NDArray[np.float64]) -> float:
    """Shoelace area, positive for counter-clockwise vertex order."""
    x, y = vertices[:, 0], vertices[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def centroid(vertices: NDArray[np.float64]) -> NDArray[np.float64]:
    """Centroid of a simple polygon."""
    x, y = vertices[:, 0], vertices[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    area = 0.5 * cross.sum()
    return np.array(
        [((x + xn) * cross).sum(), ((y + yn) * cross).sum()]
    ) / (6.0 * area)


def diameter(points: NDArray[np.float64]) -> float:
    """Largest pairwise distance of a point set."""
    diff = points[:, None, :] - points[None, :, :]
    return float(np.sqrt((diff**2).sum(axis=-1)).max())


def is_convex(vertices: NDArray[np.float64], tol: float = 1e-12) -> bool:
    """Whether a counter-clockwise polygon is convex (collinear vertices allowed)."""
    edges = np.roll(vertices, -1, axis=0) - vertices
    nxt = np.roll(edges, -1, axis=0)
    cross = edges[:, 0] * nxt[:, 1] - edges[:, 1] * nxt[:, 0]
    scale = float((edges**2).sum(axis=1).max())
    return bool((cross >= -tol * scale).all())


def _cross(u: NDArray[np.float64], v: NDArray[np.float64]) -> NDArray[np.float64]:
    return u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0]


def _dot(u: NDArray[np.float64], v: NDArray[np.float64]) -> NDArray[np.float64]:
    return u[..., 0] * v[..., 0] + u[..., 1] * v[..., 1]


def _circle_crossings(
    a: NDArray[np.float64], b: NDArray[np.float64], radius: float
) -> tuple[NDArray[np.float64], NDArray[np.float64], NDArray[np.bool_]]:
    """Parameters s1 <= s2 in [0, 1] of the part of [a, b] inside the circle.

    ``a`` and ``b`` are positions relative to the circle centers, shape ``(n, 2)``.
    """
    d = b - a
    qa = _dot(d, d)
    qb = 2.0 * _dot(a, d)
    qc = _dot(a, a) - radius * radius
    disc = qb * qb - 4.0 * qa * qc
    hit = disc > 0.0
    root = np.sqrt(np.where(hit, disc, 0.0))
    t1 = np.clip((-qb - root) / (2.0 * qa), 0.0, 1.0)
    t2 = np.clip((-qb + root) / (2.0 * qa), 0.0, 1.0)
    t1 = np.where(hit, t1, 0.0)
    t2 = np.where(hit, t2, 0.0)
    return t1, t2, hit


def _sector(
    u: NDArray[np.float64], v: NDArray[np.float64], radius: float
) -> NDArray[np.float64]:
    return 0.5 * radius * radius * np.arctan2(_cross(u, v), _dot(u, v))


def disc_polygon_area(
    centers: NDArray[np.float64], radius: float, vertices: NDArray[np.float64]
) -> NDArray[np.float64]:
    """Area of B(c, radius) ∩ P for many centers c.

    The polygon is decomposed into signed triangles (c, A, B) over its edges; each
    triangle is intersected with the disc in closed form (straight part inside the
    circle, circular sectors outside).

    Args:
        centers: Disc centers, shape ``(n, 2)``.
        radius: Disc radius.
        vertices: Counter-clockwise polygon vertices, shape ``(m, 2)``.

    Returns:
        Intersection areas, shape ``(n,)``.
    """
    total = np.zeros(len(centers))
    for k in range(len(vertices)):
        a = vertices[k][None, :] - centers
        b = vertices[(k + 1) % len(vertices)][None, :] - centers
        s1, s2, _ = _circle_crossings(a, b, radius)
        d = b - a
        p1 = a + s1[:, None] * d
        p2 = a + s2[:, None] * d
        total += (
            _sector(a, p1, radius)
            + 0.5 * _cross(p1, p2)
            + _sector(p2, b, radius)
        )
    return total


def disc_segment_chord(
    centers: NDArray[np.float64],
    radius: float,
    start: NDArray[np.float64],
    end: NDArray[np.float64],
) -> NDArray[np.float64]:
    """Length of [start, end] ∩ B(c, radius) for many centers c."""
    a = start[None, :] - centers
    b = end[None, :] - centers
    s1, s2, _ = _circle_crossings(a, b, radius)
    return (s2 - s1) * float(np.linalg.norm(end - start))


def barycentric(
    triangles: NDArray[np.float64], points: NDArray[np.float64]
) -> NDArray[np.float64]:
    """Barycentric coordinates of points in (paired) triangles.

    Args:
        triangles: Triangle vertices, shape ``(n, 3, 2)``.
        points: One point per triangle, shape ``(n, 2)``.

    Returns:
        Coordinates of shape ``(n, 3)``.
    """
    v0 = triangles[:, 0]
    e1 = triangles[:, 1] - v0
    e2 = triangles[:, 2] - v0
    rel = points - v0
    det = _cross(e1, e2)
    l1 = _cross(rel, e2) / det
    l2 = _cross(e1, rel) / det
    return np.column_stack([1.0 - l1 - l2, l1, l2])
