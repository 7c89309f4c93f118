"""Quadrature rules used throughout: Gauss-Lobatto on edges, Dunavant on triangles."""

import numpy as np

# 3-point Gauss-Lobatto on [0, 1]: endpoints + midpoint, exact for degree <= 3.
GL3_NODES = np.array([0.0, 0.5, 1.0])
GL3_WEIGHTS = np.array([1.0 / 6.0, 4.0 / 6.0, 1.0 / 6.0])

# Dunavant symmetric triangle rules, barycentric points and weights summing to 1.
_TRI_RULES = {}

_TRI_RULES[2] = (
    np.array([
        [2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0],
        [1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0],
        [1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0],
    ]),
    np.array([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]),
)


def _sym3(a):
    return np.array([[1 - 2 * a, a, a], [a, 1 - 2 * a, a], [a, a, 1 - 2 * a]])


_TRI_RULES[4] = (
    np.vstack([_sym3(0.445948490915965), _sym3(0.091576213509771)]),
    np.repeat([0.223381589678011, 0.109951743655322], 3),
)

_TRI_RULES[6] = (
    np.vstack([
        _sym3(0.249286745170910),
        _sym3(0.063089014491502),
        # 6-fold orbit (a, b, c) permutations
        np.array([
            [0.310352451033785, 0.636502499121399, 0.053145049844816],
            [0.636502499121399, 0.053145049844816, 0.310352451033785],
            [0.053145049844816, 0.310352451033785, 0.636502499121399],
            [0.636502499121399, 0.310352451033785, 0.053145049844816],
            [0.310352451033785, 0.053145049844816, 0.636502499121399],
            [0.053145049844816, 0.636502499121399, 0.310352451033785],
        ]),
    ]),
    np.concatenate([
        np.repeat([0.116786275726379, 0.050844906370207], 3),
        np.repeat([0.082851075618374], 6),
    ]),
)


def triangle_rule(degree):
    """Barycentric points (n, 3) and weights (n,) (summing to 1) exact to `degree`."""
    for d in sorted(_TRI_RULES):
        if d >= degree:
            return _TRI_RULES[d]
    raise ValueError(f"no triangle rule of degree {degree}")


def triangle_quad_points(tri, degree):
    """Physical quadrature points (n, 2) and weights (n,) for a triangle (3, 2).

    Weights include the triangle area, so sum(w * f(x)) approximates
    the integral of f over the triangle.
    """
    bary, w = triangle_rule(degree)
    pts = bary @ np.asarray(tri)
    a, b, c = tri
    area = 0.5 * abs((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
    return pts, w * area


def polygon_quad_points(verts, degree, star=None):
    """Quadrature over a polygon by fanning sub-triangles from `star` (default centroid)."""
    verts = np.asarray(verts, dtype=float)
    if star is None:
        star = polygon_centroid(verts)
    pts = []
    wts = []
    n = len(verts)
    for i in range(n):
        tri = np.array([verts[i], verts[(i + 1) % n], star])
        p, w = triangle_quad_points(tri, degree)
        pts.append(p)
        wts.append(w)
    return np.vstack(pts), np.concatenate(wts)


def polygon_area(verts):
    v = np.asarray(verts, dtype=float)
    x, y = v[:, 0], v[:, 1]
    return 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)


def polygon_centroid(verts):
    v = np.asarray(verts, dtype=float)
    x, y = v[:, 0], v[:, 1]
    cross = x * np.roll(y, -1) - np.roll(x, -1) * y
    a = 0.5 * np.sum(cross)
    cx = np.sum((x + np.roll(x, -1)) * cross) / (6.0 * a)
    cy = np.sum((y + np.roll(y, -1)) * cross) / (6.0 * a)
    return np.array([cx, cy])
