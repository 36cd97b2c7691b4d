"""Quadrature rules on the reference triangle and the per-element
quadrature error functional.

All rules live on the reference triangle with vertices (0,0), (1,0),
(0,1) and use the convention that the weights sum to one, so the
physical integral over a triangle T is |T| * sum_k w_k f(q_k).
"""

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

__all__ = [
    "QuadratureRule",
    "rule_for_degree",
    "conical_product_rule",
    "integrate",
    "quad_error_functional",
]


class QuadratureRule:
    """Nodes (K, 2), weights (K,) summing to 1, and declared exactness degree."""

    __slots__ = ("points", "weights", "degree")

    def __init__(self, points, weights, degree):
        self.points = np.asarray(points, dtype=float).reshape(-1, 2)
        self.weights = np.asarray(weights, dtype=float).reshape(-1)
        self.degree = int(degree)
        if self.points.shape[0] != self.weights.shape[0]:
            raise ValueError("node/weight count mismatch")

    def __len__(self):
        return self.weights.shape[0]


def conical_product_rule(n):
    """Tensor Gauss rule mapped to the triangle, exact through degree 2n-1.

    The collapsed-square substitution x = u, y = v(1-u) turns the
    triangle integral into a square integral with the extra factor
    (1-u), which a Gauss-Jacobi rule with weight (1-u) absorbs; the v
    direction uses plain Gauss-Legendre.  n*n nodes, all interior.
    """
    n = int(n)
    if n < 1:
        raise ValueError("n must be positive")
    xj, wj = roots_jacobi(n, 1.0, 0.0)
    xl, wl = roots_legendre(n)
    u = 0.5 * (xj + 1.0)
    wu = 0.25 * wj
    v = 0.5 * (xl + 1.0)
    wv = 0.5 * wl
    pts = np.empty((n * n, 2))
    pts[:, 0] = np.repeat(u, n)
    pts[:, 1] = np.tile(v, n) * (1.0 - pts[:, 0])
    w = 2.0 * np.repeat(wu, n) * np.tile(wv, n)
    return QuadratureRule(pts, w, 2 * n - 1)


def rule_for_degree(d):
    """Reference-triangle rule for a supported exactness degree.

    d = 0 or 1 gives the one-point centroid rule (exact on linears),
    d = 2 the three-point edge-midpoint rule with weights 1/3, and
    d = 6 a 16-point conical-product Gauss rule (exact through 7).
    """
    if d in (0, 1):
        return QuadratureRule([[1.0 / 3.0, 1.0 / 3.0]], [1.0], 1)
    if d == 2:
        pts = [[0.5, 0.0], [0.5, 0.5], [0.0, 0.5]]
        return QuadratureRule(pts, [1.0 / 3.0] * 3, 2)
    if d == 6:
        return conical_product_rule(4)
    raise ValueError("unsupported quadrature degree %r" % (d,))


def integrate(f, tri, rule):
    """|T| * sum_k w_k f(q_k) on the physical triangle tri ((3, 2) vertices).

    f is called once with the mapped nodes, shape (K, 2), and must
    return one value per node.
    """
    tri = np.asarray(tri, dtype=float).reshape(3, 2)
    a = tri[0]
    m = np.column_stack([tri[1] - a, tri[2] - a])
    area = 0.5 * abs(m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0])
    pts = rule.points @ m.T + a
    vals = np.asarray(f(pts), dtype=float).reshape(-1)
    return area * float(rule.weights @ vals)


def quad_error_functional(f, tri, rule, oracle):
    """E_T(f) = int_T f - |T| * sum_k w_k f(q_k).

    The reference integral comes from ``oracle``: either a (much more
    accurate) QuadratureRule, or a callable (f, tri) -> float, e.g. a
    composite scheme resolving a kink of f.
    """
    if isinstance(oracle, QuadratureRule):
        exact = integrate(f, tri, oracle)
    else:
        exact = float(oracle(f, tri))
    return exact - integrate(f, tri, rule)
