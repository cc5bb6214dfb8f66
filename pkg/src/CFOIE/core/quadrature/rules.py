"""Quadrature rules for the patch parameter square [-1, 1]^2."""
from functools import lru_cache
import numpy as np
from scipy.interpolate import BarycentricInterpolator

SQUARE_CORNERS = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])


@lru_cache(maxsize=None)
def gauss_legendre_unit(order):
    """Gauss-Legendre points and weights on [0, 1]."""
    t, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * (t + 1.0), 0.5 * w


@lru_cache(maxsize=None)
def duffy_rule_on_reference_triangle(order, depth):
    """
    Duffy rule on the triangle (0, 0), (1, 0), (1, 1), singular at (0, 0).

    Points are (s, s*t) with weight ws*wt*s. The radial variable s is split
    dyadically into [0, 2^-depth], ..., [1/4, 1/2], [1/2, 1] so that a target
    sitting just off the surface is still resolved.
    """
    t, wt = gauss_legendre_unit(order)
    edges = np.concatenate([[0.0], 2.0 ** -np.arange(depth, -1, -1)])
    points = []
    weights = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        s = lo + (hi - lo) * t
        ws = (hi - lo) * wt
        ss, tt = np.meshgrid(s, t, indexing="ij")
        wss, wtt = np.meshgrid(ws, wt, indexing="ij")
        points.append(np.stack([ss.ravel(), (ss * tt).ravel()], axis=-1))
        weights.append((wss * wtt * ss).ravel())
    return np.concatenate(points), np.concatenate(weights)


def singular_square_rule(anchor, order, depth):
    """
    Rule(s) on [-1, 1]^2 singular at the parameter point(s) `anchor`.

    The square is split into the four triangles (P, C_k, C_k+1) around the anchor P
    and each one gets the Duffy rule. Anchors on an edge or corner produce degenerate
    triangles; their points are moved to the square centre with zero weight so every
    anchor gets a rule of the same length.

    Inputs:
    - anchor: (..., 2) parameter points
    Outputs:
    - points: (..., 4*M, 2)
    - weights: (..., 4*M)
    """
    anchor = np.asarray(anchor, dtype=float)
    ref_points, ref_weights = duffy_rule_on_reference_triangle(order, depth)
    points = []
    weights = []
    for k in range(4):
        a = SQUARE_CORNERS[k]
        b = SQUARE_CORNERS[(k + 1) % 4]
        col0 = a - anchor
        col1 = np.broadcast_to(b - a, anchor.shape)
        det = np.abs(col0[..., 0] * col1[..., 1] - col0[..., 1] * col1[..., 0])
        mapped = (anchor[..., None, :]
                  + ref_points[:, 0, None] * col0[..., None, :]
                  + ref_points[:, 1, None] * col1[..., None, :])
        degenerate = det < 1e-14
        mapped = np.where(degenerate[..., None, None], 0.0, mapped)
        points.append(mapped)
        weights.append(np.where(degenerate[..., None], 0.0, det[..., None] * ref_weights))
    return np.concatenate(points, axis=-2), np.concatenate(weights, axis=-1)


class LagrangeBasis:
    """Tensor-product Lagrange basis on the p Gauss-Legendre nodes of a patch."""

    def __init__(self, nodes):
        self.nodes = np.asarray(nodes, dtype=float)
        self.order = len(self.nodes)
        self._interp = BarycentricInterpolator(self.nodes, np.eye(self.order))

    def __call__(self, x):
        """1-D basis values, shape x.shape + (p,)."""
        x = np.asarray(x, dtype=float)
        return np.asarray(self._interp(x.ravel())).reshape(x.shape + (self.order,))

    def integrate(self, values, points, weights):
        """
        Contract sample values with the tensor basis.

        Inputs:
        - values: (T, M) integrand samples without the density
        - points: (T, M, 2) parameter points
        - weights: (T, M) quadrature weights including the area element
        Outputs:
        - (T, p*p) column weights, ordered like the patch nodes (u outer, v inner)
        """
        lu = self(points[..., 0])
        lv = self(points[..., 1])
        block = np.einsum("tm,tma,tmb->tab", values * weights, lu, lv)
        return block.reshape(block.shape[0], self.order * self.order)
