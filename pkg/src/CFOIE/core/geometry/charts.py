"""
Symbolic chart families compiled to numpy callables.

Each family is a map (u, v, params...) -> R^3 written once in sympy; its first and
second partial derivatives are taken symbolically and lambdified, so the geometry
quantities downstream (normals, fundamental forms, shape operator) are exact up to
floating point.
"""
from functools import lru_cache
import numpy as np
import sympy as sp

u, v = sp.symbols("u v", real=True)

# Cube faces (origin, e1, e2) with (e1 x e2) . origin > 0, so x_u x x_v points outward.
CUBE_FACES = (
    ((1, 0, 0), (0, 1, 0), (0, 0, 1)),
    ((-1, 0, 0), (0, 0, 1), (0, 1, 0)),
    ((0, 1, 0), (0, 0, 1), (1, 0, 0)),
    ((0, -1, 0), (1, 0, 0), (0, 0, 1)),
    ((0, 0, 1), (1, 0, 0), (0, 1, 0)),
    ((0, 0, -1), (0, 1, 0), (1, 0, 0)),
)

DERIVATIVES = ("x", "xu", "xv", "xuu", "xuv", "xvv")


class CompiledChart:
    """
    Numpy evaluator for a symbolic chart family.

    Inputs:
    - name: family name (used in logs and cache keys)
    - expr: sympy 3-vector in u, v and the symbols of `params`
    - params: ordered tuple of sympy symbols fixed per patch
    """

    def __init__(self, name, expr, params):
        self.name = name
        self.params = tuple(params)
        args = (u, v) + self.params
        derivs = {
            "x": expr,
            "xu": expr.diff(u),
            "xv": expr.diff(v),
            "xuu": expr.diff(u, 2),
            "xuv": expr.diff(u).diff(v),
            "xvv": expr.diff(v, 2),
        }
        self._funcs = {key: sp.lambdify(args, list(val), "numpy", cse=True) for key, val in derivs.items()}

    def __call__(self, uu, vv, values, which=DERIVATIVES):
        """Evaluate the requested derivatives; each comes back with shape uu.shape + (3,)."""
        uu = np.asarray(uu, dtype=float)
        vv = np.asarray(vv, dtype=float)
        shape = np.broadcast(uu, vv).shape
        out = {}
        for key in which:
            comps = self._funcs[key](uu, vv, *values)
            out[key] = np.stack([np.broadcast_to(np.asarray(c, dtype=float), shape) for c in comps], axis=-1)
        return out


def _cube_point(face_args):
    """Equiangular cubed-sphere point on the unit sphere for one face sub-square."""
    ox, oy, oz, ax, ay, az, bx, by, bz, a0, b0, hw = face_args
    alpha = sp.tan(sp.pi / 4 * (a0 + hw * u))
    beta = sp.tan(sp.pi / 4 * (b0 + hw * v))
    c = sp.Matrix([ox + alpha * ax + beta * bx, oy + alpha * ay + beta * by, oz + alpha * az + beta * bz])
    return c / sp.sqrt(c.dot(c))


@lru_cache(maxsize=None)
def sphere_chart():
    face_args = sp.symbols("ox oy oz ax ay az bx by bz a0 b0 hw", real=True)
    radius = sp.Symbol("radius", positive=True)
    return CompiledChart("sphere", radius * _cube_point(face_args), face_args + (radius,))


@lru_cache(maxsize=None)
def flower_chart():
    # The radial factor sqrt(0.8 + 0.5(cos 2phi - 1)(cos 4theta - 1)) of the flower surface,
    # rewritten in Cartesian components of the unit direction: 0.8 + 8 y^2 z^2.
    face_args = sp.symbols("ox oy oz ax ay az bx by bz a0 b0 hw", real=True)
    chat = _cube_point(face_args)
    rho = sp.sqrt(sp.Rational(4, 5) + 8 * chat[1] ** 2 * chat[2] ** 2)
    return CompiledChart("flower", rho * chat, face_args)


@lru_cache(maxsize=None)
def torus_chart():
    phi0, theta0, hphi, htheta, major, minor = sp.symbols("phi0 theta0 hphi htheta major minor", real=True)
    # u runs toroidally and v poloidally: x_phi x x_theta is the outward normal.
    phi = phi0 + hphi * u
    theta = theta0 + htheta * v
    ring = major + minor * sp.cos(theta)
    expr = sp.Matrix([ring * sp.cos(phi), ring * sp.sin(phi), minor * sp.sin(theta)])
    return CompiledChart("torus", expr, (phi0, theta0, hphi, htheta, major, minor))


def flower_radius(direction):
    """Radial factor of the flower surface at unit direction(s) (..., 3)."""
    direction = np.asarray(direction, dtype=float)
    return np.sqrt(0.8 + 8.0 * direction[..., 1] ** 2 * direction[..., 2] ** 2)
