"""
Smooth-quadrature evaluation of the single and double layer potentials and their
target derivatives at points away from the surface.

Densities are (N,) scalars or (C, N) stacks (C = 3 for vector densities, one row per
Cartesian component). With R = x - y, r = |R| and derivatives taken in x:
    grad G      = G' R / r
    hess G      = a R R^T + B I                       a = (G'' - G'/r) / r^2,  B = G'/r
    d3 G [l,i,j] = c3 R_l R_i R_j + a (d_il R_j + d_jl R_i + d_ij R_l)
"""
import numpy as np
from scipy.spatial import cKDTree
from CFOIE.core.errors import InvalidParameterError, NearSurfaceError
from CFOIE.core.quadrature.kernels import radial_derivatives
from util.io import IOManager

io_manager = IOManager("[Potentials]")

LAYER_KINDS = ("single", "double")
TARGET_CHUNK = 64
EXTERIOR, INTERIOR, NEAR = "exterior", "interior", "near"


def check_targets(grid, targets, eta_near=2.5):
    """Raise NearSurfaceError if a target is within eta_near local node spacings of the grid."""
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    dist, idx = cKDTree(grid.points).query(targets)
    limit = eta_near * grid.node_spacing[idx]
    bad = dist <= limit
    if np.any(bad):
        first = int(np.flatnonzero(bad)[0])
        raise NearSurfaceError(
            f"{int(bad.sum())} target(s) too close to the surface; first at {targets[first]} "
            f"(distance {dist[first]:.3e} <= {limit[first]:.3e})"
        )
    return targets


def _radial_terms(k, r, order):
    g = radial_derivatives(k, r, order=order)
    terms = {"G": g[0]}
    if order >= 1:
        terms["B"] = g[1] / r
    if order >= 2:
        A = g[2] - g[1] / r
        terms["a"] = A / r ** 2
    if order >= 3:
        dA = g[3] - g[2] / r + g[1] / r ** 2
        terms["c3"] = (dA - 2.0 * A / r) / r ** 3
    return terms


def _kernel_derivatives(kind, k, x, y, ny, order):
    """
    Kernel and x-derivatives for a target chunk against all nodes.

    Returns a dict with "value" (t, N) and, up to `order`, "grad" (t, N, 3),
    "hess" (t, N, 3, 3) and, for the single layer only, "lapgrad" (t, N, 3), the
    gradient of the Laplacian (the trace of the third derivative tensor).
    """
    R = x[:, None, :] - y[None, :, :]
    r = np.linalg.norm(R, axis=-1)
    eye = np.eye(3)
    out = {}
    if kind == "single":
        t = _radial_terms(k, r, order + 1 if order >= 2 else order)
        out["value"] = t["G"]
        if order >= 1:
            out["grad"] = t["B"][..., None] * R
        if order >= 2:
            out["hess"] = t["a"][..., None, None] * R[..., :, None] * R[..., None, :] + t["B"][..., None, None] * eye
            out["lapgrad"] = (t["c3"] * r ** 2 + 5.0 * t["a"])[..., None] * R
        return out

    t = _radial_terms(k, r, order + 1)
    rn = np.einsum("tni,ni->tn", R, ny)
    out["value"] = -t["B"] * rn
    if order >= 1:
        out["grad"] = -(t["a"] * rn)[..., None] * R - t["B"][..., None] * ny[None]
    if order >= 2:
        nyb = np.broadcast_to(ny[None], R.shape)
        out["hess"] = -(
            (t["c3"] * rn)[..., None, None] * R[..., :, None] * R[..., None, :]
            + t["a"][..., None, None] * (
                rn[..., None, None] * eye
                + nyb[..., :, None] * R[..., None, :]
                + R[..., :, None] * nyb[..., None, :]
            )
        )
    return out


def layer_potential_derivatives(kind, k, grid, density, targets, order=1, eta_near=2.5, check=True):
    """
    Layer potential and its target derivatives.

    Inputs:
    - kind: "single" or "double"
    - density: (N,) or (C, N)
    - targets: (T, 3)
    - order: highest derivative (0, 1 or 2)
    Outputs:
    - dict with "value" (C, T), "grad" (C, T, 3), "hess" (C, T, 3, 3); scalar
      densities drop the leading axis. Single-layer order-2 results also carry
      "lapgrad" (C, T, 3).
    """
    if kind not in LAYER_KINDS:
        raise InvalidParameterError(f"Unknown layer potential kind: {kind!r}")
    if order not in (0, 1, 2):
        raise InvalidParameterError(f"Unsupported derivative order {order}")
    density = np.asarray(density)
    scalar = density.ndim == 1
    dens = np.atleast_2d(density).astype(complex) * grid.weights[None, :]
    targets = check_targets(grid, targets, eta_near) if check else np.atleast_2d(np.asarray(targets, dtype=float))

    parts = {}
    for c0 in range(0, targets.shape[0], TARGET_CHUNK):
        chunk = targets[c0:c0 + TARGET_CHUNK]
        kd = _kernel_derivatives(kind, k, chunk, grid.points, grid.normals, order)
        parts.setdefault("value", []).append(np.einsum("tn,cn->ct", kd["value"], dens))
        if "grad" in kd:
            parts.setdefault("grad", []).append(np.einsum("tnm,cn->ctm", kd["grad"], dens))
        if "hess" in kd:
            parts.setdefault("hess", []).append(np.einsum("tnlm,cn->ctlm", kd["hess"], dens))
        if "lapgrad" in kd:
            parts.setdefault("lapgrad", []).append(np.einsum("tnm,cn->ctm", kd["lapgrad"], dens))

    out = {key: np.concatenate(val, axis=1) for key, val in parts.items()}
    if scalar:
        out = {key: val[0] for key, val in out.items()}
    return out


def layer_potential(kind, k, grid, density, targets, eta_near=2.5, check=True):
    """S[density] or D[density] at exterior (or interior) targets."""
    return layer_potential_derivatives(kind, k, grid, density, targets, 0, eta_near, check)["value"]


def classify_points(grid, points, eta_near=2.5):
    """
    Label points as exterior, interior or near the surface.

    Away from the surface the discrete Laplace double layer of the unit density is
    0 outside and -1 inside; |D0[1]| > 1/2 marks an interior point.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    dist, idx = cKDTree(grid.points).query(points)
    labels = np.full(points.shape[0], EXTERIOR, dtype=object)
    near = dist <= eta_near * grid.node_spacing[idx]
    labels[near] = NEAR
    far = np.flatnonzero(~near)
    if far.size:
        d0 = layer_potential("double", 0.0, grid, np.ones(grid.size), points[far], check=False)
        labels[far[np.abs(d0) > 0.5]] = INTERIOR
    return labels
