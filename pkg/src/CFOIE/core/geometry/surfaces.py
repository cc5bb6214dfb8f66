"""
Analytic multi-patch surfaces: specs, charts, exact differential geometry and
tensor Gauss-Legendre discretization.
"""
from dataclasses import dataclass, field
from functools import cached_property
import hashlib
import numpy as np
import pandas as pd
from scipy.spatial import ConvexHull
from scipy.spatial.distance import pdist
from scipy.spatial.transform import Rotation
from CFOIE.core.errors import GeometryError
from CFOIE.core.geometry.charts import CUBE_FACES, DERIVATIVES, flower_chart, sphere_chart, torus_chart
from util.io import IOManager

io_manager = IOManager("[Geometry]")

SURFACE_KINDS = ("sphere", "torus", "flower", "union")
TWO_TORI_MINOR = 1.0 / 2.1
MIN_AREA_ELEMENT = 1e-14


@dataclass(frozen=True)
class RigidTransform:
    rotation: tuple = ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0))
    translation: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        q = np.asarray(self.rotation, dtype=float)
        if q.shape != (3, 3) or not np.allclose(q @ q.T, np.eye(3), atol=1e-10) or np.linalg.det(q) < 0:
            raise GeometryError("RigidTransform rotation must be a proper 3x3 rotation matrix")
        if np.shape(self.translation) != (3,):
            raise GeometryError("RigidTransform translation must have three components")

    @classmethod
    def about_axis(cls, axis, degrees, translation=(0.0, 0.0, 0.0)):
        """Rotation about a coordinate axis ('x', 'y' or 'z') followed by a translation."""
        q = Rotation.from_euler(axis, degrees, degrees=True).as_matrix()
        return cls(tuple(map(tuple, q)), tuple(float(t) for t in translation))

    @classmethod
    def shift(cls, translation):
        return cls(translation=tuple(float(t) for t in translation))

    @property
    def matrix(self):
        return np.asarray(self.rotation, dtype=float)

    @property
    def offset(self):
        return np.asarray(self.translation, dtype=float)

    def apply_points(self, x):
        return x @ self.matrix.T + self.offset

    def apply_vectors(self, x):
        return x @ self.matrix.T

    def compose(self, inner):
        """self after inner."""
        q = self.matrix @ inner.matrix
        t = self.matrix @ inner.offset + self.offset
        return RigidTransform(tuple(map(tuple, q)), tuple(t))


@dataclass(frozen=True)
class SurfaceSpec:
    kind: str
    radius: float = 1.0
    major: float = 1.0
    minor: float = 0.5
    members: tuple = ()
    label: str = ""

    def __post_init__(self):
        if self.kind not in SURFACE_KINDS:
            raise GeometryError(f"Unknown surface kind: {self.kind!r}")
        if self.kind == "sphere" and not self.radius > 0:
            raise GeometryError("Sphere radius must be positive")
        if self.kind == "torus":
            if not (self.major > 0 and self.minor > 0):
                raise GeometryError("Torus radii must be positive")
            if not self.minor < self.major:
                raise GeometryError("Torus minor radius must be smaller than the major radius")
        if self.kind == "union":
            if not self.members:
                raise GeometryError("A body union needs at least one member")
            for member, transform in self.members:
                if not isinstance(member, SurfaceSpec) or not isinstance(transform, RigidTransform):
                    raise GeometryError("Union members are (SurfaceSpec, RigidTransform) pairs")
                if member.kind == "union":
                    raise GeometryError("Nested body unions are not supported")

    @classmethod
    def sphere(cls, radius=1.0):
        return cls("sphere", radius=float(radius))

    @classmethod
    def torus(cls, major=1.0, minor=0.5):
        return cls("torus", major=float(major), minor=float(minor))

    @classmethod
    def flower(cls):
        return cls("flower")

    @classmethod
    def union(cls, members, label=""):
        return cls("union", members=tuple(members), label=label)

    @property
    def n_components(self):
        return len(self.members) if self.kind == "union" else 1

    def components(self):
        """(spec, transform) per component, in component order 1..J."""
        if self.kind == "union":
            return list(self.members)
        return [(self, RigidTransform())]

    def interior_points(self):
        """One point well inside each component, in component order."""
        points = []
        for spec, transform in self.components():
            if spec.kind == "torus":
                local = np.array([spec.major, 0.0, 0.0]) + spec.minor * np.array([0.06, 0.08, 0.2])
            elif spec.kind == "sphere":
                local = spec.radius * np.array([0.1, -0.05, 0.08])
            else:
                local = np.array([0.05, 0.1, -0.05])
            points.append(transform.apply_points(local))
        return points

    def component_diameter(self):
        """Closed-form diameter of a single (non-union) component."""
        if self.kind == "sphere":
            return 2.0 * self.radius
        if self.kind == "torus":
            return 2.0 * (self.major + self.minor)
        if self.kind == "flower":
            return 2.0 * np.sqrt(2.8)
        raise GeometryError("component_diameter is defined for single components only")


def two_tori(configuration="interlocking", minor=TWO_TORI_MINOR):
    """
    Two disjoint unit-major tori separated by a gap of 1 - 2*minor.

    interlocking: the second torus is turned upright about the x-axis and threaded
    through the first one; adjacent: both lie flat, side by side along x.
    """
    gap = 1.0 - 2.0 * minor
    if gap <= 0:
        raise GeometryError(f"Minor radius {minor} leaves no gap between the tori")
    torus = SurfaceSpec.torus(1.0, minor)
    if configuration == "interlocking":
        members = [
            (torus, RigidTransform()),
            (torus, RigidTransform.about_axis("x", 90.0, (1.0, 0.0, 0.0))),
        ]
    elif configuration == "adjacent":
        offset = 1.0 + minor + 0.5 * gap
        members = [
            (torus, RigidTransform.shift((-offset, 0.0, 0.0))),
            (torus, RigidTransform.shift((offset, 0.0, 0.0))),
        ]
    else:
        raise GeometryError(f"Unknown two-tori configuration: {configuration!r}")
    return SurfaceSpec.union(members, label=f"two-tori-{configuration}")


@dataclass(frozen=True, eq=False)
class Patch:
    index: int
    component: int
    chart: object
    params: tuple
    transform: RigidTransform = field(default_factory=RigidTransform)
    kind: str = "sphere"

    def evaluate(self, u, v, which=DERIVATIVES):
        """Chart value and partial derivatives at (u, v), in world coordinates."""
        local = self.chart(u, v, self.params, which)
        out = {}
        for key, value in local.items():
            if key == "x":
                out[key] = self.transform.apply_points(value)
            else:
                out[key] = self.transform.apply_vectors(value)
        return out


@dataclass(frozen=True, eq=False)
class PatchedSurface:
    spec: SurfaceSpec
    patches: tuple
    refinement: int

    @property
    def n_components(self):
        return self.spec.n_components


@dataclass(frozen=True, eq=False)
class SurfaceNodeData:
    point: np.ndarray
    xu: np.ndarray
    xv: np.ndarray
    normal: np.ndarray
    area_element: np.ndarray
    E: np.ndarray
    F: np.ndarray
    G: np.ndarray
    L: np.ndarray
    M: np.ndarray
    N: np.ndarray
    shape_operator: np.ndarray
    mean_curvature: np.ndarray


@dataclass(frozen=True)
class SurfaceNode:
    position: np.ndarray
    normal: np.ndarray
    weight: float
    shape_operator: np.ndarray
    mean_curvature: float
    patch: int
    uv: tuple
    component: int


def make_surface(spec: SurfaceSpec, refinement: int) -> PatchedSurface:
    """
    Build the patch decomposition of a surface spec.

    Sphere and flower: 6 cubed-sphere faces split refinement x refinement, composed
    with the radial map. Torus: refinement x refinement rectangles of the periodic
    parameter square. Unions apply each member's rigid transform and number the
    components 1..J in member order.
    """
    if not isinstance(refinement, (int, np.integer)) or refinement < 1:
        raise GeometryError(f"Invalid refinement {refinement!r}: need an integer >= 1")
    if not isinstance(spec, SurfaceSpec):
        raise GeometryError(f"Unknown surface spec: {spec!r}")

    patches = []
    for component, (member, transform) in enumerate(spec.components(), start=1):
        for chart, params in _member_charts(member, refinement):
            patches.append(Patch(len(patches), component, chart, params, transform, member.kind))

    io_manager.write_debug(f"Built {spec.label or spec.kind} surface: {len(patches)} patches, {spec.n_components} component(s)")
    return PatchedSurface(spec, tuple(patches), int(refinement))


def _member_charts(member, n):
    if member.kind in ("sphere", "flower"):
        chart = sphere_chart() if member.kind == "sphere" else flower_chart()
        extra = (member.radius,) if member.kind == "sphere" else ()
        hw = 1.0 / n
        for origin, e1, e2 in CUBE_FACES:
            for i in range(n):
                for j in range(n):
                    a0 = -1.0 + (2 * i + 1) / n
                    b0 = -1.0 + (2 * j + 1) / n
                    yield chart, tuple(map(float, origin + e1 + e2)) + (a0, b0, hw) + extra
    elif member.kind == "torus":
        chart = torus_chart()
        h = np.pi / n
        for i in range(n):
            for j in range(n):
                yield chart, ((2 * i + 1) * h, (2 * j + 1) * h, h, h, member.major, member.minor)
    else:
        raise GeometryError(f"Unknown surface kind: {member.kind!r}")


def geometry_at(patch: Patch, u, v) -> SurfaceNodeData:
    """
    Exact differential geometry of a patch at parameter point(s) (u, v) in [-1, 1]^2.

    The shape operator is R = -[x_u x_v] I^-1 II I^-1 [x_u x_v]^T and the mean curvature
    H = tr(R) / 2; with outward normals the unit sphere has R = P_t and H = 1.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if np.any(np.abs(u) > 1 + 1e-12) or np.any(np.abs(v) > 1 + 1e-12):
        raise GeometryError("Parameter coordinates must lie in [-1, 1]^2")

    d = patch.evaluate(u, v)
    cross = np.cross(d["xu"], d["xv"])
    jac = np.asarray(np.linalg.norm(cross, axis=-1))
    if np.any(jac < MIN_AREA_ELEMENT):
        raise GeometryError(f"Degenerate chart on patch {patch.index}: |x_u x x_v| < {MIN_AREA_ELEMENT}")
    normal = cross / jac[..., None]

    E = np.einsum("...i,...i", d["xu"], d["xu"])
    F = np.einsum("...i,...i", d["xu"], d["xv"])
    G = np.einsum("...i,...i", d["xv"], d["xv"])
    L = np.einsum("...i,...i", d["xuu"], normal)
    M = np.einsum("...i,...i", d["xuv"], normal)
    N = np.einsum("...i,...i", d["xvv"], normal)

    det = np.asarray(E * G - F * F)
    first_inv = np.stack([np.stack([G, -F], -1), np.stack([-F, E], -1)], -2) / det[..., None, None]
    second = np.stack([np.stack([L, M], -1), np.stack([M, N], -1)], -2)
    frame = np.stack([d["xu"], d["xv"]], axis=-1)
    core = first_inv @ second @ first_inv
    shape = -frame @ core @ np.swapaxes(frame, -1, -2)
    shape = 0.5 * (shape + np.swapaxes(shape, -1, -2))
    mean = 0.5 * np.trace(shape, axis1=-2, axis2=-1)

    return SurfaceNodeData(d["x"], d["xu"], d["xv"], normal, jac, E, F, G, L, M, N, shape, mean)


@dataclass(eq=False)
class SurfaceGrid:
    surface: PatchedSurface
    order: int
    gl_nodes: np.ndarray
    gl_weights: np.ndarray
    points: np.ndarray
    normals: np.ndarray
    weights: np.ndarray
    shape_operator: np.ndarray
    mean_curvature: np.ndarray
    patch_ids: np.ndarray
    uv: np.ndarray
    components: np.ndarray
    patch_diameter: np.ndarray
    fingerprint: str = ""

    @property
    def size(self):
        return self.points.shape[0]

    @property
    def n_patches(self):
        return len(self.surface.patches)

    @property
    def n_components(self):
        return self.surface.n_components

    @property
    def nodes_per_patch(self):
        return self.order * self.order

    @property
    def h(self):
        """Refinement parameter: max over patches of patch diameter / p."""
        return float(self.patch_diameter.max() / self.order)

    @property
    def node_spacing(self):
        """Local spacing (patch diameter / p) attached to every node."""
        return self.patch_diameter[self.patch_ids] / self.order

    @cached_property
    def diameter(self):
        """Largest node-to-node distance (taken over the convex hull vertices)."""
        hull = ConvexHull(self.points)
        return float(pdist(self.points[hull.vertices]).max())

    def patch_slice(self, index):
        m = self.nodes_per_patch
        return slice(index * m, (index + 1) * m)

    def component_nodes(self, j):
        return np.flatnonzero(self.components == j)

    def component_areas(self):
        return np.array([self.weights[self.components == j].sum() for j in range(1, self.n_components + 1)])

    def node(self, i) -> SurfaceNode:
        return SurfaceNode(
            self.points[i], self.normals[i], float(self.weights[i]), self.shape_operator[i],
            float(self.mean_curvature[i]), int(self.patch_ids[i]), tuple(self.uv[i]), int(self.components[i]),
        )


def discretize(surface: PatchedSurface, p: int) -> SurfaceGrid:
    """Tensor p x p Gauss-Legendre nodes on every patch; weights are GL weight x area element."""
    if not isinstance(p, (int, np.integer)) or p < 3:
        raise GeometryError(f"Invalid nodes-per-direction {p!r}: need an integer >= 3")

    t, w = np.polynomial.legendre.leggauss(p)
    uu, vv = np.meshgrid(t, t, indexing="ij")
    uu, vv = uu.ravel(), vv.ravel()
    ww = np.outer(w, w).ravel()

    blocks = [geometry_at(patch, uu, vv) for patch in surface.patches]
    npp = p * p
    patch_ids = np.repeat(np.arange(len(surface.patches)), npp)
    components = np.repeat([patch.component for patch in surface.patches], npp)

    edge = np.linspace(-1.0, 1.0, 7)
    eu, ev = np.meshgrid(edge, edge, indexing="ij")
    diameters = np.array([pdist(patch.evaluate(eu.ravel(), ev.ravel(), ("x",))["x"]).max() for patch in surface.patches])

    points = np.concatenate([b.point for b in blocks])
    grid = SurfaceGrid(
        surface=surface,
        order=int(p),
        gl_nodes=t,
        gl_weights=w,
        points=points,
        normals=np.concatenate([b.normal for b in blocks]),
        weights=np.concatenate([ww * b.area_element for b in blocks]),
        shape_operator=np.concatenate([b.shape_operator for b in blocks]),
        mean_curvature=np.concatenate([b.mean_curvature for b in blocks]),
        patch_ids=patch_ids,
        uv=np.tile(np.stack([uu, vv], axis=-1), (len(surface.patches), 1)),
        components=components,
        patch_diameter=diameters,
        fingerprint=hashlib.sha1(np.ascontiguousarray(points).tobytes()).hexdigest()[:16],
    )
    _check_orientation(grid)
    io_manager.write_debug(f"Discretized {grid.n_patches} patches at p={p}: N={grid.size}, h={grid.h:.4f}")
    return grid


def _check_orientation(grid):
    """
    Outward normals on every component, checked in the component's own frame: away
    from the centre on spheres and flowers (both radial graphs), away from the tube
    centre line on tori.
    """
    for j, (spec, transform) in enumerate(grid.surface.spec.components(), start=1):
        idx = grid.component_nodes(j)
        local = (grid.points[idx] - transform.offset) @ transform.matrix
        normals = grid.normals[idx] @ transform.matrix
        if spec.kind == "torus":
            rho = np.hypot(local[:, 0], local[:, 1])
            centre = np.zeros_like(local)
            centre[:, :2] = spec.major * local[:, :2] / rho[:, None]
            local = local - centre
        outward = np.einsum("ij,ij->i", normals, local)
        if np.any(outward <= 0):
            raise GeometryError(f"Inward normals found on component {j} ({spec.kind})")


def export_nodes(grid: SurfaceGrid, path):
    """Debug export of the grid nodes as TSV: x y z nx ny nz w H component."""
    table = pd.DataFrame({
        "x": grid.points[:, 0], "y": grid.points[:, 1], "z": grid.points[:, 2],
        "nx": grid.normals[:, 0], "ny": grid.normals[:, 1], "nz": grid.normals[:, 2],
        "w": grid.weights, "H": grid.mean_curvature, "component": grid.components,
    })
    table.to_csv(path, sep="\t", index=False, float_format="%.5e")
    io_manager.write_debug(f"Wrote {grid.size} nodes to {path}")
    return path
