"""
Nystrom assembly of the scalar boundary-operator matrices.

Far pairs use the native grid rule K(x_i, y_j) w_j. For a target i close to (or on)
source patch q the whole block of row i over the nodes of q is recomputed: the target
is projected onto the patch parameter square, the square is split into triangles
around that preimage, each triangle gets a dyadically refined Duffy rule and the
density is carried by the patch's tensor Lagrange basis.
"""
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
import struct
import numpy as np
from scipy.spatial import cKDTree
from CFOIE.core.errors import GeometryError, InvalidParameterError, MatrixFormatError, QuadratureError
from CFOIE.core.quadrature.kernels import KernelId, KernelKind, kernel_from_geometry
from CFOIE.core.quadrature.rules import LagrangeBasis, singular_square_rule
from util.io import IOManager

io_manager = IOManager("[Quadrature]")

MATRIX_HEADER = struct.Struct("<4sIBd")
MATRIX_MAGIC = b"CFOM"
NEAR_CHUNK = 32


@dataclass(frozen=True)
class QuadConfig:
    eta_near: float = 2.5       # near-field radius in multiples of patch diameter / p
    depth: int = 3              # dyadic levels of the Duffy radial variable
    aux_order: int = None       # points per direction of the singular rule; None -> 2p
    eps_k: float = 1e-12        # below this k the difference kernel is treated as zero
    row_block: int = 256

    def __post_init__(self):
        if not self.eta_near > 0:
            raise InvalidParameterError("eta_near must be positive")
        if self.depth < 0:
            raise InvalidParameterError("Duffy subdivision depth must be non-negative")
        if self.aux_order is not None and self.aux_order < 1:
            raise InvalidParameterError("aux_order must be positive")
        if not self.eps_k > 0:
            raise InvalidParameterError("eps_k must be positive")
        if self.row_block < 1:
            raise InvalidParameterError("row_block must be positive")

    def singular_order(self, p):
        return self.aux_order if self.aux_order is not None else 2 * p


@dataclass(eq=False)
class KernelMatrix:
    data: np.ndarray
    kernel: KernelId
    fingerprint: str = ""

    @property
    def shape(self):
        return self.data.shape

    def apply(self, x):
        """Matrix action on a node vector (N,) or on stacked rows (..., N)."""
        x = np.asarray(x)
        if x.ndim == 1:
            return self.data @ x
        return x @ self.data.T

    def check_grid(self, grid):
        if self.fingerprint and self.fingerprint != grid.fingerprint:
            raise GeometryError(f"{self.kernel.label} was assembled on a different grid")


def _vanishes(kernel, cfg):
    return kernel.kind == KernelKind.HYPERSINGULAR_DIFF and kernel.k < cfg.eps_k


def sample_patch(patch, uv):
    """Points, unit normals and area elements of a patch at parameter points (..., 2)."""
    d = patch.evaluate(uv[..., 0], uv[..., 1], ("x", "xu", "xv"))
    cross = np.cross(d["xu"], d["xv"])
    jac = np.linalg.norm(cross, axis=-1)
    return d["x"], cross / jac[..., None], jac


def project_to_patch(patch, targets, start_uv, max_iter=20, tol=1e-12):
    """
    Parameter-space closest points of `targets` (T, 3) on a patch.

    Gauss-Newton on |x(u, v) - target|^2 from `start_uv`, clamped to [-1, 1]^2.
    Returns (uv, distance).
    """
    uv = np.array(start_uv, dtype=float, copy=True)
    targets = np.asarray(targets, dtype=float)
    for _ in range(max_iter):
        d = patch.evaluate(uv[:, 0], uv[:, 1], ("x", "xu", "xv"))
        res = d["x"] - targets
        jt = np.stack([d["xu"], d["xv"]], axis=1)             # (T, 2, 3)
        normal_eq = jt @ np.swapaxes(jt, 1, 2)
        grad = np.einsum("tai,ti->ta", jt, res)
        step = -np.linalg.solve(normal_eq, grad[..., None])[..., 0]
        new = np.clip(uv + step, -1.0, 1.0)
        moved = np.abs(new - uv).max()
        uv = new
        if moved < tol:
            break
    x = patch.evaluate(uv[:, 0], uv[:, 1], ("x",))["x"]
    return uv, np.linalg.norm(x - targets, axis=-1)


def near_pairs(grid, cfg: QuadConfig):
    """
    Target node indices that need singular treatment, per source patch.

    A node is near patch q when it lies within eta_near * diam_q / p of a node of q;
    the patch's own nodes are always included.
    """
    tree = cKDTree(grid.points)
    out = []
    for q in range(grid.n_patches):
        cols = grid.patch_slice(q)
        radius = cfg.eta_near * grid.patch_diameter[q] / grid.order
        hits = tree.query_ball_point(grid.points[cols], radius)
        idx = np.unique(np.concatenate([np.asarray(h, dtype=int) for h in hits] + [np.arange(grid.size)[cols]]))
        out.append(idx)
    return out


def _anchors(grid, q, targets):
    """Parameter preimages of the near targets of patch q."""
    patch = grid.surface.patches[q]
    cols = grid.patch_slice(q)
    anchors = np.empty((targets.size, 2))
    own = grid.patch_ids[targets] == q
    anchors[own] = grid.uv[targets[own]]
    other = targets[~own]
    if other.size:
        local = grid.points[cols]
        nearest = np.argmin(np.linalg.norm(grid.points[other][:, None, :] - local[None], axis=-1), axis=1)
        anchors[~own], _ = project_to_patch(patch, grid.points[other], grid.uv[cols][nearest])
    return anchors


def _far_rows(grid, kernels, out, r0, r1):
    diff = grid.points[r0:r1, None, :] - grid.points[None, :, :]
    r = np.linalg.norm(diff, axis=-1)
    coincident = r == 0
    r = np.where(coincident, 1.0, r)
    nx = grid.normals[r0:r1, None, :]
    ny = grid.normals[None, :, :]
    for kernel in kernels:
        vals = kernel_from_geometry(kernel, diff, r, nx, ny) * grid.weights[None, :]
        vals[coincident] = 0.0
        out[kernel][r0:r1] = vals


def _near_patch(grid, kernels, out, q, targets, basis, order, depth):
    patch = grid.surface.patches[q]
    cols = grid.patch_slice(q)
    anchors = _anchors(grid, q, targets)
    for c0 in range(0, targets.size, NEAR_CHUNK):
        rows = targets[c0:c0 + NEAR_CHUNK]
        uv, w = singular_square_rule(anchors[c0:c0 + NEAR_CHUNK], order, depth)
        y, ny, jac = sample_patch(patch, uv)
        diff = grid.points[rows][:, None, :] - y
        r = np.linalg.norm(diff, axis=-1)
        nx = grid.normals[rows][:, None, :]
        for kernel in kernels:
            vals = kernel_from_geometry(kernel, diff, r, nx, ny)
            out[kernel][rows, cols] = basis.integrate(vals, uv, w * jac)


def _check_finite(grid, kernel, data):
    bad = ~np.isfinite(data)
    if np.any(bad):
        i, j = np.argwhere(bad)[0]
        patch = int(grid.patch_ids[j])
        raise QuadratureError(f"Non-finite {kernel.label} entry at ({i}, {j}), source patch {patch}", int(i), int(j), patch)


def assemble_many(kernels, grid, cfg: QuadConfig = None, workers=1):
    """
    Assemble several kernel matrices in one pass over the grid.

    Geometry, near-field detection, projections and singular rules are shared by all
    kernels. Far rows are split into blocks and near work into patches; both run on
    a thread pool and write disjoint parts of the matrices.

    Inputs:
    - kernels: sequence of KernelId
    - grid: SurfaceGrid
    Outputs:
    - list of KernelMatrix in the order of `kernels`
    """
    cfg = cfg or QuadConfig()
    kernels = list(kernels)
    n = grid.size
    active = [kern for kern in dict.fromkeys(kernels) if not _vanishes(kern, cfg)]
    out = {kern: np.zeros((n, n), dtype=complex) for kern in dict.fromkeys(kernels)}

    if active:
        labels = ", ".join(kern.label for kern in active)
        with io_manager.timed(f"Assembly of {labels} at N={n}"):
            with ThreadPoolExecutor(max_workers=workers) as executor:
                futures = [
                    executor.submit(_far_rows, grid, active, out, r0, min(r0 + cfg.row_block, n))
                    for r0 in range(0, n, cfg.row_block)
                ]
                for future in as_completed(futures):
                    future.result()

            near = near_pairs(grid, cfg)
            io_manager.write_debug(f"Near-field pairs: {sum(idx.size for idx in near)} (target, patch)")
            basis = LagrangeBasis(grid.gl_nodes)
            order = cfg.singular_order(grid.order)
            with ThreadPoolExecutor(max_workers=workers) as executor:
                futures = [
                    executor.submit(_near_patch, grid, active, out, q, near[q], basis, order, cfg.depth)
                    for q in range(grid.n_patches)
                ]
                for future in as_completed(futures):
                    future.result()

    result = []
    for kern in kernels:
        _check_finite(grid, kern, out[kern])
        result.append(KernelMatrix(out[kern], kern, grid.fingerprint))
    return result


def assemble(kernel: KernelId, grid, cfg: QuadConfig = None, workers=1) -> KernelMatrix:
    return assemble_many([kernel], grid, cfg, workers)[0]


def dump_matrix(matrix: KernelMatrix, path):
    """Write a matrix as 'CFOM' + u32 N + u8 kernel id + f64 k, then row-major complex128 (little-endian)."""
    n = matrix.data.shape[0]
    with open(path, "wb") as fh:
        fh.write(MATRIX_HEADER.pack(MATRIX_MAGIC, n, int(matrix.kernel.kind), float(matrix.kernel.k)))
        fh.write(np.ascontiguousarray(matrix.data, dtype="<c16").tobytes())
    io_manager.write_debug(f"Dumped {matrix.kernel.label} ({n}x{n}) to {path}")
    return path


def load_matrix(path, fingerprint="") -> KernelMatrix:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < MATRIX_HEADER.size:
        raise MatrixFormatError(f"{path} is too short to hold a matrix header")
    magic, n, kind, k = MATRIX_HEADER.unpack_from(raw)
    if magic != MATRIX_MAGIC:
        raise MatrixFormatError(f"{path} is not a CFOM matrix file (magic {magic!r})")
    data = np.frombuffer(raw, dtype="<c16", offset=MATRIX_HEADER.size)
    if data.size != n * n:
        raise MatrixFormatError(f"{path}: expected {n * n} entries, found {data.size}")
    return KernelMatrix(data.reshape(n, n).astype(complex), KernelId(KernelKind(kind), k), fingerprint)
