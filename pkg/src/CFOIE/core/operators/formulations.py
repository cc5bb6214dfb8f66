"""
Boundary operators of the electric and magnetic combined-field-only formulations,
their right regularizers and the rank-J charge stabilization.

Conventions: exterior traces, outward normals, K = dG/dnu(y), K' = dG/dnu(x). Every
vector kernel operator acts componentwise on (3, N) fields.
"""
from dataclasses import dataclass
from enum import Enum
import numpy as np
from scipy.linalg import lu_factor
from scipy.linalg.lapack import zgecon
from CFOIE.core.errors import InvalidParameterError, SingularOperatorError
from CFOIE.core.operators.algebra import (
    FactorizedInverseOperator, IdentityOperator, NormalSandwichOperator, PointwiseOperator,
    RankOperator, ScalarKernelOperator,
)
from CFOIE.core.quadrature.kernels import KernelId, KernelKind
from CFOIE.core.quadrature.nystrom import KernelMatrix, QuadConfig, assemble_many
from util.io import IOManager

io_manager = IOManager("[Operators]")

MAX_S0_CONDITION = 1e12


class Formulation(str, Enum):
    DE = "DE"
    RDE = "RDE"
    DM = "DM"
    RDM = "RDM"

    @property
    def family(self):
        return "electric" if self in (Formulation.DE, Formulation.RDE) else "magnetic"

    @property
    def regularized(self):
        return self in (Formulation.RDE, Formulation.RDM)


def default_eta(k):
    """Coupling parameter: 100k for k >= pi, 100 pi below."""
    return 100.0 * k if k >= np.pi else 100.0 * np.pi


@dataclass(frozen=True)
class FormulationParams:
    formulation: Formulation
    k: float
    eta: float = None
    xi: complex = 0.0

    def __post_init__(self):
        object.__setattr__(self, "formulation", Formulation(self.formulation))
        if not self.k > 0:
            raise InvalidParameterError(f"Wavenumber must be positive, got {self.k}")
        if self.eta is None:
            object.__setattr__(self, "eta", default_eta(self.k))
        if not np.isfinite(self.eta) or self.eta == 0:
            raise InvalidParameterError("Coupling parameter eta must be real and nonzero")
        if self.xi != 0 and self.formulation.family == "magnetic":
            raise InvalidParameterError("Charge stabilization xi applies to the electric formulations only")

    def check_xi(self, areas):
        """Reject xi = -1/|Gamma_j| for any component area."""
        areas = np.asarray(areas, dtype=float)
        if self.xi == 0:
            return
        gap = np.abs(1.0 + self.xi * areas)
        if np.any(gap <= 1e-12 * (1.0 + np.abs(self.xi) * areas)):
            j = int(np.argmin(gap)) + 1
            raise InvalidParameterError(f"xi = {self.xi} equals -1/|Gamma_{j}| = {-1.0 / areas[j - 1]:.6e}")


@dataclass(eq=False)
class KernelSet:
    """The scalar matrices a formulation needs at one wavenumber, plus the S0 factorization."""
    k: float
    S: KernelMatrix
    K: KernelMatrix
    Kp: KernelMatrix
    Tdiff: KernelMatrix
    S0: KernelMatrix
    K0p: KernelMatrix
    S0_lu: tuple
    S0_rcond: float
    fingerprint: str = ""

    def matrices(self):
        return [self.S, self.K, self.Kp, self.Tdiff, self.S0, self.K0p]


def factorize_single_layer(S0: KernelMatrix):
    """LU of S0 with a 1-norm condition estimate; refuses numerically singular matrices."""
    data = S0.data.astype(complex)
    anorm = np.linalg.norm(data, 1)
    lu_piv = lu_factor(data)
    rcond, info = zgecon(lu_piv[0], anorm, norm="1")
    if info != 0 or rcond <= 1.0 / MAX_S0_CONDITION:
        raise SingularOperatorError(
            f"S0 condition estimate {1.0 / max(rcond, 1e-300):.3e} exceeds {MAX_S0_CONDITION:.0e}: grid under-resolved"
        )
    return lu_piv, float(rcond)


def build_kernel_set(grid, k, cfg: QuadConfig = None, workers=1) -> KernelSet:
    kernels = [
        KernelId(KernelKind.SINGLE_LAYER, k),
        KernelId(KernelKind.DOUBLE_LAYER, k),
        KernelId(KernelKind.ADJOINT_DOUBLE, k),
        KernelId(KernelKind.HYPERSINGULAR_DIFF, k),
        KernelId(KernelKind.SINGLE_LAYER, 0.0),
        KernelId(KernelKind.ADJOINT_DOUBLE, 0.0),
    ]
    S, K, Kp, Tdiff, S0, K0p = assemble_many(kernels, grid, cfg, workers)
    with io_manager.timed(f"LU factorization of S0 (N={grid.size})"):
        lu_piv, rcond = factorize_single_layer(S0)
    io_manager.write_debug(f"S0 reciprocal condition estimate: {rcond:.3e}")
    return KernelSet(k, S, K, Kp, Tdiff, S0, K0p, lu_piv, rcond, grid.fingerprint)


def projector(grid, which):
    """Pointwise nu nu^T ('normal') or I - nu nu^T ('tangential')."""
    nn = grid.normals[:, :, None] * grid.normals[:, None, :]
    if which == "normal":
        return PointwiseOperator(nn, grid.fingerprint)
    if which == "tangential":
        return PointwiseOperator(np.eye(3)[None] - nn, grid.fingerprint)
    raise InvalidParameterError(f"Unknown projector {which!r}")


def curvature_multiplier(grid, which):
    """Pointwise mean curvature H * I ('meanH') or shape operator R ('shapeR')."""
    if which == "meanH":
        return PointwiseOperator(grid.mean_curvature[:, None, None] * np.eye(3)[None], grid.fingerprint)
    if which == "shapeR":
        return PointwiseOperator(grid.shape_operator, grid.fingerprint)
    raise InvalidParameterError(f"Unknown curvature multiplier {which!r}")


def _scalar(matrix):
    return ScalarKernelOperator(matrix)


def build_hypersingular(k, grid, mats: KernelSet):
    """T = (K0'^2 - I/4) S0^-1 + (T - T0), componentwise."""
    if mats.fingerprint and mats.fingerprint != grid.fingerprint:
        raise InvalidParameterError("Kernel set was assembled on a different grid")
    identity = IdentityOperator(grid.size, grid.fingerprint)
    K0p = _scalar(mats.K0p)
    S0inv = FactorizedInverseOperator(mats.S0_lu, grid.fingerprint)
    return (K0p @ K0p - 0.25 * identity) @ S0inv + _scalar(mats.Tdiff)


class CombinedTraceOperator:
    """
    C(a, b) = -1/2 (b + i eta a) + (T + i eta K) a - (K' + i eta S) b

    for a Dirichlet trace a and a Neumann trace b of a radiating field; it vanishes
    on exterior Cauchy data.
    """

    def __init__(self, params: FormulationParams, grid, mats: KernelSet):
        ieta = 1j * params.eta
        self.eta = params.eta
        self.dirichlet = build_hypersingular(params.k, grid, mats) + ieta * _scalar(mats.K)
        self.neumann = _scalar(mats.Kp) + ieta * _scalar(mats.S)

    def apply(self, a, b):
        a = np.asarray(a)
        b = np.asarray(b)
        return -0.5 * (b + 1j * self.eta * a) + self.dirichlet.apply(a) - self.neumann.apply(b)


def combined_trace_operator(params: FormulationParams, grid, mats: KernelSet):
    return CombinedTraceOperator(params, grid, mats)


def build_Le(params: FormulationParams, grid, mats: KernelSet):
    """
    L_e = -1/2 {P_t + (i eta - 2H) P_nu} + {T + i eta K + 2(K' + i eta S) H} P_nu - (K' + i eta S) P_t
    """
    ieta = 1j * params.eta
    Pn, Pt = projector(grid, "normal"), projector(grid, "tangential")
    Hm = curvature_multiplier(grid, "meanH")
    T = build_hypersingular(params.k, grid, mats)
    A = _scalar(mats.Kp) + ieta * _scalar(mats.S)
    local = -0.5 * (Pt + ieta * Pn - 2.0 * (Hm @ Pn))
    return local + (T + ieta * _scalar(mats.K)) @ Pn + A @ (2.0 * (Hm @ Pn) - Pt)


def build_Lm(params: FormulationParams, grid, mats: KernelSet):
    """
    L_m = -1/2 {P_nu + (i eta - R) P_t} + {T + i eta K + (K' + i eta S) R} P_t - (K' + i eta S) P_nu
    """
    ieta = 1j * params.eta
    Pn, Pt = projector(grid, "normal"), projector(grid, "tangential")
    Rm = curvature_multiplier(grid, "shapeR")
    T = build_hypersingular(params.k, grid, mats)
    A = _scalar(mats.Kp) + ieta * _scalar(mats.S)
    local = -0.5 * (Pn + ieta * Pt - Rm @ Pt)
    return local + (T + ieta * _scalar(mats.K)) @ Pt + A @ (Rm @ Pt - Pn)


def build_Rnu(grid, S0):
    """R_nu phi = -2 P_t phi - 4 nu S0(nu . phi)."""
    return -2.0 * projector(grid, "tangential") - 4.0 * NormalSandwichOperator(grid.normals, S0, grid.fingerprint)


def build_Rt(grid, S0):
    """R_t psi = -2 (P_nu + 2 P_t S0 P_t) psi."""
    Pn, Pt = projector(grid, "normal"), projector(grid, "tangential")
    return -2.0 * (Pn + 2.0 * (Pt @ _scalar(S0) @ Pt))


def component_normals(grid):
    """nu_j: the normal field masked to component j, shape (J, 3, N)."""
    out = np.zeros((grid.n_components, 3, grid.size))
    for j in range(1, grid.n_components + 1):
        idx = grid.component_nodes(j)
        out[j - 1][:, idx] = grid.normals[idx].T
    return out


def charge_functionals(grid):
    """
    Weights of l_j(phi) = sum over the nodes of Gamma_j of w nu . phi, shape (J, 3, N).

    l_j(nu_j) = |Gamma_j|.
    """
    return component_normals(grid) * grid.weights[None, None, :]


def charge_stabilize(Le, grid, xi, right=None):
    """
    (L_e + xi sum_j phi_j l_j) composed with the right regularizer, if any,
    where phi_j = L_e nu_j. xi = 0 leaves L_e untouched.
    """
    if xi == 0:
        return Le if right is None else Le @ right
    areas = grid.component_areas()
    gap = np.abs(1.0 + xi * areas)
    if np.any(gap <= 1e-12 * (1.0 + np.abs(xi) * areas)):
        raise InvalidParameterError(f"xi = {xi} is the forbidden value -1/|Gamma_j| for some component")
    normals = component_normals(grid)
    columns = np.stack([Le.apply(nu_j) for nu_j in normals])
    rank = RankOperator(xi * columns, charge_functionals(grid), grid.fingerprint)
    io_manager.write_debug(f"Charge stabilization with xi={xi} over {grid.n_components} component(s)")
    stabilized = Le + rank
    return stabilized if right is None else stabilized @ right


def system_operator(params: FormulationParams, grid, mats: KernelSet):
    """
    The operator GMRES sees and the right regularizer that maps its solution to the
    physical density (None for the unregularized formulations).
    """
    f = params.formulation
    if f.family == "electric":
        params.check_xi(grid.component_areas())
        Le = build_Le(params, grid, mats)
        right = build_Rnu(grid, mats.S0) if f.regularized else None
        return charge_stabilize(Le, grid, params.xi, right), right
    Lm = build_Lm(params, grid, mats)
    if f.regularized:
        Rt = build_Rt(grid, mats.S0)
        return Lm @ Rt, Rt
    return Lm, None
