"""
Incident fields and their traces on the grid: plane waves (regular inside the
scatterer) and point dipoles placed inside a component (manufactured solutions).

Time-harmonic Maxwell with eps = mu = 1: curl E = ik H, curl H = -ik E.
"""
from dataclasses import dataclass, field
import numpy as np
from CFOIE.core.errors import InvalidParameterError
from CFOIE.core.operators.formulations import (
    Formulation, FormulationParams, combined_trace_operator, curvature_multiplier, projector,
)
from CFOIE.core.quadrature.kernels import radial_derivatives
from CFOIE.core.quadrature.potentials import INTERIOR, classify_points
from util.io import IOManager

io_manager = IOManager("[Incident]")

DIPOLE_KINDS = ("electric", "magnetic")
DIPOLE_GUARD = 0.1          # min distance to the surface, in component diameters
FD_STEP = 1e-4              # finite-difference step, in surface diameters


@dataclass(frozen=True)
class PlaneWave:
    polarization: tuple = (1.0, 0.0, 0.0)
    direction: tuple = (0.0, 0.0, 1.0)
    k: float = np.pi

    def __post_init__(self):
        p = np.asarray(self.polarization, dtype=float)
        d = np.asarray(self.direction, dtype=float)
        if p.shape != (3,) or d.shape != (3,):
            raise InvalidParameterError("Plane-wave polarization and direction need three components")
        if not self.k > 0:
            raise InvalidParameterError(f"Plane-wave wavenumber must be positive, got {self.k}")
        if not np.linalg.norm(p) > 0:
            raise InvalidParameterError("Plane-wave polarization must be nonzero")
        if abs(np.linalg.norm(d) - 1.0) > 1e-12:
            raise InvalidParameterError(f"Plane-wave direction must be a unit vector, |d| = {np.linalg.norm(d)}")
        if abs(p @ d) > 1e-12:
            raise InvalidParameterError(f"Polarization is not transverse: p . d = {p @ d:.3e}")

    @property
    def p(self):
        return np.asarray(self.polarization, dtype=float)

    @property
    def d(self):
        return np.asarray(self.direction, dtype=float)


@dataclass(frozen=True)
class DipoleSource:
    location: tuple
    moment: tuple = (0.0, 0.0, 1.0)
    kind: str = "electric"
    k: float = np.pi

    def __post_init__(self):
        if np.shape(self.location) != (3,) or np.shape(self.moment) != (3,):
            raise InvalidParameterError("Dipole location and moment need three components")
        if self.kind not in DIPOLE_KINDS:
            raise InvalidParameterError(f"Unknown dipole type {self.kind!r}")
        if not self.k > 0:
            raise InvalidParameterError(f"Dipole wavenumber must be positive, got {self.k}")
        if not np.linalg.norm(np.asarray(self.moment, dtype=complex)) > 0:
            raise InvalidParameterError("Dipole moment must be nonzero")

    @property
    def x0(self):
        return np.asarray(self.location, dtype=float)

    @property
    def m(self):
        return np.asarray(self.moment, dtype=complex)


@dataclass(eq=False)
class IncidentTraces:
    """Dirichlet and Neumann traces of E and H as (3, N) fields."""
    gamma_E: np.ndarray
    dn_E: np.ndarray
    gamma_H: np.ndarray
    dn_H: np.ndarray
    regular_inside: bool = True
    source: object = None
    meta: dict = field(default_factory=dict)

    def family(self, name):
        """(gamma F, dn F) for 'electric' (F = E) or 'magnetic' (F = H)."""
        if name == "electric":
            return self.gamma_E, self.dn_E
        if name == "magnetic":
            return self.gamma_H, self.dn_H
        raise InvalidParameterError(f"Unknown field family {name!r}")

    def scaled(self, factor):
        return IncidentTraces(factor * self.gamma_E, factor * self.dn_E, factor * self.gamma_H,
                              factor * self.dn_H, self.regular_inside, self.source, dict(self.meta))


def planewave_field_at(pw: PlaneWave, points):
    """E = p e^{ik x.d}, H = (d x p) e^{ik x.d}, each (3, T)."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    phase = np.exp(1j * pw.k * points @ pw.d)
    return pw.p[:, None] * phase, np.cross(pw.d, pw.p)[:, None] * phase


def planewave_traces(pw: PlaneWave, grid) -> IncidentTraces:
    E, H = planewave_field_at(pw, grid.points)
    factor = 1j * pw.k * (grid.normals @ pw.d)
    return IncidentTraces(E, factor * E, H, factor * H, regular_inside=True, source=pw)


def _dipole_tensors(k, points, x0, order):
    """G, grad G, Hessian and third-derivative tensor of G(. - x0) at points (T, 3)."""
    R = points - x0
    r = np.linalg.norm(R, axis=-1)
    g = radial_derivatives(k, r, order=3)
    B = g[1] / r
    A = g[2] - g[1] / r
    a = A / r ** 2
    out = {"G": g[0], "grad": B[:, None] * R}
    eye = np.eye(3)
    out["hess"] = a[:, None, None] * R[:, :, None] * R[:, None, :] + B[:, None, None] * eye
    if order >= 3:
        dA = g[3] - g[2] / r + g[1] / r ** 2
        c3 = (dA - 2.0 * A / r) / r ** 3
        sym = (eye[None, :, :, None] * R[:, None, None, :]
               + eye[None, :, None, :] * R[:, None, :, None]
               + eye[None, None, :, :] * R[:, :, None, None])
        out["d3"] = (c3[:, None, None, None] * R[:, :, None, None] * R[:, None, :, None] * R[:, None, None, :]
                     + a[:, None, None, None] * sym)
    return out


def dipole_field_at(src: DipoleSource, points):
    """
    Dipole fields (E, H), each (3, T).

    electric: H = grad G x m,  E = (i/k)(k^2 G m + Hess G m)
    magnetic: E = grad G x m,  H = -(i/k)(k^2 G m + Hess G m)
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    k, m = src.k, src.m
    t = _dipole_tensors(k, points, src.x0, 2)
    curl_part = np.cross(t["grad"], m).T
    grad_div = (k * k * t["G"][:, None] * m + t["hess"] @ m).T
    if src.kind == "electric":
        return 1j / k * grad_div, curl_part
    return curl_part, -1j / k * grad_div


def _dipole_normal_derivatives(src: DipoleSource, points, normals):
    k, m = src.k, src.m
    t = _dipole_tensors(k, points, src.x0, 3)
    dn_curl = np.cross(np.einsum("tij,tj->ti", t["hess"], normals), m).T
    dn_grad_div = (k * k * (np.einsum("ti,ti->t", t["grad"], normals))[:, None] * m
                   + np.einsum("tl,tlij,j->ti", normals, t["d3"], m)).T
    if src.kind == "electric":
        return 1j / k * dn_grad_div, dn_curl
    return dn_curl, -1j / k * dn_grad_div


def _fd_normal_derivatives(src: DipoleSource, points, normals, step):
    """Fourth-order centered differences of the dipole fields along the normals."""
    coeffs = {-2: 1.0, -1: -8.0, 1: 8.0, 2: -1.0}
    dE = 0.0
    dH = 0.0
    for shift, c in coeffs.items():
        E, H = dipole_field_at(src, points + shift * step * normals)
        dE = dE + c * E
        dH = dH + c * H
    return dE / (12.0 * step), dH / (12.0 * step)


def check_dipole_location(src: DipoleSource, grid):
    """The dipole must sit inside a component, at least DIPOLE_GUARD component diameters from it."""
    labels = classify_points(grid, src.x0[None, :])
    if labels[0] != INTERIOR:
        raise InvalidParameterError(f"Dipole location {src.x0} is not inside the scatterer ({labels[0]})")
    dist = np.linalg.norm(grid.points - src.x0, axis=-1)
    nearest = int(np.argmin(dist))
    spec, _ = grid.surface.spec.components()[grid.components[nearest] - 1]
    limit = DIPOLE_GUARD * spec.component_diameter()
    if dist[nearest] < limit:
        raise InvalidParameterError(f"Dipole location {src.x0} is {dist[nearest]:.3e} from the surface (< {limit:.3e})")


def dipole_traces(src: DipoleSource, grid, method="analytic", check=True) -> IncidentTraces:
    """
    Dipole traces on the grid. Normal derivatives come from the analytic third
    derivatives of G ('analytic') or from centered differences ('fd').
    """
    if check:
        check_dipole_location(src, grid)
    E, H = dipole_field_at(src, grid.points)
    if method == "analytic":
        dE, dH = _dipole_normal_derivatives(src, grid.points, grid.normals)
    elif method == "fd":
        dE, dH = _fd_normal_derivatives(src, grid.points, grid.normals, FD_STEP * grid.diameter)
    else:
        raise InvalidParameterError(f"Unknown derivative method {method!r}")
    return IncidentTraces(E, dE, H, dH, regular_inside=False, source=src, meta={"method": method})


def cauchy_data(family, traces: IncidentTraces, grid):
    """
    The trace pair (a, b) that feeds the right-hand side.

    Regular incidence: the incident traces themselves. Otherwise the part of the
    source traces that a PEC total field must cancel:
        electric: a = P_t gamma D,  b = P_nu (dn D + 2 H gamma D)
        magnetic: a = P_nu gamma D, b = P_t dn D + R gamma D
    """
    gamma, dn = traces.family(family)
    if traces.regular_inside:
        return gamma, dn
    Pn, Pt = projector(grid, "normal"), projector(grid, "tangential")
    if family == "electric":
        Hm = curvature_multiplier(grid, "meanH")
        return Pt.apply(gamma), Pn.apply(dn + 2.0 * Hm.apply(gamma))
    Rm = curvature_multiplier(grid, "shapeR")
    return Pn.apply(gamma), Pt.apply(dn) + Rm.apply(gamma)


def rhs(formulation, traces: IncidentTraces, eta, grid=None, mats=None):
    """
    Right-hand side of the formulation.

    Regular incidence: f = -dn E - i eta gamma E (electric) or g = -dn H - i eta gamma H
    (magnetic). Singular incidence needs the grid and kernel set: C(a, b) with the
    pair from cauchy_data.
    """
    formulation = Formulation(formulation)
    if eta == 0:
        raise InvalidParameterError("Coupling parameter eta must be nonzero")
    family = formulation.family
    if traces.regular_inside:
        gamma, dn = traces.family(family)
        return -dn - 1j * eta * gamma
    if grid is None or mats is None:
        raise InvalidParameterError("Singular incident data need the grid and kernel set to form the right-hand side")
    a, b = cauchy_data(family, traces, grid)
    combined = combined_trace_operator(FormulationParams(formulation, mats.k, eta), grid, mats)
    return combined.apply(a, b)


def exact_density(family, traces: IncidentTraces, grid):
    """
    Density of the manufactured problem with scattered field -D:
    phi = -(P_t dn D + P_nu gamma D), psi = -(P_t gamma D + P_nu dn D).
    """
    gamma, dn = traces.family(family)
    Pn, Pt = projector(grid, "normal"), projector(grid, "tangential")
    if family == "electric":
        return -(Pt.apply(dn) + Pn.apply(gamma))
    return -(Pt.apply(gamma) + Pn.apply(dn))
