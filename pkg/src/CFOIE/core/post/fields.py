"""
Field reconstruction at exterior targets: representation formula, divergence and its
correction, surface charges, surface currents and the Stratton-Chu fields.
"""
from dataclasses import dataclass
import numpy as np
from CFOIE.core.errors import GeometryError, InvalidParameterError, NearSurfaceError
from CFOIE.core.quadrature.potentials import EXTERIOR, classify_points, layer_potential_derivatives
from util.io import IOManager

io_manager = IOManager("[Postprocess]")

TARGET_COUNT = 100
TARGET_RADIUS = 5.0
CORRECTION_GUARD = 1e-8
GOLDEN_ANGLE = np.pi * (3.0 - np.sqrt(5.0))

LEVI_CIVITA = np.zeros((3, 3, 3))
LEVI_CIVITA[0, 1, 2] = LEVI_CIVITA[1, 2, 0] = LEVI_CIVITA[2, 0, 1] = 1.0
LEVI_CIVITA[0, 2, 1] = LEVI_CIVITA[2, 1, 0] = LEVI_CIVITA[1, 0, 2] = -1.0


@dataclass(eq=False)
class TargetSet:
    points: np.ndarray

    @classmethod
    def fibonacci(cls, count=TARGET_COUNT, radius=TARGET_RADIUS, center=(0.0, 0.0, 0.0)):
        """Approximately uniform points on a sphere (Fibonacci lattice)."""
        if count < 1 or not radius > 0:
            raise InvalidParameterError("Target sphere needs count >= 1 and a positive radius")
        i = np.arange(count)
        z = 1.0 - (2.0 * i + 1.0) / count
        rho = np.sqrt(1.0 - z * z)
        phi = GOLDEN_ANGLE * i
        unit = np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=-1)
        return cls(np.asarray(center, dtype=float) + radius * unit)

    @property
    def size(self):
        return self.points.shape[0]

    def validate(self, grid, eta_near=2.5):
        """All targets must be exterior and clear of the near field."""
        labels = classify_points(grid, self.points, eta_near)
        bad = labels != EXTERIOR
        if np.any(bad):
            first = int(np.flatnonzero(bad)[0])
            raise NearSurfaceError(
                f"{int(bad.sum())} target(s) are not exterior; first {self.points[first]} is {labels[first]}"
            )
        return self


def evaluate_representation(k, grid, gamma, dn, targets, order=0, eta_near=2.5):
    """
    D[gamma] - S[dn] for (3, N) traces, with target derivatives up to `order`.

    Returns the dict of layer_potential_derivatives: "value" (3, T), "grad" (3, T, 3),
    "hess" (3, T, 3, 3).
    """
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    dbl = layer_potential_derivatives("double", k, grid, gamma, targets, order, eta_near)
    sgl = layer_potential_derivatives("single", k, grid, dn, targets, order, eta_near, check=False)
    return {key: dbl[key] - sgl[key] for key in dbl}


def scattered_field(formulation, traces, k, grid, targets, data=None, eta_near=2.5):
    """
    E^s = D[gamma E] - S[dn E] (electric) or H^s = D[gamma H] - S[dn H] (magnetic) at
    exterior targets, (3, T). With singular incidence the data pair (a, b) is
    subtracted from the traces first.
    """
    gamma, dn = traces
    if data is not None:
        gamma, dn = gamma - data[0], dn - data[1]
    return evaluate_representation(k, grid, gamma, dn, targets, 0, eta_near)["value"]


def divergence_at(traces, k, grid, targets, data=None, eta_near=2.5, with_grad=False):
    """
    div of the representation-formula field at targets, (T,). With `with_grad` also
    returns grad div, (3, T), and the field itself.
    """
    gamma, dn = traces
    if data is not None:
        gamma, dn = gamma - data[0], dn - data[1]
    rep = evaluate_representation(k, grid, gamma, dn, targets, 2 if with_grad else 1, eta_near)
    div = np.einsum("ctc->t", rep["grad"])
    if not with_grad:
        return div
    grad_div = np.einsum("ctlc->lt", rep["hess"])
    return div, grad_div, rep["value"]


def divergence_correction(field, div, grad_div, k, scale=1.0):
    """F + grad(div F) / k^2; skipped with a warning when k^2 <= 1e-8 * scale."""
    if k * k <= CORRECTION_GUARD * scale:
        io_manager.write_warning(f"k = {k:.3e} too small for the divergence correction; field left unchanged")
        return field
    return field + grad_div / (k * k)


def charges(gamma_E, grid, incident_gamma=None):
    """q_j = sum over Gamma_j of w nu . gamma E^s, with gamma E^s = gamma E - incident part."""
    scattered = gamma_E if incident_gamma is None else gamma_E - incident_gamma
    flux = grid.weights * np.einsum("in,ni->n", scattered, grid.normals)
    return np.array([flux[grid.components == j].sum() for j in range(1, grid.n_components + 1)])


@dataclass(eq=False)
class StrattonChuFields:
    J: np.ndarray
    E: np.ndarray
    H: np.ndarray
    div_E: np.ndarray
    div_H: np.ndarray


def surface_current(psi, grid):
    """J = nu x P_t psi, (3, N)."""
    psi = np.asarray(psi).reshape(3, grid.size)
    nu = grid.normals.T
    tangential = psi - nu * np.einsum("in,in->n", nu, psi)
    return np.cross(nu, tangential, axis=0)


def currents_and_strattonchu(psi, grid, targets, k, eta_near=2.5):
    """
    Surface current and the Stratton-Chu fields
        H^s = curl S[J],  E^s = (i/k)(k^2 S[J] + grad div S[J])
    with their divergences from analytic kernel derivatives.
    """
    if not k > 0:
        raise InvalidParameterError("Stratton-Chu fields need k > 0")
    J = surface_current(psi, grid)
    if np.abs(np.einsum("in,ni->n", J, grid.normals)).max(initial=0.0) > 1e-12 * max(1.0, np.abs(J).max(initial=0.0)):
        raise GeometryError("Surface current is not tangential")
    A = layer_potential_derivatives("single", k, grid, J, targets, 2, eta_near)
    grad = A["grad"]                                            # [c, t, m] = d_m A_c
    H = np.einsum("ijk,ktj->it", LEVI_CIVITA, grad)
    div_A = np.einsum("ctc->t", grad)
    grad_div_A = np.einsum("ctlc->lt", A["hess"])
    E = 1j / k * (k * k * A["value"] + grad_div_A)
    div_E = 1j / k * (k * k * div_A + np.einsum("ctc->t", A["lapgrad"]))
    div_H = np.einsum("ijk,ktij->t", LEVI_CIVITA, A["hess"])
    return StrattonChuFields(J, E, H, div_E, div_H)
