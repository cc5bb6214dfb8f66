"""Assemble-and-solve drivers for the four formulations and trace recovery."""
from dataclasses import dataclass
import numpy as np
from CFOIE.core.errors import ConvergenceError, InvalidParameterError
from CFOIE.core.incident.sources import cauchy_data, rhs
from CFOIE.core.operators.formulations import (
    Formulation, FormulationParams, KernelSet, curvature_multiplier, projector, system_operator,
)
from CFOIE.core.solve.gmres import SolveReport, direct_solve, gmres
from util.io import IOManager

io_manager = IOManager("[Solver]")

SOLVE_METHODS = ("gmres", "direct")


@dataclass(frozen=True)
class SolveConfig:
    method: str = "gmres"
    tol: float = 1e-6
    maxiter: int = 500

    def __post_init__(self):
        if self.method not in SOLVE_METHODS:
            raise InvalidParameterError(f"Unknown solve method {self.method!r}")
        if not 0 < self.tol < 1:
            raise InvalidParameterError(f"Solver tolerance must lie in (0, 1), got {self.tol}")
        if self.maxiter < 1:
            raise InvalidParameterError(f"maxiter must be at least 1, got {self.maxiter}")


@dataclass(eq=False)
class Solution:
    """
    raw: the GMRES unknown (the regularized density for RDE/RDM)
    density: the physical density phi or psi
    gamma, dn: recovered TOTAL traces of E (electric) or H (magnetic)
    data: the trace pair (a, b) that produced the right-hand side; for regular
          incidence it is the incident (gamma F, dn F)
    """
    params: FormulationParams
    raw: np.ndarray
    density: np.ndarray
    gamma: np.ndarray
    dn: np.ndarray
    data: tuple
    regular: bool
    report: SolveReport

    @property
    def formulation(self):
        return self.params.formulation

    @property
    def family(self):
        return self.params.formulation.family

    def scattered_traces(self):
        """Traces fed to the representation formula: total minus the data pair."""
        a, b = self.data
        return self.gamma - a, self.dn - b


def recover_traces(formulation, density, grid):
    """
    Total traces from the density.
    electric: gamma E = P_nu phi, dn E = P_t phi - 2 H P_nu phi
    magnetic: gamma H = P_t psi,  dn H = P_nu psi - R P_t psi
    """
    formulation = Formulation(formulation)
    Pn, Pt = projector(grid, "normal"), projector(grid, "tangential")
    density = np.asarray(density).reshape(3, grid.size)
    if formulation.family == "electric":
        normal = Pn.apply(density)
        return normal, Pt.apply(density) - 2.0 * curvature_multiplier(grid, "meanH").apply(normal)
    tangential = Pt.apply(density)
    return tangential, Pn.apply(density) - curvature_multiplier(grid, "shapeR").apply(tangential)


def solve_formulation(formulation, grid, mats: KernelSet, incident, params: FormulationParams = None,
                      cfg: SolveConfig = None) -> Solution:
    """
    DE:  (L_e + xi sum phi_j l_j) phi = f
    RDE: (L_e + xi sum phi_j l_j) R_nu phi~ = f,  phi = R_nu phi~
    DM:  L_m psi = g
    RDM: L_m R_t psi~ = g,  psi = R_t psi~
    """
    formulation = Formulation(formulation)
    cfg = cfg or SolveConfig()
    params = params or FormulationParams(formulation, mats.k)
    if params.formulation != formulation:
        raise InvalidParameterError(f"Parameters are for {params.formulation.value}, not {formulation.value}")
    if abs(params.k - mats.k) > 1e-14 * max(1.0, mats.k):
        raise InvalidParameterError(f"Kernel set was assembled at k={mats.k}, parameters ask for k={params.k}")

    op, right = system_operator(params, grid, mats)
    f = rhs(formulation, incident, params.eta, grid, mats)
    io_manager.write_debug(
        f"Solving {formulation.value} with N={grid.size}, k={params.k:.6g}, eta={params.eta:.6g}, xi={params.xi}"
    )
    try:
        if cfg.method == "direct":
            x, report = direct_solve(op, f.reshape(-1))
        else:
            x, report = gmres(op, f.reshape(-1), tol=cfg.tol, maxiter=cfg.maxiter)
    except ConvergenceError as e:
        io_manager.write_error(f"{formulation.value} solve failed: {e}")
        raise

    raw = x.reshape(3, grid.size)
    density = right.apply(raw) if right is not None else raw
    gamma, dn = recover_traces(formulation, density, grid)
    data = cauchy_data(formulation.family, incident, grid)
    return Solution(params, raw, density, gamma, dn, data, incident.regular_inside, report)
