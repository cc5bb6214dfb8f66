"""
One scattering problem at one wavenumber on one grid: incident traces, kernel set,
reference fields, solves and their error measures.
"""
from pathlib import Path
import threading
import numpy as np
import xarray as xr
from CFOIE.core.errors import ConvergenceError
from CFOIE.core.experiment.config import MIE_MIN_KA, RunConfig
from CFOIE.core.geometry.surfaces import discretize, make_surface
from CFOIE.core.incident.sources import (
    PlaneWave, dipole_field_at, dipole_traces, planewave_field_at, planewave_traces,
)
from CFOIE.core.operators.formulations import Formulation, FormulationParams, build_kernel_set
from CFOIE.core.post.fields import (
    LEVI_CIVITA, TargetSet, charges, currents_and_strattonchu, divergence_at,
    divergence_correction, evaluate_representation,
)
from CFOIE.core.post.metrics import ErrorReport, error_measures, relative_field_error
from CFOIE.core.quadrature.nystrom import dump_matrix
from CFOIE.core.quadrature.potentials import EXTERIOR, classify_points
from CFOIE.core.solve.solver import solve_formulation
from CFOIE.oracle.manufactured import dipole_reference
from CFOIE.oracle.mie import MieConfig, mie_scattered
from util.io import IOManager

io_manager = IOManager("[Experiment]")


def build_grid(cfg: RunConfig, refinement, order):
    return discretize(make_surface(cfg.surface.spec(), refinement), order)


class ScatteringProblem:
    def __init__(self, cfg: RunConfig, grid, k, workers=1):
        self.cfg = cfg
        self.grid = grid
        self.k = float(k)
        self.workers = workers
        self.source = cfg.incident.build(self.k, grid.surface.spec)
        self._mats = None
        self._incident = None
        self._targets = None
        self._lock = threading.Lock()

    @classmethod
    def build(cls, cfg: RunConfig, refinement, order, k, workers=1):
        return cls(cfg, build_grid(cfg, refinement, order), k, workers)

    def with_config(self, cfg: RunConfig):
        """Same grid and kernel set, different incident field or solver settings."""
        other = ScatteringProblem(cfg, self.grid, self.k, self.workers)
        other._mats = self.mats
        return other

    @property
    def eta_near(self):
        return self.cfg.quadrature.eta_near

    @property
    def mats(self):
        with self._lock:
            if self._mats is None:
                with io_manager.timed(f"Kernel set at k={self.k:.6g}, N={self.grid.size}"):
                    self._mats = build_kernel_set(self.grid, self.k, self.cfg.quadrature, self.workers)
            return self._mats

    @property
    def incident(self):
        if self._incident is None:
            if isinstance(self.source, PlaneWave):
                self._incident = planewave_traces(self.source, self.grid)
            else:
                self._incident = dipole_traces(self.source, self.grid)
        return self._incident

    @property
    def targets(self):
        if self._targets is None:
            t = self.cfg.targets
            self._targets = TargetSet.fibonacci(t.count, t.radius).validate(self.grid, self.eta_near)
        return self._targets

    def params(self, formulation, xi=0.0):
        params = FormulationParams(Formulation(formulation), self.k, self.cfg.eta, xi)
        params.check_xi(self.grid.component_areas())
        return params

    def solve(self, formulation, xi=0.0):
        return solve_formulation(formulation, self.grid, self.mats, self.incident, self.params(formulation, xi),
                                 self.cfg.solver)

    def _mie_config(self):
        spec = self.grid.surface.spec
        if spec.kind != "sphere" or not isinstance(self.source, PlaneWave):
            return None
        if self.k * spec.radius < MIE_MIN_KA:
            io_manager.write_debug(f"k*a = {self.k * spec.radius:.3e} below {MIE_MIN_KA:g}: no Mie reference")
            return None
        return MieConfig(spec.radius, self.source)

    def reference(self, points=None):
        """Exact scattered (E, H) at points (default: the target set), or None if unknown."""
        points = self.targets.points if points is None else points
        if not isinstance(self.source, PlaneWave):
            return dipole_reference(self.source, points)
        mie = self._mie_config()
        return mie_scattered(mie, points) if mie is not None else None

    def incident_field(self, points):
        if isinstance(self.source, PlaneWave):
            return planewave_field_at(self.source, points)
        return dipole_field_at(self.source, points)

    def _representation_data(self, solution):
        return None if solution.regular else solution.data

    def evaluate(self, solution) -> ErrorReport:
        """Error measures of a solution at the target set."""
        traces = (solution.gamma, solution.dn)
        div, grad_div, field = divergence_at(
            traces, self.k, self.grid, self.targets.points, self._representation_data(solution),
            self.eta_near, with_grad=True,
        )
        exact = self.reference()
        reference = None if exact is None else exact[0 if solution.family == "electric" else 1]
        corrected = divergence_correction(field, div, grad_div, self.k) if reference is not None else None
        q = charges(solution.gamma, self.grid, solution.data[0]) if solution.family == "electric" else None
        return error_measures(field, div, self.grid, solution.report.iterations, reference, q, corrected)

    def scattered_fields(self, solution, points):
        """
        Scattered (E, H) at exterior points from one solution. The partner field comes
        from the curl of the represented one: H = -(i/k) curl E, E = (i/k) curl H.
        """
        gamma, dn = (solution.gamma, solution.dn) if solution.regular else solution.scattered_traces()
        rep = evaluate_representation(self.k, self.grid, gamma, dn, points, order=1, eta_near=self.eta_near)
        curl = np.einsum("ijk,ktj->it", LEVI_CIVITA, rep["grad"])
        if solution.family == "electric":
            return rep["value"], -1j / self.k * curl
        return 1j / self.k * curl, rep["value"]

    def strattonchu_check(self, solution):
        """
        Agreement between the representation-formula H^s and the Stratton-Chu H^s of the
        surface current, and the relative divergences of the Stratton-Chu fields.
        """
        points = self.targets.points
        sc = currents_and_strattonchu(solution.density, self.grid, points, self.k, self.eta_near)
        _, H = self.scattered_fields(solution, points)
        return {
            "h_agreement": float(relative_field_error(sc.H, H).max()),
            "div_E": float((np.abs(sc.div_E) / np.linalg.norm(sc.E, axis=0)).max()),
            "div_H": float((np.abs(sc.div_H) / np.linalg.norm(sc.H, axis=0)).max()),
        }

    def slice_dataset(self, solution, slice_cfg) -> xr.Dataset:
        """
        Total and scattered E and H on a planar slice through the origin. Points that
        are inside a body or in the near field hold NaN.
        """
        if slice_cfg.axes is not None:
            a1, a2 = (np.asarray(a, dtype=float) / np.linalg.norm(a) for a in slice_cfg.axes)
        elif isinstance(self.source, PlaneWave):
            a1, a2 = self.source.p / np.linalg.norm(self.source.p), self.source.d
        else:
            a1, a2 = np.array([1.0, 0.0, 0.0]), np.array([0.0, 0.0, 1.0])
        s = np.linspace(-slice_cfg.extent, slice_cfg.extent, slice_cfg.resolution)
        ss, tt = np.meshgrid(s, s, indexing="ij")
        points = ss.ravel()[:, None] * a1 + tt.ravel()[:, None] * a2

        outside = classify_points(self.grid, points, self.eta_near) == EXTERIOR
        shape = ss.shape
        fields = {"Es": np.full((3, points.shape[0]), np.nan, dtype=complex)}
        fields["Hs"] = fields["Es"].copy()
        fields["E"] = fields["Es"].copy()
        fields["H"] = fields["Es"].copy()
        if np.any(outside):
            Es, Hs = self.scattered_fields(solution, points[outside])
            Ei, Hi = self.incident_field(points[outside])
            fields["Es"][:, outside], fields["Hs"][:, outside] = Es, Hs
            fields["E"][:, outside], fields["H"][:, outside] = Es + Ei, Hs + Hi
        io_manager.write_debug(f"Slice: {int(outside.sum())} of {points.shape[0]} points exterior")

        data = {axis: (("s", "t"), points[:, c].reshape(shape)) for c, axis in enumerate("xyz")}
        for name, value in fields.items():
            for c, axis in enumerate("xyz"):
                data[f"{name}{axis}_re"] = (("s", "t"), value[c].real.reshape(shape))
                data[f"{name}{axis}_im"] = (("s", "t"), value[c].imag.reshape(shape))
        return xr.Dataset(data, coords={"s": s, "t": s})

    def dump_matrices(self, directory):
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        for matrix in self.mats.matrices():
            name = f"{matrix.kernel.kind.name.lower()}_k{matrix.kernel.k:.6g}_N{self.grid.size}.cfom"
            dump_matrix(matrix, directory / name)


def solve_and_evaluate(problem: ScatteringProblem, formulation, xi=0.0):
    """
    (solution, report, converged). A GMRES failure yields (None, report with the
    iteration count, False) so sweep drivers can record the point and continue.
    """
    try:
        solution = problem.solve(formulation, xi)
    except ConvergenceError as e:
        report = ErrorReport(N=problem.grid.size, h=problem.grid.h, p=problem.grid.order,
                             iterations=e.report.iterations if e.report is not None else 0)
        return None, report, False
    return solution, problem.evaluate(solution), True
