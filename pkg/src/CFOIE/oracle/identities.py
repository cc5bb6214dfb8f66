"""
Quadrature identity checks: row sums of the Laplace operators, Green's
representation of a point source and the exterior Calderon trace relation.
"""
from dataclasses import asdict, dataclass
import numpy as np
from CFOIE.core.errors import InvalidParameterError
from CFOIE.core.operators.formulations import build_hypersingular
from CFOIE.core.post.fields import TargetSet
from CFOIE.core.quadrature.kernels import KernelId, KernelKind, radial_derivatives
from CFOIE.core.quadrature.nystrom import assemble_many
from CFOIE.core.quadrature.potentials import layer_potential
from util.io import IOManager

io_manager = IOManager("[Identities]")

PROBE_COUNT = 20
PROBE_RADIUS = 5.0


@dataclass
class IdentityReport:
    exterior: float
    interior: float
    calderon: float = float("nan")

    def to_dict(self):
        return asdict(self)


def point_source_traces(k, grid, x0):
    """Traces of u = G(., x0): gamma u (N,) and dn u (N,)."""
    R = grid.points - np.asarray(x0, dtype=float)
    r = np.linalg.norm(R, axis=-1)
    g = radial_derivatives(k, r, order=1)
    return g[0], g[1] * np.einsum("ni,ni->n", R, grid.normals) / r


def row_sum_checks(grid, cfg=None, workers=1):
    """
    max |K0 1 + 1/2| on any closed surface, and max |S0 1 - a| on a single sphere of
    radius a (NaN elsewhere).
    """
    K0, S0 = assemble_many([KernelId(KernelKind.DOUBLE_LAYER, 0.0), KernelId(KernelKind.SINGLE_LAYER, 0.0)],
                           grid, cfg, workers)
    ones = np.ones(grid.size)
    out = {"k0_rowsum": float(np.abs(K0.apply(ones) + 0.5).max()), "s0_rowsum": float("nan")}
    spec = grid.surface.spec
    if spec.kind == "sphere":
        out["s0_rowsum"] = float(np.abs(S0.apply(ones) - spec.radius).max())
    io_manager.write_debug(f"Row sums on N={grid.size}: {out}")
    return out


def greens_identity_check(grid, x0, k, mats=None, probes=None, interior=None):
    """
    Residuals of Green's representation for u = G(., x0), x0 inside:
    exterior: max |D[gamma u] - S[dn u] - u| / |u| over probes outside;
    interior: max |D[gamma u] - S[dn u]| / max |gamma u| at interior points;
    calderon: |T gamma u - (1/2 + K') dn u| / |(1/2 + K') dn u| (max norms), when a
    kernel set at wavenumber k is supplied.
    """
    x0 = np.asarray(x0, dtype=float)
    gamma, dn = point_source_traces(k, grid, x0)
    probes = TargetSet.fibonacci(PROBE_COUNT, PROBE_RADIUS).points if probes is None else np.atleast_2d(probes)
    interior = np.asarray(grid.surface.spec.interior_points()) if interior is None else np.atleast_2d(interior)

    rep = layer_potential("double", k, grid, gamma, probes) - layer_potential("single", k, grid, dn, probes)
    u = radial_derivatives(k, np.linalg.norm(probes - x0, axis=-1), order=0)[0]
    exterior = float((np.abs(rep - u) / np.abs(u)).max())

    inside = (layer_potential("double", k, grid, gamma, interior, check=False)
              - layer_potential("single", k, grid, dn, interior, check=False))
    interior_res = float(np.abs(inside).max() / np.abs(gamma).max())

    report = IdentityReport(exterior, interior_res)
    if mats is not None:
        if abs(mats.k - k) > 1e-14 * max(1.0, k):
            raise InvalidParameterError(f"Kernel set is at k={mats.k}, identity check asks for k={k}")
        T = build_hypersingular(k, grid, mats)
        field = np.zeros((3, grid.size), dtype=complex)
        field[0] = gamma
        lhs = T.apply(field)[0]
        rhs = 0.5 * dn + mats.Kp.apply(dn)
        report.calderon = float(np.abs(lhs - rhs).max() / np.abs(rhs).max())
    io_manager.write_debug(f"Green's identity at k={k:g}: {report.to_dict()}")
    return report
