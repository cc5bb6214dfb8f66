"""
Restart-free complex GMRES (modified Gram-Schmidt Arnoldi, Givens rotations) and a
dense direct solve with the same report format.

After C. T. Kelley, "Iterative Methods for Linear and Nonlinear Equations", Alg. 3.5.1.
"""
from dataclasses import asdict, dataclass, field
import time
import numpy as np
import scipy.linalg
from CFOIE.core.errors import ConvergenceError, InvalidParameterError
from util.io import IOManager

io_manager = IOManager("[GMRES]")

HAPPY_BREAKDOWN = 1e-14


@dataclass
class SolveReport:
    method: str = "gmres"
    iterations: int = 0
    residuals: list = field(default_factory=list)
    final_residual: float = float("nan")
    converged: bool = False
    wall_time: float = 0.0

    def to_dict(self):
        return asdict(self)


def _as_matvec(op):
    if hasattr(op, "matvec"):
        return op.matvec
    if callable(op):
        return op
    matrix = np.asarray(op)
    return lambda x: matrix @ x


def gmres(op, b, tol=1e-6, maxiter=500, x0=None):
    """
    Solve op x = b to relative residual tol.

    Inputs:
    - op: BoundaryOperator, callable or square matrix acting on flat vectors
    - b: right-hand side (flat)
    Outputs:
    - (x, SolveReport); raises ConvergenceError (with the last iterate) when maxiter
      is exhausted first.
    """
    if not 0 < tol < 1:
        raise InvalidParameterError(f"GMRES tolerance must lie in (0, 1), got {tol}")
    if maxiter < 1:
        raise InvalidParameterError(f"GMRES maxiter must be at least 1, got {maxiter}")

    start = time.perf_counter()
    matvec = _as_matvec(op)
    b = np.asarray(b, dtype=complex).ravel()
    n = b.size
    x0 = np.zeros(n, dtype=complex) if x0 is None else np.asarray(x0, dtype=complex).ravel()
    report = SolveReport()

    b_norm = np.linalg.norm(b)
    if b_norm == 0:
        report.final_residual = 0.0
        report.converged = True
        report.wall_time = time.perf_counter() - start
        return np.zeros(n, dtype=complex), report

    r = b - matvec(x0)
    beta = np.linalg.norm(r)
    report.residuals.append(float(beta / b_norm))
    if beta / b_norm <= tol:
        report.final_residual = report.residuals[0]
        report.converged = True
        report.wall_time = time.perf_counter() - start
        return x0, report

    m = min(maxiter, n)
    Q = np.zeros((n, m + 1), dtype=complex)
    H = np.zeros((m + 1, m), dtype=complex)
    cs = np.zeros(m, dtype=complex)
    sn = np.zeros(m, dtype=complex)
    g = np.zeros(m + 1, dtype=complex)
    g[0] = beta
    Q[:, 0] = r / beta

    x = x0
    for j in range(m):
        # Arnoldi step with modified Gram-Schmidt
        v = matvec(Q[:, j])
        for i in range(j + 1):
            H[i, j] = np.vdot(Q[:, i], v)
            v = v - H[i, j] * Q[:, i]
        h_next = np.linalg.norm(v)
        H[j + 1, j] = h_next
        breakdown = h_next <= HAPPY_BREAKDOWN * b_norm
        if not breakdown:
            Q[:, j + 1] = v / h_next

        # previous rotations
        for i in range(j):
            upper = np.conj(cs[i]) * H[i, j] + np.conj(sn[i]) * H[i + 1, j]
            H[i + 1, j] = -sn[i] * H[i, j] + cs[i] * H[i + 1, j]
            H[i, j] = upper

        nu = np.hypot(abs(H[j, j]), abs(H[j + 1, j]))
        cs[j] = H[j, j] / nu
        sn[j] = H[j + 1, j] / nu
        H[j, j] = nu
        H[j + 1, j] = 0.0
        g[j + 1] = -sn[j] * g[j]
        g[j] = np.conj(cs[j]) * g[j]

        estimate = abs(g[j + 1]) / b_norm
        report.residuals.append(float(estimate))
        report.iterations = j + 1

        if estimate <= tol or breakdown or j == m - 1:
            y = scipy.linalg.solve_triangular(H[:j + 1, :j + 1], g[:j + 1])
            x = x0 + Q[:, :j + 1] @ y
            true_res = np.linalg.norm(b - matvec(x)) / b_norm
            report.final_residual = float(true_res)
            if true_res <= tol:
                report.converged = True
                break
            if breakdown:
                break

    report.wall_time = time.perf_counter() - start
    if not report.converged:
        io_manager.write_warning(
            f"GMRES stopped after {report.iterations} iterations at relative residual {report.final_residual:.3e} (tol {tol:.1e})"
        )
        raise ConvergenceError(
            f"GMRES did not reach tol {tol:.1e} in {report.iterations} iterations "
            f"(last residual {report.final_residual:.3e})", x=x, report=report,
        )
    io_manager.write_debug(
        f"GMRES converged in {report.iterations} iterations, residual {report.final_residual:.3e}, {report.wall_time:.2f} s"
    )
    return x, report


def direct_solve(op, b):
    """Dense LU solve of op x = b; op is materialized when it is not already a matrix."""
    start = time.perf_counter()
    matrix = op.to_dense() if hasattr(op, "to_dense") else np.asarray(op)
    b = np.asarray(b, dtype=complex).ravel()
    x = scipy.linalg.solve(matrix, b)
    b_norm = np.linalg.norm(b)
    res = np.linalg.norm(b - matrix @ x) / b_norm if b_norm > 0 else 0.0
    report = SolveReport(method="direct", iterations=0, residuals=[float(res)], final_residual=float(res),
                         converged=True, wall_time=time.perf_counter() - start)
    io_manager.write_debug(f"Direct solve of size {b.size}: residual {res:.3e}, {report.wall_time:.2f} s")
    return x, report
