"""
Lazy operator algebra on surface fields.

A surface field is a complex array of shape (3, N): one row per Cartesian component
over the grid nodes. Flattened in C order it is the stacked 3N vector
[all x | all y | all z] that the linear solvers see.
"""
import numpy as np
from scipy.linalg import lu_solve
from CFOIE.core.errors import GeometryError


def as_field(x, n):
    """View a flat 3N vector or a (3, N) array as a (3, N) field."""
    x = np.asarray(x)
    if x.shape == (3, n):
        return x
    if x.shape == (3 * n,):
        return x.reshape(3, n)
    raise GeometryError(f"Expected a surface field of shape (3, {n}) or ({3 * n},), got {x.shape}")


class BoundaryOperator:
    """Base class. Subclasses set `n`, `fingerprint` and implement `_apply`."""

    componentwise = False

    def __init__(self, n, fingerprint=""):
        self.n = int(n)
        self.fingerprint = fingerprint

    @property
    def shape(self):
        return (3 * self.n, 3 * self.n)

    def apply(self, x):
        return self._apply(as_field(x, self.n))

    def matvec(self, vec):
        """Action on a flat stacked 3N vector."""
        return self.apply(np.asarray(vec).reshape(3, self.n)).reshape(-1)

    def to_dense(self):
        """Materialize as a (3N, 3N) matrix."""
        if self.componentwise:
            return np.kron(np.eye(3), self.scalar_dense())
        eye = np.eye(3 * self.n, dtype=complex)
        return np.stack([self.matvec(col) for col in eye.T], axis=1)

    def scalar_dense(self):
        raise NotImplementedError(f"{type(self).__name__} does not act componentwise")

    def _check(self, other):
        if self.n != other.n:
            raise GeometryError(f"Operator sizes differ: {self.n} vs {other.n}")
        if self.fingerprint and other.fingerprint and self.fingerprint != other.fingerprint:
            raise GeometryError("Operators were built on different grids")
        return self.fingerprint or other.fingerprint

    def __add__(self, other):
        if not isinstance(other, BoundaryOperator):
            return NotImplemented
        return SumOperator([self, other])

    def __sub__(self, other):
        if not isinstance(other, BoundaryOperator):
            return NotImplemented
        return SumOperator([self, ScaledOperator(-1.0, other)])

    def __neg__(self):
        return ScaledOperator(-1.0, self)

    def __mul__(self, scalar):
        if isinstance(scalar, BoundaryOperator):
            return NotImplemented
        return ScaledOperator(scalar, self)

    __rmul__ = __mul__

    def __matmul__(self, other):
        if isinstance(other, BoundaryOperator):
            return ProductOperator(self, other)
        return self.apply(other)


class MatrixOperator(BoundaryOperator):
    """A dense (3N, 3N) matrix acting on stacked vectors."""

    def __init__(self, matrix, fingerprint=""):
        matrix = np.asarray(matrix)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1] or matrix.shape[0] % 3:
            raise GeometryError(f"MatrixOperator needs a square 3N x 3N matrix, got {matrix.shape}")
        super().__init__(matrix.shape[0] // 3, fingerprint)
        self.matrix = matrix

    def _apply(self, x):
        return (self.matrix @ x.reshape(-1)).reshape(3, self.n)

    def to_dense(self):
        return self.matrix.copy()


class ScalarKernelOperator(BoundaryOperator):
    """An N x N scalar matrix applied to each Cartesian component."""

    componentwise = True

    def __init__(self, matrix, fingerprint=None, label=""):
        data = getattr(matrix, "data", matrix)
        if fingerprint is None:
            fingerprint = getattr(matrix, "fingerprint", "")
        super().__init__(data.shape[0], fingerprint)
        self.matrix = np.asarray(data)
        self.label = label or getattr(getattr(matrix, "kernel", None), "label", "")

    def _apply(self, x):
        return x @ self.matrix.T

    def scalar_dense(self):
        return self.matrix


class FactorizedInverseOperator(BoundaryOperator):
    """Componentwise inverse of a scalar matrix held as an LU factorization."""

    componentwise = True

    def __init__(self, lu_piv, fingerprint=""):
        super().__init__(lu_piv[0].shape[0], fingerprint)
        self.lu_piv = lu_piv

    def _apply(self, x):
        return lu_solve(self.lu_piv, x.T).T

    def scalar_dense(self):
        return lu_solve(self.lu_piv, np.eye(self.n, dtype=complex))


class IdentityOperator(BoundaryOperator):

    componentwise = True

    def _apply(self, x):
        return x

    def scalar_dense(self):
        return np.eye(self.n, dtype=complex)


class PointwiseOperator(BoundaryOperator):
    """Node-local 3x3 blocks: (A phi)(x_n) = blocks[n] @ phi(x_n)."""

    def __init__(self, blocks, fingerprint=""):
        blocks = np.asarray(blocks)
        if blocks.ndim != 3 or blocks.shape[1:] != (3, 3):
            raise GeometryError(f"Pointwise blocks must have shape (N, 3, 3), got {blocks.shape}")
        super().__init__(blocks.shape[0], fingerprint)
        self.blocks = blocks

    def _apply(self, x):
        return np.einsum("nij,jn->in", self.blocks, x)

    def to_dense(self):
        n = self.n
        dense = np.zeros((3 * n, 3 * n), dtype=np.result_type(self.blocks, complex))
        idx = np.arange(n)
        for i in range(3):
            for j in range(3):
                dense[i * n + idx, j * n + idx] = self.blocks[:, i, j]
        return dense


class NormalSandwichOperator(BoundaryOperator):
    """phi -> nu * S(nu . phi) for a scalar matrix S."""

    def __init__(self, normals, matrix, fingerprint=None):
        data = getattr(matrix, "data", matrix)
        if fingerprint is None:
            fingerprint = getattr(matrix, "fingerprint", "")
        super().__init__(data.shape[0], fingerprint)
        self.nu = np.asarray(normals).T            # (3, N)
        self.matrix = np.asarray(data)

    def _apply(self, x):
        return self.nu * (self.matrix @ np.einsum("in,in->n", self.nu, x))[None, :]

    def to_dense(self):
        n = self.n
        dense = np.empty((3 * n, 3 * n), dtype=complex)
        for i in range(3):
            for j in range(3):
                dense[i * n:(i + 1) * n, j * n:(j + 1) * n] = self.nu[i][:, None] * self.matrix * self.nu[j][None, :]
        return dense


class RankOperator(BoundaryOperator):
    """
    Finite-rank term sum_j columns[j] * <functionals[j], phi>.

    The pairing is the plain bilinear sum over components and nodes; any quadrature
    weights belong in `functionals`.
    """

    def __init__(self, columns, functionals, fingerprint=""):
        columns = np.asarray(columns)
        functionals = np.asarray(functionals)
        if columns.shape != functionals.shape or columns.ndim != 3 or columns.shape[1] != 3:
            raise GeometryError("RankOperator needs matching (J, 3, N) columns and functionals")
        super().__init__(columns.shape[2], fingerprint)
        self.columns = columns
        self.functionals = functionals

    def pair(self, x):
        return np.einsum("jin,in->j", self.functionals, x)

    def _apply(self, x):
        return np.einsum("jin,j->in", self.columns, self.pair(x))

    def to_dense(self):
        j = self.columns.shape[0]
        return self.columns.reshape(j, -1).T @ self.functionals.reshape(j, -1)


class SumOperator(BoundaryOperator):

    def __init__(self, terms):
        terms = list(terms)
        fingerprint = terms[0].fingerprint
        for term in terms[1:]:
            fingerprint = terms[0]._check(term) or fingerprint
        super().__init__(terms[0].n, fingerprint)
        self.terms = terms
        self.componentwise = all(t.componentwise for t in terms)

    def _apply(self, x):
        out = self.terms[0].apply(x)
        for term in self.terms[1:]:
            out = out + term.apply(x)
        return out

    def scalar_dense(self):
        return sum(t.scalar_dense() for t in self.terms)

    def to_dense(self):
        if self.componentwise:
            return np.kron(np.eye(3), self.scalar_dense())
        return sum(t.to_dense() for t in self.terms)


class ProductOperator(BoundaryOperator):
    """left after right."""

    def __init__(self, left, right):
        fingerprint = left._check(right)
        super().__init__(left.n, fingerprint)
        self.left = left
        self.right = right
        self.componentwise = left.componentwise and right.componentwise

    def _apply(self, x):
        return self.left.apply(self.right.apply(x))

    def scalar_dense(self):
        return self.left.scalar_dense() @ self.right.scalar_dense()

    def to_dense(self):
        if self.componentwise:
            return np.kron(np.eye(3), self.scalar_dense())
        return self.left.to_dense() @ self.right.to_dense()


class ScaledOperator(BoundaryOperator):

    def __init__(self, scalar, op):
        super().__init__(op.n, op.fingerprint)
        self.scalar = scalar
        self.op = op
        self.componentwise = op.componentwise

    def _apply(self, x):
        return self.scalar * self.op.apply(x)

    def scalar_dense(self):
        return self.scalar * self.op.scalar_dense()

    def to_dense(self):
        if self.componentwise:
            return np.kron(np.eye(3), self.scalar_dense())
        return self.scalar * self.op.to_dense()
