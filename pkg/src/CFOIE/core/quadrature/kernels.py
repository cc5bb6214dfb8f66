"""
Helmholtz Green's function, its radial derivatives and the four boundary-operator
kernels (single layer, double layer, adjoint double layer, and the weakly singular
difference kernel of T - T0).

All kernel routines broadcast over leading axes; points carry a trailing axis of
length 3. With R = x - y and r = |R|:
    G   = e^{ikr} / (4 pi r)
    K   = dG/dnu(y)  =  e^{ikr} (1 - ikr) (R . nu_y) / (4 pi r^3)
    K'  = dG/dnu(x)  =  e^{ikr} (ikr - 1) (R . nu_x) / (4 pi r^3)
    Td  = d^2 (G - G0) / dnu(x) dnu(y)
"""
from dataclasses import dataclass
from enum import IntEnum
import numpy as np
from CFOIE.core.errors import CoincidentPointsError, InvalidParameterError

FOUR_PI = 4.0 * np.pi
SERIES_SWITCH = 1e-4   # kr below which the difference kernel uses its Taylor series
SERIES_TERMS = 8


class KernelKind(IntEnum):
    SINGLE_LAYER = 0
    DOUBLE_LAYER = 1
    ADJOINT_DOUBLE = 2
    HYPERSINGULAR_DIFF = 3


@dataclass(frozen=True)
class KernelId:
    kind: KernelKind
    k: float

    def __post_init__(self):
        if self.k < 0:
            raise InvalidParameterError(f"Wavenumber must be non-negative, got {self.k}")

    @property
    def label(self):
        return f"{self.kind.name}(k={self.k:g})"


def _distance(x, y):
    diff = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    r = np.linalg.norm(diff, axis=-1)
    if np.any(r == 0):
        raise CoincidentPointsError("Kernel evaluated at coincident points")
    return diff, r


def greens(k, x, y):
    """Free-space Helmholtz Green's function e^{ik|x-y|} / (4 pi |x-y|)."""
    _, r = _distance(x, y)
    return np.exp(1j * k * r) / (FOUR_PI * r)


def radial_derivatives(k, r, order=1):
    """
    G(r) and its first `order` derivatives in r (order <= 3), as a list.

    G'   = e^{ikr}(ikr - 1) / (4 pi r^2)
    G''  = e^{ikr}(2 - 2ikr - k^2 r^2) / (4 pi r^3)
    G''' = e^{ikr}(-6 + 6ikr + 3k^2 r^2 - ik^3 r^3) / (4 pi r^4)
    """
    z = 1j * k * r
    phase = np.exp(z) / FOUR_PI
    out = [phase / r]
    if order >= 1:
        out.append(phase * (z - 1.0) / r ** 2)
    if order >= 2:
        out.append(phase * (2.0 - 2.0 * z + z * z) / r ** 3)
    if order >= 3:
        out.append(phase * (-6.0 + 6.0 * z - 3.0 * z * z + z ** 3) / r ** 4)
    return out


def _expm1_imag(kr):
    """e^{i kr} - 1 for real kr without cancellation."""
    s = np.sin(0.5 * kr)
    return -2.0 * s * s + 1j * np.sin(kr)


def difference_radial_terms(k, r):
    """
    f = g'(r)/r and f'(r)/r for g(r) = (e^{ikr} - 1)/(4 pi r).

    Closed form via h = ikr e^{ikr} - e^{ikr} + 1 = z + expm1(z)(z - 1):
        f = h / (4 pi r^3),   f'/r = (z^2 e^z - 3h) / (4 pi r^5).
    For kr < SERIES_SWITCH the series
        f    = sum_{n>=2} (n-1)      (ik)^n r^{n-3} / (4 pi n!)
        f'/r = sum_{n>=2} (n-1)(n-3) (ik)^n r^{n-5} / (4 pi n!)
    is summed over SERIES_TERMS terms.
    """
    r = np.asarray(r, dtype=float)
    kr = k * r
    f = np.empty(r.shape, dtype=complex)
    fp = np.empty(r.shape, dtype=complex)

    small = kr < SERIES_SWITCH
    if np.any(small):
        rs = r[small]
        fs = np.zeros(rs.shape, dtype=complex)
        fps = np.zeros(rs.shape, dtype=complex)
        fact = 1.0
        for n in range(2, 2 + SERIES_TERMS):
            fact *= n
            coeff = (1j * k) ** n / (FOUR_PI * fact)
            fs += (n - 1) * coeff * rs ** (n - 3)
            fps += (n - 1) * (n - 3) * coeff * rs ** (n - 5)
        f[small] = fs
        fp[small] = fps

    big = ~small
    if np.any(big):
        rb = r[big]
        z = 1j * k * rb
        em1 = _expm1_imag(k * rb)
        h = z + em1 * (z - 1.0)
        f[big] = h / (FOUR_PI * rb ** 3)
        fp[big] = (z * z * (1.0 + em1) - 3.0 * h) / (FOUR_PI * rb ** 5)
    return f, fp


def evaluate_kernel(kernel: KernelId, x, nx, y, ny):
    """
    Kernel values for broadcastable point/normal arrays (..., 3).

    Normals not used by a kernel may be None.
    """
    diff, r = _distance(x, y)
    return kernel_from_geometry(kernel, diff, r, nx, ny)


def kernel_from_geometry(kernel: KernelId, diff, r, nx, ny):
    """Kernel values from precomputed R = x - y and r = |R| (r > 0 everywhere)."""
    k = kernel.k
    if kernel.kind == KernelKind.SINGLE_LAYER:
        return np.exp(1j * k * r) / (FOUR_PI * r)
    if kernel.kind == KernelKind.DOUBLE_LAYER:
        rn = np.einsum("...i,...i", diff, ny)
        return np.exp(1j * k * r) * (1.0 - 1j * k * r) * rn / (FOUR_PI * r ** 3)
    if kernel.kind == KernelKind.ADJOINT_DOUBLE:
        rn = np.einsum("...i,...i", diff, nx)
        return np.exp(1j * k * r) * (1j * k * r - 1.0) * rn / (FOUR_PI * r ** 3)
    if kernel.kind == KernelKind.HYPERSINGULAR_DIFF:
        if k == 0:
            return np.zeros(np.shape(r), dtype=complex)
        f, fp = difference_radial_terms(k, r)
        rnx = np.einsum("...i,...i", diff, nx)
        rny = np.einsum("...i,...i", diff, ny)
        nn = np.einsum("...i,...i", nx, ny)
        return -fp * rnx * rny - f * nn
    raise InvalidParameterError(f"Unknown kernel kind: {kernel.kind!r}")


def kernel_value(kernel: KernelId, xnode, ynode):
    """Kernel between two SurfaceNodes."""
    return complex(evaluate_kernel(kernel, xnode.position, xnode.normal, ynode.position, ynode.normal))
