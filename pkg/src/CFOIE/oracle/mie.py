"""
Mie series for plane-wave scattering by a perfectly conducting sphere centred at
the origin (Bohren & Huffman conventions, e^{-i omega t}, eps = mu = 1).

The series is written in the local frame e1 = p/|p|, e2 = d x e1, e3 = d, where the
incident field is E = e1 e^{ik z'}, H = e2 e^{ik z'}; results are rotated back and
scaled by |p|.
"""
from dataclasses import dataclass
import numpy as np
from scipy.special import spherical_jn, spherical_yn
from CFOIE.core.errors import ConvergenceError, InvalidParameterError
from CFOIE.core.incident.sources import PlaneWave, planewave_field_at
from CFOIE.core.post.fields import TargetSet
from util.io import IOManager

io_manager = IOManager("[Mie]")

TAIL_TOLERANCE = 1e-10
EXTRA_TERMS = 20


@dataclass(frozen=True)
class MieConfig:
    radius: float = 1.0
    wave: PlaneWave = PlaneWave()
    truncation: int = None

    def __post_init__(self):
        if not self.radius > 0:
            raise InvalidParameterError("Sphere radius must be positive")
        if self.truncation is None:
            object.__setattr__(self, "truncation", int(np.ceil(self.wave.k * self.radius)) + EXTRA_TERMS)
        if self.truncation < 5:
            raise InvalidParameterError(f"Mie truncation must be at least 5, got {self.truncation}")

    @property
    def frame(self):
        e1 = self.wave.p / np.linalg.norm(self.wave.p)
        e3 = self.wave.d
        return np.stack([e1, np.cross(e3, e1), e3])


def pec_coefficients(x, n):
    """a_n = psi_n'(x) / xi_n'(x), b_n = psi_n(x) / xi_n(x) for n = 1..L."""
    j = spherical_jn(n, x)
    jp = spherical_jn(n, x, derivative=True)
    y = spherical_yn(n, x)
    yp = spherical_yn(n, x, derivative=True)
    h = j + 1j * y
    hp = jp + 1j * yp
    return (j + x * jp) / (h + x * hp), j / h


def angular_functions(L, mu):
    """pi_n(mu) and tau_n(mu) for n = 1..L, each (L, T)."""
    pi = np.zeros((L + 1,) + mu.shape)
    tau = np.zeros((L + 1,) + mu.shape)
    pi[1] = 1.0
    for n in range(2, L + 1):
        pi[n] = (2 * n - 1) / (n - 1) * mu * pi[n - 1] - n / (n - 1) * pi[n - 2]
    for n in range(1, L + 1):
        tau[n] = n * mu * pi[n] - (n + 1) * pi[n - 1]
    return pi[1:], tau[1:]


def mie_scattered(cfg: MieConfig, targets, check_tail=True):
    """
    Scattered (E, H), each (3, T), at targets on or outside the sphere.
    """
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    k, L = cfg.wave.k, cfg.truncation
    frame = cfg.frame
    local = targets @ frame.T
    r = np.linalg.norm(local, axis=-1)
    if np.any(r < cfg.radius * (1.0 - 1e-9)):
        raise InvalidParameterError("Mie fields are only available outside the sphere")

    theta = np.arccos(np.clip(local[:, 2] / r, -1.0, 1.0))
    phi = np.arctan2(local[:, 1], local[:, 0])
    cos_p, sin_p = np.cos(phi), np.sin(phi)
    sin_t, cos_t = np.sin(theta), np.cos(theta)

    n = np.arange(1, L + 1)
    a, b = pec_coefficients(k * cfg.radius, n)
    En = (1j ** n) * (2 * n + 1) / (n * (n + 1))
    rho = k * r
    h = spherical_jn(n[:, None], rho[None]) + 1j * spherical_yn(n[:, None], rho[None])
    hp = spherical_jn(n[:, None], rho[None], derivative=True) + 1j * spherical_yn(n[:, None], rho[None], derivative=True)
    dxi = (h + rho * hp) / rho                                  # xi_n'(rho) / rho
    pi, tau = angular_functions(L, cos_t)
    nn1 = (n * (n + 1))[:, None]
    aE, bE = (En * a)[:, None], (En * b)[:, None]

    terms = {
        "Er": cos_p * 1j * aE * nn1 * sin_t * pi * h / rho,
        "Et": cos_p * (1j * aE * tau * dxi - bE * pi * h),
        "Ep": sin_p * (-1j * aE * pi * dxi + bE * tau * h),
        "Hr": sin_p * 1j * bE * nn1 * sin_t * pi * h / rho,
        "Ht": sin_p * (1j * bE * tau * dxi - aE * pi * h),
        "Hp": cos_p * (1j * bE * pi * dxi - aE * tau * h),
    }
    sums = {key: val.sum(axis=0) for key, val in terms.items()}

    if check_tail:
        scale = max(max(np.abs(sums[key]).max() for key in sums), 1e-300)
        tail = max(np.abs(val[-1]).max() for val in terms.values()) / scale
        if tail > TAIL_TOLERANCE:
            raise ConvergenceError(f"Mie series not converged at L={L}: last-term estimate {tail:.3e}")

    r_hat = np.stack([sin_t * cos_p, sin_t * sin_p, cos_t])
    t_hat = np.stack([cos_t * cos_p, cos_t * sin_p, -sin_t])
    p_hat = np.stack([-sin_p, cos_p, np.zeros_like(phi)])
    amplitude = np.linalg.norm(cfg.wave.p)
    E_local = sums["Er"] * r_hat + sums["Et"] * t_hat + sums["Ep"] * p_hat
    H_local = sums["Hr"] * r_hat + sums["Ht"] * t_hat + sums["Hp"] * p_hat
    return amplitude * frame.T @ E_local, amplitude * frame.T @ H_local


def pec_residual(cfg: MieConfig, count=200):
    """max |nu x (E^s + E^i)| / |p| over points on the sphere surface."""
    points = TargetSet.fibonacci(count, cfg.radius).points
    Es, _ = mie_scattered(cfg, points)
    Ei, _ = planewave_field_at(cfg.wave, points)
    nu = (points / np.linalg.norm(points, axis=-1, keepdims=True)).T
    residual = np.linalg.norm(np.cross(nu, Es + Ei, axis=0), axis=0).max() / np.linalg.norm(cfg.wave.p)
    io_manager.write_debug(f"Mie PEC residual at L={cfg.truncation}: {residual:.3e}")
    return float(residual)
