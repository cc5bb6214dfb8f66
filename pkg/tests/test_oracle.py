import numpy as np
import pytest
from CFOIE.core.errors import ConvergenceError, InvalidParameterError
from CFOIE.core.geometry.surfaces import SurfaceSpec, discretize, make_surface
from CFOIE.core.incident.sources import DipoleSource, PlaneWave, dipole_field_at
from CFOIE.core.post.fields import TargetSet
from CFOIE.oracle.identities import greens_identity_check, point_source_traces, row_sum_checks
from CFOIE.oracle.manufactured import dipole_reference
from CFOIE.oracle.mie import MieConfig, angular_functions, mie_scattered, pec_coefficients, pec_residual


class TestMie:
    @pytest.mark.parametrize("k", [0.5, np.pi, 8.0])
    def test_pec_residual(self, k):
        assert pec_residual(MieConfig(1.0, PlaneWave(k=k))) < 1e-8

    def test_rotated_incidence(self):
        d = np.array([1.0, 1.0, 0.0]) / np.sqrt(2.0)
        wave = PlaneWave((0.0, 0.0, 2.0), tuple(d), 2.0)
        assert pec_residual(MieConfig(1.5, wave)) < 1e-8

    def test_scattered_field_is_transverse_far_away(self):
        cfg = MieConfig(1.0, PlaneWave(k=np.pi))
        points = TargetSet.fibonacci(20, 400.0).points
        E, H = mie_scattered(cfg, points)
        r_hat = (points / np.linalg.norm(points, axis=1, keepdims=True)).T
        radial = np.abs(np.einsum("it,it->t", r_hat, E)) / np.linalg.norm(E, axis=0)
        assert radial.max() < 1e-2
        # outgoing spherical wave: H = r_hat x E
        np.testing.assert_allclose(H, np.cross(r_hat, E, axis=0), atol=1e-2 * np.abs(E).max())

    def test_angular_functions(self):
        mu = np.array([0.3, -0.7])
        pi, tau = angular_functions(3, mu)
        np.testing.assert_allclose(pi[0], 1.0)
        np.testing.assert_allclose(pi[1], 3.0 * mu)
        np.testing.assert_allclose(tau[0], mu)

    def test_coefficients_are_bounded(self):
        a, b = pec_coefficients(2.0, np.arange(1, 10))
        assert np.all(np.abs(a) <= 1.0 + 1e-12) and np.all(np.abs(b) <= 1.0 + 1e-12)

    def test_invalid(self):
        with pytest.raises(InvalidParameterError):
            MieConfig(radius=0.0)
        with pytest.raises(InvalidParameterError):
            MieConfig(truncation=3)
        with pytest.raises(InvalidParameterError):
            mie_scattered(MieConfig(), [[0.0, 0.0, 0.5]])

    def test_truncation_too_short(self):
        cfg = MieConfig(1.0, PlaneWave(k=20.0), truncation=5)
        with pytest.raises(ConvergenceError):
            mie_scattered(cfg, [[0.0, 0.0, 3.0]])


class TestManufactured:
    def test_reference_is_negated_dipole(self):
        src = DipoleSource((0.1, 0.0, 0.0), (1.0, 0.0, 0.0), "magnetic", 2.0)
        points = TargetSet.fibonacci(5, 3.0).points
        E, H = dipole_field_at(src, points)
        Er, Hr = dipole_reference(src, points)
        np.testing.assert_allclose(Er, -E)
        np.testing.assert_allclose(Hr, -H)


class TestIdentities:
    def test_point_source_traces(self, coarse_sphere_grid):
        gamma, dn = point_source_traces(1.0, coarse_sphere_grid, np.zeros(3))
        # on the unit sphere around the origin G = e^{i}/(4 pi) and dn G = G' at r = 1
        np.testing.assert_allclose(gamma, np.exp(1j) / (4 * np.pi))
        np.testing.assert_allclose(dn, np.exp(1j) * (1j - 1.0) / (4 * np.pi))

    def test_row_sums(self, sphere_grid, two_tori_grid):
        sums = row_sum_checks(sphere_grid, workers=2)
        assert sums["k0_rowsum"] < 1e-3 and sums["s0_rowsum"] < 1e-3
        sums = row_sum_checks(two_tori_grid, workers=2)
        assert sums["k0_rowsum"] < 1e-2 and np.isnan(sums["s0_rowsum"])

    def test_greens_identity(self, sphere_grid, sphere_mats):
        report = greens_identity_check(sphere_grid, [0.1, -0.05, 0.08], np.pi, sphere_mats)
        assert report.exterior < 1e-4
        assert report.interior < 1e-3
        assert report.calderon < 5e-2
        assert set(report.to_dict()) == {"exterior", "interior", "calderon"}

    def test_greens_identity_improves_with_order(self):
        reports = [
            greens_identity_check(discretize(make_surface(SurfaceSpec.sphere(), 1), p), [0.1, -0.05, 0.08], np.pi)
            for p in (4, 6, 8)
        ]
        exterior = [report.exterior for report in reports]
        assert exterior[0] > exterior[1] > exterior[2]
        assert reports[-1].interior < reports[0].interior

    def test_greens_identity_without_operators(self, two_tori_grid):
        x0 = two_tori_grid.surface.spec.interior_points()[1]
        report = greens_identity_check(two_tori_grid, x0, 0.1)
        assert report.exterior < 2e-2
        assert np.isnan(report.calderon)

    def test_wavenumber_mismatch(self, sphere_grid, sphere_mats):
        with pytest.raises(InvalidParameterError):
            greens_identity_check(sphere_grid, [0.0, 0.0, 0.0], 1.0, sphere_mats)
