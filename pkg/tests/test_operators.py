import numpy as np
import pytest
from CFOIE.core.errors import GeometryError, InvalidParameterError
from CFOIE.core.incident.sources import DipoleSource, dipole_traces, exact_density, rhs
from CFOIE.core.operators.algebra import (
    IdentityOperator, MatrixOperator, PointwiseOperator, RankOperator, ScalarKernelOperator, as_field,
)
from CFOIE.core.operators.formulations import (
    Formulation, FormulationParams, build_hypersingular, build_Le, build_Lm, build_Rnu, build_Rt,
    charge_functionals, charge_stabilize, combined_trace_operator, component_normals, curvature_multiplier,
    default_eta, projector, system_operator,
)
from CFOIE.oracle.identities import point_source_traces


def random_field(rng, n):
    return rng.standard_normal((3, n)) + 1j * rng.standard_normal((3, n))


class TestAlgebra:
    n = 7

    def test_composite_matches_dense(self, rng):
        a = ScalarKernelOperator(rng.standard_normal((self.n, self.n)))
        b = PointwiseOperator(rng.standard_normal((self.n, 3, 3)))
        c = MatrixOperator(rng.standard_normal((3 * self.n, 3 * self.n)))
        op = 2.0 * (a @ b) - c + 1j * IdentityOperator(self.n)
        x = random_field(rng, self.n)
        np.testing.assert_allclose(op.apply(x).reshape(-1), op.to_dense() @ x.reshape(-1), atol=1e-12)
        np.testing.assert_allclose(op.matvec(x.reshape(-1)), op.apply(x).reshape(-1))

    def test_componentwise_dense_is_block_diagonal(self, rng):
        s = rng.standard_normal((self.n, self.n))
        op = ScalarKernelOperator(s) @ ScalarKernelOperator(s) + IdentityOperator(self.n)
        assert op.componentwise
        np.testing.assert_allclose(op.to_dense(), np.kron(np.eye(3), s @ s + np.eye(self.n)), atol=1e-12)

    def test_rank_operator(self, rng):
        columns = random_field(rng, self.n)[None]
        functionals = random_field(rng, self.n)[None]
        op = RankOperator(columns, functionals)
        x = random_field(rng, self.n)
        pairing = np.sum(functionals[0] * x)
        np.testing.assert_allclose(op.apply(x), columns[0] * pairing)
        np.testing.assert_allclose(op.to_dense() @ x.reshape(-1), op.apply(x).reshape(-1), atol=1e-12)

    def test_size_mismatch(self):
        with pytest.raises(GeometryError):
            IdentityOperator(3) + IdentityOperator(4)
        with pytest.raises(GeometryError):
            IdentityOperator(3, "a") @ IdentityOperator(3, "b")
        with pytest.raises(GeometryError):
            as_field(np.zeros(10), 3)
        with pytest.raises(GeometryError):
            MatrixOperator(np.zeros((4, 4)))


class TestProjectorsAndCurvature:
    def test_projectors(self, coarse_torus_grid, rng):
        Pn, Pt = projector(coarse_torus_grid, "normal"), projector(coarse_torus_grid, "tangential")
        x = random_field(rng, coarse_torus_grid.size)
        np.testing.assert_allclose(Pn.apply(Pn.apply(x)), Pn.apply(x), atol=1e-12)
        np.testing.assert_allclose(Pn.apply(x) + Pt.apply(x), x, atol=1e-12)
        np.testing.assert_allclose(np.einsum("in,ni->n", Pt.apply(x), coarse_torus_grid.normals), 0.0, atol=1e-12)
        with pytest.raises(InvalidParameterError):
            projector(coarse_torus_grid, "oblique")

    def test_sphere_shape_operator_is_tangential_projector(self, coarse_sphere_grid, rng):
        x = random_field(rng, coarse_sphere_grid.size)
        R = curvature_multiplier(coarse_sphere_grid, "shapeR").apply(x)
        Pt = projector(coarse_sphere_grid, "tangential").apply(x)
        np.testing.assert_allclose(R, Pt, atol=1e-10)
        H = curvature_multiplier(coarse_sphere_grid, "meanH").apply(x)
        np.testing.assert_allclose(H, x, atol=1e-10)

    def test_normal_regularizer_on_sphere(self, coarse_sphere_grid, coarse_sphere_mats, rng):
        # R_nu = -2 P_t - 4 nu S0 (nu . phi): tangential fields are only scaled by -2
        x = projector(coarse_sphere_grid, "tangential").apply(random_field(rng, coarse_sphere_grid.size))
        np.testing.assert_allclose(build_Rnu(coarse_sphere_grid, coarse_sphere_mats.S0).apply(x), -2.0 * x, atol=1e-12)
        y = projector(coarse_sphere_grid, "normal").apply(random_field(rng, coarse_sphere_grid.size))
        np.testing.assert_allclose(build_Rt(coarse_sphere_grid, coarse_sphere_mats.S0).apply(y), -2.0 * y, atol=1e-12)


class TestParams:
    def test_default_eta(self):
        assert default_eta(2 * np.pi) == pytest.approx(200 * np.pi)
        assert default_eta(0.1) == pytest.approx(100 * np.pi)
        assert FormulationParams("DE", np.pi).eta == pytest.approx(100 * np.pi)

    def test_formulation_families(self):
        assert Formulation("RDE").family == "electric" and Formulation("RDE").regularized
        assert Formulation("DM").family == "magnetic" and not Formulation("DM").regularized

    def test_invalid_params(self):
        with pytest.raises(InvalidParameterError):
            FormulationParams("DE", 0.0)
        with pytest.raises(InvalidParameterError):
            FormulationParams("DE", 1.0, eta=0.0)
        with pytest.raises(InvalidParameterError):
            FormulationParams("DM", 1.0, xi=1.0)
        with pytest.raises(ValueError):
            FormulationParams("EFIE", 1.0)

    def test_forbidden_xi(self, two_tori_grid):
        areas = two_tori_grid.component_areas()
        params = FormulationParams("DE", 0.1, xi=-1.0 / areas[1])
        with pytest.raises(InvalidParameterError):
            params.check_xi(areas)
        FormulationParams("DE", 0.1, xi=1.0).check_xi(areas)


class TestCharges:
    def test_functionals_measure_areas(self, two_tori_grid):
        normals = component_normals(two_tori_grid)
        functionals = charge_functionals(two_tori_grid)
        pairing = np.einsum("jin,kin->jk", functionals, normals)
        np.testing.assert_allclose(np.diag(pairing), two_tori_grid.component_areas(), rtol=1e-12)
        assert pairing[0, 1] == 0 and pairing[1, 0] == 0

    def test_stabilization(self, two_tori_grid, two_tori_mats, rng):
        params = FormulationParams("DE", 0.1)
        Le = build_Le(params, two_tori_grid, two_tori_mats)
        assert charge_stabilize(Le, two_tori_grid, 0.0) is Le
        xi = 3.0
        stabilized = charge_stabilize(Le, two_tori_grid, xi)
        x = random_field(rng, two_tori_grid.size)
        expected = Le.apply(x)
        for nu_j, ell_j in zip(component_normals(two_tori_grid), charge_functionals(two_tori_grid)):
            expected = expected + xi * Le.apply(nu_j) * np.sum(ell_j * x)
        np.testing.assert_allclose(stabilized.apply(x), expected, rtol=1e-10, atol=1e-10)
        with pytest.raises(InvalidParameterError):
            charge_stabilize(Le, two_tori_grid, -1.0 / two_tori_grid.component_areas()[0])


class TestBoundaryOperators:
    def test_combined_trace_vanishes_on_exterior_data(self, sphere_grid, sphere_mats):
        gamma, dn = point_source_traces(np.pi, sphere_grid, [0.1, -0.05, 0.08])
        a = np.zeros((3, sphere_grid.size), dtype=complex)
        b = np.zeros_like(a)
        a[2], b[2] = gamma, dn
        params = FormulationParams("DE", np.pi)
        residual = combined_trace_operator(params, sphere_grid, sphere_mats).apply(a, b)
        scale = np.abs(b).max() + params.eta * np.abs(a).max()
        assert np.abs(residual).max() / scale < 2e-3
        assert not np.any(residual[:2])

    def test_hypersingular_calderon(self, sphere_grid, sphere_mats):
        gamma, dn = point_source_traces(np.pi, sphere_grid, [0.1, -0.05, 0.08])
        T = build_hypersingular(np.pi, sphere_grid, sphere_mats)
        field = np.zeros((3, sphere_grid.size), dtype=complex)
        field[0] = gamma
        lhs = T.apply(field)[0]
        expected = 0.5 * dn + sphere_mats.Kp.apply(dn)
        assert np.abs(lhs - expected).max() / np.abs(expected).max() < 5e-2

    def test_hypersingular_rejects_other_grid(self, coarse_sphere_grid, sphere_mats):
        with pytest.raises(InvalidParameterError):
            build_hypersingular(np.pi, coarse_sphere_grid, sphere_mats)

    @pytest.mark.parametrize("formulation", ["DE", "DM"])
    def test_exact_density_nearly_solves_system(self, formulation, sphere_grid, sphere_mats):
        params = FormulationParams(formulation, np.pi)
        family = params.formulation.family
        src = DipoleSource((0.1, -0.05, 0.08), (0.3, -0.2, 1.0), family, np.pi)
        traces = dipole_traces(src, sphere_grid)
        builder = build_Le if family == "electric" else build_Lm
        L = builder(params, sphere_grid, sphere_mats)
        f = rhs(formulation, traces, params.eta, sphere_grid, sphere_mats)
        phi = exact_density(family, traces, sphere_grid)
        assert np.linalg.norm(L.apply(phi) - f) / np.linalg.norm(f) < 1e-2

    def test_system_operator_regularizers(self, coarse_sphere_grid, coarse_sphere_mats):
        for name, expected in (("DE", False), ("RDE", True), ("DM", False), ("RDM", True)):
            op, right = system_operator(FormulationParams(name, np.pi), coarse_sphere_grid, coarse_sphere_mats)
            assert (right is not None) == expected
            assert op.shape == (3 * coarse_sphere_grid.size,) * 2

    def test_laplace_single_layer_is_positive_on_tangential_fields(self, sphere_grid, sphere_mats, rng):
        Pt = projector(sphere_grid, "tangential")
        w = sphere_grid.weights
        for _ in range(4):
            a = rng.standard_normal(3) + 1j * rng.standard_normal(3)
            B = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
            psi = Pt.apply(a[:, None] + B @ sphere_grid.points.T)
            energy = np.sum(w * np.conj(psi) * sphere_mats.S0.apply(psi))
            assert energy.real > 0
