import numpy as np
import pytest
from CFOIE.core.errors import CoincidentPointsError, InvalidParameterError, MatrixFormatError, NearSurfaceError
from CFOIE.core.quadrature.kernels import (
    FOUR_PI, SERIES_SWITCH, KernelId, KernelKind, difference_radial_terms, evaluate_kernel, greens,
    kernel_value, radial_derivatives,
)
from CFOIE.core.quadrature.nystrom import (
    KernelMatrix, QuadConfig, assemble, assemble_many, dump_matrix, load_matrix, near_pairs, project_to_patch,
)
from CFOIE.core.quadrature.potentials import (
    EXTERIOR, INTERIOR, NEAR, check_targets, classify_points, layer_potential, layer_potential_derivatives,
)
from CFOIE.core.quadrature.rules import (
    LagrangeBasis, duffy_rule_on_reference_triangle, gauss_legendre_unit, singular_square_rule,
)


class TestRules:
    def test_gauss_legendre_unit(self):
        x, w = gauss_legendre_unit(5)
        assert w.sum() == pytest.approx(1.0)
        assert np.all((x > 0) & (x < 1))
        assert np.dot(w, x ** 5) == pytest.approx(1.0 / 6.0)

    def test_duffy_weights_and_inverse_distance(self):
        points, weights = duffy_rule_on_reference_triangle(10, 3)
        assert weights.sum() == pytest.approx(0.5, rel=1e-12)
        assert np.all(points[:, 1] <= points[:, 0])
        r = np.linalg.norm(points, axis=1)
        assert np.dot(weights, 1.0 / r) == pytest.approx(np.arcsinh(1.0), rel=1e-10)

    @pytest.mark.parametrize("anchor", [(0.0, 0.0), (0.3, -0.7), (1.0, 0.2), (-1.0, -1.0)])
    def test_square_rule_covers_square(self, anchor):
        points, weights = singular_square_rule(np.array(anchor), 8, 2)
        assert weights.sum() == pytest.approx(4.0, rel=1e-12)
        assert np.all(np.abs(points) <= 1.0 + 1e-14)

    def test_square_rule_inverse_distance_at_centre(self):
        points, weights = singular_square_rule(np.zeros(2), 10, 3)
        r = np.linalg.norm(points, axis=-1)
        assert np.dot(weights, 1.0 / r) == pytest.approx(8.0 * np.arcsinh(1.0), rel=1e-10)

    def test_square_rule_batches(self):
        anchors = np.array([[0.1, 0.2], [-0.5, 0.9]])
        points, weights = singular_square_rule(anchors, 6, 1)
        single_points, single_weights = singular_square_rule(anchors[1], 6, 1)
        np.testing.assert_allclose(points[1], single_points)
        np.testing.assert_allclose(weights[1], single_weights)

    def test_lagrange_basis_reproduces_polynomials(self):
        nodes = np.polynomial.legendre.leggauss(5)[0]
        basis = LagrangeBasis(nodes)
        x = np.linspace(-1, 1, 11)
        values = basis(x)
        assert values.shape == (11, 5)
        np.testing.assert_allclose(values.sum(axis=1), 1.0, atol=1e-12)
        np.testing.assert_allclose(values @ nodes ** 3, x ** 3, atol=1e-12)
        np.testing.assert_allclose(basis(nodes), np.eye(5), atol=1e-12)

    def test_lagrange_integrate_gives_tensor_weights(self):
        nodes, w = np.polynomial.legendre.leggauss(4)
        basis = LagrangeBasis(nodes)
        points, weights = singular_square_rule(np.array([0.2, -0.4]), 8, 2)
        block = basis.integrate(np.ones((1, points.shape[0])), points[None], weights[None])
        np.testing.assert_allclose(block[0], np.outer(w, w).ravel(), atol=1e-12)


class TestKernels:
    def test_greens_symmetric_and_coincident(self):
        x = np.array([0.1, 0.2, 0.3])
        y = np.array([-0.4, 0.0, 1.0])
        assert greens(2.0, x, y) == pytest.approx(greens(2.0, y, x))
        r = np.linalg.norm(x - y)
        assert greens(2.0, x, y) == pytest.approx(np.exp(2j * r) / (FOUR_PI * r))
        with pytest.raises(CoincidentPointsError):
            greens(1.0, x, x)

    def test_radial_derivatives_match_finite_differences(self):
        k, r, step = 2.5, 0.7, 1e-5
        g = radial_derivatives(k, r, order=3)
        for n in range(3):
            plus = radial_derivatives(k, r + step, order=2)[n]
            minus = radial_derivatives(k, r - step, order=2)[n]
            assert (plus - minus) / (2 * step) == pytest.approx(g[n + 1], rel=1e-7)

    def test_difference_terms_small_r(self):
        k = 2.0
        r = np.array([1e-7, 1e-6])
        f, fp = difference_radial_terms(k, r)
        np.testing.assert_allclose(f * r, -k ** 2 / (8 * np.pi), rtol=1e-5)
        np.testing.assert_allclose(fp * r ** 3, k ** 2 / (8 * np.pi), rtol=1e-5)

    def test_difference_terms_closed_form(self):
        k, r = 3.0, 0.5
        gk = radial_derivatives(k, r, order=2)
        g0 = radial_derivatives(0.0, r, order=2)
        f, fp = difference_radial_terms(k, np.array([r]))
        d1 = gk[1] - g0[1]
        d2 = gk[2] - g0[2]
        assert f[0] == pytest.approx(d1 / r, rel=1e-12)
        assert fp[0] == pytest.approx((d2 - d1 / r) / r ** 2, rel=1e-10)

    def test_difference_terms_continuous_at_switch(self):
        k = 1.0
        for r in (0.999 * SERIES_SWITCH / k, 1.001 * SERIES_SWITCH / k):
            gk = radial_derivatives(k, r, order=2)
            g0 = radial_derivatives(0.0, r, order=2)
            d1, d2 = gk[1] - g0[1], gk[2] - g0[2]
            f, fp = difference_radial_terms(k, np.array([r]))
            assert f[0] == pytest.approx(d1 / r, rel=1e-5)
            assert fp[0] == pytest.approx((d2 - d1 / r) / r ** 2, rel=1e-5)

    def test_difference_kernel_vanishes_at_zero_wavenumber(self):
        x, y = np.array([0.0, 0.0, 1.0]), np.array([0.3, 0.0, 0.9])
        n = np.array([0.0, 0.0, 1.0])
        assert evaluate_kernel(KernelId(KernelKind.HYPERSINGULAR_DIFF, 0.0), x, n, y, n) == 0

    def test_adjoint_is_transposed_double_layer(self):
        x, nx = np.array([0.2, 0.1, 0.9]), np.array([0.0, 0.6, 0.8])
        y = np.array([-0.3, 0.5, 0.4])
        K = evaluate_kernel(KernelId(KernelKind.DOUBLE_LAYER, 1.5), y, None, x, nx)
        Kp = evaluate_kernel(KernelId(KernelKind.ADJOINT_DOUBLE, 1.5), x, nx, y, None)
        assert Kp == pytest.approx(K)

    def test_double_layer_is_normal_derivative(self):
        k, step = 1.5, 1e-6
        x, y, ny = np.array([0.2, 0.1, 0.9]), np.array([-0.3, 0.5, 0.4]), np.array([0.0, 0.6, 0.8])
        fd = (greens(k, x, y + step * ny) - greens(k, x, y - step * ny)) / (2 * step)
        assert evaluate_kernel(KernelId(KernelKind.DOUBLE_LAYER, k), x, None, y, ny) == pytest.approx(fd, rel=1e-7)

    def test_kernel_value_on_nodes(self, coarse_sphere_grid):
        a, b = coarse_sphere_grid.node(0), coarse_sphere_grid.node(40)
        expected = greens(2.0, a.position, b.position)
        assert kernel_value(KernelId(KernelKind.SINGLE_LAYER, 2.0), a, b) == pytest.approx(expected)

    def test_negative_wavenumber(self):
        with pytest.raises(InvalidParameterError):
            KernelId(KernelKind.SINGLE_LAYER, -1.0)
        assert KernelId(KernelKind.SINGLE_LAYER, 2.0).label == "SINGLE_LAYER(k=2)"


class TestNystrom:
    def test_laplace_row_sums_on_sphere(self, sphere_grid):
        K0, S0, K0p = assemble_many(
            [KernelId(KernelKind.DOUBLE_LAYER, 0.0), KernelId(KernelKind.SINGLE_LAYER, 0.0),
             KernelId(KernelKind.ADJOINT_DOUBLE, 0.0)],
            sphere_grid, workers=2,
        )
        ones = np.ones(sphere_grid.size)
        np.testing.assert_allclose(K0.apply(ones), -0.5, atol=1e-3)
        np.testing.assert_allclose(K0p.apply(ones), -0.5, atol=1e-3)
        np.testing.assert_allclose(S0.apply(ones), 1.0, atol=1e-3)

    def test_double_layer_row_sum_on_torus(self, coarse_torus_grid):
        K0 = assemble(KernelId(KernelKind.DOUBLE_LAYER, 0.0), coarse_torus_grid)
        np.testing.assert_allclose(K0.apply(np.ones(coarse_torus_grid.size)), -0.5, atol=5e-3)

    def test_workers_do_not_change_result(self, coarse_sphere_grid):
        kernel = KernelId(KernelKind.SINGLE_LAYER, np.pi)
        serial = assemble(kernel, coarse_sphere_grid, QuadConfig(row_block=37))
        threaded = assemble(kernel, coarse_sphere_grid, QuadConfig(row_block=37), workers=3)
        np.testing.assert_array_equal(serial.data, threaded.data)

    def test_vanishing_difference_kernel(self, coarse_sphere_grid):
        T = assemble(KernelId(KernelKind.HYPERSINGULAR_DIFF, 0.0), coarse_sphere_grid)
        assert not np.any(T.data)

    def test_apply_on_stacked_rows(self, coarse_sphere_mats):
        x = np.arange(3 * coarse_sphere_mats.S.shape[0]).reshape(3, -1).astype(complex)
        stacked = coarse_sphere_mats.S.apply(x)
        np.testing.assert_allclose(stacked[1], coarse_sphere_mats.S.apply(x[1]))

    @pytest.mark.parametrize("name", ["S", "S0"])
    def test_single_layer_is_complex_symmetric(self, name, sphere_grid, sphere_mats):
        B = getattr(sphere_mats, name).data / sphere_grid.weights[None, :]
        assert np.linalg.norm(B - B.T) / np.linalg.norm(B) < 1e-2

    def test_adjoint_double_layer_transposes_far_entries(self, sphere_grid, sphere_mats):
        n = sphere_grid.size
        mask = np.zeros((n, n), dtype=bool)
        for q, rows in enumerate(near_pairs(sphere_grid, QuadConfig())):
            mask[np.ix_(rows, np.arange(n)[sphere_grid.patch_slice(q)])] = True
        far = ~mask & ~mask.T
        assert far.any()
        w = sphere_grid.weights[None, :]
        K = sphere_mats.K.data / w
        Kp = sphere_mats.Kp.data / w
        np.testing.assert_allclose(Kp.T[far], K[far], rtol=1e-10, atol=1e-12 * np.abs(K[far]).max())

    def test_near_pairs_include_own_patch(self, coarse_sphere_grid):
        near = near_pairs(coarse_sphere_grid, QuadConfig())
        assert len(near) == coarse_sphere_grid.n_patches
        own = np.arange(coarse_sphere_grid.size)[coarse_sphere_grid.patch_slice(2)]
        assert set(own) <= set(near[2])

    def test_project_to_patch_recovers_nodes(self, coarse_sphere_grid):
        grid = coarse_sphere_grid
        patch = grid.surface.patches[0]
        idx = np.arange(grid.size)[grid.patch_slice(0)][:4]
        uv, dist = project_to_patch(patch, grid.points[idx], np.zeros((4, 2)))
        np.testing.assert_allclose(uv, grid.uv[idx], atol=1e-9)
        np.testing.assert_allclose(dist, 0.0, atol=1e-12)

    def test_dump_and_load(self, tmp_path, coarse_sphere_mats):
        path = dump_matrix(coarse_sphere_mats.Kp, tmp_path / "kp.cfom")
        loaded = load_matrix(path)
        np.testing.assert_array_equal(loaded.data, coarse_sphere_mats.Kp.data)
        assert loaded.kernel == coarse_sphere_mats.Kp.kernel

    def test_load_rejects_foreign_file(self, tmp_path, coarse_sphere_mats):
        path = tmp_path / "bad.cfom"
        path.write_bytes(b"XXXX" + bytes(40))
        with pytest.raises(MatrixFormatError):
            load_matrix(path)
        path.write_bytes(b"CF")
        with pytest.raises(MatrixFormatError):
            load_matrix(path)
        dump_matrix(coarse_sphere_mats.S, path)
        path.write_bytes(path.read_bytes()[:-16])
        with pytest.raises(MatrixFormatError, match="expected"):
            load_matrix(path)

    def test_invalid_quad_config(self):
        with pytest.raises(InvalidParameterError):
            QuadConfig(eta_near=0.0)
        with pytest.raises(InvalidParameterError):
            QuadConfig(depth=-1)
        assert QuadConfig().singular_order(6) == 12
        assert QuadConfig(aux_order=9).singular_order(6) == 9

    def test_matrix_from_other_grid(self, coarse_sphere_grid, sphere_grid):
        from CFOIE.core.errors import GeometryError
        matrix = KernelMatrix(np.zeros((2, 2)), KernelId(KernelKind.SINGLE_LAYER, 1.0), coarse_sphere_grid.fingerprint)
        matrix.check_grid(coarse_sphere_grid)
        with pytest.raises(GeometryError):
            matrix.check_grid(sphere_grid)


class TestPotentials:
    def test_near_targets_rejected(self, coarse_sphere_grid):
        with pytest.raises(NearSurfaceError):
            check_targets(coarse_sphere_grid, [[0.0, 0.0, 1.001]])
        check_targets(coarse_sphere_grid, [[0.0, 0.0, 3.0]])

    def test_classify_points(self, sphere_grid):
        points = np.array([[0.0, 0.0, 0.0], [0.0, 0.0, 3.0], [1.0, 0.0, 0.0]])
        assert list(classify_points(sphere_grid, points)) == [INTERIOR, EXTERIOR, NEAR]

    def test_single_layer_of_constant_outside_sphere(self, sphere_grid):
        # S0[1](x) = 1/|x| outside the unit sphere
        targets = np.array([[0.0, 0.0, 2.0], [3.0, 1.0, 0.0]])
        value = layer_potential("single", 0.0, sphere_grid, np.ones(sphere_grid.size), targets)
        np.testing.assert_allclose(value, 1.0 / np.linalg.norm(targets, axis=1), rtol=1e-6)

    def test_gradients_match_finite_differences(self, sphere_grid, rng):
        density = rng.standard_normal((3, sphere_grid.size)) + 0j
        x = np.array([[0.5, 1.8, -0.7]])
        out = layer_potential_derivatives("double", 2.0, sphere_grid, density, x, order=2)
        step = 1e-5
        for axis in range(3):
            e = np.zeros(3)
            e[axis] = step
            plus = layer_potential_derivatives("double", 2.0, sphere_grid, density, x + e, order=1)
            minus = layer_potential_derivatives("double", 2.0, sphere_grid, density, x - e, order=1)
            np.testing.assert_allclose((plus["value"] - minus["value"]) / (2 * step), out["grad"][..., axis],
                                       rtol=1e-6, atol=1e-9)
            np.testing.assert_allclose((plus["grad"] - minus["grad"]) / (2 * step), out["hess"][..., axis, :],
                                       rtol=1e-5, atol=1e-8)

    def test_unknown_kind(self, coarse_sphere_grid):
        with pytest.raises(InvalidParameterError):
            layer_potential("triple", 1.0, coarse_sphere_grid, np.ones(coarse_sphere_grid.size), [[0, 0, 3.0]])
