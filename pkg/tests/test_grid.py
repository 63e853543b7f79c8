import numpy as np
import pytest

from buckopt.grid import (
    GaussRule,
    GridModel,
    b0_b1,
    build_indices,
    elasticity_matrix,
    element_stiffness,
    physical_grad,
    shape_grad,
)


# Lower-triangle closed form of the square plane-stress element, frozen oracle.
def _ke_lower_square(nu: float) -> np.ndarray:
    c1 = np.array(
        [12, 3, -6, -3, -6, -3, 0, 3, 12, 3, 0, -3, -6, -3, -6, 12, -3, 0,
         -3, -6, 3, 12, 3, -6, 3, -6, 12, 3, -6, -3, 12, 3, 0, 12, -3, 12],
        dtype=float,
    )
    c2 = np.array(
        [-4, 3, -2, 9, 2, -3, 4, -9, -4, -9, 4, -3, 2, 9, -2, -4, -3, 4,
         9, 2, 3, -4, -9, -2, 3, 2, -4, 3, -2, 9, -4, -9, 4, -4, -3, -4],
        dtype=float,
    )
    return 1.0 / (1.0 - nu**2) / 24.0 * (c1 + nu * c2)


class TestShapeGrad:
    def test_origin(self):
        expected = 0.25 * np.array([[-1, 1, 1, -1], [-1, -1, 1, 1]], dtype=float)
        np.testing.assert_allclose(shape_grad(0.0, 0.0), expected)

    def test_corner(self):
        expected = 0.25 * np.array([[0, 0, 2, -2], [0, -2, 2, 0]], dtype=float)
        np.testing.assert_allclose(shape_grad(1.0, 1.0), expected)

    def test_row_sums_vanish(self, rng):
        for _ in range(10):
            xi, zeta = rng.uniform(-1, 1, 2)
            np.testing.assert_allclose(shape_grad(xi, zeta).sum(axis=1), 0.0, atol=1e-15)


class TestPhysicalGrad:
    unit_square = np.array([[0.0, 0.0], [1, 0], [1, 1], [0, 1]])

    def test_unit_square_center(self):
        g = physical_grad(self.unit_square, 0.0, 0.0)
        np.testing.assert_allclose(g[0], [-0.5, 0.5, 0.5, -0.5])
        np.testing.assert_allclose(g[1], [-0.5, -0.5, 0.5, 0.5])

    def test_scaling(self, rng):
        xi, zeta = rng.uniform(-1, 1, 2)
        s = 3.7
        g1 = physical_grad(self.unit_square, xi, zeta)
        g2 = physical_grad(s * self.unit_square, xi, zeta)
        np.testing.assert_allclose(g2, g1 / s, atol=1e-14)

    def test_rectangle_2x1(self):
        rect = np.array([[0.0, 0.0], [2, 0], [2, 1], [0, 1]])
        g_rect = physical_grad(rect, 0.0, 0.0)
        g_unit = physical_grad(self.unit_square, 0.0, 0.0)
        # Doubling the width halves the x-derivatives and leaves y alone.
        np.testing.assert_allclose(g_rect[0], 0.5 * g_unit[0], atol=1e-14)
        np.testing.assert_allclose(g_rect[1], g_unit[1], atol=1e-14)
        # Independent evaluation through the explicit Jacobian inverse.
        dn = shape_grad(0.0, 0.0)
        np.testing.assert_allclose(g_rect, np.linalg.inv(dn @ rect) @ dn, atol=1e-14)

    def test_degenerate_raises(self):
        collapsed = np.zeros((4, 2))
        with pytest.raises(ValueError, match="degenerate"):
            physical_grad(collapsed, 0.0, 0.0)


class TestB0B1:
    def test_single_entry_propagation(self):
        gradN = np.zeros((2, 4))
        gradN[0, 0] = 1.0
        B0, _ = b0_b1(gradN)
        np.testing.assert_allclose(B0[0], [1, 0, 0, 0, 0, 0, 0, 0])
        np.testing.assert_allclose(B0[1], np.zeros(8))
        # The shear row picks up the same gradient on the y component.
        np.testing.assert_allclose(B0[2], [0, 1, 0, 0, 0, 0, 0, 0])

    def test_translation_invariance(self, rng):
        gradN = physical_grad(TestPhysicalGrad.unit_square, *rng.uniform(-1, 1, 2))
        _, B1 = b0_b1(gradN)
        translation = np.tile(rng.standard_normal(2), 4)
        np.testing.assert_allclose(B1 @ translation, 0.0, atol=1e-14)

    def test_pure_stretch_strain(self):
        gradN = physical_grad(TestPhysicalGrad.unit_square, 0.0, 0.0)
        B0, _ = b0_b1(gradN)
        # u_x = x on the unit square: nodal x-displacements equal x coords.
        u = np.zeros(8)
        u[0::2] = TestPhysicalGrad.unit_square[:, 0]
        np.testing.assert_allclose(B0 @ u, [1.0, 0.0, 0.0], atol=1e-14)

    def test_constant_strain_reproduction(self, rng):
        # B0 applied to nodal samples of a linear displacement field returns
        # the analytic constant strain at every quadrature point.
        Xe = np.array([[0.3, -0.1], [1.4, 0.0], [1.5, 0.9], [0.2, 1.1]])
        A = rng.standard_normal((2, 2))
        u = np.zeros(8)
        u[0::2] = Xe @ A[0]
        u[1::2] = Xe @ A[1]
        expected = np.array([A[0, 0], A[1, 1], A[0, 1] + A[1, 0]])
        for xi, zeta in [(-0.3, 0.8), (0.0, 0.0), (0.9, -0.9)]:
            B0, _ = b0_b1(physical_grad(Xe, xi, zeta))
            np.testing.assert_allclose(B0 @ u, expected, atol=1e-12)


class TestElementStiffness:
    def test_symmetry(self):
        K0 = element_stiffness(0.7, 0.4, 0.25)
        np.testing.assert_allclose(K0, K0.T, atol=0.0)

    def test_rigid_body_nullspace(self):
        K0 = element_stiffness(0.5, 0.5, 0.3)
        tx = np.tile([1.0, 0.0], 4)
        ty = np.tile([0.0, 1.0], 4)
        np.testing.assert_allclose(K0 @ tx, 0.0, atol=1e-14)
        np.testing.assert_allclose(K0 @ ty, 0.0, atol=1e-14)

    @pytest.mark.parametrize("a,b,nu", [(0.5, 0.5, 0.3), (1.3, 0.2, 0.45), (0.1, 2.0, -0.5)])
    def test_exactly_three_zero_eigenvalues(self, a, b, nu):
        K0 = element_stiffness(a, b, nu)
        w = np.linalg.eigvalsh(K0)
        thresh = 1e-10 * np.abs(K0).max()
        assert np.sum(np.abs(w) < thresh) == 3

    def test_square_matches_closed_form(self):
        K0 = element_stiffness(0.5, 0.5, 0.3)
        si = np.concatenate([np.arange(j, 8) for j in range(8)])
        sii = np.concatenate([np.full(8 - j, j) for j in range(8)])
        np.testing.assert_allclose(K0[si, sii], _ke_lower_square(0.3), atol=1e-14)

    def test_rectangle_matches_fine_quadrature(self):
        # Independent oracle: 6x6 Gauss quadrature of the same integrand.
        a, b, nu = 0.8, 0.3, 0.3
        Xe = np.array([[-a, -b], [a, -b], [a, b], [-a, b]])
        C = elasticity_matrix(nu)
        pts, wts = np.polynomial.legendre.leggauss(6)
        K_ref = np.zeros((8, 8))
        for xi, wx in zip(pts, wts):
            for zeta, wz in zip(pts, wts):
                B0, _ = b0_b1(physical_grad(Xe, xi, zeta))
                K_ref += wx * wz * a * b * (B0.T @ C @ B0)
        np.testing.assert_allclose(element_stiffness(a, b, nu), K_ref, atol=1e-13)

    def test_invalid_inputs(self):
        with pytest.raises(ValueError):
            element_stiffness(0.5, 0.5, 0.7)
        with pytest.raises(ValueError):
            element_stiffness(-1.0, 0.5, 0.3)


class TestGaussRule:
    def test_weights_sum_to_four(self):
        rule = GaussRule.quad2x2()
        assert rule.w.sum() == pytest.approx(4.0)


class TestGridModel:
    def test_dof_counts_and_ranges(self):
        grid = GridModel.build(4, 3)
        assert grid.nDof == 2 * 5 * 4
        assert grid.cMat.shape == (12, 8)
        assert grid.cMat.min() >= 0 and grid.cMat.max() < grid.nDof

    def test_horizontal_neighbors_share_four_dofs(self):
        grid = GridModel.build(5, 4)
        for row in range(grid.nely):
            for col in range(grid.nelx - 1):
                e1 = grid.elem_numbers[row, col]
                e2 = grid.elem_numbers[row, col + 1]
                shared = np.intersect1d(grid.cMat[e1], grid.cMat[e2])
                assert shared.size == 4

    def test_partitions(self):
        grid = GridModel.build(4, 3, pasS=[0, 1], pasV=[5])
        m = grid.m
        union = np.concatenate([grid.act, grid.pasS, grid.pasV])
        np.testing.assert_array_equal(np.sort(union), np.arange(m))
        full = np.concatenate([grid.free, grid.fixed])
        np.testing.assert_array_equal(np.sort(full), np.arange(grid.nDof))

    def test_overlapping_passives_rejected(self):
        with pytest.raises(ValueError):
            GridModel.build(4, 3, pasS=[1], pasV=[1])

    def test_geometry(self):
        grid = GridModel.build(8, 4, Lx=2.0)
        assert grid.Ly == pytest.approx(1.0)
        assert grid.elem_size == (pytest.approx(0.25), pytest.approx(0.25))


class TestBuildIndices:
    def test_single_element_pattern(self):
        cMat = np.arange(8, dtype=np.int32)[None, :]
        idx = build_indices(cMat)
        si = np.concatenate([np.arange(j, 8) for j in range(8)])
        sii = np.concatenate([np.full(8 - j, j) for j in range(8)])
        np.testing.assert_array_equal(idx.iK[0], si)
        np.testing.assert_array_equal(idx.jK[0], sii)

    def test_odd_pair_subset(self):
        cMat = np.arange(8, dtype=np.int32)[None, :]
        idx = build_indices(cMat)
        odd_pairs = list(zip(idx.iG[0].tolist(), idx.jG[0].tolist()))
        expected = [(0, 0), (2, 0), (4, 0), (6, 0), (2, 2), (4, 2), (6, 2),
                    (4, 4), (6, 4), (6, 6)]
        assert odd_pairs == expected

    def test_even_pairs_shift_by_one(self):
        # The y-dof positions sit one dof up in both row and column.
        cMat = np.arange(8, dtype=np.int32)[None, :]
        idx = build_indices(cMat)
        even_rows = idx.IkG[:, 0] + 1
        even_cols = idx.IkG[:, 1] + 1
        assert np.all(even_rows > even_cols - 1)
        assert np.all(even_rows <= 7)

    def test_descending_pairs(self):
        grid = GridModel.build(3, 2)
        idx = build_indices(grid.cMat)
        assert np.all(idx.Iar[:, 0] >= idx.Iar[:, 1])
        assert np.all(idx.IkG[:, 0] >= idx.IkG[:, 1])

    def test_g_indices_subset_of_k(self):
        grid = GridModel.build(2, 2)
        idx = build_indices(grid.cMat)
        np.testing.assert_array_equal(idx.iG, idx.iK[:, idx.indM])
        np.testing.assert_array_equal(idx.jG, idx.jK[:, idx.indM])
