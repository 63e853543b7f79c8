import math

import numpy as np
import pytest

from buckopt.design import (
    ContinuationSchedule,
    DensityFilter,
    build_fields,
    project,
    project_derivs,
    volume_preserving_eta,
)
from buckopt.grid import GridModel


def dense_filter_matrix(filt: DensityFilter, m: int) -> np.ndarray:
    """Column-by-column dense image of the filter operator."""
    F = np.zeros((m, m))
    for i in range(m):
        e = np.zeros(m)
        e[i] = 1.0
        F[:, i] = filt.apply(e)
    return F


class TestDensityFilter:
    def test_uniform_preserved_neumann(self):
        filt = DensityFilter(7, 5, rmin=2.5, bc="N")
        x = np.full(35, 0.5)
        np.testing.assert_allclose(filt.apply(x), 0.5, atol=1e-14)

    def test_rmin_one_is_identity(self, rng):
        filt = DensityFilter(6, 4, rmin=1.0, bc="N")
        x = rng.uniform(0, 1, 24)
        np.testing.assert_allclose(filt.apply(x), x, atol=0.0)
        np.testing.assert_allclose(filt.adjoint(x), x, atol=0.0)

    def test_impulse_response_matches_hat_weights(self):
        # Direct evaluation of the hat-weight formula on a 5x5 grid, rmin = 2.
        nel = 5
        filt = DensityFilter(nel, nel, rmin=2.0, bc="N")
        center = 2 * nel + 2  # element (2, 2) in column-major numbering
        x = np.zeros(nel * nel)
        x[center] = 1.0
        resp = filt.apply(x)
        coords = np.array([(e % nel, e // nel) for e in range(nel * nel)], dtype=float)
        expected = np.zeros(nel * nel)
        for e in range(nel * nel):
            h_ei = max(0.0, 2.0 - np.linalg.norm(coords[e] - coords[center]))
            norm = sum(
                max(0.0, 2.0 - np.linalg.norm(coords[e] - coords[i]))
                for i in range(nel * nel)
            )
            expected[e] = h_ei / norm
        np.testing.assert_allclose(resp, expected, atol=1e-13)
        assert resp.sum() == pytest.approx(1.0, abs=1e-13)

    def test_adjoint_identity(self, rng):
        filt = DensityFilter(8, 6, rmin=2.4, bc="N")
        x = rng.uniform(0, 1, 48)
        s = rng.standard_normal(48)
        assert filt.apply(x) @ s == pytest.approx(x @ filt.adjoint(s), rel=1e-12)

    def test_adjoint_identity_dirichlet(self, rng):
        filt = DensityFilter(8, 6, rmin=3.0, bc="D")
        x = rng.uniform(0, 1, 48)
        s = rng.standard_normal(48)
        assert filt.apply(x) @ s == pytest.approx(x @ filt.adjoint(s), rel=1e-12)

    def test_adjoint_matches_dense_transpose(self, rng):
        filt = DensityFilter(6, 6, rmin=2.0, bc="N")
        F = dense_filter_matrix(filt, 36)
        s = np.zeros(36)
        s[14] = 1.0
        np.testing.assert_allclose(filt.adjoint(s), F.T @ s, atol=1e-13)

    def test_dirichlet_pulls_boundary_down(self):
        filt = DensityFilter(7, 7, rmin=3.0, bc="D")
        x = np.ones(49)
        xt = filt.apply(x).reshape((7, 7), order="F")
        assert xt[3, 3] == pytest.approx(1.0, abs=1e-12)  # full interior stencil
        assert xt[0, 0] < 0.7  # corner loses most of its stencil

    def test_invalid_args(self):
        with pytest.raises(ValueError):
            DensityFilter(4, 4, rmin=0.0)
        with pytest.raises(ValueError):
            DensityFilter(4, 4, rmin=2.0, bc="X")


class TestProjection:
    @pytest.mark.parametrize("eta,beta", [(0.3, 1.0), (0.5, 6.0), (0.8, 12.0)])
    def test_endpoints(self, eta, beta):
        assert project(np.array([0.0]), eta, beta)[0] == pytest.approx(0.0, abs=1e-15)
        assert project(np.array([1.0]), eta, beta)[0] == pytest.approx(1.0, abs=1e-14)

    def test_midpoint_symmetry(self):
        assert project(np.array([0.5]), 0.5, 7.3)[0] == pytest.approx(0.5, rel=1e-14)

    def test_scalar_value(self):
        # Independent scalar evaluation with math.tanh.
        beta, eta, v = 6.0, 0.5, 0.75
        expected = (math.tanh(beta * eta) + math.tanh(beta * (v - eta))) / (
            math.tanh(beta * eta) + math.tanh(beta * (1 - eta))
        )
        assert project(np.array([v]), eta, beta)[0] == pytest.approx(expected, rel=1e-15)

    def test_derivatives_against_central_differences(self, rng):
        beta, eta = 6.0, 0.5
        v = rng.uniform(0.05, 0.95, 20)
        dxt, deta = project_derivs(v, eta, beta)
        h = 1e-6
        fd_x = (project(v + h, eta, beta) - project(v - h, eta, beta)) / (2 * h)
        fd_e = (project(v, eta + h, beta) - project(v, eta - h, beta)) / (2 * h)
        np.testing.assert_allclose(dxt, fd_x, rtol=1e-6)
        np.testing.assert_allclose(deta, fd_e, rtol=1e-5, atol=1e-10)

    def test_monotone_and_bounded(self, rng):
        v = np.sort(rng.uniform(0, 1, 50))
        out = project(v, 0.4, 8.0)
        assert np.all(np.diff(out) >= -1e-14)
        assert out.min() >= 0.0 and out.max() <= 1.0

    def test_derivative_nonnegative(self, rng):
        v = rng.uniform(0, 1, 50)
        dxt, _ = project_derivs(v, 0.35, 9.0)
        assert np.all(dxt >= 0.0)

    def test_small_beta_close_to_identity(self, rng):
        v = rng.uniform(0, 1, 100)
        assert np.max(np.abs(project(v, 0.5, 1e-6) - v)) < 1e-5


class TestVolumePreservingEta:
    def test_symmetric_bimodal(self):
        x = np.array([0.2, 0.8, 0.2, 0.8])
        eta = volume_preserving_eta(x, beta=6.0, target_mean=0.5)
        assert eta == pytest.approx(0.5, abs=1e-9)

    def test_beta_zero_convention(self):
        assert volume_preserving_eta(np.array([0.3, 0.6]), 0.0, 0.4) == 0.5

    def test_uniform_field_scalar_oracle(self):
        # Scalar bisection on project(0.3, eta, 6) = 0.3 done independently.
        beta, target = 6.0, 0.3
        lo, hi = 0.0, 1.0
        for _ in range(100):
            mid = 0.5 * (lo + hi)
            val = (math.tanh(beta * mid) + math.tanh(beta * (0.3 - mid))) / (
                math.tanh(beta * mid) + math.tanh(beta * (1 - mid))
            )
            if val > target:
                lo = mid
            else:
                hi = mid
        eta_ref = 0.5 * (lo + hi)
        x = np.full(12, 0.3)
        eta = volume_preserving_eta(x, beta, target)
        assert eta == pytest.approx(eta_ref, abs=1e-8)
        assert project(x, eta, beta)[0] == pytest.approx(0.3, abs=1e-9)

    def test_projected_mean_hits_target(self, rng):
        x = rng.uniform(0, 1, 200)
        target = 0.45
        eta = volume_preserving_eta(x, 8.0, target)
        assert np.mean(project(x, eta, 8.0)) == pytest.approx(target, abs=1e-9)


class TestContinuation:
    def test_before_start_unchanged(self):
        cnt = ContinuationSchedule(150, 12, 25, 2)
        value, changed = cnt.apply(2.0, 149)
        assert value == 2.0 and not changed

    def test_first_trigger(self):
        cnt = ContinuationSchedule(150, 12, 25, 2)
        value, changed = cnt.apply(2.0, 150)
        assert value == 4.0 and changed

    def test_period_and_ceiling(self):
        cnt = ContinuationSchedule(10, 5.0, 5, 1.5)
        value = 2.0
        history = []
        for loop in range(1, 40):
            value, _ = cnt.apply(value, loop)
            history.append(value)
        assert max(history) == 5.0
        assert history[-1] == 5.0
        # Monotone non-decreasing ramp.
        assert all(b >= a for a, b in zip(history, history[1:]))

    def test_between_triggers_unchanged(self):
        cnt = ContinuationSchedule(10, 5.0, 5, 1.5)
        value, changed = cnt.apply(2.0, 12)
        assert value == 2.0 and not changed


class TestPipeline:
    def _grid(self):
        return GridModel.build(6, 5, pasS=[0], pasV=[29])

    def test_passive_overrides(self, rng):
        grid = self._grid()
        filt = DensityFilter(6, 5, rmin=2.0)
        x = rng.uniform(0, 1, 30)
        fields = build_fields(x, filt, grid, ft=2, eta=0.5, beta=6.0)
        assert fields.xPhys[0] == 1.0
        assert fields.xPhys[29] == 0.0

    def test_ft1_no_projection(self, rng):
        grid = self._grid()
        filt = DensityFilter(6, 5, rmin=2.0)
        x = rng.uniform(0, 1, 30)
        fields = build_fields(x, filt, grid, ft=1, eta=0.5, beta=6.0)
        np.testing.assert_allclose(
            fields.xPhys[grid.act], fields.xTilde[grid.act], atol=0.0
        )

    def test_ft3_preserves_filtered_mean(self, rng):
        grid = GridModel.build(6, 5)
        filt = DensityFilter(6, 5, rmin=2.0)
        x = rng.uniform(0, 1, 30)
        fields = build_fields(x, filt, grid, ft=3, eta=0.5, beta=8.0)
        assert np.mean(fields.xPhys) == pytest.approx(np.mean(fields.xTilde), abs=1e-9)

    def test_fields_in_unit_interval(self, rng):
        grid = self._grid()
        filt = DensityFilter(6, 5, rmin=2.5)
        x = rng.uniform(0, 1, 30)
        for ft in (1, 2, 3):
            fields = build_fields(x, filt, grid, ft=ft, eta=0.5, beta=4.0)
            for arr in (fields.xTilde, fields.xPhys):
                assert arr.min() >= -1e-12 and arr.max() <= 1 + 1e-12

    def test_pipeline_monotonicity(self, rng):
        # Raising one design variable never lowers any physical density.
        grid = GridModel.build(5, 4)
        filt = DensityFilter(5, 4, rmin=2.0)
        x = rng.uniform(0.1, 0.9, 20)
        base = build_fields(x, filt, grid, ft=2, eta=0.5, beta=6.0).xPhys
        for e in rng.integers(0, 20, size=6):
            xp = x.copy()
            xp[e] = min(1.0, xp[e] + 0.05)
            bumped = build_fields(xp, filt, grid, ft=2, eta=0.5, beta=6.0).xPhys
            assert np.all(bumped >= base - 1e-12)

    def test_chain_rule_directional_derivative(self, rng):
        # Full pipeline x -> xPhys checked against central differences.
        grid = GridModel.build(5, 4)
        filt = DensityFilter(5, 4, rmin=2.0)
        x = rng.uniform(0.2, 0.8, 20)
        d = rng.standard_normal(20)
        h = 1e-6
        eta, beta = 0.5, 6.0
        fp = build_fields(x + h * d, filt, grid, 2, eta, beta).xPhys
        fm = build_fields(x - h * d, filt, grid, 2, eta, beta).xPhys
        fd = (fp - fm) / (2 * h)
        fields = build_fields(x, filt, grid, 2, eta, beta)
        analytic = fields.dprj * filt.apply(d)
        np.testing.assert_allclose(analytic, fd, rtol=1e-5, atol=1e-10)
