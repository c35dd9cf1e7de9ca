"""Control parametrizations, the operator H, projections, and the L1 prox."""

import numpy as np
import pytest

from chcontrol.control import (BoxConstraints, Control, HSpec, SparsitySpec,
                               operator_H, operator_H_adjoint, project_box,
                               prox_l1_box, sparsity_value, subgradient_select)
from chcontrol.forward import TimeGrid
from chcontrol.grid import Grid

GRID = Grid((24,), (1.0,))
TG = TimeGrid(1.0, 10)
SHAPE = (TG.steps, GRID.ncells)


class TestExpand:
    def test_scenario2_product_structure(self):
        # unit profile times u(t) = t reproduces t everywhere
        u_series = TG.times()[:-1]
        ctrl = Control.scenario2(np.ones(GRID.ncells), u_series,
                                 np.zeros(SHAPE))
        u1, _ = ctrl.expand(TG, GRID)
        expected = np.broadcast_to(u_series[:, None], SHAPE)
        np.testing.assert_allclose(u1, expected)

    def test_scenario3_null_operator_reduces_to_offset(self):
        rng = np.random.default_rng(0)
        z_tilde = rng.standard_normal(SHAPE)
        w1 = rng.standard_normal(SHAPE)
        ctrl = Control.scenario3(z_tilde, HSpec("null"), w1, np.zeros(SHAPE))
        u1, _ = ctrl.expand(TG, GRID)
        np.testing.assert_array_equal(u1, z_tilde)

    def test_scenario3_delta_kernel_is_identity(self):
        rng = np.random.default_rng(1)
        z_tilde = rng.standard_normal(SHAPE)
        w1 = rng.standard_normal(SHAPE)
        ctrl = Control.scenario3(z_tilde, HSpec("delta"), w1, np.zeros(SHAPE))
        u1, _ = ctrl.expand(TG, GRID)
        np.testing.assert_allclose(u1, z_tilde + w1)

    def test_scenario1_first_component_fixed(self):
        fixed = np.full(SHAPE, 0.7)
        ctrl = Control.scenario1(fixed, np.zeros(SHAPE))
        u1, _ = ctrl.expand(TG, GRID)
        np.testing.assert_array_equal(u1, fixed)
        assert ctrl.first_raw is None
        assert ctrl.first_kind is None

    def test_shape_mismatch_rejected(self):
        ctrl = Control.full(np.zeros((3, GRID.ncells)), np.zeros(SHAPE))
        with pytest.raises(ValueError):
            ctrl.expand(TG, GRID)


class TestOperatorH:
    def test_transpose_identity(self):
        # <H x, y> = <x, H* y> at machine precision, 10 random pairs
        spec = HSpec("gaussian", radius=3, sigma=1.2)
        rng = np.random.default_rng(2)
        for _ in range(10):
            x = rng.standard_normal(SHAPE)
            y = rng.standard_normal(SHAPE)
            lhs = np.sum(operator_H(spec, x, GRID) * y)
            rhs = np.sum(x * operator_H_adjoint(spec, y, GRID))
            scale = np.linalg.norm(x) * np.linalg.norm(y)
            assert abs(lhs - rhs) <= 1e-12 * scale

    def test_normalized_kernel_preserves_constants(self):
        spec = HSpec("gaussian", radius=4, sigma=2.0)
        const = np.full(SHAPE, 3.25)
        out = operator_H(spec, const, GRID)
        np.testing.assert_allclose(out, const, rtol=1e-13)

    def test_delta_kernel_is_identity(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal(SHAPE)
        np.testing.assert_array_equal(operator_H(HSpec("delta"), x, GRID), x)
        np.testing.assert_array_equal(
            operator_H_adjoint(HSpec("delta"), x, GRID), x)

    def test_2d_transpose_identity(self):
        grid2 = Grid((8, 10), (1.0, 1.0))
        spec = HSpec("gaussian", radius=2, sigma=1.0)
        rng = np.random.default_rng(4)
        x = rng.standard_normal((4, grid2.ncells))
        y = rng.standard_normal((4, grid2.ncells))
        lhs = np.sum(operator_H(spec, x, grid2) * y)
        rhs = np.sum(x * operator_H_adjoint(spec, y, grid2))
        assert abs(lhs - rhs) <= 1e-12 * np.linalg.norm(x) * np.linalg.norm(y)

    def test_kernel_wider_than_grid_rejected(self):
        spec = HSpec("gaussian", radius=20, sigma=3.0)
        with pytest.raises(ValueError):
            operator_H(spec, np.zeros(SHAPE), GRID)


class TestProjectBox:
    BOX = BoxConstraints(-1.0, 1.0, -0.5, 0.5)

    def test_interior_points_unchanged(self):
        u = (np.full(SHAPE, 0.3), np.full(SHAPE, -0.2))
        out = project_box(u, self.BOX)
        np.testing.assert_array_equal(out[0], u[0])
        np.testing.assert_array_equal(out[1], u[1])

    def test_clamps_to_bounds(self):
        u = (np.full(SHAPE, 10.0), np.full(SHAPE, -10.0))
        out = project_box(u, self.BOX)
        assert np.all(out[0] == 1.0)
        assert np.all(out[1] == -0.5)

    def test_idempotent(self):
        rng = np.random.default_rng(5)
        u = (rng.uniform(-3, 3, SHAPE), rng.uniform(-3, 3, SHAPE))
        once = project_box(u, self.BOX)
        twice = project_box(once, self.BOX)
        np.testing.assert_array_equal(once[0], twice[0])
        np.testing.assert_array_equal(once[1], twice[1])

    def test_field_valued_thresholds(self):
        # bounds may be fields: clamp against per-cell envelopes
        x = GRID.cell_centers()[0]
        hi = 0.5 + 0.5 * x
        box = BoxConstraints(-hi, hi, -1.0, 1.0)
        u = (np.full(SHAPE, 2.0), np.zeros(SHAPE))
        out = project_box(u, box)
        np.testing.assert_allclose(out[0], np.broadcast_to(hi, SHAPE))

    def test_inverted_box_rejected(self):
        with pytest.raises(ValueError):
            BoxConstraints(1.0, -1.0, 0.0, 0.0)


class TestSparsityValue:
    SPEC = SparsitySpec("l1_full", kappa=1.0)

    def test_zero_control(self):
        assert sparsity_value(self.SPEC, (np.zeros(SHAPE), np.zeros(SHAPE)),
                              TG, GRID) == 0.0

    def test_unit_cylinder_measure(self):
        # |Q| = 1 here, so u1 == 1 integrates to 1
        u = (np.ones(SHAPE), np.zeros(SHAPE))
        assert sparsity_value(self.SPEC, u, TG, GRID) == pytest.approx(1.0)

    def test_triangle_inequality(self):
        rng = np.random.default_rng(6)
        for _ in range(5):
            u = (rng.standard_normal(SHAPE), rng.standard_normal(SHAPE))
            v = (rng.standard_normal(SHAPE), rng.standard_normal(SHAPE))
            s_uv = sparsity_value(self.SPEC, (u[0] + v[0], u[1] + v[1]), TG, GRID)
            s_u = sparsity_value(self.SPEC, u, TG, GRID)
            s_v = sparsity_value(self.SPEC, v, TG, GRID)
            assert s_uv <= s_u + s_v + 1e-12

    def test_none_kind_is_zero(self):
        u = (np.ones(SHAPE), np.ones(SHAPE))
        assert sparsity_value(SparsitySpec("none"), u, TG, GRID) == 0.0

    def test_series_weighting(self):
        # a scenario-2 time series integrates with dt weights only
        u = (np.ones(TG.steps), np.zeros(SHAPE))
        value = sparsity_value(self.SPEC, u, TG, GRID, first_kind="series")
        assert value == pytest.approx(1.0)


class TestSubgradient:
    def test_sign_selection(self):
        u = (np.array([[-3.0, 2.0, 0.0]]), np.array([[0.5, -0.1, 0.0]]))
        lam = subgradient_select(u)
        np.testing.assert_array_equal(lam[0], [[-1.0, 1.0, 0.0]])
        np.testing.assert_array_equal(lam[1], [[1.0, -1.0, 0.0]])

    def test_selection_is_admissible(self):
        rng = np.random.default_rng(7)
        u = (rng.standard_normal(SHAPE), rng.standard_normal(SHAPE))
        lam = subgradient_select(u)
        for l, v in zip(lam, u):
            assert np.all(np.abs(l) <= 1.0)
            np.testing.assert_allclose(l * v, np.abs(v))


class TestProx:
    BOX = BoxConstraints(-1.0, 1.0, -1.0, 1.0)

    def soft(self, value, weight):
        arr = (np.full(SHAPE, value), np.zeros(SHAPE))
        return prox_l1_box(arr, weight, self.BOX)[0][0, 0]

    def test_soft_threshold_arithmetic(self):
        assert self.soft(0.5, 0.2) == pytest.approx(0.3)
        assert self.soft(0.1, 0.2) == 0.0
        assert self.soft(2.0, 0.2) == pytest.approx(1.0)
        assert self.soft(-2.0, 0.2) == pytest.approx(-1.0)

    def test_weight_zero_equals_projection(self):
        rng = np.random.default_rng(8)
        u = (rng.uniform(-3, 3, SHAPE), rng.uniform(-3, 3, SHAPE))
        prox = prox_l1_box(u, 0.0, self.BOX)
        proj = project_box(u, self.BOX)
        np.testing.assert_array_equal(prox[0], proj[0])
        np.testing.assert_array_equal(prox[1], proj[1])

    def test_nonexpansive(self):
        rng = np.random.default_rng(9)
        for _ in range(5):
            a = (rng.uniform(-2, 2, SHAPE), rng.uniform(-2, 2, SHAPE))
            b = (rng.uniform(-2, 2, SHAPE), rng.uniform(-2, 2, SHAPE))
            pa = prox_l1_box(a, 0.3, self.BOX)
            pb = prox_l1_box(b, 0.3, self.BOX)
            for i in range(2):
                assert np.all(np.abs(pa[i] - pb[i]) <= np.abs(a[i] - b[i]) + 1e-15)

    def test_sign_condition_enforced(self):
        bad = BoxConstraints(0.5, 1.0, -1.0, 1.0)  # 0 outside box 1
        u = (np.ones(SHAPE), np.ones(SHAPE))
        with pytest.raises(ValueError):
            prox_l1_box(u, 0.2, bad)
        # weight 0 does not need the sign condition
        prox_l1_box(u, 0.0, bad)

    def test_negative_weight_rejected(self):
        with pytest.raises(ValueError):
            prox_l1_box((np.ones(SHAPE), np.ones(SHAPE)), -0.1, self.BOX)
