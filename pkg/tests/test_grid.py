import numpy as np
import pytest
from hypothesis import given, strategies as st

from nufi.grid import (AxisSpec, PhaseSpaceGrid, node_coordinate,
                       velocity_quadrature_weights, wrap_periodic)

X_AX = AxisSpec(0.0, 4.0 * np.pi, 256, "periodic")
V_AX = AxisSpec(-6.0, 6.0, 256, "bounded")
GRID = PhaseSpaceGrid((X_AX,), (V_AX,))


class TestAxisSpec:
    def test_periodic_spacing_excludes_endpoint(self):
        assert X_AX.h == pytest.approx(4.0 * np.pi / 256)
        nodes = X_AX.nodes()
        assert nodes.size == 256
        assert nodes[-1] < X_AX.hi

    def test_bounded_includes_endpoints(self):
        nodes = V_AX.nodes()
        assert nodes[0] == -6.0 and nodes[-1] == 6.0
        assert V_AX.h == pytest.approx(12.0 / 255)

    def test_validation(self):
        with pytest.raises(ValueError):
            AxisSpec(1.0, 0.0, 16)
        with pytest.raises(ValueError):
            AxisSpec(0.0, 1.0, 1)
        with pytest.raises(ValueError):
            AxisSpec(0.0, 1.0, 8, "weird")


class TestNodeCoordinate:
    def test_first_node(self):
        assert node_coordinate(GRID, (0, 0))[0] == 0.0

    def test_midpoint_by_symmetry(self):
        x, _ = node_coordinate(GRID, (128, 0))
        assert x == pytest.approx(2.0 * np.pi, rel=1e-15)

    def test_bounded_endpoint(self):
        _, v = node_coordinate(GRID, (0, 255))
        assert v == 6.0

    def test_out_of_range(self):
        with pytest.raises(IndexError):
            node_coordinate(GRID, (256, 0))
        with pytest.raises(IndexError):
            node_coordinate(GRID, (0,))


class TestWrap:
    def test_one_period_shift(self):
        assert wrap_periodic(4.0 * np.pi + 0.5, X_AX) == pytest.approx(0.5, abs=1e-14)

    def test_negative_wrap(self):
        assert wrap_periodic(-0.5, X_AX) == pytest.approx(4.0 * np.pi - 0.5, rel=1e-15)

    def test_identity_inside(self):
        assert wrap_periodic(2.0 * np.pi, X_AX) == 2.0 * np.pi

    @given(st.floats(min_value=-1e6, max_value=1e6, allow_nan=False))
    def test_idempotent_and_in_range(self, x):
        y = wrap_periodic(x, X_AX)
        assert X_AX.lo <= y < X_AX.hi
        assert wrap_periodic(y, X_AX) == y

    def test_nearest_index_roundtrip(self):
        for ax in (X_AX, V_AX):
            nodes = ax.nodes()
            idx = ax.nearest_index(nodes)
            assert np.array_equal(idx, np.arange(ax.count))


class TestQuadrature:
    def test_interval_measure(self):
        w = velocity_quadrature_weights(GRID)
        assert w.sum() == pytest.approx(12.0, rel=1e-14)

    def test_product_measure(self):
        g2 = PhaseSpaceGrid(
            (AxisSpec(0.0, 1.0, 8, "periodic"), AxisSpec(0.0, 1.0, 8, "periodic")),
            (AxisSpec(-6.0, 6.0, 64), AxisSpec(-6.0, 6.0, 64)),
        )
        w = velocity_quadrature_weights(g2)
        assert w.sum() == pytest.approx(144.0, rel=1e-13)

    def test_constant_normalization(self):
        w = velocity_quadrature_weights(GRID)
        f = np.full(256, 1.0 / 12.0)
        assert w @ f == pytest.approx(1.0, rel=1e-14)

    def test_constant_exact_for_any_constant(self):
        w = velocity_quadrature_weights(GRID)
        c = 0.731
        assert w @ np.full(256, c) == pytest.approx(c * 12.0, rel=1e-14)

    def test_midpoint_rule_is_bare_h(self):
        w = velocity_quadrature_weights(GRID, rule="midpoint")
        assert np.all(w == V_AX.h)

    def test_unknown_rule(self):
        with pytest.raises(ValueError):
            velocity_quadrature_weights(GRID, rule="simpson")


class TestPhaseSpaceGrid:
    def test_total_points(self):
        assert GRID.total_points == 256 * 256

    def test_dimension_pairing(self):
        with pytest.raises(ValueError):
            PhaseSpaceGrid((X_AX,), (V_AX, V_AX))

    def test_velocity_must_be_bounded(self):
        with pytest.raises(ValueError):
            PhaseSpaceGrid((X_AX,), (AxisSpec(-6.0, 6.0, 16, "periodic"),))
