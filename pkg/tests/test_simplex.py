"""Tests for simplex grids and piecewise-linear interpolation."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from quickseek.simplex import SimplexGrid

GRIDS = {2: SimplexGrid(2, 21), 3: SimplexGrid(3, 13)}


def _points(dim):
    return st.lists(st.floats(0.0, 1.0), min_size=dim + 1, max_size=dim + 1).filter(
        lambda v: sum(v) > 1e-6).map(lambda v: [x / sum(v) for x in v][:dim])


class TestGrid:
    @pytest.mark.parametrize("dim, res", [(2, 11), (2, 21), (3, 11), (3, 13)])
    def test_index_matches_enumeration(self, dim, res):
        g = SimplexGrid(dim, res)
        np.testing.assert_array_equal(g.index(g.lattice), np.arange(g.size))

    @pytest.mark.parametrize("dim, res, size", [(2, 11, 66), (3, 11, 286)])
    def test_size(self, dim, res, size):
        assert SimplexGrid(dim, res).size == size

    def test_nodes_on_simplex(self):
        g = GRIDS[3]
        assert g.nodes.min() >= 0.0
        assert g.nodes.sum(axis=1).max() <= 1.0 + 1e-12

    @pytest.mark.parametrize("dim, res", [(1, 21), (4, 21), (2, 10), (2, 20.5)])
    def test_invalid(self, dim, res):
        with pytest.raises(ValueError):
            SimplexGrid(dim, res)

    def test_node_index(self):
        g = GRIDS[2]
        assert g.node_index((1.0, 0.0)) == g.index((20, 0))
        with pytest.raises(ValueError):
            g.node_index((0.033, 0.0))


class TestInterpolation:
    @pytest.mark.parametrize("dim", [2, 3])
    def test_exact_at_nodes(self, dim):
        g = GRIDS[dim]
        values = np.random.default_rng(0).random(g.size)
        np.testing.assert_allclose(g.interpolate(values, g.nodes), values, rtol=0, atol=1e-13)

    @pytest.mark.parametrize("dim", [2, 3])
    @given(data=st.data())
    @settings(max_examples=200, deadline=None)
    def test_reproduces_affine_functions(self, dim, data):
        g = GRIDS[dim]
        coef = np.array(data.draw(st.lists(st.floats(-5, 5), min_size=dim + 1, max_size=dim + 1)))
        p = np.array(data.draw(_points(dim)))
        values = g.nodes @ coef[:dim] + coef[dim]
        np.testing.assert_allclose(g.interpolate(values, p[None])[0], p @ coef[:dim] + coef[dim],
                                   atol=1e-9)
        np.testing.assert_allclose(g.interpolate_one(values.tolist(), tuple(p)),
                                   p @ coef[:dim] + coef[dim], atol=1e-9)

    @pytest.mark.parametrize("dim", [2, 3])
    @given(data=st.data())
    @settings(max_examples=200, deadline=None)
    def test_convex_weights_inside_simplex(self, dim, data):
        g = GRIDS[dim]
        p = np.array(data.draw(_points(dim)))
        idx, w = g.locate(p[None])
        assert w.min() >= -1e-12
        np.testing.assert_allclose(w.sum(), 1.0, rtol=1e-12)
        np.testing.assert_allclose(w[0] @ g.nodes[idx[0]], p, atol=1e-9)
        idx1, w1 = g.locate_one(tuple(p))
        got = {i: x for i, x in zip(idx1, w1) if x > 1e-12}
        ref = {i: x for i, x in zip(idx[0], w[0]) if x > 1e-12}
        assert got.keys() == ref.keys()
        np.testing.assert_allclose([got[k] for k in sorted(got)], [ref[k] for k in sorted(ref)], atol=1e-12)

    @given(st.lists(st.floats(0, 1), min_size=3, max_size=3))
    @settings(max_examples=100, deadline=None)
    def test_bounded_by_node_values(self, raw):
        g = GRIDS[3]
        values = np.random.default_rng(1).random(g.size)
        total = sum(raw) + 1.0
        p = np.array(raw) / total
        got = g.interpolate(values, p[None])[0]
        assert values.min() - 1e-12 <= got <= values.max() + 1e-12
