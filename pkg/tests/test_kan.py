import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pdforecast.kan import (BSplineConfig, KanLayer, bspline_basis, build_kan,
                            param_count)


# ---------------------------------------------------------------------------
# Basis


def test_knot_vector_uniform_extended():
    cfg = BSplineConfig(grid_size=4, spline_order=2, grid_min=0.0, grid_max=4.0)
    np.testing.assert_allclose(cfg.knots(),
                               [-2, -1, 0, 1, 2, 3, 4, 5, 6], atol=1e-12)
    assert cfg.n_basis == 6


def test_degree_zero_basis_is_one_hot():
    cfg = BSplineConfig(grid_size=4, spline_order=0, grid_min=0.0, grid_max=4.0)
    b = bspline_basis(np.array([0.5, 1.5, 3.99]), cfg)
    np.testing.assert_array_equal(b, np.eye(4)[[0, 1, 3]])


def test_partition_of_unity(rng):
    cfg = BSplineConfig(grid_size=10, spline_order=3)
    x = rng.uniform(-3.0, 3.0, size=1000)
    b = bspline_basis(x, cfg)
    np.testing.assert_allclose(b.sum(axis=-1), 1.0, atol=1e-9)
    assert (b >= -1e-12).all()


def test_local_support_at_most_k_plus_1():
    cfg = BSplineConfig(grid_size=10, spline_order=3)
    x = np.linspace(-3.0, 3.0, 997)
    b = bspline_basis(x, cfg)
    assert ((b > 1e-12).sum(axis=-1) <= cfg.spline_order + 1).all()


def test_cardinal_cubic_interior_knot_value():
    # the cubic cardinal B-spline takes value 4/6 at its central knot
    cfg = BSplineConfig(grid_size=10, spline_order=3)
    t = cfg.knots()
    k = cfg.spline_order
    # interior knot t[k+5] = 0.0; the basis centered there peaks at 4/6
    b = bspline_basis(np.array([0.0]), cfg)[0]
    assert b.max() == pytest.approx(4.0 / 6.0, abs=1e-9)
    assert t[k + 5] == pytest.approx(0.0, abs=1e-12)


def test_basis_matches_scipy(rng):
    scipy_interp = pytest.importorskip("scipy.interpolate")
    cfg = BSplineConfig(grid_size=8, spline_order=3)
    t = cfg.knots()
    x = rng.uniform(-3.0, 3.0, size=200)
    ours = bspline_basis(x, cfg)
    for j in range(cfg.n_basis):
        c = np.zeros(cfg.n_basis)
        c[j] = 1.0
        ref = scipy_interp.BSpline(t, c, cfg.spline_order, extrapolate=False)(x)
        np.testing.assert_allclose(ours[:, j], np.nan_to_num(ref), atol=1e-12)


def test_derivative_matches_finite_differences():
    cfg = BSplineConfig(grid_size=6, spline_order=3)
    x = np.linspace(-2.9, 2.9, 50)
    _, d = bspline_basis(x, cfg, with_derivative=True)
    eps = 1e-6
    bp = bspline_basis(x + eps, cfg)
    bm = bspline_basis(x - eps, cfg)
    np.testing.assert_allclose(d, (bp - bm) / (2 * eps), atol=1e-6)


def test_out_of_domain_clamped_with_zero_derivative():
    cfg = BSplineConfig(grid_size=5, spline_order=3)
    b_out, d_out = bspline_basis(np.array([-10.0, 10.0]), cfg,
                                 with_derivative=True)
    b_edge = bspline_basis(np.array([-3.0, 3.0]), cfg)
    np.testing.assert_allclose(b_out, b_edge, atol=1e-12)
    assert (d_out == 0.0).all()


# ---------------------------------------------------------------------------
# Layers and network


def test_kan_layer_param_shapes(rng):
    cfg = BSplineConfig(grid_size=10, spline_order=3)
    layer = KanLayer(27, 45, cfg, rng)
    assert layer.params["spline_coeffs"].shape == (45, 27, 13)
    assert layer.params["base_weight"].shape == (45, 27)
    assert layer.params["spline_scaler"].shape == (45, 27)
    # G + k + 2 parameters per edge
    assert layer.param_count() == 45 * 27 * (10 + 3 + 2)


def test_kan_layer_constant_spline_oracle(rng):
    # coefficients all 1 with partition of unity: each edge spline is 1,
    # so with base weights 0 and scalers 1 every output equals in_dim
    cfg = BSplineConfig(grid_size=5, spline_order=3)
    layer = KanLayer(4, 3, cfg, rng)
    layer.params["spline_coeffs"][:] = 1.0
    layer.params["base_weight"][:] = 0.0
    layer.params["spline_scaler"][:] = 1.0
    out = layer.forward(rng.uniform(-2.0, 2.0, size=(6, 4)))
    np.testing.assert_allclose(out, 4.0, atol=1e-9)


def test_kan_layer_silu_base_path(rng):
    cfg = BSplineConfig(grid_size=5, spline_order=3)
    layer = KanLayer(2, 2, cfg, rng)
    layer.params["spline_scaler"][:] = 0.0
    x = rng.uniform(-2.0, 2.0, size=(5, 2))
    silu = x / (1.0 + np.exp(-x))
    np.testing.assert_allclose(layer.forward(x),
                               silu @ layer.params["base_weight"].T, atol=1e-12)


def test_build_kan_reference_total(rng):
    cfg = BSplineConfig(grid_size=10, spline_order=3)
    net = build_kan([27, 45, 91, 183], cfg, seed=0)
    assert param_count(net) == 330181
    stages = net.stage_counts()
    assert [c for _, _, c in stages] == [18225, 61425, 249795, 736]


def test_kan_network_shapes(rng):
    cfg = BSplineConfig(grid_size=4, spline_order=3)
    net = build_kan([5, 4, 3], cfg, seed=1)
    out = net.forward(rng.uniform(-2.0, 2.0, size=(7, 5)))
    assert out.shape == (7, 4)


@given(st.integers(min_value=0, max_value=10_000))
@settings(max_examples=40, deadline=None)
def test_partition_of_unity_property(seed):
    rng = np.random.default_rng(seed)
    g = int(rng.integers(1, 12))
    k = int(rng.integers(0, 4))
    cfg = BSplineConfig(grid_size=g, spline_order=k)
    x = rng.uniform(-3.0, 3.0, size=64)
    b = bspline_basis(x, cfg)
    assert np.abs(b.sum(axis=-1) - 1.0).max() < 1e-9
