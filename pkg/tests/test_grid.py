import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from app.core.stencils import (
    annulus_region,
    ball_fits,
    ball_region,
    diff,
    diff_array,
    full_region,
    integrate,
    interior_region,
    make_grid,
    outer_layer,
    region_area,
    region_max,
)
from app.models.grid import ScalarField


@pytest.mark.parametrize(
    "origin,extent,n,h",
    [
        ((-1.0, -1.0), (2.0, 2.0), 9, 0.25),
        ((-2.0, -2.0), (4.0, 4.0), 129, 0.03125),
    ],
)
def test_make_grid_spacing(origin, extent, n, h):
    grid = make_grid(origin, extent, n)
    assert grid.h == pytest.approx(h)
    assert grid.node_xy(grid.center_index()) == pytest.approx(grid.center)


@pytest.mark.parametrize(
    "extent,n",
    [((2.0, 2.0), 5), ((2.0, 2.0), 10), ((2.0, 3.0), 33), ((0.0, 0.0), 33)],
)
def test_make_grid_rejects(extent, n):
    with pytest.raises(ValueError):
        make_grid((-1.0, -1.0), extent, n)


def test_scalar_field_rejects_non_finite(grid33):
    values = np.zeros(grid33.shape)
    values[3, 4] = np.nan
    with pytest.raises(ValueError):
        ScalarField(grid=grid33, values=values)


def test_diff_exact_on_quadratics(grid33):
    f = ScalarField.from_function(grid33, lambda x, y: x * x + 3 * x * y - y * y)
    assert np.allclose(diff(f, (2, 0)).values, 2.0, atol=1e-9)
    assert np.allclose(diff(f, (1, 1)).values, 3.0, atol=1e-9)
    assert np.allclose(diff(f, (0, 2)).values, -2.0, atol=1e-9)


def test_diff_exact_on_cubics(grid33):
    f = ScalarField.from_function(grid33, lambda x, y: x ** 3 + x * x * y)
    assert np.allclose(diff(f, (3, 0)).values, 6.0, atol=1e-7)
    assert np.allclose(diff(f, (2, 1)).values, 2.0, atol=1e-7)


@pytest.mark.parametrize("order", [(0, 0), (4, 0), (2, 2), (-1, 2)])
def test_diff_rejects_bad_order(grid33, order):
    with pytest.raises(ValueError):
        diff_array(np.zeros(grid33.shape), grid33.h, order)


def test_diff_second_order_convergence():
    errors = []
    for n in (33, 65):
        grid = make_grid((-1.0, -1.0), (2.0, 2.0), n)
        X, Y = grid.coords()
        approx = diff_array(np.sin(X), grid.h, (1, 0))
        errors.append(float(np.max(np.abs(approx - np.cos(X))[3:-3, 3:-3])))
    assert errors[0] / errors[1] == pytest.approx(4.0, rel=0.05)


@settings(max_examples=30, deadline=None)
@given(
    a=st.floats(-10, 10),
    b=st.floats(-10, 10),
    seed=st.integers(0, 2 ** 16),
)
def test_diff_is_linear(a, b, seed):
    grid = make_grid((-1.0, -1.0), (2.0, 2.0), 17)
    rng = np.random.default_rng(seed)
    f, g = rng.normal(size=(2,) + grid.shape)
    for order in ((1, 0), (1, 1), (0, 2), (2, 1)):
        lhs = diff_array(a * f + b * g, grid.h, order)
        rhs = a * diff_array(f, grid.h, order) + b * diff_array(g, grid.h, order)
        assert np.allclose(lhs, rhs, rtol=1e-10, atol=1e-6)


def test_ball_region_degenerate_and_full(grid33):
    single = ball_region(grid33, grid33.center, 0.0)
    assert single.count == 1
    assert ball_region(grid33, grid33.center, 3.0).count == grid33.n ** 2
    with pytest.raises(ValueError):
        ball_region(grid33, (10.0, 10.0), 0.5)


def test_unit_disk_area_fraction():
    grid = make_grid((-1.0, -1.0), (2.0, 2.0), 129)
    disk = ball_region(grid, (0.0, 0.0), 1.0)
    assert disk.count / grid.n ** 2 == pytest.approx(np.pi / 4, rel=0.02)


def test_integrate(grid33):
    full = full_region(grid33)
    ones = ScalarField(grid=grid33, values=np.ones(grid33.shape))
    assert integrate(ones, full) == pytest.approx(4.0, rel=1e-12)
    assert integrate(ones, full) / region_area(full) == 1.0
    disk = ball_region(grid33, (0.0, 0.0), 0.7)
    odd = ScalarField.from_function(grid33, lambda x, y: x)
    assert abs(integrate(odd, disk)) < 1e-14

    fine = make_grid((-1.0, -1.0), (2.0, 2.0), 129)
    x2 = ScalarField.from_function(fine, lambda x, y: x * x)
    assert integrate(x2, full_region(fine)) == pytest.approx(4.0 / 3.0, abs=1e-3)


def test_outer_layer_is_the_ring(grid33):
    region = interior_region(grid33, 3)
    ring = outer_layer(region)
    assert ring[3, 3] and ring[3, 15] and not ring[4, 4]
    assert ring.sum() == 4 * (grid33.n - 6 - 1)


def test_ball_fits_margin(grid33):
    assert ball_fits(grid33, (0.0, 0.0), 0.8)
    assert not ball_fits(grid33, (0.0, 0.0), 0.9)
    assert ball_fits(grid33, (0.0, 0.0), 1.0, margin=0)


def test_region_max_reports_first_location(grid33):
    values = np.zeros(grid33.shape)
    values[5, 7] = values[9, 2] = 1.0
    best, loc = region_max(values, full_region(grid33))
    assert best == 1.0 and loc == (5, 7)


def test_annulus_region(grid33):
    ring = annulus_region(grid33, (0.0, 0.0), 0.25, 0.5)
    disk = ball_region(grid33, (0.0, 0.0), 0.5)
    assert 0 < ring.count < disk.count
    assert ring.intersect(disk).count == ring.count
    assert not ring.mask[grid33.center_index()]
    with pytest.raises(ValueError):
        annulus_region(grid33, (0.0, 0.0), 0.5, 0.25)
