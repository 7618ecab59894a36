import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from app.core.stencils import interior_region, make_grid
from app.models.analytic import QuadraticPotential, QuadraticSinePotential
from app.models.grid import ScalarField
from app.models.phase import PhaseField
from app.models.potential import PotentialField
from app.services.geometry_service import geometry_service
from app.services.solver_service import solver_service

entries = st.floats(-50, 50, allow_nan=False, allow_infinity=False)


@settings(max_examples=200, deadline=None)
@given(h11=entries, h12=entries, h22=entries)
def test_spectrum_reconstructs_hessian(h11, h12, h22):
    spec = geometry_service.spectrum_from_components(h11, h12, h22)
    assert spec.lambda1 >= spec.lambda2
    c, s = np.cos(spec.angle), np.sin(spec.angle)
    e, f = np.array([c, s]), np.array([-s, c])
    H = spec.lambda1 * np.outer(e, e) + spec.lambda2 * np.outer(f, f)
    scale = 1.0 + abs(h11) + abs(h12) + abs(h22)
    assert np.allclose(H, [[h11, h12], [h12, h22]], atol=1e-12 * scale)


@settings(max_examples=200, deadline=None)
@given(h11=entries, h12=entries, h22=entries)
def test_metric_identities(h11, h12, h22):
    spec = geometry_service.spectrum_from_components(h11, h12, h22)
    m = geometry_service.metric_data(spec)
    det = m.sigma1 ** 2 + (1.0 - m.sigma2) ** 2
    assert m.V ** 2 == pytest.approx(det, rel=1e-10)
    assert m.b == pytest.approx(np.log(m.V), abs=1e-12 * (1.0 + abs(m.b)))

    H = np.array([[h11, h12], [h12, h22]])
    g11, g12, g22 = geometry_service.inverse_metric(h11, h12, h22)
    product = np.array([[g11, g12], [g12, g22]]) @ (np.eye(2) + H @ H)
    assert np.allclose(product, np.eye(2), atol=1e-9)


def test_hessian_spectrum_symmetrizes():
    spec = geometry_service.hessian_spectrum(np.array([[2.0, 1.0], [3.0, 2.0]]))
    assert spec.lambda1 == pytest.approx(4.0)
    assert spec.lambda2 == pytest.approx(0.0)
    with pytest.raises(ValueError):
        geometry_service.hessian_spectrum(np.zeros((3, 3)))


def test_spectrum_rejects_non_finite():
    with pytest.raises(ValueError):
        geometry_service.spectrum_from_components(np.inf, 0.0, 1.0)


def test_equal_eigenvalues_give_zero_angle():
    spec = geometry_service.spectrum_from_components(2.0, 0.0, 2.0)
    assert spec.angle == 0.0
    assert geometry_service.frame_angle(spec) == 0.0


def test_rotation_by_zero_is_identity():
    out = geometry_service.rotate_third_derivatives(1.0, 2.0, 3.0, 4.0, 0.0)
    assert np.allclose(out, (1.0, 2.0, 3.0, 4.0))


def test_rotation_by_quarter_turn_swaps_axes():
    # e1 = (0, 1), e2 = (-1, 0): T(e1,e1,e1) = t222, T(e2,e2,e2) = -t111
    t111, t112, t122, t222 = geometry_service.rotate_third_derivatives(1.0, 2.0, 3.0, 4.0, 0.5 * np.pi)
    assert t111 == pytest.approx(4.0)
    assert t112 == pytest.approx(-3.0)
    assert t122 == pytest.approx(2.0)
    assert t222 == pytest.approx(-1.0)


def test_frame_fields_of_quadratic(grid33):
    u = solver_service.potential_from_analytic(QuadraticPotential(a11=2.0, a12=0.5, a22=-1.0), grid33)
    frame = geometry_service.frame_fields(u)
    assert np.allclose(frame.frame.h111, 0.0, atol=1e-8)
    assert np.allclose(frame.frame.h122, 0.0, atol=1e-8)
    assert np.allclose(frame.metric.sigma1, 1.0, atol=1e-9)
    assert np.allclose(frame.metric.sigma2, -2.25, atol=1e-9)
    assert geometry_service.frame_fields(u, with_frame=False).frame is None


def test_metric_operators_on_constants(saddle):
    u, phase = saddle
    const = ScalarField(grid=u.grid, values=np.full(u.grid.shape, 3.0))
    assert np.all(geometry_service.laplace_beltrami(const, u, phase).values == 0.0)
    assert np.all(geometry_service.grad_norm_g(const, u).values == 0.0)


def test_grad_norm_of_linear_field(saddle):
    u, _ = saddle
    x = ScalarField.from_function(u.grid, lambda x, y: x)
    # saddle Hessian diag(1/2, -1/2): g^11 = 1/(1 + 1/4)
    assert np.allclose(geometry_service.grad_norm_g(x, u).values, 0.8, atol=1e-9)


def test_volume_field_matches_closed_form(saddle):
    u, _ = saddle
    V = geometry_service.volume_field(u).values
    assert np.allclose(V, 1.25, atol=1e-12)
    assert np.allclose(geometry_service.b_field(u).values, np.log(1.25), atol=1e-12)


def test_hessian_spectrum_at_large_scale():
    rng = np.random.default_rng(7)
    a, b, d = rng.uniform(-1e6, 1e6, (3, 100000))
    spec = geometry_service.spectrum_from_components(a, b, d)
    c, s = np.cos(spec.angle), np.sin(spec.angle)
    r11 = spec.lambda1 * c * c + spec.lambda2 * s * s
    r12 = (spec.lambda1 - spec.lambda2) * c * s
    r22 = spec.lambda1 * s * s + spec.lambda2 * c * c
    scale = np.maximum.reduce([np.abs(a), np.abs(b), np.abs(d), np.ones_like(a)])
    defect = np.max(np.abs(np.stack([r11 - a, r12 - b, r22 - d])) / scale)
    assert defect <= 1e-13
    H = np.array([[1e6, 3e5], [3e5, -2e6]])
    spec = geometry_service.hessian_spectrum(H)
    lo, hi = np.linalg.eigvalsh(H)
    assert spec.lambda1 == pytest.approx(hi, rel=1e-13)
    assert spec.lambda2 == pytest.approx(lo, rel=1e-13)


def test_second_fundamental_form_of_cubic():
    # u = x³/6 at x = 1: λ = (1, 0), u_111 = 1, g^11 = 1/2
    spec = geometry_service.spectrum_from_components(1.0, 0.0, 0.0)
    frame = geometry_service.second_fundamental_form((1.0, 0.0, 0.0, 0.0), spec)
    assert float(frame.h111) == pytest.approx(2.0 ** -1.5, rel=1e-14)
    assert float(frame.h222) == 0.0

    grid = make_grid((0.0, -1.0), (2.0, 2.0), 33)
    u = PotentialField.from_values(grid, grid.coords()[0] ** 3 / 6.0)
    fields = geometry_service.frame_fields(u)
    i, j = grid.center_index()
    assert grid.node_xy((i, j)) == (1.0, 0.0)
    assert fields.frame.h111[i, j] == pytest.approx(2.0 ** -1.5, rel=1e-9)
    assert fields.frame.h112[i, j] == pytest.approx(0.0, abs=1e-9)


def _rotated_quarter(a):
    # f(y, −x) on the symmetric grid: out[i, j] = a[j, n − 1 − i]
    return np.rot90(a)


def test_metric_operators_invariant_under_quarter_turn(grid33):
    X, Y = grid33.coords()
    u = PotentialField.from_values(grid33, QuadraticSinePotential(a12=0.3, eps=0.2).value(X, Y))
    v = ScalarField(grid=grid33, values=np.sin(X) * np.cos(2.0 * Y) + X * Y)
    c = np.array([0.1, 0.2])
    phase = _linear_phase(grid33, c)
    # DΘ of the turned phase is Q·c with Q the quarter turn
    turned_phase = _linear_phase(grid33, np.array([-c[1], c[0]]))
    turned_u = PotentialField.from_values(grid33, _rotated_quarter(u.values))
    turned_v = ScalarField(grid=grid33, values=_rotated_quarter(v.values))

    inner = interior_region(grid33).mask
    lb = geometry_service.laplace_beltrami(v, u, phase).values
    lb_turned = geometry_service.laplace_beltrami(turned_v, turned_u, turned_phase).values
    assert np.allclose(lb_turned[inner], _rotated_quarter(lb)[inner], rtol=1e-12, atol=1e-12)
    gn = geometry_service.grad_norm_g(v, u).values
    gn_turned = geometry_service.grad_norm_g(turned_v, turned_u).values
    assert np.allclose(gn_turned[inner], _rotated_quarter(gn)[inner], rtol=1e-12, atol=1e-12)


def test_metric_operators_under_generic_rotation(grid65):
    # rotate u, v and Θ by 30°; the origin is a fixed node, so values there agree to O(h²)
    angle = np.pi / 6.0
    cs, sn = np.cos(angle), np.sin(angle)
    X, Y = grid65.coords()
    Xb, Yb = cs * X + sn * Y, -sn * X + cs * Y
    potential = QuadraticSinePotential(a12=0.3, eps=0.2)

    def v_func(x, y):
        return np.sin(x) * np.cos(2.0 * y) + x * y

    c = np.array([0.1, 0.2])
    u = PotentialField.from_values(grid65, potential.value(X, Y))
    v = ScalarField(grid=grid65, values=v_func(X, Y))
    turned_u = PotentialField.from_values(grid65, potential.value(Xb, Yb))
    turned_v = ScalarField(grid=grid65, values=v_func(Xb, Yb))
    phase = _linear_phase(grid65, c)
    turned_phase = _linear_phase(grid65, np.array([cs * c[0] - sn * c[1], sn * c[0] + cs * c[1]]))

    i, j = grid65.center_index()
    lb = geometry_service.laplace_beltrami(v, u, phase).values[i, j]
    lb_turned = geometry_service.laplace_beltrami(turned_v, turned_u, turned_phase).values[i, j]
    assert lb_turned == pytest.approx(lb, abs=50.0 * grid65.h ** 2)
    gn = geometry_service.grad_norm_g(v, u).values[i, j]
    gn_turned = geometry_service.grad_norm_g(turned_v, turned_u).values[i, j]
    assert gn_turned == pytest.approx(gn, abs=50.0 * grid65.h ** 2)


def _linear_phase(grid, c):
    X, Y = grid.coords()
    return PhaseField(
        theta=ScalarField(grid=grid, values=c[0] * X + c[1] * Y),
        dtheta=np.stack([np.full(grid.shape, c[0]), np.full(grid.shape, c[1])]),
        d2theta=np.zeros((3,) + grid.shape),
    )
