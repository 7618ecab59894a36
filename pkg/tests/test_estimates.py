import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from app.core.stencils import interior_region, make_grid
from app.models.analytic import (
    HarmonicCubicPotential,
    HarmonicExpPotential,
    QuadraticPotential,
    QuadraticSinePotential,
    SlagCubicPotential,
)
from app.models.grid import ScalarField
from app.models.ledger import ConstantLedger, VolumeBoundConstants
from app.models.phase import ConstantPhaseSpec, ShapeFunction
from app.schemas.report import EstimateReport
from app.services.estimates_service import estimates_service
from app.services.phase_service import phase_service
from app.services.solver_service import solver_service

FIVE_PI2_OVER_8 = 5.0 * np.pi ** 2 / 8.0


def _flat(grid, potential):
    u = solver_service.potential_from_analytic(potential, grid)
    phase = phase_service.build_phase_signed(grid, ConstantPhaseSpec(value=0.0))
    return u, phase


# ----------------------------------------------------------------------
# Jacobi inequality
# ----------------------------------------------------------------------
def test_jacobi_constant_branches():
    eps, C = estimates_service.jacobi_constant(0.0, (1.0, 2.0))
    assert eps == 0.0
    assert C == pytest.approx(FIVE_PI2_OVER_8 + (5.0 * np.pi + 4.0))
    eps, C = estimates_service.jacobi_constant(-2.0, (1.0, 2.0))
    assert eps == 0.375
    assert C == pytest.approx(6.0)
    eps, _ = estimates_service.jacobi_constant(np.array([0.5, 2.5]), (0.0, 0.0))
    assert eps.shape == (2,)


def test_jacobi_constant_rejects_out_of_range_phase():
    with pytest.raises(ValueError):
        estimates_service.jacobi_constant(np.pi, (0.0, 0.0))


@given(
    a=st.floats(-np.pi + 1e-6, np.pi - 1e-6),
    b=st.floats(-np.pi + 1e-6, np.pi - 1e-6),
)
def test_jacobi_epsilon_grows_toward_critical_phase(a, b):
    lo, hi = sorted((abs(a), abs(b)))
    eps_lo, _ = estimates_service.jacobi_constant(lo, (0.0, 0.0))
    eps_hi, _ = estimates_service.jacobi_constant(hi, (0.0, 0.0))
    assert 0.0 <= eps_lo <= eps_hi <= 0.375


def test_jacobi_report_on_saddle(saddle):
    u, phase = saddle
    report = estimates_service.jacobi_report(u, phase)
    assert report.passed
    # b is constant, so the defect is exactly C(0)
    assert report.defect == pytest.approx(FIVE_PI2_OVER_8, abs=1e-6)
    assert report.tolerance == pytest.approx(40.0 * u.grid.h)
    assert report.details["K_h"] == 0.0


def test_jacobi_defect_is_reflection_invariant(manufactured33):
    u, phase = manufactured33
    direct = estimates_service.jacobi_defect_field(u, phase).values
    mirrored = estimates_service.jacobi_defect_field(u.negated(), phase.negated()).values
    inner = interior_region(u.grid).mask
    assert np.allclose(direct[inner], mirrored[inner], rtol=1e-12, atol=1e-12)


def test_jacobi_on_solved_cubic_phase():
    boundary_potential = QuadraticSinePotential(a11=0.0, a22=0.0, eps=0.05)
    reports = []
    for n in (33, 65):
        grid = make_grid((-1.0, -1.0), (2.0, 2.0), n)
        phase = phase_service.build_phase_cubic(grid, ShapeFunction(), 0.5)
        boundary = ScalarField.from_function(grid, boundary_potential.value)
        solved = solver_service.solve_dirichlet(phase, boundary, grid)
        report = estimates_service.jacobi_report(solved.u, phase)
        assert report.passed
        assert report.details["epsilon"] < 0.375
        reports.append(report.model_copy(update={"instance_id": "cubic_phase"}))
    row = estimates_service.jacobi_refinement(reports)
    assert row.passed
    assert row.details["K_h"] == [r.details["K_h"] for r in reports]


def test_require_solved_rejects_wrong_phase(saddle):
    u, _ = saddle
    wrong = phase_service.build_phase_signed(u.grid, ConstantPhaseSpec(value=0.3))
    with pytest.raises(ValueError):
        estimates_service.jacobi_report(u, wrong)


def _k_report(h, k):
    return EstimateReport(name="jacobi", lhs=0.0, rhs=0.0, defect=-k * h, tolerance=40.0 * h,
                          details={"h": h, "K_h": k})


@pytest.mark.parametrize(
    "ks,passed",
    [([1.0, 1.5], True), ([1.0, 3.0], False), ([0.0, 0.0], True), ([2.0, 3.0, 7.0], False)],
)
def test_jacobi_refinement(ks, passed):
    reports = [_k_report(2.0 ** -(5 + i), k) for i, k in enumerate(ks)]
    # the order of the input does not matter
    row = estimates_service.jacobi_refinement(list(reversed(reports)))
    assert row.passed is passed


def test_jacobi_refinement_needs_two_grids():
    with pytest.raises(ValueError):
        estimates_service.jacobi_refinement([_k_report(0.1, 1.0)])


# ----------------------------------------------------------------------
# Constant ledger and the test function
# ----------------------------------------------------------------------
def test_choose_constants_example():
    ledger = estimates_service.choose_constants(0.5, 2.0)
    assert ledger.is_valid()
    assert ConstantLedger.alpha_threshold(0.5, 2.0) == pytest.approx(1.532e-13, rel=1e-3)
    assert ledger.alpha ** (4.0 / 3.0) < ledger.beta < ledger.alpha
    assert ledger.nu == 6.0 and ledger.q == pytest.approx(2.0 / 3.0)
    assert estimates_service.ledger_report(ledger).passed


@pytest.mark.parametrize("gamma,Gamma", [(0.0, 2.0), (1.0, 2.0), (0.5, 0.5)])
def test_choose_constants_rejects(gamma, Gamma):
    with pytest.raises(ValueError):
        estimates_service.choose_constants(gamma, Gamma)


@settings(max_examples=100, deadline=None)
@given(gamma=st.floats(0.05, 0.95), Gamma=st.floats(1.0, 10.0))
def test_choose_constants_always_feasible(gamma, Gamma):
    ledger = estimates_service.choose_constants(gamma, Gamma)
    lo, hi = ConstantLedger.beta_window(ledger.alpha, gamma, Gamma)
    assert lo < ledger.beta < hi
    assert all(ledger.inequalities().values())


def test_ledger_at_twice_the_threshold_has_no_window():
    alpha = 2.0 * ConstantLedger.alpha_threshold(0.5, 2.0)
    lo, hi = ConstantLedger.beta_window(alpha, 0.5, 2.0)
    assert lo > hi


def test_test_function_peaks_inside(saddle):
    u, phase = saddle
    center, r = (0.0, 0.0), 0.6
    ledger = estimates_service.choose_constants(0.5, estimates_service.gamma_for(u, center, r))
    result = estimates_service.test_function_P(u, phase, ledger, center, r)
    assert not result.on_outer_layer
    assert result.argmax == u.grid.center_index()
    assert np.isnan(result.values[0, 0])
    report = estimates_service.test_function_report(u, result)
    assert report.passed and report.defect > 0


def test_test_function_rejects_invalid_ledger(saddle):
    u, phase = saddle
    bad = ConstantLedger(alpha=0.5, beta=0.4, gamma=0.5, Gamma=2.0)
    with pytest.raises(ValueError):
        estimates_service.test_function_P(u, phase, bad, (0.0, 0.0), 0.6)


# ----------------------------------------------------------------------
# Doubling and gradient estimate
# ----------------------------------------------------------------------
@pytest.mark.parametrize("potential", [QuadraticPotential(a11=0.5, a22=-0.5), QuadraticPotential(a11=4.0, a22=4.0)])
def test_doubling_ratio_of_constant_hessian(grid33, potential):
    u, phase = _flat(grid33, potential)
    report = estimates_service.doubling_report(u, phase, (0.0, 0.0), 0.6)
    assert report.details["ratio"] == pytest.approx(1.0, abs=1e-9)
    assert report.passed


def test_doubling_report_needs_margin(saddle):
    u, phase = saddle
    with pytest.raises(ValueError):
        estimates_service.doubling_report(u, phase, (0.0, 0.0), 0.9)


def test_doubling_constant_and_stability():
    rows = [
        EstimateReport(name="doubling", lhs=1.0, rhs=1.0, defect=0.0, instance_id=i, details={"ratio": q})
        for i, q in (("a", 1.0), ("b", 1.7))
    ]
    family = estimates_service.doubling_constant(rows)
    assert family.lhs == 1.7 and family.details["worst_instance"] == "b"
    assert estimates_service.doubling_stability(rows[0], rows[0]).passed
    drift = EstimateReport(name="doubling", lhs=1.0, rhs=1.0, defect=0.0, details={"ratio": 1.2})
    assert not estimates_service.doubling_stability(rows[0], drift).passed
    with pytest.raises(ValueError):
        estimates_service.doubling_constant([])


def test_gradient_estimate_vanishes_at_critical_point(grid33):
    u, phase = _flat(grid33, QuadraticPotential(a11=1.0, a22=1.0))
    report = estimates_service.gradient_estimate_report(u, phase, 0.5)
    assert report.details["ratio"] == 0.0
    assert report.passed


def test_gradient_estimate_of_linear_potential(grid33):
    u, phase = _flat(grid33, QuadraticPotential(b1=1.0))
    report = estimates_service.gradient_estimate_report(u, phase, 0.5)
    # R|Du| = 0.5, osc = 1
    assert report.details["ratio"] == pytest.approx(0.25)
    assert not estimates_service.gradient_estimate_report(u, phase, 0.5, ratio_bound=0.2).passed


# ----------------------------------------------------------------------
# Volume bound and identities
# ----------------------------------------------------------------------
def test_volume_bound_on_flat_potential(grid33):
    u, phase = _flat(grid33, QuadraticPotential())
    report = estimates_service.volume_bound_report(u, phase, 0.4)
    C1 = VolumeBoundConstants(R=0.4, norm_d1=0.0, norm_d2=0.0).C1
    assert C1 == pytest.approx(2.6131259, rel=1e-7)
    assert report.lhs == pytest.approx(1.0)
    assert report.rhs == pytest.approx(12.0 * C1)
    assert report.passed


def test_volume_bound_on_convex_quadratic():
    grid = make_grid((-2.0, -2.0), (4.0, 4.0), 65)
    u = solver_service.potential_from_analytic(QuadraticPotential(a11=1.0, a22=1.0), grid)
    phase = phase_service.build_phase_signed(grid, ConstantPhaseSpec(value=0.5 * np.pi))
    report = estimates_service.volume_bound_report(u, phase, 0.5)
    # D²u = I, so V = 2 everywhere
    assert report.lhs == pytest.approx(2.0, rel=1e-12)
    du_norm = report.details["du_norm"]
    assert du_norm == pytest.approx(1.0, abs=grid.h)
    assert report.details["C2"] == pytest.approx(8.0)
    assert report.details["C3"] == pytest.approx(2.0)
    assert report.rhs == pytest.approx(VolumeBoundConstants(R=0.5, norm_d1=0.0, norm_d2=0.0).rhs(du_norm))
    assert report.passed


def test_volume_bound_needs_double_ball(grid33):
    u, phase = _flat(grid33, QuadraticPotential())
    with pytest.raises(ValueError):
        estimates_service.volume_bound_report(u, phase, 0.6)


def test_sigma2_divergence_exact_on_quadratic(grid33):
    u = solver_service.potential_from_analytic(QuadraticPotential(a11=2.0, a22=3.0), grid33)
    report = estimates_service.sigma2_divergence_check(u)
    assert report.passed
    assert report.lhs <= 1e-9


def test_sigma2_divergence_second_order():
    reports = []
    for n in (65, 129):
        grid = make_grid((-1.0, -1.0), (2.0, 2.0), n)
        u = solver_service.potential_from_analytic(QuadraticSinePotential(), grid)
        report = estimates_service.sigma2_divergence_check(u)
        assert report.passed
        reports.append(report)
    row = estimates_service.sigma2_refinement(*reports)
    assert 3.5 <= row.lhs <= 4.5
    assert row.passed


def test_volume_identity_and_tan_form_on_saddle(saddle):
    u, phase = saddle
    identity = estimates_service.volume_identity_check(u, phase)
    assert identity.passed
    assert identity.lhs == pytest.approx(1.25)
    tan_form = estimates_service.tan_form_check(u, phase)
    assert tan_form.passed


def test_gradient_ratio_family_against_bound():
    rows = [
        EstimateReport(name="gradient_estimate", lhs=0.0, rhs=1.0, defect=0.0, instance_id=i, grid_n=n,
                       details={"ratio": q})
        for i, n, q in (("a", 33, 0.4), ("b", 65, 2.5), ("c", 33, 1.0))
    ]
    family = estimates_service.gradient_ratio_family(rows, ratio_bound=10.0)
    assert family.passed
    assert family.lhs == 2.5
    assert family.details["worst_instance"] == "b" and family.details["worst_grid"] == 65
    assert family.details["family_size"] == 3
    tight = estimates_service.gradient_ratio_family(rows, ratio_bound=2.0)
    assert not tight.passed
    assert tight.defect == pytest.approx(-0.5)
    with pytest.raises(ValueError):
        estimates_service.gradient_ratio_family([])


def test_gradient_ratio_family_uses_configured_bound(monkeypatch):
    from app.core.config import settings as app_settings

    monkeypatch.setattr(app_settings, "gradient_ratio_bound", 0.1)
    rows = [EstimateReport(name="gradient_estimate", lhs=0.0, rhs=1.0, defect=0.0, details={"ratio": 0.25})]
    family = estimates_service.gradient_ratio_family(rows)
    assert family.rhs == 0.1
    assert not family.passed


SCALING_PRESETS = [
    QuadraticPotential(a11=1.0, a22=2.0, b1=0.3, b2=-0.7),
    QuadraticSinePotential(),
    HarmonicCubicPotential(),
    HarmonicExpPotential(),
    SlagCubicPotential(),
]


def test_gradient_scaling_on_presets():
    presets = SCALING_PRESETS + [p.tilted(0.5, -0.25) for p in SCALING_PRESETS] + [SCALING_PRESETS[0].negated()]
    report = estimates_service.gradient_scaling_report(presets)
    assert report.passed
    assert report.lhs <= 1e-12
    assert report.tolerance == 1e-12
    assert report.details["presets"] == len(presets)
    with pytest.raises(ValueError):
        estimates_service.gradient_scaling_report([])


def test_gradient_tilt_on_saddle(saddle):
    u, phase = saddle
    tilt = (0.5, -0.25)
    report = estimates_service.gradient_tilt_report(u, phase, 0.5, tilt=tilt)
    assert report.passed
    # Du(0) = 0 on the saddle, so the tilted R|Du(0)| is R|c|
    assert report.details["untilted_ratio"] == 0.0
    assert report.details["lhs_change"] == pytest.approx(0.5 * np.hypot(*tilt), rel=1e-9)
    assert report.details["hess_shift"] < 1e-6
    assert report.details["grad_shift"] < 1e-9
    assert report.details["ratio"] > 0.0


def test_gradient_tilt_fails_against_tight_bound(saddle):
    u, phase = saddle
    report = estimates_service.gradient_tilt_report(u, phase, 0.5, ratio_bound=1e-3)
    assert not report.passed
    assert report.defect == pytest.approx(1e-3 - report.details["ratio"])
