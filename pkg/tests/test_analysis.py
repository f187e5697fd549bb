import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, strategies as st

from invlap import analysis as A
from invlap import quadrature as quad
from invlap.kernel import make_params
from invlap.solver import PoissonSolver, constant, coordinate, distance_to_pole


def test_fit_loglog_recovers_power_law():
    r = np.array(A.FIT_RADII)
    vals = 3.0 * (1 - r) ** -0.7
    slope, icpt, res = A.fit_loglog(r, vals, lambda x: 1 - x)
    assert slope == pytest.approx(-0.7, abs=1e-12)
    assert icpt == pytest.approx(math.log(3.0), abs=1e-12)
    assert res < 1e-12


@given(st.floats(-3, 3), st.floats(0.1, 10))
def test_fit_loglog_property(k, a):
    r = np.array(A.FIT_RADII)
    slope, _, _ = A.fit_loglog(r, a * (1 - r * r) ** k, lambda x: (1 - x) * (1 + x))
    assert slope == pytest.approx(k, abs=1e-9)


def test_fit_loglog_validation():
    with pytest.raises(ValueError):
        A.fit_loglog([0.9, 0.8], [1, 2], lambda r: 1 - r)
    with pytest.raises(ValueError):
        A.fit_loglog([0.9, 1.0], [1, 2], lambda r: 1 - r)
    with pytest.raises(ValueError):
        A.fit_loglog([0.9, 0.95], [1, 0], lambda r: 1 - r)
    with pytest.raises(ValueError):
        A.fit_loglog([0.9, 0.95], [1, np.inf], lambda r: 1 - r)


def test_check_result_semantics():
    ok = A.CheckResult.compare("x", 1.0 + 1e-9, 1.0, 1e-8)
    bad = A.CheckResult.compare("x", 1.1, 1.0, 1e-8)
    zero = A.CheckResult.compare("x", 1e-12, 0.0, 1e-9)
    nan = A.CheckResult.compare("x", float("nan"), 1.0, 1.0)
    assert ok.passed and not bad.passed and zero.passed and not nan.passed
    rec = ok.to_record()
    assert set(rec) >= {"name", "params", "observed", "expected", "tolerance", "passed"}


@pytest.mark.parametrize("n", [2, 3, 5])
def test_mass_identity_trivial_cases(n):
    p = make_params(n, 0.7)
    res = A.verify_mass_identity(p, 0.0)
    assert res.passed and res.expected == pytest.approx(p.c_norm, rel=1e-15)
    res = A.verify_mass_identity(make_params(n, 0.0), 0.8)
    assert res.passed and res.expected == pytest.approx(1.0, rel=1e-15)


def test_mass_identity_spot_value():
    res = A.verify_mass_identity(make_params(3, 1.0), 0.5)
    assert res.passed and res.expected == pytest.approx(0.8125, rel=1e-14)


def test_mass_identity_with_explicit_rule():
    p = make_params(4, -0.4)
    res = A.verify_mass_identity(p, 0.95, rule=quad.graded_zonal_rule(4, 0.05))
    assert res.passed
    # a coarse rule is caught
    assert not A.verify_mass_identity(p, 0.95, rule=quad.build_zonal_rule(4, 8)).passed


def test_gradient_mass_identity_cases():
    # theta = (n-2)/2 and theta = 0 have C = 0
    for n, th in [(4, 1.0), (3, 0.0)]:
        res = A.verify_gradient_mass_identity(make_params(n, th), 0.7)
        assert res.passed and res.expected == 0.0
    # n = 2, theta = 1: the 2F1 factor is 1, so the value is C(2, 1) * r = 2 c * r
    p = make_params(2, 1.0)
    res = A.verify_gradient_mass_identity(p, 0.5)
    assert p.c_grad == pytest.approx(2 * p.c_norm, rel=1e-15)
    assert res.passed and res.expected == pytest.approx(p.c_grad * 0.5, rel=1e-15)


@pytest.mark.parametrize("n,theta", [(2, -0.4), (3, 0.5), (5, 1.0)])
def test_tangential_mass_vanishes(n, theta):
    assert A.verify_tangential_mass(make_params(n, theta), 0.95).passed


def test_gradient_mass_identity_against_mpmath():
    # independent oracle: mpmath quadrature of d/dx1 P in the polar angle
    n, theta, r = 3, -0.25, 0.7
    p = make_params(n, theta)

    def integrand(a):
        s = 1 - mp.cos(a)
        d2 = (1 - r) ** 2 + 2 * r * s
        k = p.c_norm * (1 - r * r) ** (1 + 2 * theta) / d2 ** ((n + 2 * theta) / 2)
        dk = k * (-2 * (1 + 2 * theta) * r / (1 - r * r) - (n + 2 * theta) * (r - mp.cos(a)) / d2)
        return dk * mp.sin(a) / 2

    ref = float(mp.quad(integrand, [0, 0.1, mp.pi]))
    res = A.verify_gradient_mass_identity(p, r)
    assert res.observed == pytest.approx(ref, rel=1e-10)
    assert res.expected == pytest.approx(ref, rel=1e-10)


@pytest.mark.parametrize("n,theta", [(2, 0.25), (3, 0.5), (4, 0.25), (5, 0.5), (4, 1.0)])
def test_bounded_gradient_mass(n, theta):
    res = A.verify_bounded_gradient_mass(make_params(n, theta))
    assert res.passed
    assert res.observed <= res.expected * (1 + 1e-12)


def test_bounded_gradient_mass_needs_positive_theta():
    with pytest.raises(ValueError):
        A.verify_bounded_gradient_mass(make_params(3, -0.2))


def test_gradient_mass_bound_is_the_limit():
    # for theta > 0 the coefficients keep one sign past a point, so the bound is
    # attained as r -> 1 when all coefficients are positive (n = 2, theta = 1/4)
    p = make_params(2, 0.25)
    lim = abs(p.c_grad) * float(mp.hyp2f1(1 - 0.25, 1 - 0.25, 2, 1))
    assert A.gradient_mass_bound(p) == pytest.approx(lim, rel=1e-12)


@pytest.mark.parametrize("n", [2, 3])
def test_singular_integral_exponent(n):
    rep = A.verify_singular_integral_bound(n, 1.0, 0.0)
    assert rep.passed and rep.slope == pytest.approx(1.0, abs=0.05)
    with pytest.raises(ValueError):
        A.verify_singular_integral_bound(n, 0.5, 0.5)


def test_singular_integral_matches_power_mass_identity():
    # q = 0 reduces to the 2F1 identity with lambda = (n - 1 + p) / 2
    n, p_exp, r = 3, 1.0, 0.9
    lam = (n - 1 + p_exp) / 2
    val = A.singular_integral(n, p_exp, 0.0, r)
    assert val == pytest.approx(float(mp.hyp2f1(lam, lam - n / 2 + 1, n / 2, r * r)), rel=1e-11)


def test_singular_fit_stable_under_refinement():
    coarse = A.verify_singular_integral_bound(3, 1.0, 0.5, rule_factory=lambda r: quad.graded_zonal_rule(3, 1 - r, 12))
    fine = A.verify_singular_integral_bound(3, 1.0, 0.5, rule_factory=lambda r: quad.graded_zonal_rule(3, 1 - r, 24))
    assert abs(coarse.slope - fine.slope) < 0.01


@pytest.mark.parametrize("n", [2, 3, 4])
@pytest.mark.parametrize("lam", [0.5, 1.3])
def test_power_mass_identity(n, lam):
    assert A.verify_power_mass_identity(n, lam, 0.6).passed


@pytest.mark.parametrize("a", [-0.4, 0.1, 0.75, 1.2])
def test_quadratic_transformation(a):
    assert A.verify_quadratic_transformation(a).passed


def test_n3_closed_form_check():
    assert A.verify_n3_closed_form(1.0).passed
    assert A.verify_n3_closed_form(0.0).passed


def test_blowup_fit():
    rep = A.blowup_exponent_fit(make_params(2, -0.25))
    assert rep.passed and rep.slope == pytest.approx(-0.5, abs=0.05)
    assert all(v > 0 for v in rep.values)
    for bad in (0.0, 0.5):
        with pytest.raises(ValueError):
            A.blowup_exponent_fit(make_params(4, bad))


def test_blowup_fit_against_closed_form_derivative():
    from invlap.solver import closed_form_n3_derivative

    rep = A.blowup_exponent_fit(make_params(3, -0.4))
    r = np.array(rep.radii)
    exact = np.abs(r * closed_form_n3_derivative(-0.4, r))
    assert np.allclose(rep.values, exact, rtol=1e-7)


def test_blowup_slopes_ordered_in_theta():
    slopes = [A.blowup_exponent_fit(make_params(2, th)).slope for th in (-0.4, -0.25, -0.1)]
    assert slopes[0] < slopes[1] < slopes[2]


def test_pde_residual_checks():
    pts = A.random_ball_points(2, 10, 0.5, seed=1)
    assert np.all(np.linalg.norm(pts, axis=1) <= 0.5)
    s = PoissonSolver(n=2, theta=0.5).fit(coordinate())
    assert A.verify_pde_residual(s, pts).passed
    s = PoissonSolver(n=3, theta=0.0).fit(constant())
    res = A.verify_pde_residual(s, A.random_ball_points(3, 5, 0.7, seed=2))
    assert res.passed and res.observed < 1e-6
    # a field that does not solve the equation fails
    p = make_params(3, 0.5)
    res = A.verify_pde_residual((p, lambda x: float(x @ x)), pts[:, :1].repeat(3, axis=1) / 2)
    assert not res.passed


def test_lipschitz_scan():
    s = PoissonSolver(n=3, theta=0.5).fit(coordinate())
    rep = A.lipschitz_scan(s)
    assert rep.passed and abs(rep.slope) < 0.05
    # constant data at the hyperbolic value of theta: gradient vanishes
    s = PoissonSolver(n=4, theta=1.0).fit(constant())
    rep = A.lipschitz_scan(s)
    assert rep.passed and max(rep.values) < A.ZERO_GRADIENT
    # constant data with theta < 0 reports the growth exponent
    s = PoissonSolver(n=2, theta=-0.25).fit(constant())
    rep = A.lipschitz_scan(s, radii=A.BLOWUP_RADII)
    assert rep.name == "gradient_growth" and rep.slope == pytest.approx(-0.5, abs=0.05)


@pytest.mark.parametrize("n,theta", [(2, 0.5), (3, 1.0), (4, 0.25)])
def test_case_bounds(n, theta):
    phi = distance_to_pole().compose(A._fixed_rotation(n))
    s = PoissonSolver(n=n, theta=theta).fit(phi)
    for r in (0.9, 0.999):
        tang, rad = A.verify_case_bounds(s, r)
        assert tang.passed and rad.passed
        assert 0 <= tang.observed <= 1 and 0 <= rad.observed <= 1


def test_radial_terms_finite_for_positive_theta():
    p = make_params(3, 0.25)
    for r in (0.9, 0.99, 0.9999):
        terms = A.radial_terms(p, r, 0.3)
        assert all(np.isfinite(v) and v >= 0 for v in terms.values())


def test_run_suite_small_grid_deterministic():
    a = A.run_suite(ns=(2,), thetas=[-0.1, 0.5], pde_points=3)
    b = A.run_suite(ns=(2,), thetas=[-0.1, 0.5], pde_points=3, jobs=3)
    assert [r.to_record() for r in a] == [r.to_record() for r in b]
    assert all(r.passed for r in a)


def test_run_suite_theta_zero_is_marked():
    res = A.run_suite(ns=(2,), thetas=[0.0], pde_points=2)
    notes = [r.note for r in res if r.name == "blowup_slope"]
    assert notes and "externally witnessed" in notes[0]


def test_run_suite_records_job_errors(monkeypatch):
    def boom(*args):
        raise ArithmeticError("forced")

    monkeypatch.setattr(A, "_theta_jobs", boom)
    res = A.run_suite(ns=(2,), thetas=[0.5])
    assert res[0].name == "error" and not res[0].passed
    assert res[-1].passed


def test_default_thetas():
    assert A.default_thetas(2) == [-0.4, -0.1, 0.5, 1.0, 0.0]
    assert A.default_thetas(4) == [-0.4, -0.1, 0.5, 1.0]


def test_blowup_radii_reach_the_asymptotic_regime():
    # exact n = 3 derivatives: on 0.90..0.999 the constant term still bends the
    # fit by more than 0.05, while the near-boundary grid recovers 2 theta
    from invlap.solver import closed_form_n3_derivative

    for th in (-0.25, -0.1):
        far, near = (np.array(R) for R in (A.FIT_RADII, A.BLOWUP_RADII))
        s_far = A.fit_loglog(far, np.abs(closed_form_n3_derivative(th, far)), lambda x: 1 - x * x)[0]
        s_near = A.fit_loglog(near, np.abs(closed_form_n3_derivative(th, near)), lambda x: 1 - x * x)[0]
        assert abs(s_far - 2 * th) > 0.05
        assert abs(s_near - 2 * th) < 0.05
