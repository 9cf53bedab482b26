import math
import time

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from capbound.constraints import ConstraintSet, CostTerm
from capbound.direct_mi import (
    TiltedInputSpec,
    asymptotic_input_marginal,
    direct_bound,
    j_integral,
    jensen_pair_bound,
    log_j_integral,
    log_zeta,
    output_marginal,
    tilted_direct_bound,
    zeta,
)
from capbound.numerics import q_function

mp.mp.dps = 20
R20 = math.sqrt(20)
SNR = {6: 10 ** 0.6, 10: 10.0, 12: 10 ** 1.2}


def smith(P, A):
    return ConstraintSet([CostTerm.power(P), CostTerm.peak(A)])


def uniform_mi(A, s2=1.0):
    """I(X; X + N) for X uniform on [-A, A], by mpmath quadrature."""
    s = mp.sqrt(s2)

    def p(y):
        return (mp.ncdf((y + A) / s) - mp.ncdf((y - A) / s)) / (2 * A)

    # p is even; the left half keeps both cdf values small
    h = 2 * mp.quad(lambda y: -p(y) * mp.log(p(y)), [-A - 12 * s, -A, 0])
    return float(h - mp.log(2 * mp.pi * mp.e * s2) / 2)


def zeta_ref(theta, A, y, s2):
    return mp.quad(lambda x: mp.exp(-theta * x ** 2 - (y - x) ** 2 / (2 * s2)), [-A, y, A]) / mp.sqrt(2 * mp.pi * s2)


@pytest.fixture(scope="module")
def smith10():
    return direct_bound(smith(10.0, R20), 1.0)


# -- zeta --------------------------------------------------------------------------

@pytest.mark.parametrize("y", [-3.0, 0.0, 2.0, 17.0])
def test_zeta_flat_line(y):
    cs = ConstraintSet([CostTerm.power(1.0)])
    assert log_zeta(cs, [0.0], y, 1.0, method="quadrature") == pytest.approx(0.0, abs=1e-10)


def test_zeta_closed_form_against_quadrature():
    cs = smith(10.0, R20)
    closed = log_zeta(cs, [0.05], 2.0, 1.0, method="closed")
    quad = log_zeta(cs, [0.05], 2.0, 1.0, method="quadrature")
    assert closed == pytest.approx(quad, abs=1e-8)
    assert closed == pytest.approx(float(mp.log(zeta_ref(0.05, R20, 2.0, 1.0))), abs=1e-10)


@pytest.mark.parametrize("theta,y,s2", [(0.3, -1.0, 0.5), (0.0, 4.0, 2.0), (1.2, 6.0, 1.0)])
def test_zeta_closed_form_mpmath(theta, y, s2):
    cs = smith(1.0, 3.0)
    got = zeta(cs, [theta], y, s2)
    assert got == pytest.approx(float(zeta_ref(theta, 3.0, y, s2)), rel=1e-10)


def test_zeta_rule_route():
    cs = ConstraintSet([CostTerm.abs(1.0), CostTerm.peak(2.0)])
    ys = np.array([-1.0, 0.5, 3.0])
    rule = log_zeta(cs, [0.7], ys, 1.0, method="rule")
    quad = log_zeta(cs, [0.7], ys, 1.0, method="quadrature")
    np.testing.assert_allclose(rule, quad, atol=1e-9)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.0, 2.0), st.floats(-8.0, 8.0))
def test_zeta_symmetric_in_y(theta, y):
    cs = smith(1.0, 2.5)
    assert log_zeta(cs, [theta], y, 1.0) == pytest.approx(log_zeta(cs, [theta], -y, 1.0), abs=1e-12)


# -- input / output marginals ------------------------------------------------------------------

def test_input_marginal_uniform_above_transition():
    d = asymptotic_input_marginal(smith(10.0, R20))
    assert d.is_uniform
    assert d.pdf(1.0) == pytest.approx(1 / (2 * R20))


def test_input_marginal_truncated_gaussian_below_transition():
    d = asymptotic_input_marginal(smith(5.0, 5.0))
    assert d.theta.values[0] > 0
    assert d.expect(lambda x: x * x) == pytest.approx(5.0, abs=1e-8)


def test_input_marginal_at_transition():
    d = asymptotic_input_marginal(smith(25 / 3, 5.0))
    assert d.theta.values[0] == 0.0 and d.is_uniform


@pytest.mark.parametrize("P,A", [(10.0, R20), (5.0, 5.0)])
def test_output_density_normalised_with_variance(P, A):
    inp = asymptotic_input_marginal(smith(P, A))
    out = output_marginal(inp, 1.0)
    lo, hi = -A - 14, A + 14
    mass = integrate.quad(out.pdf, lo, hi, points=[-A, 0, A], epsabs=1e-13, limit=200)[0]
    var = integrate.quad(lambda y: y * y * out.pdf(y), lo, hi, points=[-A, 0, A], epsabs=1e-13, limit=200)[0]
    assert mass == pytest.approx(1.0, abs=1e-8)
    assert var == pytest.approx(inp.variance() + 1.0, abs=1e-6)
    assert out.variance == pytest.approx(inp.variance() + 1.0, abs=1e-9)


def test_output_density_closed_form_against_grid():
    inp = asymptotic_input_marginal(smith(5.0, 5.0))
    closed = output_marginal(inp, 1.0, method="closed_form")
    grid = output_marginal(inp, 1.0, method="grid")
    ys = np.array([0.0, 1.0, 3.0])
    np.testing.assert_allclose(closed.pdf(ys), grid.pdf(ys), rtol=0, atol=1e-7)


def test_output_density_against_convolution():
    inp = asymptotic_input_marginal(smith(5.0, 5.0))
    out = output_marginal(inp, 1.0)
    th = inp.theta.values[0]
    z = mp.quad(lambda x: mp.exp(-th * x ** 2), [-5, 0, 5])
    for y in (0.0, 2.0, 6.5):
        ref = zeta_ref(th, 5.0, y, 1.0) / z
        assert out.pdf(y) == pytest.approx(float(ref), rel=1e-9)


def test_output_density_symmetric():
    out = output_marginal(asymptotic_input_marginal(smith(5.0, 5.0)), 1.0)
    assert out.symmetric
    assert out.logpdf(2.2) == pytest.approx(out.logpdf(-2.2), abs=1e-13)


# -- direct bound ------------------------------------------------------------------

@pytest.mark.parametrize("db,target", [(6, 0.6316), (10, 0.9743), (12, 1.1626)])
def test_smith_direct(db, target):
    P = SNR[db]
    A = math.sqrt(2 * P)
    t0 = time.perf_counter()
    r = direct_bound(smith(P, A), 1.0)
    assert time.perf_counter() - t0 < 30.0
    assert abs(r.value - target) < 2e-3
    # above the phase transition the bound is the uniform-input mutual information
    assert r.value == pytest.approx(uniform_mi(A), abs=1e-7)


def test_direct_recomputes_from_parts(smith10):
    assert smith10.recompute() == pytest.approx(smith10.value, abs=1e-9)


def test_direct_output_mass(smith10):
    assert smith10.diagnostics["output_mass"] == pytest.approx(1.0, abs=1e-8)


def test_direct_power_only_is_capacity():
    r = direct_bound(ConstraintSet([CostTerm.power(10.0)]), 1.0)
    assert r.value == pytest.approx(0.5 * math.log(11.0), abs=1e-10)


def test_direct_beats_epi_below_transition():
    from capbound.epi import epi_peak_power
    r = direct_bound(smith(5.0, 5.0), 1.0)
    assert r.value > epi_peak_power(5.0, 5.0, 1.0).value


# -- J integral ---------------------------------------------------------------------

def test_j_flat():
    assert j_integral(0.0, 0.0, 3.0) == pytest.approx(6.0, abs=1e-13)


def test_j_gaussian():
    ref = math.sqrt(math.pi) * (1 - 2 * q_function(math.sqrt(2)))
    assert abs(j_integral(-1.0, 0.0, 1.0) - ref) < 1e-10


@pytest.mark.parametrize("a,b,A", [(-0.3, 1.7, 2.0), (0.0, 2.5, 1.5), (0.15, -1.0, R20), (-2.0, 40.0, 3.0)])
def test_j_against_mpmath(a, b, A):
    ref = mp.log(mp.quad(lambda x: mp.exp(a * x * x + b * x), [-A, 0, A]))
    assert log_j_integral(a, b, A) == pytest.approx(float(ref), abs=1e-9)


@settings(max_examples=30, deadline=None)
@given(st.floats(-2.0, 0.2), st.floats(-10, 10), st.floats(0.2, 5.0))
def test_j_even_in_b(a, b, A):
    assert log_j_integral(a, b, A) == pytest.approx(log_j_integral(a, -b, A), abs=1e-10)


@pytest.mark.parametrize("a", [-1e-6, -1e-10, -1e-14, 1e-12])
def test_j_continuous_through_zero_curvature(a):
    # cumulant expansion in a under the uniform law on [-A, A]
    m2, m4 = 20 / 3, 400 / 5
    ref = math.log(2 * R20) + a * m2 + 0.5 * a * a * (m4 - m2 * m2)
    assert log_j_integral(a, 0.0, R20) == pytest.approx(ref, abs=1e-13)


def test_j_vectorised_over_b():
    bs = np.array([-1.0, 0.0, 2.0])
    np.testing.assert_allclose(log_j_integral(-0.5, bs, 2.0), [log_j_integral(-0.5, b, 2.0) for b in bs])


# -- tilted input ---------------------------------------------------------------------

def test_tilted_zero_matches_direct(smith10):
    r = tilted_direct_bound(TiltedInputSpec(0.0, R20, 10.0), 1.0)
    assert abs(r.value - smith10.value) < 2e-3
    assert abs(r.value - 0.9743) < 2e-3


def test_tilted_point_one():
    r = tilted_direct_bound(TiltedInputSpec(0.1, R20, 10.0), 1.0)
    assert abs(r.value - 1.0393) < 5e-3


def test_tilted_nondecreasing_grid():
    vals = [tilted_direct_bound(TiltedInputSpec(a, R20, 10.0), 1.0).value for a in (-0.05, 0.0, 0.05, 0.1)]
    assert all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))


def test_tilted_theta_star_phase():
    # uniform second moment A^2/3 = 6.67 < 10: the power constraint is slack at alpha = 0
    assert TiltedInputSpec(0.0, R20, 10.0).theta_star == 0.0
    assert TiltedInputSpec(0.0, R20, 5.0).theta_star > 0.0


def test_tilted_second_moment():
    r = tilted_direct_bound(TiltedInputSpec(0.15, R20, 10.0), 1.0)
    assert r.diagnostics["second_moment"] == pytest.approx(10.0, abs=1e-6)


def test_tilted_no_jumps_on_fine_grid():
    alphas = np.round(np.arange(-0.1, 0.1501, 0.005), 4)
    vals = np.array([tilted_direct_bound(TiltedInputSpec(a, R20, 10.0), 1.0).value for a in alphas])
    steps = np.abs(np.diff(vals))
    assert steps.max() <= 1e-2, f"largest step {steps.max():.6f} at alpha={alphas[np.argmax(steps)]}"


# -- Jensen pair bound ----------------------------------------------------------------------

def test_jensen_plain_chain_penalties_vanish():
    r = jensen_pair_bound(smith(10.0, R20), 1.0)
    assert r.diagnostics["kl"] == 0.0
    assert r.diagnostics["mismatch"] == 0.0


def test_jensen_below_direct(smith10):
    assert jensen_pair_bound(smith(10.0, R20), 1.0).value <= smith10.value


def test_jensen_symmetric_duals():
    th = jensen_pair_bound(smith(5.0, 5.0), 1.0).theta_star_bound.values
    assert th[0] > 0
    assert abs(th[0] - th[1]) <= 1e-6


def test_jensen_gaussian_closed_form():
    # power only: the pair integral is a bivariate Gaussian
    P = 10.0
    th = mp.findroot(lambda t: 2 * P - 1 / (2 * t) - 1 / (2 * t + 1), (0.001, 1), solver="illinois")
    inner = 2 * th * P - mp.log(2 * th * (2 * th + 1)) / 2 + mp.log(2 * mp.pi)
    v = mp.log(2 * mp.pi * mp.e * P) / 2
    ref = 2 * v - mp.log(2 * mp.pi * mp.e) / 2 + mp.log(4 * mp.pi) / 2 - inner
    assert jensen_pair_bound(ConstraintSet([CostTerm.power(P)]), 1.0).value == pytest.approx(float(ref), abs=1e-8)


def test_jensen_any_auxiliary_is_valid(smith10):
    r = jensen_pair_bound(smith(10.0, R20), 1.0, s2=0.7, alpha=0.9)
    assert r.value <= smith10.value
    assert r.diagnostics["kl"] > 0
