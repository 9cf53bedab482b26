import math

import mpmath as mp
import numpy as np
import pytest

from capbound.constraints import ConstraintSet, CostTerm, Mode
from capbound.errors import NonPositiveTestFunction, UnsupportedKernel, ZeroLeadingTap
from capbound.kernels import (
    KernelSpec,
    donsker_varadhan_psi,
    filter_jacobian_log,
    kernel_psi_collatz,
    kernel_psi_nystrom,
    kernel_psi_rayleigh,
    nystrom_eigenfunction,
)
from capbound.numerics import Interval
from capbound.volume import volume_exponent

LOG_2SHI1 = math.log(2 * float(mp.shi(1)))


def flat(A):
    return KernelSpec.gaussian_kernel(0.0, 0.0, A)


def gaussian_psi(a, b):
    """log top eigenvalue of exp(-a(x^2+y^2)/2 - bxy) on the line (Mehler kernel)."""
    return 0.5 * math.log(2 * math.pi / (a + math.sqrt(a * a - b * b)))


@pytest.fixture(scope="module")
def corr():
    return KernelSpec.correlation_kernel(1.0, 1.0)


# -- Rayleigh --------------------------------------------------------------------

@pytest.mark.parametrize("theta,A", [(1.0, 1.0), (0.3, 2.0), (-2.0, 1.5)])
def test_rayleigh_constant_shi_form(theta, A):
    ref = math.log(2 / (A * abs(theta)) * float(mp.shi(A * A * abs(theta))))
    k = KernelSpec.correlation_kernel(theta, A)
    assert kernel_psi_rayleigh(k) == pytest.approx(ref, abs=1e-10)


def test_rayleigh_flat_kernel():
    assert kernel_psi_rayleigh(flat(2.5)) == pytest.approx(math.log(5.0), abs=1e-12)


def test_rayleigh_exponential_dominates_constant(corr):
    assert kernel_psi_rayleigh(corr, "exponential") >= kernel_psi_rayleigh(corr) - 1e-14


def test_rayleigh_needs_symmetric_pair_kernel():
    cs = ConstraintSet([CostTerm.correlation(2, 0.0, Mode.EQUALITY)], Interval(-1, 1))
    with pytest.raises(UnsupportedKernel):
        kernel_psi_rayleigh(KernelSpec.from_constraints(cs, [1.0]))


# -- Nystrom -----------------------------------------------------------------

@pytest.mark.parametrize("N", [2, 5, 64])
def test_nystrom_rank_one(N):
    assert kernel_psi_nystrom(flat(1.7), grid=N, refine=False) == pytest.approx(math.log(3.4), abs=1e-12)


def test_nystrom_dominates_rayleigh(corr):
    assert kernel_psi_nystrom(corr) >= LOG_2SHI1


def test_nystrom_gaussian_kernel_closed_form():
    a, b = 5 / 6, -2 / 3
    got = kernel_psi_nystrom(KernelSpec.gaussian_kernel(a, b, 8.0))
    assert got == pytest.approx(gaussian_psi(a, b), abs=1e-6)


def test_nystrom_grid_converged(corr):
    assert kernel_psi_nystrom(corr, grid=200, refine=False) == pytest.approx(
        kernel_psi_nystrom(corr, grid=800, refine=False), abs=1e-10)


def test_lag_two_splits_into_two_chains(corr):
    # the lag-2 chain is two interleaved lag-1 chains, same growth rate
    cs = ConstraintSet([CostTerm.correlation(2, 0.0, Mode.EQUALITY)], Interval(-1, 1))
    k3 = KernelSpec.from_constraints(cs, [1.0])
    assert k3.window == 3
    assert kernel_psi_nystrom(k3) == pytest.approx(kernel_psi_nystrom(corr), abs=1e-6)


def test_windows_longer_than_three_rejected():
    cs = ConstraintSet([CostTerm.correlation(3, 0.0)], Interval(-1, 1))
    with pytest.raises(UnsupportedKernel):
        KernelSpec.from_constraints(cs, [1.0])


def test_unbounded_support_rejected():
    with pytest.raises(UnsupportedKernel):
        KernelSpec.from_constraints(ConstraintSet([CostTerm.correlation(1, 0.0)]), [1.0])


# -- Collatz-Wielandt ------------------------------------------------------------------

def test_collatz_flat_kernel():
    lo, hi = kernel_psi_collatz(flat(2.0), lambda y: np.ones_like(y))
    assert lo == pytest.approx(math.log(4.0), abs=1e-12)
    assert hi == pytest.approx(math.log(4.0), abs=1e-12)


def test_collatz_constant_bracket(corr):
    lo, hi = kernel_psi_collatz(corr, lambda y: np.ones_like(y))
    psi = kernel_psi_nystrom(corr)
    assert lo <= psi <= hi
    assert hi - lo < 0.2


def test_collatz_eigenfunction_collapses_bracket(corr):
    lo, hi = kernel_psi_collatz(corr, nystrom_eigenfunction(corr))
    assert hi - lo < 1e-3
    assert lo - 1e-9 <= kernel_psi_nystrom(corr) <= hi + 1e-9


def test_collatz_rejects_nonpositive_g(corr):
    with pytest.raises(NonPositiveTestFunction):
        kernel_psi_collatz(corr, lambda y: y)


# -- Donsker-Varadhan ------------------------------------------------------------------

def test_dv_flat_kernel():
    assert donsker_varadhan_psi(flat(0.8)) == pytest.approx(math.log(1.6), abs=1e-12)


def test_dv_below_nystrom(corr):
    assert donsker_varadhan_psi(corr) <= kernel_psi_nystrom(corr)


def test_dv_gaussian_kernel_closed_form():
    # the normalised-kernel chain is AR(1); E_pi[S] = log sqrt(2 pi / a) - 1/2
    a, b = 5 / 6, -2 / 3
    k = KernelSpec.gaussian_kernel(a, b, 16.0)
    dv = donsker_varadhan_psi(k, grid=800)
    assert dv == pytest.approx(0.5 * math.log(2 * math.pi / a) - 0.5, abs=1e-9)
    assert dv <= kernel_psi_nystrom(k)


# -- filters -------------------------------------------------------------------

def test_identity_filter():
    assert filter_jacobian_log([1.0]) == 0.0


def test_gain_filter():
    assert filter_jacobian_log([2.0]) == pytest.approx(math.log(2.0))
    cs = ConstraintSet([CostTerm.filtered_peak([2.0], 3.0)])
    assert volume_exponent(cs).v == pytest.approx(math.log(3.0), abs=1e-14)


def test_minimum_phase_forms_agree():
    lead, freq = filter_jacobian_log([1.0, 0.5], frequency_check=True)
    assert lead == 0.0
    assert abs(freq) < 1e-9


def test_non_minimum_phase_forms_differ():
    lead, freq = filter_jacobian_log([0.5, 1.0], frequency_check=True)
    assert lead == pytest.approx(math.log(0.5))
    assert freq == pytest.approx(0.0, abs=1e-9)


def test_zero_leading_tap():
    with pytest.raises(ZeroLeadingTap):
        filter_jacobian_log([0.0, 1.0])


# -- end to end through the dual ---------------------------------------------------------------

def test_gaussian_process_volume():
    P, rho = 1.0, 0.5
    cs = ConstraintSet([CostTerm.power(P, Mode.EQUALITY), CostTerm.correlation(1, rho * P, Mode.EQUALITY)])
    r = volume_exponent(cs)
    assert r.v == pytest.approx(0.5 * math.log(2 * math.pi * math.e * P * (1 - rho ** 2)), abs=1e-4)
    # AR(1) precision matrix: diagonal 2*theta1, off-diagonal theta2
    expect = [(1 + rho ** 2) / (2 * P * (1 - rho ** 2)), -rho / (P * (1 - rho ** 2))]
    np.testing.assert_allclose(r.theta_star.values, expect, rtol=1e-3)
