import math

import mpmath as mp
import pytest

from capbound.constraints import ConstraintSet, CostTerm, Mode
from capbound.errors import NoBoundingBox, ZeroHits
from capbound.oracle import McConfig, bounding_box, exact_ball_log_volume, mc_log_volume


def ball_ref(n, P):
    r = mp.sqrt(n * P)
    return float(mp.log(mp.pi ** (mp.mpf(n) / 2) * r ** n / mp.gamma(mp.mpf(n) / 2 + 1)) / n)


# -- exact ball ---------------------------------------------------------------------

def test_ball_interval():
    assert exact_ball_log_volume(1, 1.0) == pytest.approx(math.log(2.0), abs=1e-14)


def test_ball_disk():
    assert exact_ball_log_volume(2, 1.0) == pytest.approx(0.5 * math.log(2 * math.pi), abs=1e-14)


@pytest.mark.parametrize("n,P", [(3, 2.0), (17, 0.5), (250, 4.0)])
def test_ball_against_gamma(n, P):
    assert exact_ball_log_volume(n, P) == pytest.approx(ball_ref(n, P), abs=1e-12)


def test_ball_large_n_limit():
    assert abs(exact_ball_log_volume(10_000, 1.0) - 0.5 * math.log(2 * math.pi * math.e)) < 1e-3


def test_ball_bad_arguments():
    with pytest.raises(ValueError):
        exact_ball_log_volume(0, 1.0)


# -- Monte Carlo ------------------------------------------------------------------

def test_well_only_exact():
    cs = ConstraintSet([CostTerm.peak(1.5)])
    est = mc_log_volume(cs, McConfig(n=6, samples=20_000, seed=1))
    assert est.hits == est.samples
    assert est.estimate == pytest.approx(math.log(3.0), abs=1e-14)
    assert est.std_err == 0.0


def test_disk_area():
    est, se = mc_log_volume(ConstraintSet([CostTerm.power(1.0)]), McConfig(n=2, samples=1_000_000, seed=7))
    assert abs(est - 0.5 * math.log(2 * math.pi)) <= 3 * se
    assert se < 1e-3


def test_seed_reproducible():
    cs = ConstraintSet([CostTerm.power(1.0), CostTerm.peak(1.2)])
    cfg = McConfig(n=4, samples=600_000, seed=11)
    assert mc_log_volume(cs, cfg) == mc_log_volume(cs, cfg)


def test_independent_of_thread_count(monkeypatch):
    cs = ConstraintSet([CostTerm.power(1.0), CostTerm.peak(1.2)])
    cfg = McConfig(n=4, samples=600_000, seed=11)
    monkeypatch.setenv("CAPBOUND_THREADS", "1")
    one = mc_log_volume(cs, cfg)
    monkeypatch.setenv("CAPBOUND_THREADS", "4")
    assert mc_log_volume(cs, cfg) == one


def test_box_choice():
    cs = ConstraintSet([CostTerm.power(1.0), CostTerm.peak(3.0)])
    assert bounding_box(cs, McConfig(n=4)) == (-3.0, 3.0)
    assert bounding_box(cs, McConfig(n=4, bounding="ball")) == (-2.0, 2.0)


def test_ball_box_dimension_cap():
    with pytest.raises(NoBoundingBox):
        mc_log_volume(ConstraintSet([CostTerm.power(1.0)]), McConfig(n=9))


def test_no_box_without_power_or_well():
    with pytest.raises(NoBoundingBox):
        bounding_box(ConstraintSet([CostTerm.abs(1.0)]), McConfig(n=2))


def test_zero_hits_on_thin_body():
    cs = ConstraintSet([CostTerm.power(1.0, Mode.EQUALITY), CostTerm.peak(2.0)])
    with pytest.raises(ZeroHits):
        mc_log_volume(cs, McConfig(n=3, samples=10_000))


def test_config_validation():
    with pytest.raises(ValueError):
        McConfig(n=2, samples=100)
    with pytest.raises(ValueError):
        McConfig(n=0)
    with pytest.raises(ValueError):
        McConfig(n=2, bounding="sphere")
