import numpy as np
import pytest

from cbfem.contracts import MarketParams, table1_market
from cbfem.mms import MmsCase, mms_exact, mms_forcing, mms_run, spatial_sweep, temporal_sweep

MK = table1_market()


def test_exact_examples():
    u, v = mms_exact(0.0, 0.0, MK)
    assert u == pytest.approx(99000.0) and v == pytest.approx(99000.0)
    u, v = mms_exact(0.0, 0.7, MK)
    assert v - u == 0.0
    u, v = mms_exact(1.0, 1.0, MK)
    assert v - u == pytest.approx(1.0)


def _fd_residuals(x, tau, market, h=1e-4):
    """Residuals of the forced equations with derivatives by central differences."""
    def fields(xx, tt):
        return np.array(mms_exact(xx, tt, market))

    c = fields(x, tau)
    d_x = (fields(x + h, tau) - fields(x - h, tau)) / (2 * h)
    d_xx = (fields(x + h, tau) - 2 * c + fields(x - h, tau)) / h**2
    d_t = (fields(x, tau + h) - fields(x, tau - h)) / (2 * h)
    diff = 0.5 * market.sigma**2
    drift = market.r - diff
    f1, f2 = mms_forcing(x, tau, market)
    r1 = d_t[0] - diff * d_xx[0] - drift * d_x[0] + market.r * c[0] + market.r_c * c[1] - f1
    r2 = d_t[1] - diff * d_xx[1] - drift * d_x[1] + (market.r + market.r_c) * c[1] - f2
    return r1, r2, np.abs(c).max(axis=0)


def test_forcing_residual_identity():
    rng = np.random.default_rng(5)
    x = rng.uniform(0, 1, 1000)
    tau = rng.uniform(0.01, 0.99, 1000)
    r1, r2, scale = _fd_residuals(x, tau, MK)
    # central differences of these fields are accurate to about 1e-7 relative
    assert np.max(np.abs(r1) / scale) < 1e-6
    assert np.max(np.abs(r2) / scale) < 1e-6


def test_forcing_hand_evaluation():
    # r = r_c = 0, sigma^2 = 2: f1 = -U_xx + U_x at x = 0
    m = MarketParams(0.0, 0.0, np.sqrt(2.0), 100.0)
    f1, f2 = mms_forcing(0.0, 0.4, m)
    g, w = 100.0**2.5, 10.0
    u_x, u_xx = 2.5 * g - 0.5 * 100 * w, 6.25 * g - 0.25 * 100 * w
    assert f1 == pytest.approx(-u_xx + u_x, rel=1e-14)
    # V adds x^2 tau: at x = 0 only -(sigma^2/2) * 2 tau survives
    assert f2 - f1 == pytest.approx(-2 * 0.4, abs=1e-9)


def test_forcing_difference_at_origin():
    tau = 0.3
    f1, f2 = mms_forcing(0.0, tau, MK)
    u, _ = mms_exact(0.0, tau, MK)
    diff = 0.5 * MK.sigma**2
    # V = U at x = 0, so only the curvature of x^2 tau differs
    assert f2 - f1 == pytest.approx(-diff * 2 * tau, rel=1e-9)


def test_case_records_runs():
    case = MmsCase(MK)
    res = case.run(2, 8, 0.1)
    assert case.records == [res]
    assert res.error_linf_l2 >= res.error_l2
    assert len(res.history) == 10


def test_one_step_local_error_second_order():
    diffs = []
    for dt in (1e-2, 5e-3, 2.5e-3):
        a = mms_run(2, 2, dt, MK, tau_end=dt).u_final
        b = mms_run(2, 2, dt / 2, MK, tau_end=dt).u_final
        diffs.append(np.max(np.abs(a - b)))
    assert np.log2(diffs[0] / diffs[1]) > 1.8
    assert np.log2(diffs[1] / diffs[2]) > 1.8


def test_backward_euler_first_order_in_time():
    _, (o2, oi) = temporal_sweep(2, MK, dtaus=(0.1, 0.05, 0.02, 0.01), n_elements=100, theta=1.0)
    assert o2 == pytest.approx(1.0, abs=0.1)


def test_spatial_refinement_reduces_error():
    runs, (o_p1, _) = spatial_sweep(1, MK, n_elements=(4, 8, 16), dtau=1e-3)
    errs = [r.error_l2 for r in runs]
    assert all(b <= 1.2 * a for a, b in zip(errs, errs[1:]))
    assert o_p1 > 1.5


def test_nodal_injection_does_not_converge():
    a = mms_run(1, 16, 0.05, MK, load="nodal").error_l2
    b = mms_run(1, 32, 0.05, MK, load="nodal").error_l2
    assert b > 0.5 * a


def test_run_argument_checks():
    with pytest.raises(ValueError):
        mms_run(1, 4, 0.3, MK)
    with pytest.raises(ValueError):
        mms_run(1, 4, 0.1, MK, level="middle")
    with pytest.raises(ValueError):
        mms_run(1, 4, 0.1, MK, load="lumped")
