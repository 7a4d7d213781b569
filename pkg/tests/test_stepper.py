import itertools
import math
import warnings

import numpy as np
import pytest

from cbfem.banded import BandedMatrix
from cbfem.contracts import BondContract, MarketParams, Window, table1_contract, table1_market
from cbfem.errors import ConfigurationError, NewtonConvergenceError, SingularSystemError
from cbfem.fem import assemble, build_mesh
from cbfem.stepper import (
    NewtonConfig,
    boundary_step,
    check_time_grid,
    full_solve,
    interior_step,
    newton_scalar,
    penalty_newton,
    stability_warning,
)
from cbfem.tf_model import SolutionState, build_theta_system, initial_state

C = table1_contract()
MK = table1_market()
CFG = NewtonConfig()
# a bond with no embedded options and no intermediate coupons
PLAIN = BondContract(100.0, 4.0, (5.0,), 0.0, 5.0)


class Counter:
    def __init__(self, fn):
        self.fn, self.calls = fn, 0

    def __call__(self, x):
        self.calls += 1
        return self.fn(x)


def test_newton_config_validation():
    for kw in (dict(tol=0), dict(max_iter=0), dict(rho=-1.0), dict(max_iter=2.5)):
        with pytest.raises(ConfigurationError):
            NewtonConfig(**kw)


def test_newton_scalar_linear():
    fp = Counter(lambda x: 1.0)
    assert newton_scalar(lambda x: x - 3.0, fp, 0.0, CFG) == 3.0
    assert fp.calls == 1
    c, phi = 1 + 0.5 * 0.05 * 0.05, 104.0
    assert newton_scalar(lambda x: c * x - phi, lambda x: c, 0.0, CFG) == pytest.approx(phi / c, rel=1e-15)


def test_newton_scalar_kink_two_steps():
    # f = x + 1e6 max(x - 1, 0) - 5: root on the steep piece
    f = lambda x: x + 1e6 * max(x - 1, 0) - 5
    fp = Counter(lambda x: 1 + 1e6 * (x >= 1))
    x = newton_scalar(f, fp, 0.0, NewtonConfig(tol=1e-8))
    assert x == pytest.approx(1 + 4 / (1 + 1e6), rel=1e-14)
    assert fp.calls <= 2


def test_newton_scalar_errors():
    with pytest.raises(SingularSystemError):
        newton_scalar(lambda x: x * x + 1, lambda x: 0.0, 0.0, CFG, step=4)
    with pytest.raises(NewtonConvergenceError):
        newton_scalar(lambda x: x * x + 1, lambda x: 2 * x, 0.3, NewtonConfig(max_iter=5))


def _ts(ops, theta=0.5, dtau=0.05, market=MK):
    return build_theta_system(ops, market, theta, dtau)


def test_boundary_linear_closed_form():
    m = MarketParams(0.05, 0.0, 0.2, 100.0)
    ops = assemble(build_mesh(-1, 1, 4, 1))
    dt = 0.05
    s = SolutionState(0, 0.0, np.zeros(3), np.zeros(3), 90.0, 0.0, 0.0, 0.0)
    u0, v0 = boundary_step(s, _ts(ops, dtau=dt, market=m), PLAIN, m, CFG, dt, x0=-1.0)
    assert u0 == pytest.approx(90.0 * (1 - dt * 0.05 / 2) / (1 + dt * 0.05 / 2), rel=1e-14)
    assert v0 == 0.0


def test_boundary_v0_formula():
    ops = assemble(build_mesh(-6, 2, 4, 1))
    s = SolutionState(0, 0.0, np.zeros(3), np.zeros(3), 104.0, 104.0, 0.0, 0.0)
    _, v0 = boundary_step(s, _ts(ops, dtau=0.05), PLAIN, MK, CFG, 0.05, x0=-6.0)
    assert v0 == pytest.approx(104.0 * (1 - 0.00175) / (1 + 0.00175), rel=1e-14)


def test_boundary_active_put():
    # t = 2.75 after the step: put live at 105 + 2 accrued
    ops = assemble(build_mesh(-6, 2, 4, 1))
    dt = 0.05
    s = SolutionState(44, 2.2, np.zeros(3), np.zeros(3), 100.0, 100.0, 0.0, 0.0)
    u0, v0 = boundary_step(s, _ts(ops, dtau=dt), C, MK, CFG, 2.25, x0=-6.0)
    assert 107.0 - 1e-6 <= u0 <= 107.0 + 1e-9
    assert v0 == 107.0


def test_boundary_coupon_paid_last():
    ops = assemble(build_mesh(-6, 2, 4, 1))
    s = SolutionState(49, 2.45, np.zeros(3), np.zeros(3), 100.0, 100.0, 0.0, 0.0)
    ts = _ts(ops, dtau=0.05)
    paid = boundary_step(s, ts, C, MK, CFG, 2.5, x0=-6.0)
    unpaid = boundary_step(s, ts, C, MK, CFG, 2.5, x0=-6.0, pay_coupon=False)
    np.testing.assert_allclose(np.subtract(paid, unpaid), 4.0)
    assert unpaid[0] == pytest.approx(109.0, abs=1e-6)


def test_v0_tracks_exponential_decay():
    errors = []
    for n_t in (20, 40, 80):
        mesh = build_mesh(-6, 2, 20, 1)
        surf = full_solve(mesh, PLAIN, MK, theta=0.5, n_t=n_t)
        exact = 104.0 * np.exp(-(MK.r + MK.r_c) * surf.taus)
        errors.append(np.max(np.abs(surf.V[:, 0] - exact)))
    assert errors[0] / errors[1] == pytest.approx(4.0, rel=0.05)
    assert errors[1] / errors[2] == pytest.approx(4.0, rel=0.05)
    dtau = 5.0 / 80
    assert errors[2] <= 104.0 * dtau**2


def _dense_linear_step(ops, ts, U_old, V_old, ub, vb):
    """Oracle: the unconstrained theta step assembled densely."""
    A22 = ts.a22.interior.to_dense()
    v = np.linalg.solve(A22, ts.at22.apply(V_old) - ts.a22.boundary(*vb))
    rhs = ts.at11.apply(U_old) + ts.at12.apply(V_old) - ts.a11.boundary(*ub) - ts.a12.apply(np.r_[vb[0], v, vb[1]])
    return np.linalg.solve(ts.a11.interior.to_dense(), rhs), v


def test_interior_without_penalty_is_linear_step():
    mesh = build_mesh(-1, 1, 10, 2)
    ops = assemble(mesh)
    ts = _ts(ops, dtau=0.05)
    s0 = initial_state(mesh, PLAIN, MK)
    s = SolutionState(0, 0.0, s0.u * 1.1, s0.v, s0.u0, s0.v0, s0.u_np1, s0.v_np1)
    cfg = NewtonConfig(rho=1e-300)
    bnd = (110.0, 100.0, 115.0, 100.0)
    u, v, stats = interior_step(s, ts, ops, PLAIN, MK, cfg, bnd, 0.05)
    u_ref, v_ref = _dense_linear_step(ops, ts, s.u_full, s.v_full, (110.0, 115.0), (100.0, 100.0))
    np.testing.assert_allclose(u, u_ref, rtol=1e-12)
    np.testing.assert_allclose(v, v_ref, rtol=1e-12)
    assert stats.iterations <= 1


def test_interior_all_nodes_called():
    mesh = build_mesh(-1, 1, 11, 1)  # 10 interior nodes
    ops = assemble(mesh)
    low_call = BondContract(100.0, 0.0, (), 0.0, 1.0, call_price=50.0, call_window=Window(0.0, 1.0))
    ts = _ts(ops, dtau=0.1)
    s = SolutionState(0, 0.0, np.full(10, 80.0), np.full(10, 80.0), 50.0, 0.0, 50.0, 0.0)
    u, v, stats = interior_step(s, ts, ops, low_call, MK, CFG, (50.0, 0.0, 50.0, 0.0), 0.1)
    assert np.max(u - 50.0) <= 1e-6
    # projected solution oracle: every node pinned to the call price
    np.testing.assert_allclose(u, 50.0, atol=1e-6)
    np.testing.assert_array_equal(v, 0.0)


def test_single_step_monotone_in_x():
    mesh = build_mesh(-6, 2, 200, 2)
    ops = assemble(mesh)
    ts = _ts(ops, dtau=0.05)
    s = initial_state(mesh, C, MK)
    u0, v0 = boundary_step(s, ts, C, MK, CFG, 0.05, x0=-6.0)
    uN = 100 * math.exp(2.0)
    u, _, _ = interior_step(s, ts, ops, C, MK, CFG, (u0, v0, uN, 0.0), 0.05)
    full = np.r_[u0, u, uN]
    assert np.all(np.diff(full) >= -1e-9)


def test_penalty_newton_matches_active_set_enumeration():
    rng = np.random.default_rng(11)
    n = 8
    mesh = build_mesh(0, 1, n + 1, 1)
    ops = assemble(mesh)
    ts = _ts(ops, dtau=0.02)
    A, Mi = ts.a11.interior, ts.mass.interior
    rho_dt = 1e12 * 0.02
    lower = rng.uniform(0.0, 0.4, n)
    upper = rng.uniform(0.6, 1.0, n)
    phi = A.matvec(rng.uniform(-0.5, 1.5, n))
    u, iters, _, _ = penalty_newton(A, Mi, phi, lower, upper, rho_dt, np.linalg.solve(A.to_dense(), phi), CFG)
    Ad, Md = A.to_dense(), Mi.to_dense()
    consistent = []
    for pattern in itertools.product((0, 1, 2), repeat=n):  # free / call / put
        p = np.array(pattern)
        pc, pp = (p == 1).astype(float), (p == 2).astype(float)
        J = Ad + rho_dt * Md * (pc + pp)[None, :]
        cand = np.linalg.solve(J, phi + rho_dt * Md @ (pc * upper + pp * lower))
        ok_c = (cand - upper >= 0) == (pc == 1)
        ok_p = (lower - cand >= 0) == (pp == 1)
        if np.all(ok_c) and np.all(ok_p):
            consistent.append(cand)
    assert len(consistent) == 1
    # both sides solve systems with condition ~ rho * dtau
    np.testing.assert_allclose(u, consistent[0], atol=1e-6)
    assert iters <= n + 1


def test_time_grid_alignment():
    assert check_time_grid(C, 100) == pytest.approx(0.05)
    with pytest.raises(ConfigurationError):
        check_time_grid(C, 7)
    with pytest.raises(ConfigurationError):
        check_time_grid(C, 0)


def test_stability_warning():
    with pytest.warns(RuntimeWarning):
        assert stability_warning(0.01, 0.1, 0.0, MK)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert not stability_warning(0.01, 0.1, 0.5, MK)


def test_full_solve_shape_and_limits(p2_200, contract, market):
    s = p2_200
    assert s.U.shape == (201, 401) and s.V.shape == s.U.shape
    assert np.all(np.isfinite(s.U)) and np.all(np.isfinite(s.V))
    final = s.U[-1]
    assert np.all(np.diff(final) >= -1e-6 * contract.face_value)
    assert np.all(final >= s.s_values * contract.conversion_ratio - 1e-6 * contract.face_value)
    np.testing.assert_allclose(s.times[[0, -1]], [5.0, 0.0])
    assert s.price(100.0) == pytest.approx(s.U[-1][300])


def test_price_off_node_interpolates(p2_200):
    between = p2_200.price(100.0 * math.exp(0.01))
    lo, hi = sorted((p2_200.U[-1][300], p2_200.U[-1][301]))
    assert lo - 1e-9 <= between <= hi + 1e-9


def test_sigma_zero_rejected():
    with pytest.raises(ConfigurationError):
        MarketParams(0.05, 0.02, 0.0, 100.0)
