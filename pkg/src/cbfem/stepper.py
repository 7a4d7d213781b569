"""Theta-scheme time marching of the penalty TF system with Newton solves."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .banded import BandedMatrix, solve_banded  # noqa: F401  (re-exported)
from .contracts import BondContract, MarketParams, conversion_value, terminal_payoff
from .errors import ConfigurationError, NewtonConvergenceError, SingularSystemError
from .fem import GlobalOperators, Mesh, assemble, fe_interpolate
from .tf_model import (
    SolutionState,
    ThetaSystem,
    apply_v_constraints,
    build_theta_system,
    coupon_bump,
    is_coupon_time,
    penalty_bounds,
    update_indicators,
)



@dataclass(frozen=True)
class NewtonConfig:
    tol: float = 1e-12
    max_iter: int = 100
    rho: float = 1e12

    def __post_init__(self):
        if not self.tol > 0:
            raise ConfigurationError(f"newton tol must be positive, got {self.tol}")
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise ConfigurationError(f"max_iter must be a positive integer, got {self.max_iter}")
        if not self.rho > 0:
            raise ConfigurationError(f"rho must be positive, got {self.rho}")


@dataclass
class StepStats:
    """Diagnostics of one interior Newton solve (taken before any coupon)."""

    m: int
    iterations: int
    residual: float
    step_norm: float
    call_violation: float
    put_violation: float


@dataclass
class PriceSurface:
    taus: np.ndarray
    nodes: np.ndarray
    s_values: np.ndarray
    U: np.ndarray
    V: np.ndarray
    maturity: float
    s_init: float
    mesh: Optional[Mesh] = None
    stats: List[StepStats] = field(default_factory=list)

    @property
    def times(self) -> np.ndarray:
        return self.maturity - self.taus

    def price(self, s: float, level: int = -1) -> float:
        """Bond value at stock price ``s`` on time level ``level`` (default t = 0)."""
        x = math.log(s / self.s_init)
        row = self.U[level]
        hit = np.flatnonzero(np.isclose(self.nodes, x, rtol=0, atol=1e-12))
        if hit.size:
            return float(row[hit[0]])
        if self.mesh is not None:
            return fe_interpolate(self.mesh, row[1:-1], (row[0], row[-1]), x)
        return float(np.interp(x, self.nodes, row))


def newton_scalar(f, fprime, x0, cfg: NewtonConfig, step=None):
    """Newton's method on a scalar, stopping on |f| <= tol or |dx| <= tol."""
    x = float(x0)
    for k in range(1, cfg.max_iter + 1):
        fx = f(x)
        if abs(fx) <= cfg.tol:
            return x
        d = fprime(x)
        if d == 0.0 or not math.isfinite(d):
            raise SingularSystemError("vanishing Newton derivative", step, k)
        dx = fx / d
        x -= dx
        if abs(dx) <= cfg.tol:
            return x
    raise NewtonConvergenceError(
        "scalar Newton did not converge", iterations=cfg.max_iter, residual=abs(f(x)), step=step
    )


def _penalty_residual(u, lower, upper):
    a_call, a_put = update_indicators(u, lower, upper)
    return a_call * (u - upper) + a_put * (u - lower), a_call + a_put


def boundary_step(
    state: SolutionState,
    theta_sys: ThetaSystem,
    contract: BondContract,
    market: MarketParams,
    cfg: NewtonConfig,
    tau_new: float,
    bounds0=None,
    x0: Optional[float] = None,
    pay_coupon: bool = True,
):
    """Advance the x_min boundary values one step; returns ``(u0, v0)``.

    ``bounds0`` is ``(lower, upper)`` at x_min and ``tau_new``; computed when
    omitted.  ``x0`` is the boundary coordinate (needed for the V rules).
    """
    theta, dt = theta_sys.theta, theta_sys.dtau
    r, rc = market.r, market.r_c
    if x0 is None:
        x0 = 0.0
    if bounds0 is None:
        lo, up = penalty_bounds(np.array([x0]), contract, market, tau_new)
        bounds0 = (float(lo[0]), float(up[0]))
    lower, upper = bounds0

    disc = r + rc
    v0 = (1.0 - (1.0 - theta) * dt * disc) / (1.0 + theta * dt * disc) * state.v0

    explicit = state.u0 - (1.0 - theta) * dt * (r * state.u0 + rc * state.v0)
    c = 1.0 + theta * dt * r
    u_free = (explicit - theta * dt * rc * v0) / c

    v0 = _v_rule_scalar(v0, u_free, x0, contract, market, tau_new)
    phi0 = explicit - theta * dt * rc * v0
    rho_dt = cfg.rho * dt

    def f(u):
        z, _ = _penalty_residual(np.array([u]), lower, upper)
        return c * u + rho_dt * z[0] - phi0

    def fprime(u):
        _, active = _penalty_residual(np.array([u]), lower, upper)
        return c + rho_dt * active[0]

    u0 = newton_scalar(f, fprime, u_free, cfg, step=state.m + 1)
    v0 = _v_rule_scalar(v0, u0, x0, contract, market, tau_new)
    if pay_coupon and is_coupon_time(contract, tau_new):
        u0 += contract.coupon_amount
        v0 += contract.coupon_amount
    return u0, v0


def _v_rule_scalar(v, u, x, contract, market, tau):
    return float(apply_v_constraints(np.array([v]), np.array([u]), np.array([x]), contract, market, tau)[0])


def far_boundary_values(x_max, contract, market, tau_new, bounds=None):
    """Conversion value at x_max, clamped into the bounds, with V set by the rules."""
    u = float(conversion_value(x_max, contract, market))
    if bounds is None:
        lo, up = penalty_bounds(np.array([x_max]), contract, market, tau_new)
        bounds = (float(lo[0]), float(up[0]))
    lower, upper = bounds
    u = min(max(u, lower), upper)
    v = _v_rule_scalar(0.0, u, x_max, contract, market, tau_new)
    return u, v


def penalty_newton(A, mass, phi, lower, upper, rho_dt, u_init, cfg: NewtonConfig, step=None):
    """Solve ``A u + rho_dt * mass @ z(u) = phi`` by semismooth Newton.

    ``z`` is the nodal penalty residual against ``(lower, upper)``.  Returns
    ``(u, iterations, residual_norm, last_step_norm)``.
    """
    u = np.asarray(u_init, dtype=float)
    iterations = 0
    step_norm = math.inf
    while True:
        z, active = _penalty_residual(u, lower, upper)
        res = A.matvec(u) + rho_dt * mass.matvec(z) - phi
        res_norm = float(np.max(np.abs(res))) if res.size else 0.0
        if res_norm <= cfg.tol or step_norm <= cfg.tol:
            return u, iterations, res_norm, step_norm
        if iterations >= cfg.max_iter:
            raise NewtonConvergenceError(
                "interior Newton did not converge",
                iterations=iterations, residual=res_norm, step=step,
            )
        jac = A + mass.scale_columns(rho_dt * active)
        du = solve_banded(jac, res, step=step, iteration=iterations + 1)
        u = u - du
        iterations += 1
        step_norm = float(np.max(np.abs(du)))


def interior_step(
    state: SolutionState,
    theta_sys: ThetaSystem,
    ops: GlobalOperators,
    contract: BondContract,
    market: MarketParams,
    cfg: NewtonConfig,
    boundary_new,
    tau_new: float,
    bounds=None,
    pay_coupon: bool = True,
):
    """Advance the interior coefficients one step.

    ``boundary_new`` is ``(u0, v0, u_np1, v_np1)`` at the new level.  Returns
    ``(u, v, stats)``.
    """
    ts = theta_sys
    dt, theta = ts.dtau, ts.theta
    nodes = ops.nodes
    u0n, v0n, uNn, vNn = boundary_new
    m = state.m + 1
    if bounds is None:
        bounds = penalty_bounds(nodes, contract, market, tau_new)
    lower_full, upper_full = bounds
    lower, upper = lower_full[1:-1], upper_full[1:-1]
    x_int = nodes[1:-1]

    U_old, V_old = state.u_full, state.v_full

    # cash-only part
    rhs_v = ts.at22.apply(V_old) - ts.a22.boundary(v0n, vNn)
    v = solve_banded(ts.a22.interior, rhs_v, step=m)

    base = ts.at11.apply(U_old) + ts.at12.apply(V_old) - ts.a11.boundary(u0n, uNn)

    def phi_for(v_int):
        return base - ts.a12.apply(np.concatenate(([v0n], v_int, [vNn])))

    u_free = solve_banded(ts.a11.interior, phi_for(v), step=m)
    v = apply_v_constraints(v, u_free, x_int, contract, market, tau_new)

    rho_dt = cfg.rho * dt
    # penalty reaction of the boundary nodes, entering through mass coupling
    zb, _ = _penalty_residual(
        np.array([u0n, uNn]), lower_full[[0, -1]], upper_full[[0, -1]]
    )
    phi = phi_for(v) - theta * rho_dt * ts.mass.boundary(zb[0], zb[1])

    u, iterations, res_norm, step_norm = penalty_newton(
        ts.a11.interior, ts.mass.interior, phi, lower, upper, rho_dt, u_free, cfg, step=m
    )

    v = apply_v_constraints(v, u, x_int, contract, market, tau_new)
    stats = StepStats(
        m=m,
        iterations=iterations,
        residual=res_norm,
        step_norm=step_norm,
        call_violation=float(np.max(np.maximum(0.0, u - upper), initial=0.0)),
        put_violation=float(np.max(np.maximum(0.0, lower - u), initial=0.0)),
    )
    if pay_coupon and is_coupon_time(contract, tau_new):
        u = u + contract.coupon_amount
        v = v + contract.coupon_amount
    return u, v, stats


def check_time_grid(contract: BondContract, n_t: int) -> float:
    """Step size, after checking that every coupon date falls on the grid."""
    if int(n_t) != n_t or n_t < 1:
        raise ConfigurationError(f"n_t must be a positive integer, got {n_t}")
    T = contract.maturity
    dtau = T / n_t
    for t in contract.coupon_times:
        steps = (T - t) / dtau
        if abs(steps - round(steps)) > 1e-6:
            raise ConfigurationError(
                f"coupon at t={t} does not fall on the time grid with n_t={n_t}"
            )
    return dtau


def stability_warning(h, dtau, theta, market):
    """Warn when an explicit-leaning scheme exceeds the convection-diffusion limit."""
    if theta >= 0.5:
        return False
    a = market.r - 0.5 * market.sigma**2
    eps = 0.5 * market.sigma**2
    limit = h * h / (2.0 * eps)
    if a != 0:
        limit = min(limit, h / abs(a))
    if dtau > limit:
        warnings.warn(
            f"dtau={dtau:.3g} exceeds the explicit stability limit {limit:.3g} for theta={theta}",
            RuntimeWarning,
            stacklevel=3,
        )
        return True
    return False


def march(
    ops: GlobalOperators,
    contract: BondContract,
    market: MarketParams,
    theta: float,
    n_t: int,
    cfg: NewtonConfig,
    mesh: Optional[Mesh] = None,
) -> PriceSurface:
    """Constrained theta-scheme loop over ``n_t`` steps on prepared operators."""
    dtau = check_time_grid(contract, n_t)
    nodes = ops.nodes
    stability_warning(nodes[1] - nodes[0], dtau, theta, market)
    ts = build_theta_system(ops, market, theta, dtau)

    u_init, v_init = terminal_payoff(nodes, contract, market)
    state = SolutionState.from_full(0, 0.0, u_init, v_init)
    n_nodes = nodes.size
    U = np.empty((n_t + 1, n_nodes))
    V = np.empty((n_t + 1, n_nodes))
    U[0], V[0] = state.u_full, state.v_full
    stats = []

    for m in range(n_t):
        tau_new = (m + 1) * dtau
        lower, upper = penalty_bounds(nodes, contract, market, tau_new)
        u0, v0 = boundary_step(
            state, ts, contract, market, cfg, tau_new,
            bounds0=(lower[0], upper[0]), x0=nodes[0], pay_coupon=False,
        )
        uN, vN = far_boundary_values(
            nodes[-1], contract, market, tau_new, bounds=(lower[-1], upper[-1])
        )
        u, v, st = interior_step(
            state, ts, ops, contract, market, cfg, (u0, v0, uN, vN), tau_new,
            bounds=(lower, upper), pay_coupon=False,
        )
        stats.append(st)
        state = SolutionState(m + 1, tau_new, u, v, u0, v0, uN, vN)
        state = coupon_bump(state, contract, tau_new)
        U[m + 1], V[m + 1] = state.u_full, state.v_full
        if not (np.all(np.isfinite(U[m + 1])) and np.all(np.isfinite(V[m + 1]))):
            bad = int(np.flatnonzero(~np.isfinite(U[m + 1] + V[m + 1]))[0])
            raise ArithmeticError(f"non-finite value at time level {m + 1}, node {bad}")

    taus = np.arange(n_t + 1) * dtau
    s_values = market.s_init * np.exp(nodes)
    return PriceSurface(taus, nodes, s_values, U, V, contract.maturity, market.s_init, mesh, stats)


def full_solve(
    mesh: Mesh,
    contract: BondContract,
    market: MarketParams,
    theta: float = 0.5,
    n_t: int = 100,
    cfg: Optional[NewtonConfig] = None,
) -> PriceSurface:
    """Price the bond on a finite-element mesh; rows of the surface run in tau."""
    cfg = cfg or NewtonConfig()
    ops = assemble(mesh)
    return march(ops, contract, market, theta, n_t, cfg, mesh=mesh)
