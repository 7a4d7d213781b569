"""Semi-discrete penalty TF system: theta-scheme operators, bounds, V rules."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .contracts import (
    BondContract,
    MarketParams,
    constraint_bounds,
    conversion_value,
    dirty_call_price,
    dirty_put_price,
    terminal_payoff,
)
from .fem import GlobalOperators, Mesh, RowOperator, lincomb


@dataclass(frozen=True)
class SolutionState:
    m: int
    tau: float
    u: np.ndarray
    v: np.ndarray
    u0: float
    v0: float
    u_np1: float
    v_np1: float

    @property
    def u_full(self) -> np.ndarray:
        return np.concatenate(([self.u0], self.u, [self.u_np1]))

    @property
    def v_full(self) -> np.ndarray:
        return np.concatenate(([self.v0], self.v, [self.v_np1]))

    @classmethod
    def from_full(cls, m, tau, u_full, v_full):
        u_full = np.asarray(u_full, dtype=float)
        v_full = np.asarray(v_full, dtype=float)
        return cls(
            m, tau,
            u_full[1:-1].copy(), v_full[1:-1].copy(),
            float(u_full[0]), float(v_full[0]),
            float(u_full[-1]), float(v_full[-1]),
        )


@dataclass(frozen=True)
class ThetaSystem:
    """Left (``a*``) and right (``at*``) theta-scheme operators.

    ``a11 u + a12 v`` at the new level balances ``at11 u + at12 v`` at the old
    one; ``a22``/``at22`` do the same for the cash-only part.
    """

    theta: float
    dtau: float
    a11: RowOperator
    a12: RowOperator
    a22: RowOperator
    at11: RowOperator
    at12: RowOperator
    at22: RowOperator
    mass: RowOperator


@dataclass(frozen=True)
class PenaltyState:
    rho: float
    alpha_call: np.ndarray
    alpha_put: np.ndarray
    u_star_call: np.ndarray
    u_star_put: np.ndarray

    def violation(self, u) -> np.ndarray:
        """Penalised distance ``alpha_call (u - u*_call) + alpha_put (u - u*_put)``."""
        return self.alpha_call * (u - self.u_star_call) + self.alpha_put * (u - self.u_star_put)


def initial_state(mesh: Mesh, contract: BondContract, market: MarketParams) -> SolutionState:
    u, v = terminal_payoff(mesh.nodes, contract, market)
    return SolutionState.from_full(0, 0.0, u, v)


def build_theta_system(
    ops: GlobalOperators, market: MarketParams, theta: float, dtau: float
) -> ThetaSystem:
    if not 0.0 <= theta <= 1.0:
        raise ValueError(f"theta must lie in [0, 1], got {theta}")
    if not dtau > 0:
        raise ValueError(f"dtau must be positive, got {dtau}")
    diff = 0.5 * market.sigma**2
    drift = market.r - diff
    M, K, N = ops.mass, ops.stiffness, ops.convection
    # spatial operators of the U and V equations (positive-definite sign)
    l1 = lincomb((K, diff), (N, drift), (M, market.r))
    l2 = lincomb((K, diff), (N, drift), (M, market.r + market.r_c))
    implicit = theta * dtau
    explicit = (1.0 - theta) * dtau
    return ThetaSystem(
        theta=theta,
        dtau=dtau,
        a11=lincomb((M, 1.0), (l1, implicit)),
        a12=lincomb((M, implicit * market.r_c)),
        a22=lincomb((M, 1.0), (l2, implicit)),
        at11=lincomb((M, 1.0), (l1, -explicit)),
        at12=lincomb((M, -explicit * market.r_c)),
        at22=lincomb((M, 1.0), (l2, -explicit)),
        mass=M,
    )


def penalty_bounds(nodes, contract: BondContract, market: MarketParams, tau: float):
    """Nodal ``(u_star_put, u_star_call)`` with the call guard in place of ``inf``."""
    x = getattr(nodes, "nodes", nodes)
    lower, upper = constraint_bounds(np.asarray(x, dtype=float), tau, contract, market)
    upper = np.where(np.isinf(upper), contract.call_guard, upper)
    return np.asarray(lower, dtype=float), np.asarray(upper, dtype=float)


def update_indicators(u, lower, upper):
    """0/1 arrays ``(alpha_call, alpha_put)``; a node on a bound counts as active."""
    u = np.asarray(u, dtype=float)
    alpha_call = (u - upper >= 0.0).astype(float)
    alpha_put = (lower - u >= 0.0).astype(float)
    return alpha_call, alpha_put


def penalty_state(u, lower, upper, rho) -> PenaltyState:
    alpha_call, alpha_put = update_indicators(u, lower, upper)
    return PenaltyState(rho, alpha_call, alpha_put, np.asarray(upper), np.asarray(lower))


def apply_v_constraints(v, u_ref, x, contract: BondContract, market: MarketParams, tau: float):
    """Cash-only part after conversion, call and put rules, in that order.

    ``x`` holds the node coordinates matching ``v``/``u_ref``.  Returns a new
    array; the later rule wins where several fire.
    """
    v = np.array(v, dtype=float, copy=True)
    u_ref = np.asarray(u_ref, dtype=float)
    t = contract.maturity - tau
    conv = conversion_value(np.asarray(x, dtype=float), contract, market)
    v[u_ref <= conv] = 0.0
    b_call = dirty_call_price(t, contract)
    if np.isfinite(b_call):
        v[u_ref >= b_call] = 0.0
    if contract.put_window is not None and contract.put_window.contains(
        t, 1e-9 * max(1.0, contract.maturity)
    ):
        b_put = dirty_put_price(t, contract)
        v[u_ref <= b_put] = b_put
    return v


def is_coupon_time(contract: BondContract, tau: float) -> bool:
    t = contract.maturity - tau
    i = contract.coupon_index(t)
    # the maturity coupon is already in the terminal payoff
    return i is not None and tau > 1e-9 * max(1.0, contract.maturity)


def coupon_bump(state: SolutionState, contract: BondContract, tau_new: float) -> SolutionState:
    """Add the coupon to every nodal value when ``tau_new`` is a payment date."""
    if not is_coupon_time(contract, tau_new):
        return state
    K = contract.coupon_amount
    return replace(
        state,
        u=state.u + K,
        v=state.v + K,
        u0=state.u0 + K,
        v0=state.v0 + K,
        u_np1=state.u_np1 + K,
        v_np1=state.v_np1 + K,
    )
