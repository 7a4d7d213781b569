"""Bond contract terms, accrued interest and price bounds in log-moneyness.

Times passed to the ``dirty_*`` helpers and :func:`accrued_interest` are
forward year-fractions ``t``.  The solver works in backward time
``tau = T - t``; :func:`constraint_bounds` does that conversion itself.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from .errors import ConfigurationError, DomainError

# Relative slack used when matching a floating time against coupon dates
# and window edges.  Grid times are built as m * T / n_t, so exact equality
# cannot be relied upon.
TIME_SNAP = 1e-9

# Finite stand-in for the "no call" bound, as a multiple of face value.
CALL_GUARD_FACTOR = 1e9


@dataclass(frozen=True)
class Window:
    """Interval of forward times on which a call or put right is live.

    ``left_open=True`` gives ``(start, end]``, otherwise ``[start, end]``.
    """

    start: float
    end: float
    left_open: bool = False

    def __post_init__(self):
        if not (math.isfinite(self.start) and math.isfinite(self.end)):
            raise ConfigurationError("window bounds must be finite")
        if self.start > self.end:
            raise ConfigurationError(
                f"window start {self.start} is after its end {self.end}"
            )

    def contains(self, t: float, slack: float = 0.0) -> bool:
        if self.left_open:
            lower_ok = t > self.start + slack
        else:
            lower_ok = t >= self.start - slack
        return lower_ok and t <= self.end + slack

    def overlaps(self, other: "Window") -> bool:
        lo = max(self.start, other.start)
        hi = min(self.end, other.end)
        if lo < hi:
            return True
        if lo > hi:
            return False
        # single shared point: both must include it
        return self.contains(lo) and other.contains(lo)


@dataclass(frozen=True)
class MarketParams:
    r: float
    r_c: float
    sigma: float
    s_init: float

    def __post_init__(self):
        problems = []
        for name in ("r", "r_c", "sigma", "s_init"):
            if not math.isfinite(getattr(self, name)):
                problems.append(f"{name} must be finite")
        if self.sigma <= 0:
            problems.append(f"sigma must be positive, got {self.sigma}")
        if self.s_init <= 0:
            problems.append(f"s_init must be positive, got {self.s_init}")
        if self.r < 0:
            problems.append(f"r must be non-negative, got {self.r}")
        if self.r_c < 0:
            problems.append(f"r_c must be non-negative, got {self.r_c}")
        if problems:
            raise ConfigurationError("; ".join(problems))


@dataclass(frozen=True)
class BondContract:
    face_value: float
    coupon_amount: float
    coupon_times: Tuple[float, ...]
    conversion_ratio: float
    maturity: float
    call_price: Optional[float] = None
    call_window: Optional[Window] = None
    put_price: Optional[float] = None
    put_window: Optional[Window] = None
    _times: list = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "coupon_times", tuple(float(t) for t in self.coupon_times))
        problems = []
        if not self.face_value > 0:
            problems.append("face_value must be positive")
        if not self.coupon_amount >= 0:
            problems.append("coupon_amount must be non-negative")
        if not self.conversion_ratio >= 0:
            problems.append("conversion_ratio must be non-negative")
        if not self.maturity > 0:
            problems.append("maturity must be positive")
        times = self.coupon_times
        if any(b <= a for a, b in zip(times, times[1:])):
            problems.append("coupon_times must be strictly increasing")
        if any(not (0 < t <= self.maturity) for t in times):
            problems.append("coupon_times must lie in (0, maturity]")
        for kind in ("call", "put"):
            window = getattr(self, f"{kind}_window")
            price = getattr(self, f"{kind}_price")
            if window is not None and not (0 <= window.start and window.end <= self.maturity):
                problems.append(f"{kind}_window must lie within [0, maturity]")
            if window is not None and price is None:
                problems.append(f"{kind}_window given without {kind}_price")
            if price is not None and not price >= 0:
                problems.append(f"{kind}_price must be non-negative")
        if (
            self.call_window is not None
            and self.put_window is not None
            and self.call_price is not None
            and self.put_price is not None
            and self.call_window.overlaps(self.put_window)
            and self.put_price > self.call_price
        ):
            problems.append("put price exceeds call price on overlapping windows")
        if problems:
            raise ConfigurationError("; ".join(problems))
        object.__setattr__(self, "_times", list(times))

    @property
    def call_guard(self) -> float:
        return CALL_GUARD_FACTOR * self.face_value

    def redemption(self) -> float:
        """Amount paid at maturity when not converted: F plus the final coupon."""
        pays_at_maturity = bool(self.coupon_times) and _same_time(
            self.coupon_times[-1], self.maturity, self.maturity
        )
        return self.face_value + (self.coupon_amount if pays_at_maturity else 0.0)

    def coupon_index(self, t: float) -> Optional[int]:
        """Index of the coupon paid at forward time ``t``, if any."""
        i = bisect.bisect_left(self._times, t - TIME_SNAP * self.maturity)
        if i < len(self._times) and _same_time(self._times[i], t, self.maturity):
            return i
        return None


def _same_time(a: float, b: float, scale: float) -> bool:
    return abs(a - b) <= TIME_SNAP * max(1.0, scale)


def _check_time(t: float, contract: BondContract) -> float:
    T = contract.maturity
    slack = TIME_SNAP * max(1.0, T)
    if not (-slack <= t <= T + slack):
        raise DomainError(f"time {t} outside [0, {T}]")
    return min(max(t, 0.0), T)


def accrued_interest(t: float, contract: BondContract) -> float:
    """Pro-rata share of the pending coupon at forward time ``t``.

    Coupon periods are half-open ``(t_{i-1}, t_i]`` with ``t_0 = 0``, so the
    full coupon is accrued on a payment date and accrual restarts right after.
    """
    t = _check_time(t, contract)
    times = contract._times
    if not times:
        return 0.0
    i = contract.coupon_index(t)
    if i is not None:
        return float(contract.coupon_amount)
    i = bisect.bisect_left(times, t)
    if i == len(times):
        return 0.0
    prev = times[i - 1] if i > 0 else 0.0
    if t <= prev:
        return 0.0
    return contract.coupon_amount * (t - prev) / (times[i] - prev)


def dirty_call_price(t: float, contract: BondContract) -> float:
    """Clean call price plus accrued interest inside the call window, else ``inf``."""
    t = _check_time(t, contract)
    w = contract.call_window
    if w is None or contract.call_price is None:
        return math.inf
    if not w.contains(t, TIME_SNAP * max(1.0, contract.maturity)):
        return math.inf
    return contract.call_price + accrued_interest(t, contract)


def dirty_put_price(t: float, contract: BondContract) -> float:
    """Clean put price plus accrued interest inside the put window, else 0."""
    t = _check_time(t, contract)
    w = contract.put_window
    if w is None or contract.put_price is None:
        return 0.0
    if not w.contains(t, TIME_SNAP * max(1.0, contract.maturity)):
        return 0.0
    return contract.put_price + accrued_interest(t, contract)


def conversion_value(x, contract: BondContract, market: MarketParams):
    return contract.conversion_ratio * market.s_init * np.exp(x)


def constraint_bounds(x, tau: float, contract: BondContract, market: MarketParams):
    """Return ``(lower, upper)`` bounds on the bond value at ``(x, tau)``.

    ``lower = max(B_put, kS)`` and ``upper = max(B_call, kS)``; ``upper`` is
    ``inf`` outside the call window.  Works on scalars and arrays of ``x``.
    """
    if not (-TIME_SNAP <= tau <= contract.maturity * (1 + TIME_SNAP)):
        raise DomainError(f"tau {tau} outside [0, {contract.maturity}]")
    t = contract.maturity - tau
    conv = conversion_value(x, contract, market)
    lower = np.maximum(dirty_put_price(t, contract), conv)
    upper = np.maximum(dirty_call_price(t, contract), conv)
    if np.ndim(x) == 0:
        return float(lower), float(upper)
    return lower, upper


def terminal_payoff(x, contract: BondContract, market: MarketParams):
    """Bond and cash-only values at maturity; ties go to the bond branch."""
    conv = conversion_value(x, contract, market)
    redeem = contract.redemption()
    bond_branch = redeem >= conv
    u = np.where(bond_branch, redeem, conv)
    v = np.where(bond_branch, redeem, 0.0)
    if np.ndim(x) == 0:
        return float(u), float(v)
    return u, v


def table1_contract() -> BondContract:
    """The five-year callable/puttable bond used in the reference study."""
    return BondContract(
        face_value=100.0,
        coupon_amount=4.0,
        coupon_times=tuple(0.5 * i for i in range(1, 11)),
        conversion_ratio=1.0,
        maturity=5.0,
        call_price=110.0,
        call_window=Window(2.0, 5.0, left_open=True),
        put_price=105.0,
        put_window=Window(2.0, 3.0, left_open=True),
    )


def table1_market() -> MarketParams:
    return MarketParams(r=0.05, r_c=0.02, sigma=0.2, s_init=100.0)
