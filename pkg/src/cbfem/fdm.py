"""Second-order central finite differences for the same penalty TF system.

The difference operators are packaged with the identity in place of the mass
matrix, so the stepper's time loop, penalty and Newton logic run unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .banded import BandedMatrix
from .contracts import BondContract, MarketParams
from .fem import GlobalOperators, Mesh, RowOperator, build_mesh
from .stepper import NewtonConfig, PriceSurface, march


@dataclass(frozen=True)
class FdmOperators:
    """Tridiagonal ``sigma^2/2 d2/dx2`` and ``(r - sigma^2/2) d/dx`` on a uniform grid."""

    l_diff: BandedMatrix
    l_conv: BandedMatrix
    h: float


def _second_difference(n: int, h: float) -> BandedMatrix:
    m = BandedMatrix.zeros(n, 1)
    m.ab[0, 1:] = 1.0 / h**2
    m.ab[1, :] = -2.0 / h**2
    m.ab[2, :-1] = 1.0 / h**2
    return m


def _first_difference(n: int, h: float) -> BandedMatrix:
    m = BandedMatrix.zeros(n, 1)
    m.ab[0, 1:] = 1.0 / (2.0 * h)
    m.ab[2, :-1] = -1.0 / (2.0 * h)
    return m


def fdm_operators(n_points: int, h: float, market: MarketParams) -> FdmOperators:
    """Operators on ``n_points`` consecutive grid points (all rows interior-style)."""
    diff = 0.5 * market.sigma**2
    drift = market.r - diff
    return FdmOperators(
        diff * _second_difference(n_points, h), drift * _first_difference(n_points, h), h
    )


def _rows(full: BandedMatrix) -> RowOperator:
    """Interior rows of an all-node tridiagonal matrix."""
    n = full.n
    interior = BandedMatrix(full.ab[:, 1 : n - 1].copy(), 1)
    interior.ab[0, 0] = 0.0
    interior.ab[2, -1] = 0.0
    left = np.zeros(n - 2)
    right = np.zeros(n - 2)
    left[0] = full.ab[2, 0]
    right[-1] = full.ab[0, n - 1]
    return RowOperator(interior, left, right)


def fdm_global_operators(grid: Mesh) -> GlobalOperators:
    """Difference operators in the stepper's sign convention.

    ``stiffness`` is ``-d2/dx2`` and ``convection`` is ``-d/dx`` so that
    ``-(sigma^2/2) K - (r - sigma^2/2) N`` is the spatial generator, as for
    the Galerkin matrices divided by ``h``.
    """
    nodes = grid.nodes
    n, h = nodes.size, grid.h
    ident = BandedMatrix.identity(n, 1)
    return GlobalOperators(
        mass=_rows(ident),
        stiffness=_rows(-1.0 * _second_difference(n, h)),
        convection=_rows(-1.0 * _first_difference(n, h)),
        nodes=nodes,
        bandwidth=1,
    )


def fdm_grid(x_min: float, x_max: float, n_intervals: int) -> Mesh:
    return build_mesh(x_min, x_max, n_intervals, 1)


def fdm_solve(
    grid: Mesh,
    contract: BondContract,
    market: MarketParams,
    theta: float = 0.5,
    n_t: int = 100,
    cfg: Optional[NewtonConfig] = None,
) -> PriceSurface:
    if grid.order != 1:
        raise ValueError("finite-difference grid must use the P1 node layout")
    cfg = cfg or NewtonConfig()
    surface = march(fdm_global_operators(grid), contract, market, theta, n_t, cfg)
    return surface
