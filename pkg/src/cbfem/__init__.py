"""Convertible bond pricing with the penalty two-equation model on P1/P2 finite elements."""

from .contracts import BondContract, MarketParams, Window, table1_contract, table1_market
from .fem import Mesh, assemble, build_mesh
from .stepper import NewtonConfig, PriceSurface, full_solve
from .fdm import fdm_grid, fdm_solve

__all__ = [
    "BondContract",
    "MarketParams",
    "Mesh",
    "NewtonConfig",
    "PriceSurface",
    "Window",
    "assemble",
    "build_mesh",
    "fdm_grid",
    "fdm_solve",
    "full_solve",
    "table1_contract",
    "table1_market",
]
