"""Greeks from finite-element coefficients, error norms and observed orders.

Greek helpers take the full nodal coefficient vector (boundary values
included) and 1-based element indices: element ``j`` spans
``[x_{j-1}, x_j]``.
"""

from __future__ import annotations

import numpy as np

from .errors import DomainError
from .fem import Mesh, shape_functions

# 3-point Gauss-Legendre on [0, 1]
_GAUSS3_X = 0.5 + 0.5 * np.array([-np.sqrt(0.6), 0.0, np.sqrt(0.6)])
_GAUSS3_W = 0.5 * np.array([5.0, 8.0, 5.0]) / 9.0


def _check_element(mesh: Mesh, j: int, first: int = 1):
    if not first <= j <= mesh.n_elements:
        raise DomainError(f"element index {j} outside [{first}, {mesh.n_elements}]")


def p1_element_deltas(mesh: Mesh, u, s_init: float):
    """Delta at every element midpoint of a P1 solution: ``(S_mid, delta)``."""
    u = np.asarray(u, dtype=float)
    x_mid = 0.5 * (mesh.nodes[:-1] + mesh.nodes[1:])
    s_mid = s_init * np.exp(x_mid)
    return s_mid, np.diff(u) / (mesh.h * s_mid)


def delta_p1(mesh: Mesh, u, j: int, s_init: float):
    _check_element(mesh, j)
    s_mid = s_init * np.exp(mesh.nodes[j - 1] + 0.5 * mesh.h)
    return float(s_mid), float((u[j] - u[j - 1]) / (mesh.h * s_mid))


def gamma_p1(mesh: Mesh, u, j: int, s_init: float, chain_rule_term: bool = False):
    """Gamma at node ``x_{j-1}`` from the second difference of nodal values.

    By default only the ``U_xx / S^2`` part of ``d2U/dS2`` is returned; set
    ``chain_rule_term`` to subtract the ``U_x / S^2`` term as well.
    """
    if not 2 <= j <= mesh.n_elements:
        raise DomainError(f"gamma index {j} outside [2, {mesh.n_elements}]")
    h = mesh.h
    s = s_init * np.exp(mesh.nodes[j - 1])
    uxx = (u[j] - 2.0 * u[j - 1] + u[j - 2]) / h**2
    if chain_rule_term:
        uxx -= (u[j] - u[j - 2]) / (2.0 * h)
    return float(s), float(uxx / s**2)


def delta_gamma_p2(mesh: Mesh, u, j: int, s_init: float, chain_rule_term: bool = False):
    """Delta and gamma at the midpoint of P2 element ``j``."""
    if mesh.order != 2:
        raise ValueError("delta_gamma_p2 needs a P2 mesh")
    _check_element(mesh, j)
    i0 = 2 * (j - 1)
    u_left, u_mid, u_right = u[i0], u[i0 + 1], u[i0 + 2]
    h = mesh.h
    s = s_init * np.exp(mesh.nodes[i0 + 1])
    ux = (u_right - u_left) / h
    uxx = 4.0 * (u_right - 2.0 * u_mid + u_left) / h**2
    if chain_rule_term:
        uxx -= ux
    return float(s), float(ux / s), float(uxx / s**2)


def greeks_profile(mesh: Mesh, u, s_init: float, chain_rule_term: bool = False):
    """Vectorised ``(S, delta, gamma)`` for one time level.

    P2: element midpoints.  P1: interior nodes, with delta taken as the
    central difference of neighbouring nodal values.
    """
    u = np.asarray(u, dtype=float)
    h = mesh.h
    if mesh.order == 2:
        left, mid, right = u[0:-2:2], u[1:-1:2], u[2::2]
        s = s_init * np.exp(mesh.nodes[1:-1:2])
        ux = (right - left) / h
        uxx = 4.0 * (right - 2.0 * mid + left) / h**2
    else:
        s = s_init * np.exp(mesh.nodes[1:-1])
        ux = (u[2:] - u[:-2]) / (2.0 * h)
        uxx = (u[2:] - 2.0 * u[1:-1] + u[:-2]) / h**2
    if chain_rule_term:
        uxx = uxx - ux
    return s, ux / s, uxx / s**2


def error_l2(numeric, exact, mesh: Mesh) -> float:
    """L2 norm of the finite-element interpolant of the nodal error.

    ``numeric`` is the full nodal vector and ``exact`` a vectorised callable
    sampled at the nodes.  The integrand is a piecewise polynomial of degree
    ``2p``, so 3-point Gauss quadrature is exact.
    """
    numeric = np.asarray(numeric, dtype=float)
    if numeric.shape[0] != mesh.n_nodes:
        raise ValueError(f"expected {mesh.n_nodes} nodal values, got {numeric.shape[0]}")
    e = numeric - np.asarray(exact(mesh.nodes), dtype=float)
    p = mesh.order
    idx = np.arange(mesh.n_elements)[:, None] * p + np.arange(p + 1)
    eq = e[idx] @ shape_functions(p, _GAUSS3_X).T  # (n_E, 3)
    return float(np.sqrt(mesh.h * np.sum(eq**2 @ _GAUSS3_W)))


def error_linf_l2(history) -> float:
    history = list(history)
    if not history:
        raise ValueError("empty error history")
    return float(max(history))


def convergence_order(errors, steps) -> float:
    """Least-squares slope of log(error) against log(step)."""
    e = np.asarray(errors, dtype=float)
    s = np.asarray(steps, dtype=float)
    if e.shape != s.shape or e.size < 2:
        raise ValueError("need at least two (error, step) pairs")
    if np.any(e <= 0) or np.any(s <= 0):
        raise ValueError("errors and steps must be positive")
    slope, _ = np.polyfit(np.log(s), np.log(e), 1)
    return float(slope)
