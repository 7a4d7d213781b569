"""Uniform 1-D Lagrange finite elements (P1/P2) on a log-moneyness interval."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .banded import BandedMatrix
from .errors import ConfigurationError, DomainError


@dataclass(frozen=True)
class Mesh:
    x_min: float
    x_max: float
    n_elements: int
    order: int

    @property
    def h(self) -> float:
        return (self.x_max - self.x_min) / self.n_elements

    @property
    def n_nodes(self) -> int:
        return self.order * self.n_elements + 1

    @property
    def n_interior(self) -> int:
        return self.n_nodes - 2

    @property
    def nodes(self) -> np.ndarray:
        # x_min + i * spacing; linspace keeps both ends exact
        return np.linspace(self.x_min, self.x_max, self.n_nodes)

    @property
    def interior(self) -> slice:
        return slice(1, self.n_nodes - 1)

    def element_nodes(self, j: int) -> np.ndarray:
        """Global node indices of element ``j`` (0-based), left to right."""
        return j * self.order + np.arange(self.order + 1)


def build_mesh(x_min: float, x_max: float, n_elements: int, order: int) -> Mesh:
    if order not in (1, 2):
        raise ConfigurationError(f"element order must be 1 or 2, got {order}")
    if not (math.isfinite(x_min) and math.isfinite(x_max)):
        raise ConfigurationError("mesh bounds must be finite")
    if not x_min < x_max:
        raise ConfigurationError(f"x_min={x_min} must be below x_max={x_max}")
    if int(n_elements) != n_elements or n_elements < 2:
        raise ConfigurationError(f"need at least 2 elements, got {n_elements}")
    return Mesh(float(x_min), float(x_max), int(n_elements), order)


@dataclass(frozen=True)
class ElementMatrices:
    """Local matrices; ``stiffness`` holds +int(psi_i' psi_j'), ``convection``
    holds int(psi_row' psi_col)."""

    mass: np.ndarray
    stiffness: np.ndarray
    convection: np.ndarray


def p1_element_matrices(h: float) -> ElementMatrices:
    if not h > 0:
        raise ConfigurationError(f"element width must be positive, got {h}")
    mass = h / 6.0 * np.array([[2.0, 1.0], [1.0, 2.0]])
    stiffness = 1.0 / h * np.array([[1.0, -1.0], [-1.0, 1.0]])
    convection = 0.5 * np.array([[-1.0, -1.0], [1.0, 1.0]])
    return ElementMatrices(mass, stiffness, convection)


def p2_element_matrices(h: float) -> ElementMatrices:
    if not h > 0:
        raise ConfigurationError(f"element width must be positive, got {h}")
    mass = h / 30.0 * np.array([[4.0, 2.0, -1.0], [2.0, 16.0, 2.0], [-1.0, 2.0, 4.0]])
    stiffness = 1.0 / (3.0 * h) * np.array(
        [[7.0, -8.0, 1.0], [-8.0, 16.0, -8.0], [1.0, -8.0, 7.0]]
    )
    convection = 1.0 / 6.0 * np.array(
        [[-3.0, -4.0, 1.0], [4.0, 0.0, -4.0], [-1.0, 4.0, 3.0]]
    )
    return ElementMatrices(mass, stiffness, convection)


def element_matrices(order: int, h: float) -> ElementMatrices:
    return p1_element_matrices(h) if order == 1 else p2_element_matrices(h)


@dataclass(frozen=True)
class RowOperator:
    """Rows of a global operator belonging to the interior unknowns.

    ``interior`` acts on the interior coefficients; ``left``/``right`` are
    the columns that multiply the two boundary values.
    """

    interior: BandedMatrix
    left: np.ndarray
    right: np.ndarray

    def apply(self, full):
        """Action on a full nodal vector (boundary values at both ends)."""
        full = np.asarray(full, dtype=float)
        return self.interior.matvec(full[1:-1]) + self.left * full[0] + self.right * full[-1]

    def boundary(self, left_value, right_value):
        return self.left * left_value + self.right * right_value

    def combine(self, *terms):
        """Linear combination ``self*c0 + sum(op*c)`` given ``(c0, (op, c), ...)``."""
        c0, rest = terms[0], terms[1:]
        interior = c0 * self.interior
        left = c0 * self.left
        right = c0 * self.right
        for op, c in rest:
            interior = interior + c * op.interior
            left = left + c * op.left
            right = right + c * op.right
        return RowOperator(interior, left, right)


def lincomb(*pairs) -> RowOperator:
    """``sum(c * op)`` over ``(op, c)`` pairs."""
    (op0, c0), rest = pairs[0], pairs[1:]
    return op0.combine(c0, *rest)


@dataclass(frozen=True)
class GlobalOperators:
    """Assembled mass, stiffness and convection rows for the interior nodes."""

    mass: RowOperator
    stiffness: RowOperator
    convection: RowOperator
    nodes: np.ndarray
    bandwidth: int


def _assemble_full(mesh: Mesh, local: np.ndarray) -> BandedMatrix:
    """Overlap-add of one local matrix into the all-node banded matrix."""
    p = mesh.order
    full = BandedMatrix.zeros(mesh.n_nodes, p)
    starts = np.arange(mesh.n_elements) * p
    for a in range(p + 1):
        for b in range(p + 1):
            rows = starts + a
            cols = starts + b
            np.add.at(full.ab, (p + rows - cols, cols), local[a, b])
    return full


def _split(full: BandedMatrix) -> RowOperator:
    bw, n = full.bw, full.n
    interior_ab = full.ab[:, 1 : n - 1].copy()
    # drop entries that pointed at boundary rows
    interior = BandedMatrix(interior_ab, bw)
    dense_cols = np.zeros((n - 2, 2))
    for d in range(1, bw + 1):
        # column 0: rows 1..bw have A[i, 0] = ab[bw + i, 0]
        if d < n - 1:
            dense_cols[d - 1, 0] = full.ab[bw + d, 0]
            # last column: rows n-1-d have A[n-1-d, n-1] = ab[bw - d, n-1]
            dense_cols[n - 2 - d, 1] = full.ab[bw - d, n - 1]
    _clear_outside(interior)
    return RowOperator(interior, dense_cols[:, 0].copy(), dense_cols[:, 1].copy())


def _clear_outside(m: BandedMatrix) -> None:
    n, bw = m.n, m.bw
    for d in range(1, bw + 1):
        m.ab[bw - d, :d] = 0.0
        m.ab[bw + d, n - d :] = 0.0


def assemble(mesh: Mesh) -> GlobalOperators:
    local = element_matrices(mesh.order, mesh.h)
    ops = [
        _split(_assemble_full(mesh, m))
        for m in (local.mass, local.stiffness, local.convection)
    ]
    return GlobalOperators(*ops, nodes=mesh.nodes, bandwidth=mesh.order)


def shape_functions(order: int, xi):
    """Basis values at reference coordinate ``xi`` in [0, 1]; shape ``(..., order+1)``."""
    xi = np.asarray(xi, dtype=float)
    if order == 1:
        return np.stack([1.0 - xi, xi], axis=-1)
    return np.stack(
        [2.0 * (xi - 0.5) * (xi - 1.0), -4.0 * xi * (xi - 1.0), 2.0 * xi * (xi - 0.5)],
        axis=-1,
    )


def shape_derivatives(order: int, xi, h: float):
    """d(psi)/dx at ``xi``; shape ``(..., order+1)``."""
    xi = np.asarray(xi, dtype=float)
    if order == 1:
        ones = np.ones_like(xi)
        return np.stack([-ones, ones], axis=-1) / h
    return np.stack([4.0 * xi - 3.0, 4.0 - 8.0 * xi, 4.0 * xi - 1.0], axis=-1) / h


def full_vector(interior, left, right) -> np.ndarray:
    return np.concatenate(([left], np.asarray(interior, dtype=float), [right]))


def locate(mesh: Mesh, x):
    """Element index and reference coordinate of each query point."""
    x = np.asarray(x, dtype=float)
    tol = 1e-12 * max(1.0, abs(mesh.x_min), abs(mesh.x_max))
    if np.any(x < mesh.x_min - tol) or np.any(x > mesh.x_max + tol):
        raise DomainError(f"query outside [{mesh.x_min}, {mesh.x_max}]")
    s = (np.clip(x, mesh.x_min, mesh.x_max) - mesh.x_min) / mesh.h
    j = np.minimum(np.floor(s).astype(int), mesh.n_elements - 1)
    return j, s - j


def fe_interpolate(mesh: Mesh, interior_coeffs, boundary_values, x_query):
    """Evaluate the finite-element function at ``x_query``."""
    coeffs = full_vector(interior_coeffs, *boundary_values)
    if coeffs.shape[0] != mesh.n_nodes:
        raise ValueError(f"expected {mesh.n_interior} interior coefficients")
    j, xi = locate(mesh, x_query)
    idx = j[..., None] * mesh.order + np.arange(mesh.order + 1)
    vals = np.sum(coeffs[idx] * shape_functions(mesh.order, xi), axis=-1)
    return float(vals) if np.ndim(x_query) == 0 else vals
