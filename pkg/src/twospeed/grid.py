"""Spatial grids: a single point (0-D) or an interval with Dirichlet ends (1-D).

Fields are plain arrays of shape ``(n_nodes, m)``. In 1-D only interior
nodes are stored; the boundary values are implied zeros.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp


class ShapeError(ValueError):
    """Field does not conform to its grid."""


@dataclass(frozen=True)
class SpatialGrid:
    dim: int = 0
    n_nodes: int = 1
    m: int = 1
    length: float = 1.0

    def __post_init__(self):
        if self.dim not in (0, 1):
            raise ValueError("dim must be 0 or 1")
        if self.dim == 0 and self.n_nodes != 1:
            raise ValueError("a 0-D grid has exactly one node")
        if self.n_nodes < 1 or self.m < 1:
            raise ValueError("n_nodes and m must be positive")
        if self.length <= 0:
            raise ValueError("length must be positive")

    @classmethod
    def point(cls, m: int = 1) -> "SpatialGrid":
        return cls(dim=0, n_nodes=1, m=m)

    @classmethod
    def interval(cls, n_nodes: int, length: float = 1.0, m: int = 1) -> "SpatialGrid":
        return cls(dim=1, n_nodes=n_nodes, m=m, length=length)

    @property
    def h(self) -> float:
        """Mesh width (1.0 for the point grid, used as quadrature weight)."""
        return self.length / (self.n_nodes + 1) if self.dim == 1 else 1.0

    @property
    def weight(self) -> float:
        return self.h

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_nodes, self.m)

    @property
    def size(self) -> int:
        return self.n_nodes * self.m

    @cached_property
    def nodes(self) -> np.ndarray:
        if self.dim == 0:
            return np.zeros(1)
        return self.h * np.arange(1, self.n_nodes + 1)

    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape)

    def field(self, values) -> np.ndarray:
        """Broadcast scalars, per-node values or full arrays to a conforming field."""
        a = np.asarray(values, dtype=float)
        if a.ndim == 1 and a.shape[0] == self.n_nodes and self.m == 1:
            a = a[:, None]
        try:
            out = np.array(np.broadcast_to(a, self.shape))
        except ValueError:
            raise ShapeError(f"cannot shape {a.shape} into {self.shape}") from None
        if not np.all(np.isfinite(out)):
            raise ShapeError("field values must be finite")
        return out

    def check(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if u.shape != self.shape:
            raise ShapeError(f"field of shape {u.shape} on grid {self.shape}")
        return u

    @cached_property
    def laplacian_matrix(self) -> sp.csr_matrix:
        """Sparse matrix of the nodewise Laplacian acting on flattened fields."""
        n, m = self.n_nodes, self.m
        if self.dim == 0:
            return sp.csr_matrix((n * m, n * m))
        main = -2.0 * np.ones(n)
        off = np.ones(n - 1)
        lap1 = sp.diags([off, main, off], [-1, 0, 1]) / self.h**2
        return sp.kron(lap1, sp.identity(m), format="csr")

    def inner(self, u, v) -> float:
        return float(self.h * np.sum(np.asarray(u) * np.asarray(v)))


def laplacian(grid: SpatialGrid, u) -> np.ndarray:
    """Central second difference with zero ghost nodes (zero in 0-D)."""
    u = grid.check(u)
    if grid.dim == 0:
        return np.zeros_like(u)
    out = -2.0 * u
    out[1:] += u[:-1]
    out[:-1] += u[1:]
    return out / grid.h**2


def forward_differences(grid: SpatialGrid, u) -> np.ndarray:
    """(u_{i+1} - u_i)/h for i = 0..n with zero ghosts; shape (n+1, m)."""
    u = grid.check(u)
    if grid.dim == 0:
        return np.zeros((0, grid.m))
    z = np.zeros((1, grid.m))
    return np.diff(np.vstack([z, u, z]), axis=0) / grid.h


def norms(grid: SpatialGrid, u, q: float = 2.0) -> dict:
    u = grid.check(u)
    a = np.abs(u)
    w = grid.h
    grads = forward_differences(grid, u)
    return {
        "L1": float(w * a.sum()),
        "L2": float(np.sqrt(w * np.sum(a**2))),
        "Lq": float((w * np.sum(a**q)) ** (1.0 / q)),
        "H1_semi": float(np.sqrt(w * np.sum(grads**2))),
    }


def l1_norm(grid: SpatialGrid, u) -> float:
    return float(grid.h * np.abs(u).sum())


def l2_norm(grid: SpatialGrid, u) -> float:
    return float(np.sqrt(grid.h * np.sum(np.square(u))))


def poincare_constant(grid: SpatialGrid) -> float:
    """Sharp constant C_h with L2(u) <= C_h * H1_semi(u) on a 1-D grid."""
    if grid.dim == 0:
        return np.inf
    return grid.h / (2.0 * np.sin(np.pi * grid.h / (2.0 * grid.length)))
