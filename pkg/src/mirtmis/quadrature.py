"""Tensor-product Gauss-Hermite grids for expectations under N(0, I)."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import InvalidArgumentError, NumericalError

# Resolution used when the caller does not ask for one.
DEFAULT_POINTS = {1: 41, 2: 21, 3: 11}


@dataclass(frozen=True)
class QuadratureGrid:
    points: np.ndarray  # L x K
    weights: np.ndarray  # L
    points_per_dim: int

    @property
    def K(self) -> int:
        return self.points.shape[1]

    @property
    def L(self) -> int:
        return self.points.shape[0]

    @property
    def log_weights(self) -> np.ndarray:
        return np.log(self.weights)


def default_points(K: int) -> int:
    return DEFAULT_POINTS.get(K, 7)


def gauss_hermite_normal(q: int):
    """1-D nodes and weights for E[f(X)], X ~ N(0, 1)."""
    t, u = np.polynomial.hermite.hermgauss(q)
    x = np.sqrt(2.0) * t
    w = u / np.sqrt(np.pi)
    # hermgauss is symmetric up to rounding; enforce it exactly
    x = 0.5 * (x - x[::-1])
    w = 0.5 * (w + w[::-1])
    return x, w / w.sum()


def build_grid(K: int, points_per_dim: int | None = None) -> QuadratureGrid:
    if points_per_dim is None:
        points_per_dim = default_points(K)
    if int(K) < 1 or int(points_per_dim) < 2:
        raise InvalidArgumentError(
            f"need K >= 1 and points_per_dim >= 2, got K={K}, points_per_dim={points_per_dim}"
        )
    K, q = int(K), int(points_per_dim)
    x, w = gauss_hermite_normal(q)
    mesh = np.meshgrid(*([x] * K), indexing="ij")
    points = np.stack([m.reshape(-1) for m in mesh], axis=1)
    wmesh = np.meshgrid(*([w] * K), indexing="ij")
    weights = np.prod(np.stack([m.reshape(-1) for m in wmesh], axis=1), axis=1)
    points.setflags(write=False)
    weights.setflags(write=False)
    return QuadratureGrid(points=points, weights=weights, points_per_dim=q)


def integrate(f: Callable[[np.ndarray], float], grid: QuadratureGrid) -> float:
    """Sum of ``w_l * f(gamma_l)`` over the grid."""
    total = 0.0
    for point, w in zip(grid.points, grid.weights):
        v = float(f(point))
        if not np.isfinite(v):
            raise NumericalError(f"integrand is {v} at grid point {point.tolist()}")
        total += w * v
    return total
