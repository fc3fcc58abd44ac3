"""Uniform tensor-product mesh over ``[0, L]^d``.

Nodes are ``x_j = j h`` with ``j = (j_1, ..., j_d)``, ``0 <= j_i <= N`` and
``h = L / N``. Linear indices follow ``p = sum_i j_i (N+1)^i`` with axes
counted from zero, so axis 0 varies fastest and moving one node along
axis ``i`` shifts ``p`` by ``(N+1)^i``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

__all__ = ["Grid", "BOUNDARY"]

#: Returned by :meth:`Grid.neighbor` when the move would leave the domain.
BOUNDARY = None

_INDEX_LIMIT = 2**63 - 1


@dataclass(frozen=True)
class Grid:
    """Uniform mesh with ``N + 1`` nodes per axis.

    Parameters
    ----------
    d : int
        Number of spatial dimensions.
    N : int
        Number of intervals per axis.
    L : float
        Side length of the cubic domain.
    """

    d: int
    N: int
    L: float

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise ValueError(f"dimension must be a positive integer, got {self.d}")
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"N must be a positive integer, got {self.N}")
        if not (np.isfinite(self.L) and self.L > 0):
            raise ValueError(f"L must be positive and finite, got {self.L}")
        if (self.N + 1) ** self.d > _INDEX_LIMIT:
            raise OverflowError(
                f"(N+1)^d = {self.N + 1}^{self.d} exceeds the 64-bit index range"
            )
        object.__setattr__(self, "d", int(self.d))
        object.__setattr__(self, "N", int(self.N))
        object.__setattr__(self, "L", float(self.L))

    @property
    def h(self) -> float:
        return self.L / self.N

    @property
    def n_per_axis(self) -> int:
        return self.N + 1

    @property
    def n_points(self) -> int:
        return (self.N + 1) ** self.d

    @property
    def strides(self) -> tuple[int, ...]:
        return tuple((self.N + 1) ** i for i in range(self.d))

    def multi_to_linear(self, j: Sequence[int]) -> int:
        j = tuple(int(v) for v in j)
        if len(j) != self.d:
            raise IndexError(f"multi-index has {len(j)} components, grid has d={self.d}")
        p = 0
        for i, (ji, s) in enumerate(zip(j, self.strides)):
            if not 0 <= ji <= self.N:
                raise IndexError(f"component {i} = {ji} outside [0, {self.N}]")
            p += ji * s
        return p

    def linear_to_multi(self, p: int) -> tuple[int, ...]:
        p = int(p)
        if not 0 <= p < self.n_points:
            raise IndexError(f"linear index {p} outside [0, {self.n_points - 1}]")
        j = []
        for _ in range(self.d):
            p, r = divmod(p, self.N + 1)
            j.append(r)
        return tuple(j)

    def neighbor(self, p: int, axis: int, direction: int) -> int | None:
        """Index of the node one step along ``axis``, or :data:`BOUNDARY`."""
        if not 0 <= axis < self.d:
            raise IndexError(f"axis {axis} outside [0, {self.d - 1}]")
        if direction not in (-1, 1):
            raise ValueError("direction must be +1 or -1")
        ji = self.linear_to_multi(p)[axis]
        if not 0 <= ji + direction <= self.N:
            return BOUNDARY
        return int(p) + direction * self.strides[axis]

    def is_boundary(self, p: int) -> bool:
        return any(ji in (0, self.N) for ji in self.linear_to_multi(p))

    # Vectorized views, ordered by linear index.

    @cached_property
    def multi_indices(self) -> np.ndarray:
        """Array of shape ``(n_points, d)`` holding every multi-index."""
        axes = np.arange(self.N + 1, dtype=np.int64)
        mesh = np.meshgrid(*([axes] * self.d), indexing="ij")
        # meshgrid's last axis varies fastest when raveled; reverse so axis 0 does.
        return np.stack([m.ravel() for m in reversed(mesh)], axis=-1)

    @cached_property
    def points(self) -> np.ndarray:
        """Node coordinates, shape ``(n_points, d)``."""
        return self.multi_indices * self.h

    def axis_coordinates(self) -> np.ndarray:
        return np.arange(self.N + 1) * self.h

    def nearest_node(self, x: Sequence[float]) -> int:
        x = np.asarray(x, dtype=float).reshape(self.d)
        j = np.clip(np.rint(x / self.h), 0, self.N).astype(np.int64)
        return self.multi_to_linear(j)

    def reshape(self, values: np.ndarray) -> np.ndarray:
        """View a nodal vector as a ``(N+1,) * d`` array indexed ``[j_1, ..., j_d]``."""
        return np.asarray(values).reshape((self.N + 1,) * self.d, order="F")
