"""
Grids and Fields
Uniform lattices in 1D/2D, scalar fields on them, and symmetric matrices
"""
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np

from core.errors import GridIndexError, ParameterError, ShapeError

MultiIndex = Tuple[int, ...]


@dataclass(frozen=True)
class Grid:
    """
    Uniform axis-aligned lattice.

    Nodes along axis i are lo[i] + k * h[i] for k = 0..n[i]-1. Values on the
    grid are stored as arrays of shape ``grid.shape`` with 'ij' indexing.
    """
    dim: int
    lo: Tuple[float, ...]
    hi: Tuple[float, ...]
    n: Tuple[int, ...]

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ParameterError(f"dim={self.dim} not supported (1 or 2)")
        lo = tuple(float(v) for v in np.atleast_1d(self.lo))
        hi = tuple(float(v) for v in np.atleast_1d(self.hi))
        n = np.atleast_1d(self.n).astype(int)
        if n.size == 1:
            n = np.repeat(n, self.dim)
        n = tuple(int(v) for v in n)
        if not (len(lo) == len(hi) == len(n) == self.dim):
            raise ShapeError(
                f"grid corners/sizes {lo}, {hi}, {n} do not match dim={self.dim}"
            )
        for a, b, m in zip(lo, hi, n):
            if not b > a:
                raise ParameterError(f"empty axis [{a}, {b}]")
            if m < 3:
                raise ParameterError(f"n={m} points per axis, need >= 3")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "n", n)

    @classmethod
    def uniform(cls, dim: int, lo: float, hi: float, n: int) -> "Grid":
        """Square (or interval) grid with the same extent on every axis."""
        return cls(dim=dim, lo=(lo,) * dim, hi=(hi,) * dim, n=(n,) * dim)

    @cached_property
    def h(self) -> Tuple[float, ...]:
        return tuple((b - a) / (m - 1) for a, b, m in zip(self.lo, self.hi, self.n))

    @property
    def h_max(self) -> float:
        return max(self.h)

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.n

    @property
    def size(self) -> int:
        return int(np.prod(self.n))

    @cached_property
    def axes(self) -> Tuple[np.ndarray, ...]:
        return tuple(
            a + np.arange(m, dtype=float) * step
            for a, m, step in zip(self.lo, self.n, self.h)
        )

    @cached_property
    def mesh(self) -> Tuple[np.ndarray, ...]:
        """Coordinate arrays of shape ``grid.shape``, one per axis."""
        return tuple(np.meshgrid(*self.axes, indexing="ij"))

    @cached_property
    def points(self) -> np.ndarray:
        """All node coordinates, shape (size, dim), C order."""
        return np.stack([c.ravel() for c in self.mesh], axis=1)

    @cached_property
    def interior_mask(self) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        mask[(slice(1, -1),) * self.dim] = True
        return mask

    @property
    def boundary_mask(self) -> np.ndarray:
        return ~self.interior_mask

    @property
    def interior_shape(self) -> Tuple[int, ...]:
        return tuple(m - 2 for m in self.n)

    @cached_property
    def interior_indices(self) -> np.ndarray:
        return np.flatnonzero(self.interior_mask)

    @cached_property
    def boundary_indices(self) -> np.ndarray:
        return np.flatnonzero(self.boundary_mask)

    @property
    def inradius(self) -> float:
        """Radius of the largest ball centred in the box."""
        return min((b - a) / 2.0 for a, b in zip(self.lo, self.hi))

    @property
    def diameter(self) -> float:
        return float(np.sqrt(sum((b - a) ** 2 for a, b in zip(self.lo, self.hi))))

    def flat_index(self, idx: MultiIndex) -> int:
        return int(np.ravel_multi_index(tuple(idx), self.shape))

    def multi_index(self, flat: int) -> MultiIndex:
        return tuple(int(v) for v in np.unravel_index(int(flat), self.shape))

    def coordinate(self, idx: Union[int, MultiIndex]) -> np.ndarray:
        if isinstance(idx, (int, np.integer)):
            idx = self.multi_index(idx)
        return np.array([ax[i] for ax, i in zip(self.axes, idx)])

    def is_interior(self, idx: MultiIndex) -> bool:
        return all(1 <= i <= m - 2 for i, m in zip(idx, self.n))

    def contains_ball(self, center: Sequence[float], r: float, slack: float = 1e-12) -> bool:
        c = np.atleast_1d(np.asarray(center, dtype=float))
        return all(
            c[i] - r >= self.lo[i] - slack and c[i] + r <= self.hi[i] + slack
            for i in range(self.dim)
        )

    def refine(self) -> "Grid":
        """Nested refinement n -> 2n - 1."""
        return Grid(dim=self.dim, lo=self.lo, hi=self.hi, n=tuple(2 * m - 1 for m in self.n))


@dataclass(frozen=True)
class ScalarField:
    """Real values on every node of a grid; read-only and NaN-free."""
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64, copy=True)
        if values.size == self.grid.size and values.shape != self.grid.shape:
            values = values.reshape(self.grid.shape)
        if values.shape != self.grid.shape:
            raise ShapeError(
                f"field shape {values.shape} does not match grid {self.grid.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise ShapeError("field contains NaN or infinite values")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @classmethod
    def from_function(cls, grid: Grid, fn: Callable[[np.ndarray], np.ndarray]) -> "ScalarField":
        """Sample ``fn`` on all nodes; ``fn`` receives an (N, dim) array."""
        return cls(grid, np.asarray(fn(grid.points), dtype=float).reshape(grid.shape))

    @classmethod
    def zeros(cls, grid: Grid) -> "ScalarField":
        return cls(grid, np.zeros(grid.shape))

    @property
    def flat(self) -> np.ndarray:
        return self.values.ravel()

    def with_values(self, values: np.ndarray) -> "ScalarField":
        return ScalarField(self.grid, values)

    def scaled(self, t: float) -> "ScalarField":
        return ScalarField(self.grid, t * self.values)

    def clamped(self, floor: float = 0.0) -> "ScalarField":
        return ScalarField(self.grid, np.maximum(self.values, floor))

    def distorted(self, beta: float) -> "ScalarField":
        """u^(1/beta), which grows linearly away from the free boundary."""
        return ScalarField(self.grid, np.power(np.maximum(self.values, 0.0), 1.0 / beta))

    def max(self) -> float:
        return float(self.values.max())

    def min(self) -> float:
        return float(self.values.min())


@dataclass(frozen=True)
class SymMatrix:
    """Symmetric matrix; the lower triangle mirrors the upper on construction."""
    array: np.ndarray

    def __post_init__(self):
        a = np.atleast_2d(np.array(self.array, dtype=np.float64, copy=True))
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ShapeError(f"matrix of shape {a.shape} is not square")
        a = np.triu(a) + np.triu(a, 1).T
        a.flags.writeable = False
        object.__setattr__(self, "array", a)

    @classmethod
    def zeros(cls, dim: int) -> "SymMatrix":
        return cls(np.zeros((dim, dim)))

    @classmethod
    def identity(cls, dim: int) -> "SymMatrix":
        return cls(np.eye(dim))

    @classmethod
    def outer(cls, e: Sequence[float]) -> "SymMatrix":
        e = np.asarray(e, dtype=float)
        return cls(np.outer(e, e))

    @property
    def dim(self) -> int:
        return self.array.shape[0]

    def trace(self) -> float:
        return float(np.trace(self.array))

    def eigenvalues(self) -> np.ndarray:
        """Ascending eigenvalues; closed form for dim <= 2."""
        return sym_eigvals(self.array)

    def spectral_norm(self) -> float:
        return float(np.max(np.abs(self.eigenvalues())))

    def inner(self, other: "SymMatrix") -> float:
        """tr(A B) for symmetric A, B."""
        return float(np.sum(self.array * other.array))

    def __add__(self, other: "SymMatrix") -> "SymMatrix":
        return SymMatrix(self.array + other.array)

    def __sub__(self, other: "SymMatrix") -> "SymMatrix":
        return SymMatrix(self.array - other.array)

    def __mul__(self, t: float) -> "SymMatrix":
        return SymMatrix(float(t) * self.array)

    __rmul__ = __mul__


def sym_eigvals(a: np.ndarray) -> np.ndarray:
    """
    Eigenvalues of symmetric matrices, ascending along the last axis.

    Accepts a single (d, d) matrix or a stack (..., d, d). For d <= 2 the
    closed form is used.
    """
    a = np.asarray(a, dtype=float)
    d = a.shape[-1]
    if d == 1:
        return a[..., 0, :].copy()
    if d == 2:
        p = a[..., 0, 0]
        q = a[..., 1, 1]
        b = a[..., 0, 1]
        mean = 0.5 * (p + q)
        rad = np.hypot(0.5 * (p - q), b)
        return np.stack([mean - rad, mean + rad], axis=-1)
    return np.linalg.eigvalsh(a)


def hessian_central(u: ScalarField, idx: Union[int, MultiIndex]) -> SymMatrix:
    """
    Discrete Hessian at one node by central differences.

    Diagonal entries use the 3-point second difference, off-diagonals the
    4-point cross formula. Exact for quadratic polynomials.

    Raises:
        GridIndexError: if the node lacks a full 3^dim neighbourhood
    """
    grid = u.grid
    if isinstance(idx, (int, np.integer)):
        idx = grid.multi_index(idx)
    idx = tuple(int(i) for i in idx)
    if len(idx) != grid.dim or not grid.is_interior(idx):
        raise GridIndexError(f"index {idx} has no full stencil on grid {grid.shape}")

    v = u.values
    h = grid.h
    hess = np.zeros((grid.dim, grid.dim))
    for i in range(grid.dim):
        plus = list(idx)
        minus = list(idx)
        plus[i] += 1
        minus[i] -= 1
        hess[i, i] = (v[tuple(plus)] - 2.0 * v[idx] + v[tuple(minus)]) / h[i] ** 2
        for j in range(i + 1, grid.dim):
            corners = 0.0
            for si, sj, sign in ((1, 1, 1.0), (1, -1, -1.0), (-1, 1, -1.0), (-1, -1, 1.0)):
                k = list(idx)
                k[i] += si
                k[j] += sj
                corners += sign * v[tuple(k)]
            hess[i, j] = corners / (4.0 * h[i] * h[j])
    return SymMatrix(hess)


def hessian_field(u: ScalarField) -> np.ndarray:
    """hessian_central at every interior node, shape interior_shape + (dim, dim)."""
    grid = u.grid
    v = u.values
    h = grid.h
    d = grid.dim
    out = np.zeros(grid.interior_shape + (d, d))
    for i in range(d):
        out[..., i, i] = (
            shifted(v, _unit(d, i, 1)) - 2.0 * shifted(v, (0,) * d) + shifted(v, _unit(d, i, -1))
        ) / h[i] ** 2
        for j in range(i + 1, d):
            pp = tuple(1 if k in (i, j) else 0 for k in range(d))
            mm = tuple(-1 if k in (i, j) else 0 for k in range(d))
            pm = tuple(1 if k == i else (-1 if k == j else 0) for k in range(d))
            mp = tuple(-1 if k == i else (1 if k == j else 0) for k in range(d))
            cross = shifted(v, pp) - shifted(v, pm) - shifted(v, mp) + shifted(v, mm)
            out[..., i, j] = cross / (4.0 * h[i] * h[j])
            out[..., j, i] = out[..., i, j]
    return out


def shifted(values: np.ndarray, offset: Sequence[int]) -> np.ndarray:
    """Interior block of ``values`` displaced by a stencil offset in {-1,0,1}^dim."""
    sl = tuple(slice(1 + o, m - 1 + o) for o, m in zip(offset, values.shape))
    return values[sl]


def _unit(dim: int, axis: int, sign: int) -> Tuple[int, ...]:
    return tuple(sign if k == axis else 0 for k in range(dim))


def restrict_to_ball(
    u: Union[ScalarField, Grid],
    center: Sequence[float],
    r: float,
    points: Optional[np.ndarray] = None,
) -> np.ndarray:
    """
    Flat indices of the nodes inside the closed ball B_r(center), ascending.

    An empty array is a valid answer.
    """
    grid = u.grid if isinstance(u, ScalarField) else u
    if points is None:
        points = grid.points
    c = np.atleast_1d(np.asarray(center, dtype=float))
    dist2 = np.sum((points - c) ** 2, axis=1)
    slack = 1e-12 * max(1.0, r * r)
    return np.flatnonzero(dist2 <= r * r + slack)
