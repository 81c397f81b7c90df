"""Integer-lattice blocks, block decomposition and exact block covariances.

Lattice vectors are plain tuples of ints.  Covariance functions are evaluated
on integer arrays of shape ``(..., d)`` so that whole offset grids can be
summed at once.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

LatticeVector = tuple[int, ...]

#: default floor under which A_n is considered degenerate
AN_FLOOR = 1e-6


def as_vector(k: Sequence[int] | int | None, d: int) -> LatticeVector:
    if k is None:
        return (0,) * d
    if isinstance(k, (int, np.integer)):
        return (int(k),) * d
    k = tuple(int(x) for x in k)
    if len(k) != d:
        raise ValueError(f"lattice vector {k} does not have dimension {d}")
    return k


@dataclass(frozen=True)
class BlockSpec:
    """The cube ``{j : corner <= j < corner + side*1}``."""

    corner: LatticeVector
    side: int

    def __post_init__(self):
        if self.side < 1:
            raise ValueError("block side must be >= 1")

    @property
    def dim(self) -> int:
        return len(self.corner)

    @property
    def cardinality(self) -> int:
        return self.side ** self.dim

    def points(self) -> np.ndarray:
        """All lattice points of the block, shape ``(side**d, d)``."""
        axes = [np.arange(c, c + self.side) for c in self.corner]
        grid = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.ravel() for g in grid], axis=-1)


@dataclass(frozen=True)
class SubBlock:
    index: tuple[int, ...]  # i in [m]^d, 1-based
    corner: LatticeVector
    sides: tuple[int, ...]

    @property
    def size(self) -> int:
        return math.prod(self.sides)

    def points(self) -> np.ndarray:
        axes = [np.arange(c, c + s) for c, s in zip(self.corner, self.sides)]
        grid = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.ravel() for g in grid], axis=-1)


@dataclass(frozen=True)
class BlockPartition:
    """Decomposition of an ``n``-side block into ``m**d`` sub-blocks.

    ``n = (m - 1) * l + r`` with ``1 <= r <= l``; sub-blocks are listed with
    the index ``i`` in lexicographic (C) order.
    """

    n: int
    l: int
    m: int
    r: int
    dim: int
    corner: LatticeVector
    cells: tuple[SubBlock, ...] = field(repr=False)

    @property
    def main_cells(self) -> list[SubBlock]:
        # indexed by [m-1]^d; when r == l the remainder cells also have side l
        return [c for c in self.cells if all(i < self.m for i in c.index)]

    @property
    def offsets(self) -> list[int]:
        """Start offsets of the sub-blocks along one axis, relative to the corner."""
        return [i * self.l for i in range(self.m)]


def decompose_block(n: int, l: int, d: int, corner: Sequence[int] | None = None) -> BlockPartition:
    """Split the block of side ``n`` at ``corner`` into sub-blocks of side at most ``l``."""
    if d < 1:
        raise ValueError("dimension must be >= 1")
    if not 1 <= l <= n:
        raise ValueError(f"need 1 <= l <= n, got l={l}, n={n}")
    k = as_vector(corner, d)
    m = (n - 1) // l + 1
    r = n - (m - 1) * l
    cells = []
    for idx in itertools.product(range(1, m + 1), repeat=d):
        c = tuple(ks + (i - 1) * l for ks, i in zip(k, idx))
        sides = tuple(l if i < m else r for i in idx)
        cells.append(SubBlock(idx, c, sides))
    return BlockPartition(n=n, l=l, m=m, r=r, dim=d, corner=k, cells=tuple(cells))


@dataclass(frozen=True, eq=False)
class CovarianceModel:
    """Stationary covariance ``R(k) = Cov(X_0, X_k)`` on ``Z^d``.

    ``evaluator`` maps an integer array of shape ``(..., d)`` to the array of
    covariances.  ``kappa0`` and ``lam`` certify ``-R(k) <= kappa0 exp(-lam |k|_1)``
    for ``k != 0``.
    """

    dim: int
    evaluator: Callable[[np.ndarray], np.ndarray]
    kappa0: float
    lam: float
    name: str = "custom"

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dimension must be >= 1")
        if self.kappa0 <= 0 or self.lam <= 0:
            raise ValueError("kappa0 and lambda must be positive")
        if self.variance_at_zero <= 0:
            raise ValueError("R(0) must be positive")

    def __call__(self, k) -> np.ndarray | float:
        arr = np.asarray(k, dtype=np.int64)
        if arr.shape[-1] != self.dim:
            raise ValueError(f"offsets must have trailing dimension {self.dim}")
        out = np.asarray(self.evaluator(arr), dtype=float)
        return float(out) if out.ndim == 0 else out

    @property
    def variance_at_zero(self) -> float:
        return float(self.evaluator(np.zeros(self.dim, dtype=np.int64)))

    def certificate_offsets(self, k_max: int = 30) -> np.ndarray:
        """All ``k != 0`` with ``|k|_1 <= k_max``."""
        rng = np.arange(-k_max, k_max + 1)
        grid = np.stack(np.meshgrid(*([rng] * self.dim), indexing="ij"), axis=-1).reshape(-1, self.dim)
        l1 = np.abs(grid).sum(axis=1)
        return grid[(l1 <= k_max) & (l1 > 0)]

    def check(self, k_max: int = 30, atol: float = 1e-14) -> None:
        """Raise ``ValueError`` if symmetry, NA sign or decay fail on the certificate set."""
        ks = self.certificate_offsets(k_max)
        r_pos = self(ks)
        r_neg = self(-ks)
        if not np.allclose(r_pos, r_neg, rtol=0, atol=atol):
            raise ValueError("covariance is not symmetric")
        if np.any(r_pos > atol):
            raise ValueError("covariance has a positive off-diagonal value; not NA")
        envelope = self.kappa0 * np.exp(-self.lam * np.abs(ks).sum(axis=1))
        if np.any(-r_pos > envelope * (1 + 1e-12) + atol):
            raise ValueError("decay certificate -R(k) <= kappa0 exp(-lam|k|_1) fails")

    # --- constructors -----------------------------------------------------

    @classmethod
    def iid(cls, variance: float = 1.0, d: int = 1, kappa0: float = 1e-12, lam: float = 1.0):
        def ev(k):
            return np.where(np.all(k == 0, axis=-1), variance, 0.0)
        return cls(d, ev, kappa0, lam, name="iid")

    @classmethod
    def extremal(cls, kappa0: float, lam: float, d: int = 1, variance: float = 1.0):
        """``R(k) = -kappa0 exp(-lam |k|_1)`` off zero; saturates the decay certificate."""
        def ev(k):
            l1 = np.abs(k).sum(axis=-1)
            return np.where(l1 == 0, variance, -kappa0 * np.exp(-lam * l1))
        return cls(d, ev, kappa0, lam, name="extremal")

    @classmethod
    def finite_range(cls, values: dict[Sequence[int], float], d: int = 1,
                     kappa0: float | None = None, lam: float = 1.0):
        """Covariance with finitely many nonzero lags, given for k and symmetrised to -k."""
        table = {}
        for k, v in values.items():
            k = as_vector(k, d)
            table[k] = float(v)
            table[tuple(-x for x in k)] = float(v)
        if kappa0 is None:
            kappa0 = max([-v * math.exp(lam * sum(map(abs, k))) for k, v in table.items()
                          if any(k)] + [1e-12])

        def ev(k):
            k = np.asarray(k)
            flat = k.reshape(-1, d)
            out = np.array([table.get(tuple(int(x) for x in row), 0.0) for row in flat])
            return out.reshape(k.shape[:-1])
        return cls(d, ev, kappa0, lam, name="finite_range")


# --- exact block covariance accounting -----------------------------------

def offset_grid(n: int, d: int) -> tuple[np.ndarray, np.ndarray]:
    """Offsets ``a`` in ``(-n, n)^d`` and weights ``prod_s (n - |a_s|)``."""
    a1 = np.arange(-n + 1, n)
    w1 = (n - np.abs(a1)).astype(float)
    grids = np.meshgrid(*([a1] * d), indexing="ij")
    offs = np.stack([g.ravel() for g in grids], axis=-1)
    weights = np.ones(len(offs))
    for s in range(d):
        weights *= w1[offs[:, s] + n - 1]
    return offs, weights


def block_cov_exact(model: CovarianceModel, k1: Sequence[int], k2: Sequence[int], n: int) -> float:
    """``Cov(S_{k1}^n, S_{k2}^n)`` as a weighted sum over lattice offsets."""
    d = model.dim
    shift = np.subtract(as_vector(k2, d), as_vector(k1, d))
    offs, w = offset_grid(n, d)
    return float(np.dot(w, model(offs + shift)))


def compute_An(model: CovarianceModel, n: int) -> float:
    """Variance of the block sum over ``n**d`` sites, divided by ``n**d``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    zero = (0,) * model.dim
    return block_cov_exact(model, zero, zero, n) / n ** model.dim


def An_is_degenerate(An: float, floor: float = AN_FLOOR) -> bool:
    return not An >= floor


def block_sum_xi(sample: np.ndarray, partition: BlockPartition, mean: float | np.ndarray = 0.0) -> np.ndarray:
    """Centered sub-block sums of a field sample.

    ``sample`` has shape ``(..., n, ..., n)`` with ``d`` trailing lattice axes;
    the result has shape ``(..., m**d)`` ordered like ``partition.cells``.
    """
    x = np.asarray(sample, dtype=float)
    d, n = partition.dim, partition.n
    if x.ndim < d or x.shape[-d:] != (n,) * d:
        raise ValueError(f"sample shape {x.shape} does not match a block of side {n} in d={d}")
    x = x - mean
    starts = partition.offsets
    for ax in range(x.ndim - d, x.ndim):
        x = np.add.reduceat(x, starts, axis=ax)
    return x.reshape(x.shape[: x.ndim - d] + (partition.m ** d,))
