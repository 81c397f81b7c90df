"""Negatively associated vectors and stationary NA lattice fields.

Field kinds
-----------
``iid_rademacher``
    independent +-1 signs.
``gaussian_na``
    centred Gaussian field with correlation ``rho(k) = -c exp(-lam |k|_1)``
    off zero and ``rho(0) = 1``.  Nonpositive correlations make a Gaussian
    vector NA.
``sign_gaussian_na``
    ``sign`` of the ``gaussian_na`` field.  ``sign`` is nondecreasing, so the
    field stays NA, and it is bounded by ``K = 1``.  Its covariance is
    ``(2/pi) arcsin(rho(k))`` and, since ``arcsin(x) <= (pi/2) x`` on
    ``[0, 1]``, the decay certificate carries over with ``kappa0 = c``.

Vector kinds: ``multinomial`` (box occupancy counts) and ``srswor`` (a simple
random sample without replacement from a finite population).

Replicate ``r`` of a batch seeded with ``seed`` draws from its own generator,
seeded by :func:`derive_seed`, so batches can be produced in any order or in
parallel and still come out bit-identical.
"""
from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .lattice import BlockSpec, CovarianceModel, block_sum_xi, decompose_block

FIELD_KINDS = ("iid_rademacher", "gaussian_na", "sign_gaussian_na")
VECTOR_KINDS = ("multinomial", "srswor")

MASK64 = (1 << 64) - 1
CHUNK = 1024  # replicates per matrix product; fixed so results do not depend on workers


class CertificateError(ValueError):
    """The base correlation function is not certified positive semidefinite."""


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def derive_seed(seed: int, replicate: int) -> int:
    """64-bit stream seed for one replicate: ``splitmix64(splitmix64(seed) ^ replicate)``."""
    return splitmix64(splitmix64(seed & MASK64) ^ (replicate & MASK64))


def replicate_rng(seed: int, replicate: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(derive_seed(seed, replicate)))


def truncated_spectral_min(c: float, lam: float, d: int, k_max: int = 50, grid: int = 2048) -> float:
    """Minimum over a frequency grid of ``1 - c (prod_s g(theta_s) - 1)``.

    ``g(theta) = 1 + 2 sum_{k=1}^{k_max} e^{-lam k} cos(k theta)`` is the
    truncated one-dimensional kernel; the minimum of the product over a box of
    frequencies is attained at a combination of the extreme values of ``g``.
    """
    theta = np.linspace(0.0, 2 * np.pi, grid, endpoint=False)
    k = np.arange(1, k_max + 1)
    g = 1 + 2 * (np.exp(-lam * k)[None, :] * np.cos(np.outer(theta, k))).sum(axis=1)
    lo, hi = g.min(), g.max()
    prods = [math.prod(combo) for combo in itertools.product((lo, hi), repeat=d)]
    return 1 - c * (max(prods) - 1)


@dataclass(frozen=True)
class FieldSpec:
    kind: str
    d: int = 1
    c: float = 0.0
    lam: float = 1.0
    K: float | None = None
    params: tuple | dict = ()
    eps: float = 1e-6
    k_max: int = 50

    def __post_init__(self):
        params = dict(self.params)
        object.__setattr__(self, "params", tuple(sorted(
            (k, tuple(v) if isinstance(v, (list, np.ndarray)) else v) for k, v in params.items())))
        if self.kind not in FIELD_KINDS + VECTOR_KINDS:
            raise ValueError(f"unknown kind {self.kind!r}")
        if self.d < 1:
            raise ValueError("dimension must be >= 1")
        if self.kind in ("gaussian_na", "sign_gaussian_na"):
            if not self.c >= 0 or not self.lam > 0:
                raise ValueError("gaussian kinds need c >= 0 and lambda > 0")
            smin = truncated_spectral_min(self.c, self.lam, self.d, self.k_max)
            if smin < self.eps:
                raise CertificateError(
                    f"rho(k) = -{self.c} exp(-{self.lam}|k|_1) is not certified PSD "
                    f"(truncated spectral minimum {smin:.3g})")
        if self.bound <= 0:
            raise ValueError("K must be positive")

    @property
    def param_dict(self) -> dict:
        return dict(self.params)

    @property
    def bound(self) -> float:
        """Almost-sure bound ``K`` on each coordinate."""
        if self.K is not None:
            return float(self.K)
        if self.kind in ("iid_rademacher", "sign_gaussian_na"):
            return 1.0
        if self.kind == "gaussian_na":
            return math.inf
        if self.kind == "multinomial":
            return float(self.param_dict.get("N", 1)) or 1.0
        pop = self.param_dict.get("population", (1.0,))
        return max(abs(float(v)) for v in pop) or 1.0

    @property
    def is_field(self) -> bool:
        return self.kind in FIELD_KINDS

    def base_correlation(self) -> CovarianceModel:
        c, lam = self.c, self.lam

        def ev(k):
            l1 = np.abs(k).sum(axis=-1)
            return np.where(l1 == 0, 1.0, -c * np.exp(-lam * l1))
        return CovarianceModel(self.d, ev, max(c, 1e-12), lam, name="gaussian_na")

    @property
    def analytic_model(self) -> CovarianceModel | None:
        if self.kind == "iid_rademacher":
            return CovarianceModel.iid(1.0, self.d)
        if self.kind == "gaussian_na":
            return self.base_correlation()
        if self.kind == "sign_gaussian_na":
            base = self.base_correlation()
            return CovarianceModel(self.d, lambda k: 2 / np.pi * np.arcsin(base(k)),
                                   max(self.c, 1e-12), self.lam, name="sign_gaussian_na")
        return None


@dataclass(frozen=True, eq=False)
class SampleBatch:
    values: np.ndarray
    seed: int
    spec: FieldSpec


# --- vectors -------------------------------------------------------------------

def _vector_draw(spec: FieldSpec, m: int, rng: np.random.Generator) -> np.ndarray:
    p = spec.param_dict
    if spec.kind == "multinomial":
        probs = p.get("probs")
        probs = np.full(m, 1.0 / m) if probs is None else np.asarray(probs, dtype=float)
        if len(probs) != m:
            raise ValueError("probs must have length m")
        return rng.multinomial(int(p.get("N", 1)), probs).astype(float)
    pop = np.asarray(p.get("population"), dtype=float)
    if m > len(pop):
        raise ValueError("sample size exceeds population")
    return rng.choice(pop, size=m, replace=False)


def sample_vector(spec: FieldSpec, m: int, seed: int, replicates: int = 1) -> SampleBatch:
    """Draw ``replicates`` NA vectors of length ``m`` (boxes, or sample size)."""
    if spec.kind not in VECTOR_KINDS:
        raise ValueError(f"{spec.kind} is not a vector kind")
    if spec.kind == "srswor" and spec.param_dict.get("population") is None:
        raise ValueError("srswor needs a population")
    vals = np.stack([_vector_draw(spec, m, replicate_rng(seed, r)) for r in range(replicates)])
    return SampleBatch(vals, seed, spec)


# --- fields --------------------------------------------------------------------

@lru_cache(maxsize=32)
def _covariance_root(spec: FieldSpec, sites: bytes, count: int) -> np.ndarray:
    pts = np.frombuffer(sites, dtype=np.int64).reshape(count, spec.d)
    C = spec.base_correlation()(pts[None, :, :] - pts[:, None, :])
    w, V = np.linalg.eigh(C)
    if w.min() < -1e-10 * w.max():
        raise CertificateError(f"covariance restricted to the sites has eigenvalue {w.min():.3g}")
    return (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T


def _normals(seed: int, start: int, stop: int, size: int) -> np.ndarray:
    return np.stack([replicate_rng(seed, r).standard_normal(size) for r in range(start, stop)])


def _signs(seed: int, start: int, stop: int, size: int) -> np.ndarray:
    return np.stack([replicate_rng(seed, r).integers(0, 2, size) * 2.0 - 1.0
                     for r in range(start, stop)])


def sample_sites(spec: FieldSpec, sites: np.ndarray, replicates: int, seed: int,
                 workers: int = 1) -> np.ndarray:
    """Joint field values at ``sites`` (shape ``(N, d)``), shape ``(replicates, N)``."""
    if not spec.is_field:
        raise ValueError(f"{spec.kind} is not a field kind")
    pts = np.ascontiguousarray(np.asarray(sites, dtype=np.int64).reshape(-1, spec.d))
    N = len(pts)
    chunks = [(s, min(s + CHUNK, replicates)) for s in range(0, replicates, CHUNK)]

    if spec.kind == "iid_rademacher":
        def work(ch):
            return _signs(seed, ch[0], ch[1], N)
    else:
        root = _covariance_root(spec, pts.tobytes(), N)
        sign = spec.kind == "sign_gaussian_na"

        def work(ch):
            g = _normals(seed, ch[0], ch[1], N) @ root
            return np.where(g >= 0, 1.0, -1.0) if sign else g

    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(workers) as ex:
            parts = list(ex.map(work, chunks))
    else:
        parts = [work(ch) for ch in chunks]
    if not parts:
        return np.empty((0, N))
    return np.concatenate(parts)


def sample_field(spec: FieldSpec, n: int, seed: int, replicates: int = 1,
                 corner: Sequence[int] | None = None, workers: int = 1) -> SampleBatch:
    """Field on the block of side ``n``; values have shape ``(replicates, n, ..., n)``."""
    block = BlockSpec(tuple(corner) if corner is not None else (0,) * spec.d, n)
    vals = sample_sites(spec, block.points(), replicates, seed, workers)
    return SampleBatch(vals.reshape((replicates,) + (n,) * spec.d), seed, spec)


def sample_block_sums(spec: FieldSpec, corners: Sequence[Sequence[int]], n: int,
                      replicates: int, seed: int, workers: int = 1) -> np.ndarray:
    """Block sums over the blocks of side ``n`` at ``corners``; shape ``(replicates, p)``."""
    blocks = [BlockSpec(tuple(k), n) for k in corners]
    if spec.kind == "iid_rademacher":
        # a sum of N independent signs is 2 Binomial(N, 1/2) - N
        N = n ** spec.d
        return np.stack([2.0 * replicate_rng(seed, r).binomial(N, 0.5, len(blocks)) - N
                         for r in range(replicates)])
    pts = np.concatenate([b.points() for b in blocks])
    vals = sample_sites(spec, pts, replicates, seed, workers)
    return vals.reshape(replicates, len(blocks), n ** spec.d).sum(axis=2)


def sub_block_sums(spec: FieldSpec, n: int, l: int, replicates: int, seed: int,
                   workers: int = 1) -> np.ndarray:
    """Centered sums over the sub-blocks of side ``l`` of one block; ``(replicates, m**d)``."""
    batch = sample_field(spec, n, seed, replicates, workers=workers)
    return block_sum_xi(batch.values, decompose_block(n, l, spec.d))


# --- NA verification -------------------------------------------------------------

Monotone = Callable[[np.ndarray], np.ndarray]


def _tanh_sum(x):
    return np.tanh(x.sum(axis=1) / math.sqrt(x.shape[1]))


DEFAULT_MONOTONE_BATTERY: list[tuple[str, Monotone, Monotone]] = [
    ("sum/sum", lambda x: x.sum(axis=1), lambda y: y.sum(axis=1)),
    ("max/max", lambda x: x.max(axis=1), lambda y: y.max(axis=1)),
    ("min/min", lambda x: x.min(axis=1), lambda y: y.min(axis=1)),
    ("sum/max", lambda x: x.sum(axis=1), lambda y: y.max(axis=1)),
    ("1{sum>0}/1{sum>0}", lambda x: (x.sum(axis=1) > 0) * 1.0, lambda y: (y.sum(axis=1) > 0) * 1.0),
    ("tanh/tanh", _tanh_sum, _tanh_sum),
    ("pos-part/pos-part", lambda x: np.maximum(x, 0).sum(axis=1), lambda y: np.maximum(y, 0).sum(axis=1)),
    ("first/last", lambda x: x[:, 0], lambda y: y[:, -1]),
]


def cov_with_stderr(u: np.ndarray, v: np.ndarray) -> tuple[float, float]:
    """Sample covariance and the standard error of the mean of centred products."""
    prod = (u - u.mean()) * (v - v.mean())
    n = len(prod)
    cov = float(prod.sum() / (n - 1))
    se = float(prod.std(ddof=1) / math.sqrt(n))
    return cov, se


@dataclass(frozen=True)
class PairResult:
    name: str
    cov: float
    stderr: float
    passed: bool


@dataclass(frozen=True)
class NAReport:
    subsets: tuple[tuple[int, ...], tuple[int, ...]]
    pairs: list[PairResult]

    @property
    def passed(self) -> bool:
        return all(p.passed for p in self.pairs)


def _check_subsets(A, B, m):
    A, B = tuple(int(i) for i in A), tuple(int(j) for j in B)
    if not A or not B:
        raise ValueError("subsets must be nonempty")
    if set(A) & set(B):
        raise ValueError("subsets must be disjoint")
    if max(A + B) >= m or min(A + B) < 0:
        raise ValueError("subset index out of range")
    return A, B


def na_covariance_test(samples: np.ndarray, A: Sequence[int], B: Sequence[int],
                       battery=None, z: float = 3.0) -> NAReport:
    """Empirical ``Cov(f(x_A), g(x_B))`` for each monotone pair; pass when ``cov <= z * stderr``.

    A one-sided screen, not a calibrated hypothesis test.
    """
    x = np.asarray(samples, dtype=float)
    A, B = _check_subsets(A, B, x.shape[1])
    battery = DEFAULT_MONOTONE_BATTERY if battery is None else battery
    xa, xb = x[:, list(A)], x[:, list(B)]
    results = []
    for name, f, g in battery:
        cov, se = cov_with_stderr(f(xa), g(xb))
        results.append(PairResult(name, cov, se, cov <= z * se))
    return NAReport((A, B), results)


def draw_vectors(spec: FieldSpec, replicates: int, seed: int, m: int | None = None,
                 n: int | None = None, l: int | None = None) -> np.ndarray:
    """Samples of an NA vector: a vector kind of length ``m`` or sub-block sums of a field."""
    if spec.is_field:
        if n is None:
            raise ValueError("field kinds need the block side n")
        return sub_block_sums(spec, n, l or n, replicates, seed)
    if m is None:
        raise ValueError("vector kinds need the length m")
    return sample_vector(spec, m, seed, replicates).values


def verify_na(spec: FieldSpec, subsets, battery=None, replicates: int = 10_000, seed: int = 0,
              *, m: int | None = None, n: int | None = None, l: int | None = None) -> NAReport:
    x = draw_vectors(spec, replicates, seed, m=m, n=n, l=l)
    A, B = subsets
    return na_covariance_test(x, A, B, battery)


@dataclass(frozen=True)
class DominationReport:
    lhs: float
    rhs: float
    stderr_lhs: float
    stderr_rhs: float
    passed: bool


def cov_domination_test(samples: np.ndarray, A: Sequence[int], B: Sequence[int],
                        f: Monotone, g: Monotone, f_bounds, g_bounds, z: float = 3.0) -> DominationReport:
    """Check ``|Cov(f, g)| <= -sum_{i in A, j in B} |df/dx_i| |dg/dx_j| Cov(x_i, x_j)``.

    The right side equals ``-Cov(sum_i bf_i x_i, sum_j bg_j x_j)`` and is
    estimated as such.  Slack ``z * (stderr_lhs + stderr_rhs)``.
    """
    if f_bounds is None or g_bounds is None:
        raise ValueError("derivative bounds are required for both functions")
    x = np.asarray(samples, dtype=float)
    A, B = _check_subsets(A, B, x.shape[1])
    bf = np.broadcast_to(np.asarray(f_bounds, dtype=float), (len(A),))
    bg = np.broadcast_to(np.asarray(g_bounds, dtype=float), (len(B),))
    xa, xb = x[:, list(A)], x[:, list(B)]
    lhs, se_l = cov_with_stderr(f(xa), g(xb))
    rhs, se_r = cov_with_stderr(xa @ bf, xb @ bg)
    lhs, rhs = abs(lhs), -rhs
    return DominationReport(lhs, rhs, se_l, se_r, lhs <= rhs + z * (se_l + se_r))


def verify_cov_domination(spec: FieldSpec, subsets, f: Monotone, g: Monotone, f_bounds, g_bounds,
                          replicates: int = 10_000, seed: int = 0, *, m: int | None = None,
                          n: int | None = None, l: int | None = None) -> DominationReport:
    x = draw_vectors(spec, replicates, seed, m=m, n=n, l=l)
    A, B = subsets
    return cov_domination_test(x, A, B, f, g, f_bounds, g_bounds)
