"""Distances to the normal law.

``wasserstein_to_std_normal`` integrates ``|F_m - Phi|`` exactly, piece by
piece between order statistics.  The smooth-function metric is only bounded
from below, by evaluating a fixed battery of certified test functions.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.special import erfc

SQRT2 = math.sqrt(2.0)
SQRT2PI = math.sqrt(2.0 * math.pi)


def norm_cdf(x):
    return 0.5 * erfc(-np.asarray(x, dtype=float) / SQRT2)


def norm_sf(x):
    return 0.5 * erfc(np.asarray(x, dtype=float) / SQRT2)


def norm_pdf(x):
    x = np.asarray(x, dtype=float)
    return np.exp(-0.5 * x * x) / SQRT2PI


# Acklam's rational approximation, relative error ~1.15e-9 before refinement.
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


def _acklam(p: np.ndarray) -> np.ndarray:
    x = np.empty_like(p)
    lo = p < _P_LOW
    hi = p > 1 - _P_LOW
    mid = ~(lo | hi)

    q = np.sqrt(-2 * np.log(p[lo]))
    x[lo] = (((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / \
            ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1)
    q = np.sqrt(-2 * np.log1p(-p[hi]))
    x[hi] = -(((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / \
        ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1)
    q = p[mid] - 0.5
    r = q * q
    x[mid] = (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q / \
        (((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1)
    return x


def normal_quantile(p):
    """Inverse standard normal CDF, refined by Halley steps on ``Phi``."""
    arr = np.asarray(p, dtype=float)
    if np.any(~((arr > 0) & (arr < 1))):
        raise ValueError("p must lie strictly between 0 and 1")
    flat = arr.ravel()
    x = _acklam(flat)
    upper = flat > 0.5
    for _ in range(2):
        # work in the tail that keeps the residual well conditioned
        e = np.where(upper, (1 - flat) - norm_sf(x), norm_cdf(x) - flat)
        u = e * SQRT2PI * np.exp(0.5 * x * x)
        x = x - u / (1 + 0.5 * x * u)
    x = x.reshape(arr.shape)
    return float(x) if x.ndim == 0 else x


def _int_cdf(x):
    """Antiderivative of ``Phi``: ``x Phi(x) + phi(x)``."""
    return x * norm_cdf(x) + norm_pdf(x)


def _int_sf(x):
    """Antiderivative of ``-(1 - Phi)`` evaluated so that ``int_x^inf (1-Phi) = _int_sf(x)``."""
    return norm_pdf(x) - x * norm_sf(x)


def wasserstein_to_std_normal(sample) -> float:
    """``int |F_m(t) - Phi(t)| dt`` for the empirical CDF ``F_m`` of ``sample``."""
    x = np.sort(np.asarray(sample, dtype=float).ravel())
    m = x.size
    if m == 0:
        raise ValueError("empty sample")
    if not np.all(np.isfinite(x)):
        raise ValueError("sample contains non-finite values")
    # tails: (-inf, x_1) where F_m = 0, and [x_m, inf) where F_m = 1
    total = float(_int_cdf(x[0])) + float(_int_sf(x[-1]))
    if m == 1:
        return total
    a, b = x[:-1], x[1:]
    c = np.arange(1, m) / m
    t = np.clip(normal_quantile(c), a, b)
    # Phi < c on [a, t), Phi > c on (t, b]
    left = c * (t - a) - (_int_cdf(t) - _int_cdf(a))
    right = (_int_cdf(b) - _int_cdf(t)) - c * (b - t)
    return total + float(np.sum(left) + np.sum(right))


def bootstrap_stderr(sample, stat: Callable[[np.ndarray], float], resamples: int = 200,
                     seed: int = 0) -> float:
    x = np.asarray(sample, dtype=float)
    rng = np.random.default_rng(seed)
    vals = [stat(x[rng.integers(0, x.size, x.size)]) for _ in range(resamples)]
    return float(np.std(vals, ddof=1))


@dataclass(frozen=True)
class StandardizedSample:
    values: np.ndarray
    n: int
    d: int
    An: float


def standardize_block_sums(raw, n: int, d: int, An: float, mean=0.0) -> StandardizedSample:
    """Map block sums ``s`` to ``(s - mean) / sqrt(n^d A_n)``."""
    if not An > 0:
        raise ValueError("A_n must be positive")
    vals = (np.asarray(raw, dtype=float) - mean) / math.sqrt(n ** d * An)
    return StandardizedSample(values=vals, n=n, d=d, An=An)


# --- smooth test functions ----------------------------------------------------

@dataclass(frozen=True)
class SmoothTestFunction:
    """``h(x) = scale * sin(a.x + b)`` or, with ``product=True``, ``scale * prod_j sin(a_j x_j + b_j)``.

    A partial derivative of multi-order ``k`` is bounded by ``scale * prod_j |a_j|^k_j``,
    which gives the certificates.  ``E h(Z)`` has a closed form for both shapes.
    """

    name: str
    a: tuple[float, ...]
    b: float | tuple[float, ...] = 0.0
    scale: float = 1.0
    product: bool = False

    @property
    def p(self) -> int:
        return len(self.a)

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        a = np.asarray(self.a)
        if self.product:
            return self.scale * np.prod(np.sin(x * a + np.asarray(self.b)), axis=-1)
        return self.scale * np.sin(x @ a + self.b)

    def certificate(self, order: Sequence[int]) -> float:
        return self.scale * math.prod(abs(ai) ** k for ai, k in zip(self.a, order))

    def certified_bound(self, max_order: int = 3) -> float:
        """Largest certified sup-norm over all partials of order ``<= max_order``."""
        return max(self.certificate(k) for k in multi_indices(self.p, max_order))

    @property
    def certified(self) -> bool:
        return self.certified_bound() <= 1.0 + 1e-15

    def normal_expectation(self) -> float:
        a = np.asarray(self.a, dtype=float)
        if self.product:
            b = np.broadcast_to(np.asarray(self.b, dtype=float), a.shape)
            return float(self.scale * np.prod(np.sin(b) * np.exp(-0.5 * a * a)))
        return float(self.scale * math.sin(self.b) * math.exp(-0.5 * float(a @ a)))


def multi_indices(p: int, max_order: int):
    for k in itertools.product(range(max_order + 1), repeat=p):
        if sum(k) <= max_order:
            yield k


def sine_test_function(name: str, a: Sequence[float], b=0.0, product: bool = False) -> SmoothTestFunction:
    """Test function scaled by ``1 / max(1, |a|_inf^3)`` so that it lies in the unit ball."""
    a = tuple(float(v) for v in a)
    scale = 1.0 / max(1.0, max(abs(v) for v in a) ** 3)
    return SmoothTestFunction(name, a, b, scale, product)


def default_battery(p: int) -> list[SmoothTestFunction]:
    """The fixed 12-member battery used for lower bounds in dimension ``p``.

    Even members (cosines) see symmetric departures from normality, odd ones
    see skewness; frequencies stay near 1 where the sensitivity to a fourth
    cumulant is largest for unit-ball functions.
    """
    half_pi = math.pi / 2
    e1 = [1.0] + [0.0] * (p - 1)
    ep = [0.0] * (p - 1) + [1.0]
    ones = [1.0] * p
    alt = [(-1.0) ** j for j in range(p)]
    return [
        sine_test_function("cos(x1)", e1, half_pi),
        sine_test_function("cos(xp)", ep, half_pi),
        sine_test_function("cos(sum x)", ones, half_pi),
        sine_test_function("cos(alt sum x)", alt, half_pi),
        sine_test_function("sin(sum x)", ones, 0.0),
        sine_test_function("cos(1.4 x1)", [1.4 * v for v in e1], half_pi),
        sine_test_function("cos(1.4 xp)", [1.4 * v for v in ep], half_pi),
        sine_test_function("cos(0.7 sum x)", [0.7] * p, half_pi),
        sine_test_function("prod cos(x_j)", ones, half_pi, product=True),
        sine_test_function("prod sin(x_j + 0.5)", ones, 0.5, product=True),
        sine_test_function("sin(0.5 x1 + 0.3)", [0.5 * v for v in e1], 0.3),
        sine_test_function("cos(2 x1)", [2.0 * v for v in e1], half_pi),
    ]


@dataclass(frozen=True)
class SmoothMetricReport:
    value: float
    argmax: str
    stderr: float
    gaps: dict[str, float]


def smooth_metric_report(samples, battery: Sequence[SmoothTestFunction],
                         seed: int = 0, mc_draws: int = 1_000_000) -> SmoothMetricReport:
    """Lower bound ``max_h |mean h(samples) - E h(Z)|`` with per-function gaps.

    Members without a closed-form normal expectation use ``mc_draws`` fixed-seed
    normal draws.
    """
    x = np.asarray(samples, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if not battery:
        raise ValueError("battery must be nonempty")
    gaps, errs = {}, {}
    z = None
    for h in battery:
        if isinstance(h, SmoothTestFunction):
            if not h.certified:
                raise ValueError(f"test function {h.name} is not certified")
            ez = h.normal_expectation()
        else:
            if not getattr(h, "certified", False):
                raise ValueError(f"test function {getattr(h, 'name', h)!r} is not certified")
            if z is None:
                z = np.random.default_rng(seed).standard_normal((mc_draws, x.shape[1]))
            ez = float(np.mean(h(z)))
        hx = h(x)
        name = getattr(h, "name", repr(h))
        gaps[name] = abs(float(np.mean(hx)) - ez)
        errs[name] = float(np.std(hx, ddof=1) / math.sqrt(len(hx))) if len(hx) > 1 else math.inf
    best = max(gaps, key=gaps.get)
    return SmoothMetricReport(value=gaps[best], argmax=best, stderr=errs[best], gaps=gaps)


def smooth_metric_lower_bound(samples, battery: Sequence[SmoothTestFunction] | None = None,
                              seed: int = 0) -> float:
    """Certified lower bound on the smooth-function distance of ``samples`` to N(0, I)."""
    x = np.asarray(samples, dtype=float)
    p = 1 if x.ndim == 1 else x.shape[1]
    if battery is None:
        battery = default_battery(p)
    return smooth_metric_report(x, battery, seed=seed).value
