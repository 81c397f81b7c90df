"""Closed-form constants, summation identities and normal-approximation bounds.

Every bound returns a :class:`BoundReport`: its ``value`` is the sum of the
named ``terms``; ``valid`` says whether the inputs fall inside the range where
the bound is proved; ``rate_only`` marks bounds whose leading constant is
unknown and has been set to one.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

SQRT_8_OVER_PI = math.sqrt(8.0 / math.pi)
BERRY_ESSEEN_C = 0.4748
D1_TRIVIAL_CAP = 2.0


@dataclass(frozen=True)
class BoundReport:
    value: float
    terms: dict[str, float]
    valid: bool = True
    validity_condition: str = ""
    rate_only: bool = False
    details: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "terms": dict(self.terms),
            "valid": self.valid,
            "validity_condition": self.validity_condition,
            "rate_only": self.rate_only,
            "details": dict(self.details),
        }


def _report(terms: dict[str, float], **kw) -> BoundReport:
    return BoundReport(value=math.fsum(terms.values()), terms=terms, **kw)


@dataclass(frozen=True)
class DecayConstants:
    lam: float
    dim: int
    mu: float
    nu: float
    gamma: float


def decay_constants(lam: float, d: int) -> DecayConstants:
    """``mu``, ``nu`` and ``gamma`` for exponential covariance decay at rate ``lam``."""
    if not lam > 0:
        raise ValueError("lambda must be positive")
    if d < 1:
        raise ValueError("dimension must be >= 1")
    em1 = math.expm1(lam)
    mu = math.exp(lam) / em1 ** 2
    nu = math.exp(2 * lam) / em1 ** 2
    gamma = (4 * mu + 2 * nu) ** d - (2 * nu) ** d
    return DecayConstants(lam=lam, dim=d, mu=mu, nu=nu, gamma=gamma)


# --- bounds for a single NA / PA vector ------------------------------------

def univariate_na_bound(B: float, offdiag_cov_sum: float) -> BoundReport:
    """d1 bound for a sum of bounded, mean-zero NA summands with unit variance.

    ``offdiag_cov_sum`` is ``sum_{i != j} E[xi_i xi_j]`` (nonpositive under NA).
    The result is capped at 2, the trivial d1 bound for unit-variance laws.
    """
    if not B > 0:
        raise ValueError("B must be positive")
    if offdiag_cov_sum > 0:
        raise ValueError("NA summands have a nonpositive covariance sum")
    raw = 5.0 * B - 5.2 * offdiag_cov_sum
    terms = {"bounded_summands": 5.0 * B, "covariance": -5.2 * offdiag_cov_sum}
    if raw > D1_TRIVIAL_CAP:
        terms["cap"] = D1_TRIVIAL_CAP - raw
    return _report(terms, validity_condition="summands NA, mean zero, Var(W)=1 (assumed by caller)",
                   details={"uncapped": raw})


def univariate_pa_bound(B: float, offdiag_cov_sum: float) -> BoundReport:
    """The positively associated counterpart, ``5B + sqrt(8/pi) * sum``."""
    if B < 0:
        raise ValueError("B must be nonnegative")
    if offdiag_cov_sum < 0:
        raise ValueError("PA summands have a nonnegative covariance sum")
    return _report({"bounded_summands": 5.0 * B, "covariance": SQRT_8_OVER_PI * offdiag_cov_sum},
                   validity_condition="summands PA, mean zero, Var(W)=1 (assumed by caller)")


@dataclass(frozen=True)
class MultivariateInputs:
    p: int
    B: float
    sigma_inv_half_inf: float
    diag_sum: float
    within_cross_sum: float
    offdiag_sum: float

    def __post_init__(self):
        if self.p < 1:
            raise ValueError("p must be >= 1")
        if not self.B > 0:
            raise ValueError("B must be positive")
        if not self.sigma_inv_half_inf > 0:
            raise ValueError("|Sigma^{-1/2}|_inf must be positive")
        if self.within_cross_sum > 0 or self.offdiag_sum > 0:
            raise ValueError("NA inputs have nonpositive covariance sums")


def multivariate_na_bound(inputs: MultivariateInputs) -> BoundReport:
    """Smooth-function-metric bound for standardized sums of NA arrays."""
    p, B, s = inputs.p, inputs.B, inputs.sigma_inv_half_inf
    cubic = p ** 3 * B * s ** 3
    quad = p ** 2 * s ** 2
    terms = {
        "diagonal": 5.0 / 6.0 * cubic * inputs.diag_sum,
        "within_coordinate": -(1.5 * cubic + quad) * inputs.within_cross_sum,
        "across_coordinates": -(2.0 / 3.0 * cubic + quad) * inputs.offdiag_sum,
    }
    return _report(terms, validity_condition="array NA, mean zero, Sigma positive definite (assumed by caller)")


def berry_esseen_iid(K: float, sigma: float, n: int) -> float:
    """Kolmogorov-distance bound for iid sums; for side-by-side display only."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    return BERRY_ESSEEN_C * K ** 3 / sigma ** 3 / math.sqrt(n)


# --- identities ---------------------------------------------------------------

def geom_identity_krk4(w: float, n: int) -> float:
    """Closed form of ``sum_{k=1}^{n-1} (n-k) w^k``."""
    if w == 1:
        raise ValueError("w must differ from 1")
    return w * ((n - 1) - n * w + w ** n) / (w - 1) ** 2


def geom_identity_krk2(u: float, n: int) -> float:
    """Closed form of ``n + 2 sum_{b=1}^{n-1} (n-b) u^b``."""
    if u == 1:
        raise ValueError("u must differ from 1")
    return ((1 - u * u) * n - 2 * u + 2 * u ** (n + 1)) / (u - 1) ** 2


def weighted_exp_sum(q: int, n: int, lam: float) -> float:
    """``sum_{a=-n+1}^{n-1} (n-|a|) exp(-lam |q+a|)``, non-increasing in ``|q|``."""
    a = np.arange(-n + 1, n)
    return float(np.dot(n - np.abs(a), np.exp(-lam * np.abs(q + a))))


# --- lattice-field lemmas -------------------------------------------------------

def block_cov_sum_bound(constants: DecayConstants, kappa0: float, n: int, l: int) -> float:
    """Upper bound on ``sum_{i != j} -E[xi_i xi_j]`` over the sub-blocks of side ``l``."""
    if not 1 <= l <= n:
        raise ValueError("need 1 <= l <= n")
    return kappa0 * constants.gamma * n ** constants.dim / l


def separated_block_cov_bound(constants: DecayConstants, kappa0: float, n: int) -> float:
    """Upper bound on ``-Cov(S_k1, S_k2)`` for blocks at sup-distance at least ``n``."""
    d = constants.dim
    return kappa0 * constants.nu ** d * math.exp(-constants.lam) * n ** (d - 1)


def optimize_block_length(a: float, b: float, d: int, n: int) -> tuple[int, float]:
    """Integer minimiser of ``a l^d + b/l`` over ``1 <= l <= n``.

    The objective is convex in ``l``, so the minimiser is the floor or the
    ceiling of the real minimiser ``(b / (a d))^(1/(d+1))``, clamped to range.
    Ties go to the smaller ``l``.
    """
    if not (a > 0 and b > 0):
        raise ValueError("a and b must be positive")
    l0 = (b / (a * d)) ** (1.0 / (d + 1))
    f = lambda l: a * l ** d + b / l  # noqa: E731
    lo = min(max(math.floor(l0), 1), n)
    hi = min(max(math.ceil(l0), 1), n)
    l = lo if f(lo) <= f(hi) else hi
    return l, f(l)


def min_in_l_envelope(a: float, b: float, d: int) -> float:
    return a ** (1 / (d + 1)) * b ** (d / (d + 1)) * (d ** (-d / (d + 1)) + 2 * d ** (1 / (d + 1)))


def field_constant_C(d: int, K: float, lam: float, kappa0: float, An: float) -> float:
    g = decay_constants(lam, d).gamma
    return 10 * K * d * math.sqrt(An) / (5.2 * kappa0 * g)


def field_kappa1(d: int, K: float, lam: float, kappa0: float, An: float) -> float:
    g = decay_constants(lam, d).gamma
    return ((10 * K * (5.2 * kappa0 * g) ** d / An ** (d + 0.5)) ** (1 / (d + 1))
            * (d ** (-d / (d + 1)) + 2 * d ** (1 / (d + 1))))


def field_bound_univariate(d: int, K: float, lam: float, kappa0: float, An: float, n: int) -> BoundReport:
    """``kappa1 * n^(-d/(2d+2))`` for the standardized block sum of an NA field.

    ``details`` also carries the two-term bound before optimising over the
    sub-block length, evaluated at the integer minimiser.
    """
    if not An > 0:
        raise ValueError("A_n must be positive")
    C = field_constant_C(d, K, lam, kappa0, An)
    k1 = field_kappa1(d, K, lam, kappa0, An)
    n_min = max(C ** (2 / d), C ** (-2 / (d + 2)))
    valid = n >= n_min
    g = decay_constants(lam, d).gamma
    a = 10 * K / (n ** (d / 2) * math.sqrt(An))
    b = 5.2 * kappa0 * g / An
    l, two_term = optimize_block_length(a, b, d, n)
    return _report(
        {"rate": k1 * n ** (-d / (2 * d + 2))},
        valid=valid,
        validity_condition=f"n >= max(C^(2/d), C^(-2/(d+2))) = {n_min:.6g}",
        details={"C": C, "kappa1": k1, "n_min": n_min, "l": float(l),
                 "l0": C ** (-1 / (d + 1)) * n ** (d / (2 * d + 2)), "two_term": two_term},
    )


def gershgorin_threshold(p: int, d: int, An: float, kappa0: float, constants: DecayConstants) -> float:
    """Smallest ``n`` (exclusive) at which the block covariance is diagonally dominant."""
    return (p - 1) * kappa0 * constants.nu ** d * math.exp(-constants.lam) / An


def sigma_inv_infty_bound(p: int, d: int, n: int, An: float, kappa0: float,
                          constants: DecayConstants) -> BoundReport:
    """Bound on the max-abs entry of the inverse covariance of ``p`` separated block sums.

    Outside the diagonally dominant range the report is invalid and its value NaN.
    """
    thr = gershgorin_threshold(p, d, An, kappa0, constants)
    cond = f"n > (p-1) kappa0 nu^d e^(-lambda) / A_n = {thr:.6g}"
    if not n > thr:
        return BoundReport(value=math.nan, terms={}, valid=False, validity_condition=cond,
                           details={"threshold": thr})
    margin = n * An - (p - 1) * kappa0 * constants.nu ** d * math.exp(-constants.lam)
    return _report({"inverse_bound": 1.0 / (n ** (d - 1) * margin)}, validity_condition=cond,
                   details={"threshold": thr})


def field_bound_multivariate(d: int, p: int, lam: float, kappa0: float, An: float, n: int,
                             psi_n: float) -> BoundReport:
    """Four-term rate expression for ``p`` separated block sums, leading constant 1."""
    c = decay_constants(lam, d)
    B_nd = d * psi_n * An
    gersh = gershgorin_threshold(p, d, An, kappa0, c)
    n_min = max(B_nd ** (2 / d), B_nd ** (-2 / (d + 2)), gersh)
    e = d + 1
    terms = {
        "t1": psi_n ** ((2 * d + 4) / e) / (An ** ((d - 1) / e) * n ** (d / e)),
        "t2": psi_n ** ((2 * d + 3) / e) / (An ** (d / e) * n ** ((3 * d + 2) / (2 * d + 2))),
        "t3": psi_n ** 2 / n,
        "t4": An ** (1 / e) * psi_n ** ((2 * d + 3) / e) / n ** (d / (2 * d + 2)),
    }
    return _report(terms, valid=n > n_min, rate_only=True,
                   validity_condition=f"n > max(B^(2/d), B^(-2/(d+2)), Gershgorin threshold) = {n_min:.6g}",
                   details={"B_nd": B_nd, "n_min": n_min, "psi_n": psi_n})


def psi_n_from_sigma(Sigma, n: int, d: int) -> tuple[float, float]:
    """Return ``(psi_n, |Sigma^{-1/2}|_inf)`` via the spectral inverse square root."""
    S = np.asarray(Sigma, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValueError("Sigma must be square")
    if not np.allclose(S, S.T, rtol=1e-12, atol=1e-12 * np.abs(S).max()):
        raise ValueError("Sigma must be symmetric")
    w, V = np.linalg.eigh((S + S.T) / 2)
    if w.min() <= 0:
        raise ValueError("Sigma is not positive definite")
    s = float(np.abs((V / np.sqrt(w)) @ V.T).max())
    return n ** (d / 2) * s, s


def inv_sqrt_spd(Sigma) -> np.ndarray:
    S = np.asarray(Sigma, dtype=float)
    w, V = np.linalg.eigh((S + S.T) / 2)
    if w.min() <= 0:
        raise ValueError("Sigma is not positive definite")
    return (V / np.sqrt(w)) @ V.T
