"""
Closed-form throughput, collision and delay expressions for multichannel
slotted ALOHA with and without the preamble exploration phase.

Notation: K active users, M channels, lambda total-arrival rate,
lambda0 new-arrival rate, alpha = lambda / M.
"""
import itertools
import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize, stats

from .exceptions import DomainError, OracleSizeError

logger = logging.getLogger(__name__)

E_INV = math.exp(-1.0)
ORACLE_CAP = 10 ** 6
SOLVER_TOL = 1e-9


@dataclass(frozen=True)
class FixedPointResult:
    lam: Optional[float]
    residual: float
    iterations: int
    stable: bool
    lambda0: float = 0.0


@dataclass(frozen=True)
class ThroughputCurve:
    grid: Tuple[Tuple[float, float], ...]
    meaning: str

    def __post_init__(self):
        xs = [x for x, _ in self.grid]
        if any(b <= a for a, b in zip(xs, xs[1:])):
            raise DomainError("curve grid must be strictly increasing in x")

    @classmethod
    def tabulate(cls, fn: Callable[[float], float], xs: Sequence[float], meaning: str) -> 'ThroughputCurve':
        return cls(tuple((float(x), float(fn(x))) for x in xs), meaning)

    def argmax(self) -> Tuple[float, float]:
        return max(self.grid, key=lambda p: p[1])


# single channel

def eta_sa_known(K: int) -> float:
    """Throughput of single-channel ALOHA when the K contenders know K (access probability 1/K)."""
    if K < 1:
        raise DomainError(f"eta_sa_known needs K >= 1, got {K}")
    if K == 1:
        return 1.0
    return (1.0 - 1.0 / K) ** (K - 1)


def eta_sa_blind(p: float, lam: float) -> float:
    """Throughput with access probability p chosen without knowing K ~ Poisson(lam)."""
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"access probability must lie in [0, 1], got {p}")
    if lam < 0:
        raise DomainError(f"lambda must be >= 0, got {lam}")
    return p * lam * math.exp(-p * lam)


def eta_sa_blind_max(lam: float) -> float:
    """Blind throughput at its best access probability p = min(1, 1/lam)."""
    p = 1.0 if lam <= 1.0 else 1.0 / lam
    return eta_sa_blind(p, lam)


# conventional multichannel ALOHA

def n_ma(K: int, M: int) -> float:
    """Mean number of collision-free packets: K users, each on a uniform channel."""
    _check_channels(M)
    if K <= 0:
        return 0.0
    return K * (1.0 - 1.0 / M) ** (K - 1)


def n_ma_poisson(lam: float, M: int) -> float:
    _check_channels(M)
    return lam * math.exp(-lam / M)


def q_ma(lam: float, M: int) -> float:
    """Collision probability of conventional multichannel ALOHA under Poisson load."""
    _check_channels(M)
    if lam < 0:
        raise DomainError(f"lambda must be >= 0, got {lam}")
    return -math.expm1(-lam / M)


def solve_lambda_ma(lambda0: float, M: int) -> FixedPointResult:
    """Total rate lambda in [0, M) with lambda0 = lambda * exp(-lambda / M)."""
    _check_channels(M)
    return _solve_increasing(lambda x: n_ma_poisson(x, M), lambda0, float(M))


# multichannel ALOHA with exploration

def n_ep_cond(U: int, L_free: int, S: int) -> float:
    """Conditional successes: S contention-free users plus U transmitters over L_free channels."""
    if L_free < 1:
        raise DomainError(f"need at least one free channel, got {L_free}")
    if U <= 0:
        return float(S)
    return S + U * (1.0 - 1.0 / L_free) ** (U - 1)


def s_bar(K: int, M: int) -> float:
    """Expected number of singleton channels after exploration, given K."""
    return n_ma(K, M)


def n_ep_upper(K: int, M: int) -> float:
    """Large-system upper bound on the mean EP successes for K users."""
    return M * E_INV + s_bar(K, M) * (1.0 - E_INV)


def n_ep_oracle(K: int, M: int) -> float:
    """
    Exact mean EP successes by exhaustive enumeration.

    Every one of the M**K equiprobable exploration assignments is visited;
    for each, the Group II data phase is averaged over all binomially weighted
    transmit subsets and all equiprobable channel choices in the free set.
    """
    _check_channels(M)
    if K < 0:
        raise DomainError(f"K must be >= 0, got {K}")
    if M ** K > ORACLE_CAP:
        raise OracleSizeError(f"M**K = {M ** K} exceeds the oracle cap {ORACLE_CAP}")
    if K == 0:
        return 0.0

    total = Fraction(0)
    for assignment in itertools.product(range(M), repeat=K):
        counts = [0] * M
        for ch in assignment:
            counts[ch] += 1
        S = sum(1 for k in counts if k == 1)
        W = K - S
        free = M - S
        total += S
        if W:
            total += _group2_expectation(W, free)
    return float(total / M ** K)


@lru_cache(maxsize=None)
def _group2_expectation(W: int, free: int) -> Fraction:
    p = min(Fraction(1), Fraction(free, W))
    result = Fraction(0)
    for u in range(W + 1):
        weight = math.comb(W, u) * p ** u * (1 - p) ** (W - u)
        if weight:
            result += weight * _singletons_brute(u, free)
    return result


@lru_cache(maxsize=None)
def _singletons_brute(u: int, free: int) -> Fraction:
    """Mean number of channels holding exactly one of u uniform picks among `free` channels."""
    if u == 0:
        return Fraction(0)
    hits = 0
    for choice in itertools.product(range(free), repeat=u):
        occupancy = [0] * free
        for ch in choice:
            occupancy[ch] += 1
        hits += occupancy.count(1)
    return Fraction(hits, free ** u)


def poisson_cdf(k: int, lam: float) -> float:
    if k < 0:
        return 0.0
    return float(stats.poisson.cdf(k, lam))


def n_ep_lower_poisson(lam: float, M: int) -> float:
    """
    Lower bound on the mean EP successes when K ~ Poisson(lam).

    Evaluated in two algebraically identical forms; a mismatch beyond
    1e-12 (relative) raises ArithmeticError.
    """
    _check_channels(M)
    if lam < 0:
        raise DomainError(f"lambda must be >= 0, got {lam}")
    if lam == 0:
        return 0.0
    bound, alt = n_ep_lower_forms(lam, M)
    if not math.isclose(bound, alt, rel_tol=1e-12, abs_tol=1e-12):
        raise ArithmeticError(f"lower-bound forms disagree at lambda={lam}, M={M}: {bound} vs {alt}")
    return bound


def _mean_min_poisson(lam: float, M: int) -> float:
    """E[min(K, M)] for K ~ Poisson(lam), by the tail-subtraction form."""
    return lam - (lam - M) * stats.poisson.sf(M - 1, lam) - M * stats.poisson.pmf(M, lam)


def n_ep_lower_forms(lam: float, M: int) -> Tuple[float, float]:
    """Both forms of the lower bound: Poisson tail form and the E[min(K, M)] form."""
    head = (1.0 - E_INV) * n_ma_poisson(lam, M)
    first = head + E_INV * (M * stats.poisson.sf(M, lam) + lam * poisson_cdf(M - 1, lam))
    second = head + E_INV * _mean_min_poisson(lam, M)
    return first, second


def n_ep_approx(lam: float, M: int) -> float:
    """Second-order approximation of the mean EP successes, accurate for lambda < M."""
    _check_channels(M)
    if lam <= 0:
        return 0.0
    r = 1.0 - 1.0 / M
    a1 = lam * (1.0 + lam)
    a2 = lam * math.exp(-lam / M) * (1.0 + lam * r)
    a3 = lam * math.exp(-lam + lam * r * r) * (1.0 + lam * r * r)
    return lam - (a1 - 2.0 * a2 + a3) / M


def n_ep_gap_lower(alpha: float, M: int) -> float:
    """Lower bound on the EP-minus-conventional throughput gap, linear in M at fixed alpha."""
    return E_INV * alpha * (1.0 - math.exp(-alpha)) * M


def n_ep_gap_lower_poisson(lam: float, M: int) -> float:
    return E_INV * lam * -math.expm1(-lam / M)


def psi(alpha: float) -> float:
    """Asymptotic normalised EP throughput at total load alpha = lambda / M."""
    _check_alpha(alpha)
    return alpha - alpha ** 2 * (-math.expm1(-alpha)) ** 2


def psi_second_derivative(alpha: float) -> float:
    e = math.exp(-alpha)
    return -2.0 * ((1.0 - (1.0 - alpha) * e) ** 2 + alpha * (1.0 - e) * (2.0 - alpha) * e)


def psi_max() -> Tuple[float, float]:
    """Maximiser and maximum of psi on [0, 1] by golden-section search."""
    res = optimize.minimize_scalar(lambda a: -psi(a), bracket=(0.0, 0.8, 1.0),
                                   method='golden', tol=1e-10)
    alpha_star = float(res.x)
    return alpha_star, psi(alpha_star)


def q_ep_asymptotic(alpha: float) -> float:
    """Asymptotic EP collision probability alpha * (1 - exp(-alpha))**2."""
    _check_alpha(alpha)
    q = alpha * (-math.expm1(-alpha)) ** 2
    if alpha > 0 and not math.isclose(q, 1.0 - psi(alpha) / alpha, rel_tol=1e-12, abs_tol=1e-12):
        raise ArithmeticError(f"collision forms disagree at alpha={alpha}")
    return q


def n_ep_argmax(M: int) -> Tuple[float, float]:
    """Load maximising n_ep_approx on [0, M] and the maximum value."""
    res = optimize.minimize_scalar(lambda x: -n_ep_approx(x, M), bounds=(0.0, float(M)),
                                   method='bounded', options={'xatol': 1e-10 * max(1, M)})
    return float(res.x), n_ep_approx(float(res.x), M)


def solve_lambda_ep(lambda0: float, M: int,
                    g: Optional[Callable[[float], float]] = None,
                    upper: Optional[float] = None) -> FixedPointResult:
    """
    Total rate lambda with lambda0 = g(lambda) on the increasing branch of g.

    g defaults to n_ep_approx(., M); any other increasing map (for example a
    Monte Carlo estimate of the EP throughput) can be passed together with
    the upper end of its increasing branch.
    """
    _check_channels(M)
    if g is None:
        peak, _ = n_ep_argmax(M)
        g = lambda x: n_ep_approx(x, M)  # noqa: E731
    else:
        peak = float(upper if upper is not None else M)
    return _solve_increasing(g, lambda0, peak)


def q_ep_fixed_point(lambda0: float, M: int) -> Optional[float]:
    """Collision probability 1 - lambda0 / lambda at the EP fixed point; None if unstable."""
    res = solve_lambda_ep(lambda0, M)
    if not res.stable:
        return None
    if res.lam == 0:
        return 0.0
    return 1.0 - lambda0 / res.lam


def alpha_from_alpha0_ma(alpha0: float) -> Optional[float]:
    """Normalised total load alpha with alpha0 = alpha * exp(-alpha), alpha in [0, 1)."""
    res = _solve_increasing(lambda a: a * math.exp(-a), alpha0, 1.0)
    return res.lam if res.stable else None


def alpha_from_alpha0_ep(alpha0: float) -> Optional[float]:
    """Normalised total load alpha with alpha0 = psi(alpha), alpha up to the psi maximiser."""
    alpha_star, _ = psi_max()
    res = _solve_increasing(psi, alpha0, alpha_star)
    return res.lam if res.stable else None


def _solve_increasing(g: Callable[[float], float], target: float, hi: float) -> FixedPointResult:
    """Bisection for g(x) = target on [0, hi] where g is increasing with g(0) = 0."""
    if target < 0 or not math.isfinite(target):
        raise DomainError(f"target rate must be finite and >= 0, got {target}")
    if target == 0:
        return FixedPointResult(0.0, abs(g(0.0)), 0, True, target)
    g_hi = g(hi)
    if target > g_hi:
        logger.debug("unstable load %.6g exceeds map maximum %.6g", target, g_hi)
        return FixedPointResult(None, target - g_hi, 0, False, target)
    if target == g_hi:
        return FixedPointResult(hi, 0.0, 0, True, target)

    root, info = optimize.bisect(lambda x: g(x) - target, 0.0, hi, xtol=1e-14,
                                 rtol=4 * np.finfo(float).eps, maxiter=500, full_output=True)
    residual = abs(target - g(root))
    return FixedPointResult(float(root), residual, info.iterations, residual <= SOLVER_TOL, target)


# collision, delay, overhead

def delay_outage(q: float, D: int) -> float:
    """Probability that a packet needs more than D attempts, q**D."""
    if not 0.0 <= q < 1.0:
        raise DomainError(f"collision probability must lie in [0, 1), got {q}")
    if D < 0:
        raise DomainError(f"D must be >= 0, got {D}")
    return q ** D


def mean_delay(q: float) -> float:
    if not 0.0 <= q < 1.0:
        raise DomainError(f"collision probability must lie in [0, 1), got {q}")
    return 1.0 / (1.0 - q)


def preamble_no_collision_prob(k: int, pool_size: int) -> Tuple[float, float]:
    """(exact, approximate) probability that k same-channel users picked distinct preambles."""
    if pool_size < 1:
        raise DomainError(f"pool_size must be >= 1, got {pool_size}")
    if k < 0:
        raise DomainError(f"k must be >= 0, got {k}")
    approx = math.exp(-k * (k - 1) / (2.0 * pool_size))
    if k > pool_size:
        return 0.0, approx
    exact = 1.0
    for j in range(1, k):
        exact *= 1.0 - j / pool_size
    return exact, approx


def no_collision_mixture(lam: float, M: int, pool_size: int) -> Tuple[float, float]:
    """
    Per-channel no-collision probability when K ~ Poisson(lam) users spread over M channels.

    Returns (exact product mixed over Poisson(lam / M), 1 - lam**2 / (2 pool_size M**2)).
    """
    _check_channels(M)
    rate = lam / M
    kmax = int(rate + 12.0 * math.sqrt(rate)) + 20
    ks = np.arange(kmax + 1)
    pmf = stats.poisson.pmf(ks, rate)
    exact = sum(preamble_no_collision_prob(int(k), pool_size)[0] * w for k, w in zip(ks, pmf))
    return float(exact), 1.0 - lam ** 2 / (2.0 * pool_size * M ** 2)


def min_pool_size(lam: float, M: int, delta: float) -> int:
    """Smallest pool keeping the preamble collision probability near delta."""
    if not 0.0 < delta < 1.0:
        raise DomainError(f"delta must lie in (0, 1), got {delta}")
    _check_channels(M)
    needed = lam ** 2 / (2.0 * delta * M ** 2)
    return max(1, math.ceil(round(needed, 9)))


def overhead_factor(t_p: int, t_d: int, t_f: int) -> float:
    """Ratio of the conventional slot length to the exploration slot length."""
    if min(t_p, t_d, t_f) <= 0:
        raise DomainError("durations must be positive")
    return (t_d + t_f) / (t_p + t_d + 2 * t_f)


def effective_throughput(n_ep: float, kappa: float) -> float:
    return kappa * n_ep


def exploration_beneficial(n_ep: float, n_ma_value: float, kappa: float) -> bool:
    return effective_throughput(n_ep, kappa) > n_ma_value


def feedback_bits(M: int, w_max: int) -> int:
    """M one-bit channel flags plus ceil(log2 w_max) bits for the contention count."""
    _check_channels(M)
    if w_max < 1:
        raise DomainError(f"w_max must be >= 1, got {w_max}")
    return M + count_field_width(w_max)


def count_field_width(w_max: int) -> int:
    return (w_max - 1).bit_length()


def max_throughput_ratio() -> float:
    """Ratio of the maximum EP throughput to the maximum conventional throughput."""
    return 2.0 - E_INV


def normalized_maxima() -> Tuple[float, float]:
    """(conventional, EP) maximum throughput per channel."""
    return E_INV, E_INV * max_throughput_ratio()


def _check_channels(M: int) -> None:
    if M < 1:
        raise DomainError(f"M must be >= 1, got {M}")


def _check_alpha(alpha: float) -> None:
    if not 0.0 <= alpha <= 1.0:
        raise DomainError(f"alpha must lie in [0, 1], got {alpha}")


__all__: List[str] = [
    "FixedPointResult", "ThroughputCurve", "eta_sa_known", "eta_sa_blind", "eta_sa_blind_max",
    "n_ma", "n_ma_poisson", "q_ma", "solve_lambda_ma", "n_ep_cond", "s_bar", "n_ep_upper",
    "n_ep_oracle", "n_ep_lower_poisson", "n_ep_lower_forms", "n_ep_approx", "n_ep_gap_lower",
    "n_ep_gap_lower_poisson", "psi", "psi_second_derivative", "psi_max", "q_ep_asymptotic",
    "n_ep_argmax", "solve_lambda_ep", "q_ep_fixed_point", "alpha_from_alpha0_ma",
    "alpha_from_alpha0_ep", "delay_outage", "mean_delay", "preamble_no_collision_prob",
    "no_collision_mixture", "min_pool_size", "overhead_factor", "effective_throughput",
    "exploration_beneficial", "feedback_bits", "count_field_width", "max_throughput_ratio",
    "normalized_maxima", "poisson_cdf",
]
