"""
Built-in consistency checks: exact oracle against simulation, bound
orderings, identities between closed forms, solver residuals, the feedback
codec and the preamble layer.
"""
import itertools
import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, List, Tuple

import numpy as np

from . import analytic
from .feedback import count_capacity, decode_feedback, encode_feedback
from .mac import Scheme, batch_frames
from .model import Feedback
from .phy import ChannelObservation, build_alltop_pool, estimate_support
from .streams import substream, trial_blocks

logger = logging.getLogger(__name__)

SIGMAS = 4.0


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def _simulated_mean(scheme: Scheme, K: int, M: int, trials: int, seed: int, stream: int) -> Tuple[float, float]:
    parts = []
    for block, size in trial_blocks(trials):
        rng = substream(seed, stream, block)
        parts.append(batch_frames(scheme, np.full(size, K), M, rng).successes)
    s = np.concatenate(parts)
    return float(s.mean()), float(s.std(ddof=1) / math.sqrt(trials))


def check_oracle_exact(trials, seed):
    ok = (Fraction(analytic.n_ep_oracle(2, 2)) == Fraction(3, 2)
          and Fraction(analytic.n_ep_oracle(3, 4)) == Fraction(651, 256))
    return ok, "n_ep_oracle(2,2) = 3/2 and n_ep_oracle(3,4) = 651/256"


def check_exploration_never_hurts(trials, seed):
    worst = min(analytic.n_ep_oracle(K, M) - analytic.n_ma(K, M)
                for K, M in itertools.product(range(1, 5), repeat=2))
    return worst >= -1e-12, f"min oracle - conventional = {worst:.3g}"


def check_oracle_equivalence(trials, seed):
    worst = 0.0
    for i, (K, M) in enumerate(itertools.product(range(1, 5), repeat=2)):
        mean, se = _simulated_mean(Scheme.EXPLORATION, K, M, trials, seed, i)
        z = abs(mean - analytic.n_ep_oracle(K, M)) / max(se, 1e-12)
        worst = max(worst, z)
    return worst <= SIGMAS, f"worst deviation {worst:.2f} standard errors"


def check_baseline_equivalence(trials, seed):
    worst = 0.0
    for i, (K, M) in enumerate(((1, 1), (2, 3), (5, 4), (10, 10), (30, 20))):
        mean, se = _simulated_mean(Scheme.CONVENTIONAL, K, M, trials, seed, 100 + i)
        worst = max(worst, abs(mean - analytic.n_ma(K, M)) / max(se, 1e-12))
    return worst <= SIGMAS, f"worst deviation {worst:.2f} standard errors"


def check_lower_bound_forms(trials, seed):
    worst = 0.0
    for M in (1, 10, 100):
        for lam in np.linspace(0.1, 2.0 * M, 25):
            a, b = analytic.n_ep_lower_forms(float(lam), M)
            worst = max(worst, abs(a - b) / max(abs(a), 1.0))
    return worst <= 1e-12, f"largest relative difference {worst:.3g}"


def check_psi(trials, seed):
    xs = np.linspace(0.0, 1.0, 1001)
    values = np.array([analytic.psi(float(x)) for x in xs])
    second = values[2:] - 2.0 * values[1:-1] + values[:-2]
    alpha_star, peak = analytic.psi_max()
    ok = (second.max() <= 1e-9
          and all(analytic.psi_second_derivative(float(x)) <= 0 for x in xs)
          and abs(peak - 0.6149) <= 1e-4
          and abs(peak / analytic.E_INV - 1.6715) <= 1e-3)
    return ok, f"psi max {peak:.6f} at alpha {alpha_star:.6f}; largest second difference {second.max():.3g}"


def check_collision_ordering(trials, seed):
    xs = np.linspace(1e-3, 1.0, 1000)
    ok = all(analytic.q_ep_asymptotic(float(a)) <= analytic.q_ma(float(a), 1) for a in xs)
    return ok, "asymptotic EP collision probability below the conventional one on (0, 1]"


def check_throughput_floor(trials, seed):
    ok = all(analytic.eta_sa_known(K) >= analytic.E_INV for K in range(1, 1001))
    return ok, "known-K single-channel throughput never drops below 1/e"


def check_fixed_points(trials, seed):
    M = 100
    worst = 0.0
    for lambda0 in np.linspace(0.5, 36.0, 40):
        for res in (analytic.solve_lambda_ma(float(lambda0), M), analytic.solve_lambda_ep(float(lambda0), M)):
            if not res.stable:
                return False, f"no stable fixed point at lambda0 = {lambda0:.3g}"
            worst = max(worst, res.residual)
    return worst <= analytic.SOLVER_TOL, f"largest residual {worst:.3g}"


def check_codec(trials, seed):
    rng = substream(seed, 999)
    for _ in range(10_000):
        M = int(rng.integers(1, 65))
        w_max = int(rng.integers(1, 4097))
        flags = tuple(int(b) for b in rng.integers(0, 2, size=M))
        fb = Feedback(flags, int(rng.integers(0, count_capacity(w_max) + 1)), w_max)
        if decode_feedback(encode_feedback(fb), M, w_max) != fb:
            return False, f"round trip failed for {fb}"
    return True, "10000 random feedbacks survive encode/decode"


def check_alltop(trials, seed):
    pool = build_alltop_pool(11)
    bound = 1.0 / math.sqrt(11)
    norms = np.linalg.norm(pool.sequences, axis=1)
    ok = pool.coherence <= bound + 1e-9 and np.allclose(norms, 1.0, atol=1e-12)
    return ok, f"coherence {pool.coherence:.9f} against {bound:.9f}"


def check_noiseless_recovery(trials, seed):
    pool = build_alltop_pool(11)
    rng = substream(seed, 998)
    supports = itertools.chain(((a,) for a in range(1, pool.pool_size + 1)),
                               itertools.combinations(range(1, pool.pool_size + 1), 2))
    for support in supports:
        idx = np.asarray(support) - 1
        gains = np.exp(1j * rng.uniform(0.0, 2.0 * np.pi, size=idx.size))
        obs = ChannelObservation(gains @ pool.sequences[idx], frozenset(support), {}, 0.0, 1.0)
        found, _ = estimate_support(obs, pool, max_k=2)
        if found != tuple(support):
            return False, f"support {support} recovered as {found}"
    return True, "every support of size <= 2 recovered at t_p = 11"


CHECKS: List[Tuple[str, Callable[[int, int], Tuple[bool, str]]]] = [
    ("oracle_exact", check_oracle_exact),
    ("exploration_never_hurts", check_exploration_never_hurts),
    ("oracle_equivalence", check_oracle_equivalence),
    ("baseline_equivalence", check_baseline_equivalence),
    ("lower_bound_forms", check_lower_bound_forms),
    ("psi", check_psi),
    ("collision_ordering", check_collision_ordering),
    ("throughput_floor", check_throughput_floor),
    ("fixed_points", check_fixed_points),
    ("codec", check_codec),
    ("alltop", check_alltop),
    ("noiseless_recovery", check_noiseless_recovery),
]


def cmd_selftest(trials: int = 200_000, seed: int = 0) -> List[CheckResult]:
    results = []
    for name, check in CHECKS:
        try:
            passed, detail = check(trials, seed)
        except Exception as e:
            passed, detail = False, f"{type(e).__name__}: {e}"
        level = logging.INFO if passed else logging.ERROR
        logger.log(level, "%s: %s (%s)", name, "pass" if passed else "FAIL", detail)
        results.append(CheckResult(name, bool(passed), detail))
    return results
