"""
Physical-layer exploration.

Each channel's exploration signal is y = C s + n, where the columns of C are
the pool's preambles and s is sparse with one (possibly summed) gain per
chosen preamble. The base station recovers the support of s by greedy
matching pursuit and reports its size as the preamble count.
"""
import logging
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Dict, FrozenSet, Optional, Sequence, Tuple

import numpy as np

from .exceptions import DomainError
from .model import ExplorationOutcome, SystemConfig, is_prime
from .streams import substream, trial_blocks
from . import analytic

logger = logging.getLogger(__name__)

NOISELESS_REL_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class PreamblePool:
    t_p: int
    sequences: np.ndarray
    coherence: float

    @property
    def pool_size(self) -> int:
        return self.sequences.shape[0]

    def gram(self) -> np.ndarray:
        return self.sequences.conj() @ self.sequences.T

    @property
    def recovery_bound(self) -> float:
        """Sparsity below which noiseless matching pursuit recovers any support."""
        return 0.5 * (1.0 + 1.0 / self.coherence) if self.coherence > 0 else float('inf')


@dataclass(frozen=True, eq=False)
class ChannelObservation:
    y: np.ndarray
    true_support: FrozenSet[int]
    true_gains: Dict[int, complex]
    noise_power: float
    gain_magnitude: float


def build_alltop_pool(t_p: int, size: Optional[int] = None) -> PreamblePool:
    """
    Alltop pool of t_p**2 unit-norm sequences of prime length t_p >= 5:
    c_{l,m}[n] = exp(2 pi i ((n + l)^3 + m n) / t_p) / sqrt(t_p), row index l * t_p + m.
    Rows sharing l are orthogonal; any other pair has inner product of
    magnitude exactly 1 / sqrt(t_p).
    `size` keeps only the first rows.
    """
    if t_p < 5 or not is_prime(t_p):
        raise DomainError(f"Alltop sequences need a prime length >= 5, got {t_p}")
    full = t_p * t_p
    if size is None:
        size = full
    if not 1 <= size <= full:
        raise DomainError(f"pool size must lie in [1, {full}], got {size}")

    n = np.arange(t_p, dtype=np.int64)
    l = np.arange(t_p, dtype=np.int64)[:, None, None]
    m = np.arange(t_p, dtype=np.int64)[None, :, None]
    residues = (((n + l) % t_p) ** 3 + m * n) % t_p
    sequences = (np.exp(2j * np.pi * residues / t_p) / np.sqrt(t_p)).reshape(full, t_p)[:size]
    sequences.flags.writeable = False

    gram = np.abs(sequences.conj() @ sequences.T)
    np.fill_diagonal(gram, 0.0)
    coherence = float(gram.max()) if size > 1 else 0.0
    logger.debug("built Alltop pool t_p=%d size=%d coherence=%.6f", t_p, size, coherence)
    return PreamblePool(t_p, sequences, coherence)


@lru_cache(maxsize=16)
def pool_for(t_p: int, pool_size: int) -> PreamblePool:
    return build_alltop_pool(t_p, pool_size)


def synthesize_channel(assigned_preambles: Sequence[int], pool: PreamblePool, target_snr: float,
                       noise_power: float, rng: np.random.Generator) -> ChannelObservation:
    """
    Received exploration signal on one channel.

    Every user meets the target SNR with equality: gain magnitude sqrt(snr * N0)
    with a uniform random phase. Users sharing a preamble add their gains.
    With noise_power = 0 the gains have unit magnitude and no noise is added.
    """
    idx = np.asarray(assigned_preambles, dtype=np.int64) - 1
    if idx.size and (idx.min() < 0 or idx.max() >= pool.pool_size):
        raise DomainError(f"preamble indices must lie in [1, {pool.pool_size}]")

    noiseless = noise_power == 0
    magnitude = 1.0 if noiseless else float(np.sqrt(target_snr * noise_power))
    phases = rng.uniform(0.0, 2.0 * np.pi, size=idx.size)

    s = np.zeros(pool.pool_size, dtype=complex)
    np.add.at(s, idx, magnitude * np.exp(1j * phases))
    y = s @ pool.sequences
    if not noiseless:
        scale = np.sqrt(noise_power / 2.0)
        y = y + scale * (rng.standard_normal(pool.t_p) + 1j * rng.standard_normal(pool.t_p))

    support = frozenset(int(i) + 1 for i in np.unique(idx))
    gains = {l: complex(s[l - 1]) for l in support}
    return ChannelObservation(y, support, gains, noise_power, magnitude)


def estimate_support(obs: ChannelObservation, pool: PreamblePool, max_k: Optional[int] = None,
                     stop_factor: float = 1.5) -> Tuple[Tuple[int, ...], int]:
    """
    Greedy matching pursuit with least-squares refit.

    Stops when the residual energy drops to stop_factor * t_p * N0 (a relative
    1e-12 of the signal energy when noiseless) or after max_k atoms. The cap
    never exceeds t_p, the rank of the pool, and defaults to it. Refitted
    amplitudes below half the per-user gain are pruned.
    Returns the 1-based support and its size.
    """
    A = pool.sequences.T
    y = obs.y
    energy = float(np.vdot(y, y).real)
    noiseless = obs.noise_power == 0
    if noiseless:
        threshold = NOISELESS_REL_TOL * energy
    else:
        threshold = stop_factor * pool.t_p * obs.noise_power

    cap = min(pool.t_p, pool.pool_size)
    if max_k is not None:
        cap = min(cap, max_k)

    support = []
    coef = np.zeros(0, dtype=complex)
    residual = y
    while len(support) < cap and float(np.vdot(residual, residual).real) > threshold:
        corr = np.abs(A.conj().T @ residual)
        corr[support] = -1.0
        support.append(int(np.argmax(corr)))
        coef, *_ = np.linalg.lstsq(A[:, support], y, rcond=None)
        residual = y - A[:, support] @ coef

    floor = 1e-6 if noiseless else 0.5 * obs.gain_magnitude
    kept = sorted(j + 1 for j, c in zip(support, coef) if abs(c) >= floor)
    return tuple(kept), len(kept)


def estimate_counts(outcome: ExplorationOutcome, pool: PreamblePool, config: SystemConfig,
                    rng: np.random.Generator) -> np.ndarray:
    """Per-channel preamble count estimates from synthesized observations."""
    if outcome.user_preamble is None:
        raise DomainError("phy estimation needs per-user preamble choices")
    est = np.zeros(outcome.M, dtype=np.int64)
    order = np.argsort(outcome.user_channel, kind="stable")
    channels = outcome.user_channel[order]
    preambles = outcome.user_preamble[order]
    bounds = np.searchsorted(channels, np.arange(1, outcome.M + 2))
    for m in range(outcome.M):
        chosen = preambles[bounds[m]:bounds[m + 1]]
        if config.noise_power == 0 and chosen.size == 0:
            continue
        obs = synthesize_channel(chosen, pool, config.target_snr, config.noise_power, rng)
        _, est[m] = estimate_support(obs, pool, config.max_k, config.stop_factor)
    return est


def distinct_preamble_counts(outcome: ExplorationOutcome, pool_size: int) -> np.ndarray:
    """Per-channel number of distinct preambles (what an error-free detector reports)."""
    if outcome.K == 0:
        return np.zeros(outcome.M, dtype=np.int64)
    keys = np.unique((outcome.user_channel - 1) * pool_size + (outcome.user_preamble - 1))
    return np.bincount(keys // pool_size, minlength=outcome.M)


def with_estimates(outcome: ExplorationOutcome, est_counts) -> ExplorationOutcome:
    return replace(outcome, est_counts=est_counts)


@dataclass(frozen=True)
class CollisionStats:
    empirical: float
    stderr: float
    exact: float
    approx: float
    samples: int


def collision_stats(lam: float, M: int, pool_size: int, trials: int, seed: int,
                    stream: int = 0) -> CollisionStats:
    """
    Monte Carlo per-channel no-collision probability under K ~ Poisson(lam)
    with uniform channel and preamble draws, against the exact mixture and
    its quadratic approximation.
    """
    if trials < 1:
        raise DomainError("trials must be >= 1")
    collided_cells = 0
    for block, size in trial_blocks(trials):
        rng = substream(seed, stream, block)
        K = rng.poisson(lam, size=size)
        total = int(K.sum())
        if total == 0:
            continue
        trial = np.repeat(np.arange(size, dtype=np.int64), K)
        cell = trial * M + rng.integers(0, M, size=total)
        keys, counts = np.unique(cell * pool_size + rng.integers(0, pool_size, size=total),
                                 return_counts=True)
        collided_cells += np.unique(keys[counts >= 2] // pool_size).size

    samples = trials * M
    empirical = 1.0 - collided_cells / samples
    stderr = float(np.sqrt(max(empirical * (1.0 - empirical), 0.0) / samples))
    exact, approx = analytic.no_collision_mixture(lam, M, pool_size)
    return CollisionStats(empirical, stderr, exact, approx, samples)


def detection_trials(k: int, pool: PreamblePool, target_snr: float, noise_power: float,
                     max_k: Optional[int], stop_factor: float, trials: int, seed: int,
                     stream: int = 0) -> np.ndarray:
    """
    Estimated counts for `trials` channels each carrying k users on distinct,
    uniformly drawn preambles.
    """
    if k > pool.pool_size:
        raise DomainError(f"cannot place {k} distinct preambles in a pool of {pool.pool_size}")
    k_hat = np.empty(trials, dtype=np.int64)
    done = 0
    for block, size in trial_blocks(trials):
        rng = substream(seed, stream, block)
        for i in range(size):
            chosen = rng.choice(pool.pool_size, size=k, replace=False) + 1
            obs = synthesize_channel(chosen, pool, target_snr, noise_power, rng)
            k_hat[done + i] = estimate_support(obs, pool, max_k, stop_factor)[1]
        done += size
    return k_hat
