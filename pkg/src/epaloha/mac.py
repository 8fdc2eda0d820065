"""
Slot-level protocol engine.

One frame of the exploration scheme is: every active user sends a preamble on
a uniformly drawn channel (exploration), the base station broadcasts one flag
per channel plus the contention count (feedback), then users on flagged
channels send data there while the others contend over the unflagged channels
(data transmission). The conventional scheme skips the first two steps.

`run_frame` follows one frame user by user and supports every estimation
mode. `batch_frames` runs many Ideal-mode or conventional frames at once on
padded arrays and is what the single-shot runner uses when it can.
"""
import enum
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .exceptions import DomainError, SimulationError
from .feedback import make_feedback
from .model import EstimationMode, ExplorationOutcome, Feedback, SlotResult, SystemConfig
from .phy import PreamblePool, distinct_preamble_counts, estimate_counts, pool_for, with_estimates

logger = logging.getLogger(__name__)


class Scheme(enum.Enum):
    CONVENTIONAL = "ma"
    EXPLORATION = "ep"


def run_exploration(K: int, config: SystemConfig, rng: np.random.Generator,
                    pool: Optional[PreamblePool] = None) -> ExplorationOutcome:
    """Draw each user's channel (and preamble outside Ideal mode) and the counts the BS reports."""
    if K < 0:
        raise DomainError(f"K must be >= 0, got {K}")
    M = config.M
    channels = rng.integers(1, M + 1, size=K)
    mode = config.estimation_mode
    if mode is EstimationMode.IDEAL:
        return ExplorationOutcome.from_choices(M, channels)

    preambles = rng.integers(1, config.pool_size + 1, size=K)
    outcome = ExplorationOutcome.from_choices(M, channels, preambles)
    if mode is EstimationMode.PREAMBLE_POOL:
        return with_estimates(outcome, distinct_preamble_counts(outcome, config.pool_size))
    if pool is None:
        pool = pool_for(config.t_p, config.pool_size)
    return with_estimates(outcome, estimate_counts(outcome, pool, config, rng))


def run_dtp(outcome: ExplorationOutcome, fb: Feedback, rng: np.random.Generator) -> SlotResult:
    """
    Data transmission phase.

    Group I users (flag set on their channel) send on their own channel.
    Group II users send with probability min(1, L / W), or 1 when W = 0, on a
    channel drawn uniformly from the unflagged set. A packet succeeds when it
    is alone on its channel.
    """
    if fb.M != outcome.M:
        raise DomainError(f"feedback covers {fb.M} channels, outcome {outcome.M}")
    K = outcome.K
    flags = np.asarray(fb.flags, dtype=bool)
    own = outcome.user_channel
    group1 = flags[own - 1] if K else np.zeros(0, dtype=bool)
    n_group2 = int(K - group1.sum())

    free = np.flatnonzero(~flags) + 1
    L = free.size
    W = fb.contention_count
    p = 1.0 if W == 0 else min(1.0, L / W)

    transmits = group1.copy()
    if n_group2:
        contend = rng.random(n_group2) < p if p < 1.0 else np.ones(n_group2, dtype=bool)
        transmits[~group1] = contend

    data_channel = own.copy()
    contenders = ~group1 & transmits
    n_contenders = int(contenders.sum())
    fallback = False
    if n_contenders:
        if L == 0:
            if np.array_equal(outcome.est_counts, outcome.true_counts):
                raise SimulationError("no free channel left for a contending user under exact counts")
            logger.warning("no free channel for %d contending users; sending on own channel", n_contenders)
            fallback = True
        else:
            data_channel[contenders] = free[rng.integers(0, L, size=n_contenders)]

    occupancy = np.bincount(data_channel[transmits] - 1, minlength=outcome.M)
    success = transmits & (occupancy[data_channel - 1] == 1)
    g1 = int((success & group1).sum())
    g2 = int((success & ~group1).sum())
    n_tx = int(transmits.sum())
    return SlotResult(
        group1_count=int(group1.sum()),
        group2_transmitters=n_contenders,
        free_channels=L,
        group1_successes=g1,
        group2_successes=g2,
        collided_packets=n_tx - g1 - g2,
        per_user_success=success,
        deferred=n_group2 - n_contenders,
        fallback_used=fallback,
    )


def run_conventional(K: int, M: int, rng: np.random.Generator) -> SlotResult:
    """Every user sends on a uniform channel; all of them count as contenders."""
    if K < 0:
        raise DomainError(f"K must be >= 0, got {K}")
    channels = rng.integers(0, M, size=K)
    counts = np.bincount(channels, minlength=M)
    success = counts[channels] == 1
    n = int(success.sum())
    return SlotResult(
        group1_count=0,
        group2_transmitters=K,
        free_channels=M,
        group1_successes=0,
        group2_successes=n,
        collided_packets=K - n,
        per_user_success=success,
    )


def run_frame(scheme: Scheme, K: int, config: SystemConfig, rng: np.random.Generator,
              pool: Optional[PreamblePool] = None) -> SlotResult:
    if scheme is Scheme.CONVENTIONAL:
        return run_conventional(K, config.M, rng)
    outcome = run_exploration(K, config, rng, pool)
    fb = make_feedback(outcome, config.w_max)
    if fb.saturated:
        logger.debug("frame with K=%d saturated the contention count", K)
    return run_dtp(outcome, fb, rng)


@dataclass(frozen=True, eq=False)
class BatchResult:
    """Per-trial tallies of a batch of independent frames."""
    active: np.ndarray
    successes: np.ndarray
    group1_successes: np.ndarray
    group2_successes: np.ndarray
    transmitted: np.ndarray

    @property
    def collided(self) -> np.ndarray:
        return self.transmitted - self.successes


def batch_frames(scheme: Scheme, K: np.ndarray, M: int, rng: np.random.Generator) -> BatchResult:
    """
    Independent frames with exact counts, one per entry of K.

    Trials are padded to max(K) users; padding users sit in a sentinel bin M.
    Group II data choices are drawn as ranks within each trial's free set, so
    a contender succeeds exactly when no other contender drew the same rank.
    """
    K = np.asarray(K, dtype=np.int64)
    if K.size and K.min() < 0:
        raise DomainError("K must be >= 0")
    T = K.size
    kmax = int(K.max()) if T else 0
    zeros = np.zeros(T, dtype=np.int64)
    if kmax == 0:
        return BatchResult(K, zeros, zeros, zeros, zeros)

    active = np.arange(kmax) < K[:, None]
    channel = np.where(active, rng.integers(0, M, size=(T, kmax)), M)
    rows = np.arange(T)[:, None]
    counts = np.bincount((rows * (M + 1) + channel).ravel(), minlength=T * (M + 1)).reshape(T, M + 1)
    counts[:, M] = 0

    if scheme is Scheme.CONVENTIONAL:
        successes = (counts[:, :M] == 1).sum(axis=1)
        return BatchResult(K, successes, zeros, successes, K)

    singles = (counts[:, :M] == 1).sum(axis=1)
    free = M - singles
    contention = K - singles
    p = np.where(contention == 0, 1.0, np.minimum(1.0, free / np.maximum(contention, 1)))

    group2 = active & (counts[rows, channel] != 1)
    coin = rng.random((T, kmax))
    rank = rng.integers(0, np.maximum(free, 1)[:, None], size=(T, kmax))
    sends = group2 & (coin < p[:, None])

    slot = np.where(sends, rows * M + rank, T * M)
    hits = np.bincount(slot.ravel(), minlength=T * M + 1)[:T * M].reshape(T, M)
    g2 = (hits == 1).sum(axis=1)
    return BatchResult(K, singles + g2, singles, g2, singles + sends.sum(axis=1))
