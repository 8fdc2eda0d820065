"""
Monte Carlo runners: independent single-shot frames and the fast-retrial chain.
"""
import logging
from collections import Counter
from dataclasses import dataclass, replace
from typing import Iterator, Optional, Sequence, Tuple

import numpy as np

from .exceptions import DomainError
from .mac import Scheme, batch_frames, run_frame
from .model import EstimationMode, SteadyStateStats, SystemConfig, TrafficConfig
from .phy import PreamblePool, pool_for
from .streams import substream, trial_blocks

logger = logging.getLogger(__name__)

BACKLOG_CAP = 10 ** 6


@dataclass
class Packet:
    id: int
    birth_slot: int
    attempts: int = 0


class Backlog:
    """Packets waiting for delivery, held column-wise."""

    def __init__(self):
        self.ids = np.zeros(0, dtype=np.int64)
        self.births = np.zeros(0, dtype=np.int64)
        self.attempts = np.zeros(0, dtype=np.int64)
        self._next_id = 0

    def __len__(self) -> int:
        return self.ids.size

    def admit(self, count: int, slot: int) -> None:
        if count <= 0:
            return
        new_ids = np.arange(self._next_id, self._next_id + count, dtype=np.int64)
        self._next_id += count
        self.ids = np.concatenate([self.ids, new_ids])
        self.births = np.concatenate([self.births, np.full(count, slot, dtype=np.int64)])
        self.attempts = np.concatenate([self.attempts, np.zeros(count, dtype=np.int64)])

    def settle(self, delivered: np.ndarray, slot: int) -> Tuple[np.ndarray, np.ndarray]:
        """
        Count one attempt for every packet and drop the delivered ones.
        Returns their attempt counts and sojourn times in slots, arrival slot included.
        """
        self.attempts += 1
        done = self.attempts[delivered]
        sojourn = slot - self.births[delivered] + 1
        keep = ~delivered
        self.ids = self.ids[keep]
        self.births = self.births[keep]
        self.attempts = self.attempts[keep]
        return done, sojourn

    def packets(self) -> Iterator[Packet]:
        for i, b, a in zip(self.ids, self.births, self.attempts):
            yield Packet(int(i), int(b), int(a))


@dataclass(frozen=True)
class SingleShotSummary:
    scheme: Scheme
    trials: int
    mean: float
    stderr: float
    group1_mean: float
    group2_mean: float
    mean_active: float
    collision_fraction: float
    fallback_frames: int = 0


def _uses_batch(scheme: Scheme, config: SystemConfig) -> bool:
    return scheme is Scheme.CONVENTIONAL or config.estimation_mode is EstimationMode.IDEAL


def _mode_pool(config: SystemConfig) -> Optional[PreamblePool]:
    if config.estimation_mode is EstimationMode.PHY:
        return pool_for(config.t_p, config.pool_size)
    return None


def simulate_single_shot(scheme: Scheme, config: SystemConfig, traffic: TrafficConfig,
                         trials: int, seed: int, stream: int = 0) -> SingleShotSummary:
    """
    Independent frames with K fixed or drawn from Poisson(lambda).

    Trials run in blocks with their own substreams, so the result depends only
    on (seed, stream, trials, config, traffic).
    """
    if trials < 1:
        raise DomainError(f"trials must be >= 1, got {trials}")
    if traffic.kind == "lambda0":
        raise DomainError("single-shot frames take a fixed K or a total rate lambda, not lambda0")

    batched = _uses_batch(scheme, config)
    pool = None if batched else _mode_pool(config)
    parts = {"successes": [], "group1": [], "group2": [], "active": []}
    fallbacks = 0
    for block, size in trial_blocks(trials):
        rng = substream(seed, stream, block)
        if traffic.kind == "K":
            K = np.full(size, traffic.fixed_k, dtype=np.int64)
        else:
            K = rng.poisson(traffic.lam, size=size)

        if batched:
            res = batch_frames(scheme, K, config.M, rng)
            parts["successes"].append(res.successes)
            parts["group1"].append(res.group1_successes)
            parts["group2"].append(res.group2_successes)
        else:
            frames = [run_frame(scheme, int(k), config, rng, pool) for k in K]
            fallbacks += sum(f.fallback_used for f in frames)
            parts["successes"].append(np.array([f.successes for f in frames], dtype=np.int64))
            parts["group1"].append(np.array([f.group1_successes for f in frames], dtype=np.int64))
            parts["group2"].append(np.array([f.group2_successes for f in frames], dtype=np.int64))
        parts["active"].append(K)

    successes, group1, group2, active = (np.concatenate(parts[k]) for k in
                                         ("successes", "group1", "group2", "active"))
    stderr = float(successes.std(ddof=1) / np.sqrt(trials)) if trials > 1 else 0.0
    total_active = int(active.sum())
    collision = 1.0 - successes.sum() / total_active if total_active else 0.0
    if fallbacks:
        logger.warning("%d of %d frames fell back to own-channel transmission", fallbacks, trials)
    return SingleShotSummary(
        scheme=scheme,
        trials=trials,
        mean=float(successes.mean()),
        stderr=stderr,
        group1_mean=float(group1.mean()),
        group2_mean=float(group2.mean()),
        mean_active=float(active.mean()),
        collision_fraction=float(collision),
        fallback_frames=fallbacks,
    )


def simulate_fast_retrial(scheme: Scheme, config: SystemConfig, lambda0: float, slots: int,
                          warmup: int, seed: int, delay_thresholds: Sequence[int] = (1, 2, 3),
                          stream: int = 0, backlog_cap: int = BACKLOG_CAP) -> SteadyStateStats:
    """
    Fast-retrial chain: every slot admits Poisson(lambda0) new packets and the
    whole backlog contends in one frame; undelivered packets stay for the next
    slot. Statistics cover the slots after `warmup`.

    A packet's attempt count grows by one in every frame it takes part in.
    A backlog above `backlog_cap` stops the chain and flags it as diverged.
    """
    if lambda0 < 0 or not np.isfinite(lambda0):
        raise DomainError(f"lambda0 must be finite and >= 0, got {lambda0}")
    if slots < 1:
        raise DomainError(f"slots must be >= 1, got {slots}")
    if not 0 <= warmup < slots:
        raise DomainError(f"warmup must lie in [0, slots), got {warmup}")

    rng = substream(seed, stream)
    pool = _mode_pool(config)
    backlog = Backlog()
    histogram: Counter = Counter()
    transmitted = delivered = backlog_sum = sojourn_sum = fallbacks = 0
    diverged = False
    measured = 0

    for t in range(slots):
        backlog.admit(int(rng.poisson(lambda0)), t)
        K = len(backlog)
        frame = run_frame(scheme, K, config, rng, pool)
        done, sojourn = backlog.settle(frame.per_user_success, t)
        fallbacks += frame.fallback_used

        if t >= warmup:
            measured += 1
            transmitted += K
            delivered += done.size
            backlog_sum += len(backlog)
            sojourn_sum += int(sojourn.sum())
            if done.size:
                values, counts = np.unique(done, return_counts=True)
                histogram.update(dict(zip(values.tolist(), counts.tolist())))

        if len(backlog) > backlog_cap:
            logger.warning("backlog %d exceeds %d at slot %d; chain diverged", len(backlog), backlog_cap, t)
            diverged = True
            break

    lam = transmitted / measured if measured else 0.0
    throughput = delivered / measured if measured else 0.0
    q = 1.0 - delivered / transmitted if transmitted else 0.0
    stats = SteadyStateStats(
        empirical_lambda=lam,
        empirical_q=q,
        throughput=throughput,
        delay_histogram=dict(sorted(histogram.items())),
        mean_backlog=backlog_sum / measured if measured else 0.0,
        mean_sojourn=sojourn_sum / delivered if delivered else float('nan'),
        slots=measured,
        transmitted=transmitted,
        delivered=delivered,
        diverged=diverged,
        fallback_frames=fallbacks,
    )
    stats = replace(stats, outage={D: stats.delay_outage(D) for D in delay_thresholds})
    logger.info("%s chain lambda0=%g: lambda=%.6g q=%.6g over %d slots", scheme.value, lambda0,
                lam, q, measured)
    return stats
