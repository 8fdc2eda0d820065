"""
Shared configuration and outcome types.

Channel and preamble indices are 1-based everywhere in the public types.
"""
import enum
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .base import BaseConfig
from .fields import Var


class EstimationMode(enum.Enum):
    """How the base station learns the per-channel preamble counts."""
    IDEAL = "ideal"
    PREAMBLE_POOL = "pool"
    PHY = "phy"


def is_prime(n: int) -> bool:
    if n < 2:
        return False
    if n % 2 == 0:
        return n == 2
    return all(n % d for d in range(3, math.isqrt(n) + 1, 2))


class SystemConfig(BaseConfig):
    M: int = Var(default=100, min_val=1, help="number of orthogonal channels")
    pool_size: int = Var(default=121, min_val=1, help="number of preambles in the common pool")
    t_p: int = Var(default=11, min_val=1, help="preamble length in symbols")
    t_d: int = Var(default=100, min_val=1, help="data packet length in symbols")
    t_f: int = Var(default=5, min_val=1, help="feedback length in symbols")
    estimation_mode: EstimationMode = Var(
        default=EstimationMode.IDEAL, choices=tuple(EstimationMode),
        help="ideal | pool (distinct-preamble count) | phy (matching pursuit)")
    target_snr: float = Var(default=100.0, validator=lambda v: v > 0,
                            message="target_snr > 0 violated", help="linear target SNR")
    noise_power: float = Var(default=1.0, min_val=0.0, help="noise power N0; 0 means noiseless")
    w_max: int = Var(default=1024, min_val=1, help="bound on the broadcast contention count")
    max_k: Optional[int] = Var(default=None, min_val=1,
                               help="matching pursuit iteration cap; unset lets the residual stop rule decide, up to t_p")
    stop_factor: float = Var(default=1.5, validator=lambda v: v > 0,
                             message="stop_factor > 0 violated",
                             help="residual energy stop threshold, in units of t_p * N0")

    def hook(self) -> List[str]:
        errors = []
        if self.t_p >= self.t_d:
            errors.append(f"t_p < t_d violated (t_p = {self.t_p}, t_d = {self.t_d})")
        if self.estimation_mode is EstimationMode.PHY:
            if self.t_p < 5 or not is_prime(self.t_p):
                errors.append(f"phy mode needs t_p prime >= 5 (t_p = {self.t_p})")
            elif self.pool_size > self.t_p ** 2:
                errors.append(f"phy mode needs pool_size <= t_p^2 = {self.t_p ** 2} "
                              f"(pool_size = {self.pool_size})")
        return errors


class TrafficConfig(BaseConfig):
    """Exactly one of a fixed user count, a new-arrival rate or a total-arrival rate."""
    fixed_k: Optional[int] = Var(default=None, min_val=0, help="fixed number of active users K")
    lambda0: Optional[float] = Var(default=None, min_val=0.0, help="new-arrival rate (packets/slot)")
    lam: Optional[float] = Var(default=None, min_val=0.0, key="lambda",
                               help="total-arrival rate (packets/slot)")

    def hook(self) -> List[str]:
        chosen = [k for k, v in (("fixed_k", self.fixed_k), ("lambda0", self.lambda0),
                                 ("lambda", self.lam)) if v is not None]
        errors = []
        if len(chosen) != 1:
            errors.append(f"exactly one of fixed_k, lambda0, lambda must be set (got {chosen or 'none'})")
        for name in ("lambda0", "lam"):
            value = getattr(self, name)
            if value is not None and not math.isfinite(value):
                errors.append(f"{name} must be finite")
        return errors

    @property
    def kind(self) -> str:
        if self.fixed_k is not None:
            return "K"
        if self.lambda0 is not None:
            return "lambda0"
        return "lambda"

    @property
    def value(self) -> float:
        return {"K": self.fixed_k, "lambda0": self.lambda0, "lambda": self.lam}[self.kind]


def validate(config: BaseConfig) -> List[str]:
    """All violated invariants of a configuration; empty means ok."""
    return config.check()


@dataclass(frozen=True, eq=False)
class ExplorationOutcome:
    """Per-user exploration choices and per-channel counts (read-only int arrays, 1-based indices)."""
    M: int
    user_channel: np.ndarray
    user_preamble: Optional[np.ndarray]
    true_counts: np.ndarray
    est_counts: np.ndarray

    def __post_init__(self):
        for name in ("user_channel", "user_preamble", "true_counts", "est_counts"):
            value = getattr(self, name)
            if value is not None:
                array = np.array(value, dtype=np.int64)
                array.flags.writeable = False
                object.__setattr__(self, name, array)

    @property
    def K(self) -> int:
        return len(self.user_channel)

    @classmethod
    def from_choices(cls, M: int, channels, preambles=None, est_counts=None) -> 'ExplorationOutcome':
        """Build an outcome from explicit 1-based choices; est_counts defaults to the true counts."""
        channels = np.asarray(channels, dtype=np.int64).reshape(-1)
        if channels.size and (channels.min() < 1 or channels.max() > M):
            raise ValueError(f"channel indices must lie in [1, {M}]")
        true = np.bincount(channels - 1, minlength=M)
        est = true if est_counts is None else est_counts
        return cls(M, channels, preambles, true, est)


@dataclass(frozen=True)
class Feedback:
    flags: Tuple[int, ...]
    contention_count: int
    w_max: int
    saturated: bool = field(default=False, compare=False)

    @property
    def M(self) -> int:
        return len(self.flags)

    @property
    def free_channels(self) -> int:
        return self.M - sum(self.flags)


@dataclass(frozen=True, eq=False)
class SlotResult:
    group1_count: int
    group2_transmitters: int
    free_channels: int
    group1_successes: int
    group2_successes: int
    collided_packets: int
    per_user_success: np.ndarray
    deferred: int = 0
    fallback_used: bool = False

    @property
    def successes(self) -> int:
        return self.group1_successes + self.group2_successes


@dataclass(frozen=True)
class SteadyStateStats:
    empirical_lambda: float
    empirical_q: float
    throughput: float
    delay_histogram: Dict[int, int]
    mean_backlog: float
    slots: int
    transmitted: int
    delivered: int
    outage: Dict[int, float] = field(default_factory=dict)
    diverged: bool = False
    fallback_frames: int = 0
    mean_sojourn: float = float('nan')

    def delay_outage(self, D: int) -> float:
        """Empirical Pr(attempts > D) over delivered packets."""
        if D <= 0:
            return 1.0
        total = sum(self.delay_histogram.values())
        if total == 0:
            return 0.0
        return sum(n for a, n in self.delay_histogram.items() if a > D) / total

    def mean_delay(self) -> float:
        total = sum(self.delay_histogram.values())
        if total == 0:
            return float('nan')
        return sum(a * n for a, n in self.delay_histogram.items()) / total
