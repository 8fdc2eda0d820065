from .base import BaseConfig
from .fields import Var
from .exceptions import (EpalohaError, ConfigError, MissingVariableError, ValidationError, TypeCastingError,
                         FrozenInstanceError, DomainError, OracleSizeError, DecodeError, SimulationError,
                         UsageError)
from .model import (EstimationMode, SystemConfig, TrafficConfig, ExplorationOutcome, Feedback, SlotResult,
                    SteadyStateStats, validate)
from .mac import Scheme, run_exploration, run_dtp, run_frame, batch_frames
from .feedback import make_feedback, encode_feedback, decode_feedback
from .simulate import simulate_single_shot, simulate_fast_retrial
from .phy import build_alltop_pool, synthesize_channel, estimate_support, estimate_counts, collision_stats
from . import analytic

__all__ = [
    "BaseConfig",
    "Var",
    "EpalohaError",
    "ConfigError",
    "MissingVariableError",
    "ValidationError",
    "TypeCastingError",
    "FrozenInstanceError",
    "DomainError",
    "OracleSizeError",
    "DecodeError",
    "SimulationError",
    "UsageError",
    "EstimationMode",
    "SystemConfig",
    "TrafficConfig",
    "ExplorationOutcome",
    "Feedback",
    "SlotResult",
    "SteadyStateStats",
    "validate",
    "Scheme",
    "run_exploration",
    "run_dtp",
    "run_frame",
    "batch_frames",
    "make_feedback",
    "encode_feedback",
    "decode_feedback",
    "simulate_single_shot",
    "simulate_fast_retrial",
    "build_alltop_pool",
    "synthesize_channel",
    "estimate_support",
    "estimate_counts",
    "collision_stats",
    "analytic",
]
