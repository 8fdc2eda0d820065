"""
Exploration feedback: one flag bit per channel plus the contention count W.

Wire layout: M flag bits (channel 1 first) followed by W as a big-endian
unsigned integer in ceil(log2 w_max) bits.
"""
import logging
from typing import Sequence

from .analytic import count_field_width
from .exceptions import DecodeError
from .model import ExplorationOutcome, Feedback

logger = logging.getLogger(__name__)


def count_capacity(w_max: int) -> int:
    """Largest contention count the feedback carries for a given bound."""
    return min(w_max, (1 << count_field_width(w_max)) - 1)


def feedback_from_counts(counts: Sequence[int], w_max: int) -> Feedback:
    flags = tuple(1 if k == 1 else 0 for k in counts)
    contention = sum(k for k, b in zip(counts, flags) if not b)
    cap = count_capacity(w_max)
    saturated = contention > cap
    if saturated:
        logger.debug("contention count %d clamped to %d", contention, cap)
    return Feedback(flags, min(contention, cap), w_max, saturated)


def make_feedback(outcome: ExplorationOutcome, w_max: int) -> Feedback:
    """Flags b_m = 1 iff exactly one preamble was detected on channel m; W counts the rest."""
    return feedback_from_counts(outcome.est_counts, w_max)


def encode_feedback(fb: Feedback) -> str:
    width = count_field_width(fb.w_max)
    flags = "".join("1" if b else "0" for b in fb.flags)
    if width == 0:
        return flags
    return flags + format(fb.contention_count, f"0{width}b")


def decode_feedback(bits: str, M: int, w_max: int) -> Feedback:
    width = count_field_width(w_max)
    expected = M + width
    if len(bits) != expected:
        raise DecodeError(f"expected {expected} feedback bits, got {len(bits)}")
    if set(bits) - {"0", "1"}:
        raise DecodeError(f"feedback must be a string of 0/1, got {bits!r}")
    flags = tuple(int(b) for b in bits[:M])
    contention = int(bits[M:], 2) if width else 0
    if contention > count_capacity(w_max):
        raise DecodeError(f"contention count {contention} exceeds w_max {w_max}")
    return Feedback(flags, contention, w_max)
