"""
Sweep grids, the ordered worker pool and CSV output.
"""
import csv
import logging
import math
import multiprocessing
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Iterable, List, Sequence, TextIO, TypeVar

from .exceptions import UsageError
from .utils import format_number

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
VARIABLES = ("lambda", "lambda0", "K", "M", "alpha", "alpha0", "snr_db")
INTEGER_VARIABLES = ("K", "M")

T = TypeVar("T")
R = TypeVar("R")


@dataclass(frozen=True)
class SweepSpec:
    variable: str
    start: float
    stop: float
    step: float = 1.0
    overrides: Dict[str, Any] = field(default_factory=dict)
    trials: int = 10_000
    slots: int = 100_000
    warmup: int = 1_000
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.variable not in VARIABLES:
            raise UsageError(f"unknown sweep variable {self.variable!r}; choose from {', '.join(VARIABLES)}")
        if not (math.isfinite(self.start) and math.isfinite(self.stop)):
            raise UsageError("sweep bounds must be finite")
        if self.step <= 0:
            raise UsageError(f"step must be > 0, got {self.step}")
        if self.start > self.stop:
            raise UsageError(f"start must not exceed stop ({self.start} > {self.stop})")
        if self.trials < 1 or self.slots < 1 or self.warmup < 0:
            raise UsageError("trials and slots must be >= 1 and warmup >= 0")

    def grid(self) -> List[float]:
        """Points start, start + step, ... up to stop (inclusive within 1e-9 steps)."""
        n = int(math.floor((self.stop - self.start) / self.step + 1e-9)) + 1
        points = [round(self.start + i * self.step, 12) for i in range(n)]
        if self.variable in INTEGER_VARIABLES:
            if any(p != int(p) for p in points):
                raise UsageError(f"{self.variable} takes integer values; got grid {points[:3]}...")
            return [int(p) for p in points]
        return points


def run_points(fn: Callable[[T], R], points: Sequence[T], workers: int = 1) -> List[R]:
    """Map fn over points, in parallel when workers > 1; results keep grid order."""
    if workers <= 1 or len(points) <= 1:
        return [fn(p) for p in points]
    processes = min(workers, len(points))
    logger.info("dispatching %d sweep points to %d workers", len(points), processes)
    with multiprocessing.Pool(processes=processes) as pool:
        return list(pool.imap(fn, points))


def write_csv(out: TextIO, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> int:
    """Write the schema-tagged header and rows; returns the number of data rows."""
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["schema", *header])
    count = 0
    for row in rows:
        if len(row) != len(header):
            raise ValueError(f"row has {len(row)} cells, header {len(header)}")
        writer.writerow([SCHEMA_VERSION, *(format_number(v) for v in row)])
        count += 1
    return count
