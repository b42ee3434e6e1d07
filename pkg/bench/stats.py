"""
Summary statistics of probe samples.
"""
import statistics
from typing import Literal, Optional, Sequence

from pydantic import BaseModel, ConfigDict, Field, model_validator

from .errors import EmptyProbe

Metric = Literal["latency", "throughput", "srt"]
UNITS = {"latency": "ms", "srt": "ms", "throughput": "Mbps"}
PRECISION = 6


class ProbeStats(BaseModel):
    model_config = ConfigDict(frozen=True)

    interface: str
    metric: Metric
    count: int = Field(ge=1)
    min: float
    mean: float
    max: float
    mdev: float = Field(ge=0)
    unit: str
    slice: Optional[str] = None
    excluded: int = Field(default=0, ge=0)

    @model_validator(mode="after")
    def _ordered(self):
        if not self.min <= self.mean <= self.max:
            raise ValueError(f"expected min <= mean <= max, got {self.min}, {self.mean}, {self.max}")
        return self


def summarize(
    interface: str,
    metric: Metric,
    samples: Sequence[float],
    slice_name: Optional[str] = None,
    excluded: int = 0,
) -> ProbeStats:
    """ping-style summary; mdev is the population standard deviation."""
    if not samples:
        raise EmptyProbe(f"no {metric} samples on {interface}")
    mean = statistics.fmean(samples)
    low, high = min(samples), max(samples)
    # float summation can put the mean a hair outside [min, max] for constant samples
    mean = min(max(mean, low), high)
    return ProbeStats(
        interface=interface,
        metric=metric,
        count=len(samples),
        min=round(low, PRECISION),
        mean=round(mean, PRECISION),
        max=round(high, PRECISION),
        mdev=round(statistics.pstdev(samples), PRECISION),
        unit=UNITS[metric],
        slice=slice_name,
        excluded=excluded,
    )
