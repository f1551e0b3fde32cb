"""Competence pacing and threshold-based batch eligibility.

The pace value p(t) is the time-varying upper bound on the noise metric of
instances the model may train on: sqrt(t * (1 - p0^2) / T + p0^2) until step
T, then 1.0. A batch is sampled uniformly without replacement from the
eligible prefix of the metric-sorted training set.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass

import numpy as np

from .dataset_io import ScoredDataset
from .errors import DomainError


@dataclass(frozen=True)
class PacingSchedule:
    """Initial competence p0 in (0, 1] and curriculum duration T in steps."""

    p0: float = 0.01
    T: int = 1

    def __post_init__(self):
        if not 0.0 < self.p0 <= 1.0:
            raise DomainError(f"p0 must be in (0,1], got {self.p0}")
        if self.T < 1:
            raise DomainError(f"T must be a positive integer, got {self.T}")


def pace(t: int, schedule: PacingSchedule) -> float:
    """Noise-metric upper bound at step t; monotone, 1.0 exactly for t >= T."""
    if t < 0:
        raise DomainError(f"t must be nonnegative, got {t}")
    if t >= schedule.T:
        return 1.0
    p0sq = schedule.p0 * schedule.p0
    return math.sqrt(t * (1.0 - p0sq) / schedule.T + p0sq)


@dataclass(frozen=True)
class EligibleView:
    """Prefix of one metric-sorted permutation whose noise values pass a threshold."""

    metric: str
    threshold: float
    order: tuple[int, ...]  # full permutation, ascending by the metric
    prefix_len: int
    fallback_fired: bool = False


def eligible(
    dataset: ScoredDataset, metric: str, threshold: float, min_eligible: int = 1
) -> EligibleView:
    """Find the eligible prefix by binary search with inclusive comparison.

    An empty prefix falls back to the min_eligible smallest-d instances so
    training never stalls.
    """
    if not 0.0 <= threshold <= 1.0:
        raise DomainError(f"threshold must be in [0,1], got {threshold}")
    order = dataset.permutation(metric)
    prefix = bisect_right(dataset.sorted_values(metric), threshold)
    fallback = False
    if prefix == 0 and len(order) > 0:
        prefix = min(max(1, min_eligible), len(order))
        fallback = True
    return EligibleView(
        metric=metric,
        threshold=threshold,
        order=order,
        prefix_len=prefix,
        fallback_fired=fallback,
    )


def sample_batch(
    view: EligibleView, batch_size: int, rng: np.random.Generator
) -> list[int]:
    """Uniform without-replacement draw of dataset indices from the eligible prefix.

    A prefix smaller than batch_size yields a short batch of the whole prefix.
    """
    if batch_size < 1:
        raise DomainError(f"batch_size must be positive, got {batch_size}")
    if view.prefix_len < 1:
        raise DomainError("cannot sample from an empty eligible view")
    if view.prefix_len <= batch_size:
        positions = rng.permutation(view.prefix_len)
    else:
        positions = rng.choice(view.prefix_len, size=batch_size, replace=False)
    return [view.order[int(p)] for p in positions]
