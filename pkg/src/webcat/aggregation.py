"""Page-level decision rules over per-image probabilities."""

from __future__ import annotations

import math
from dataclasses import dataclass
from types import MappingProxyType
from typing import Mapping, Sequence


class UnclassifiableError(ValueError):
    """The page yielded no scorable images; this is not a negative verdict."""


@dataclass(frozen=True)
class MeanDecision:
    mean: float
    std: float
    positive: bool


@dataclass(frozen=True)
class TopNDecision:
    count_above: int
    positive: bool


@dataclass(frozen=True)
class PageResult:
    page_url: str
    image_probs: tuple[float, ...]
    method1: MeanDecision
    method2: Mapping[int, TopNDecision]
    threshold_used: float


def _check(image_probs: Sequence[float], threshold: float) -> None:
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold {threshold} outside [0, 1]")
    if len(image_probs) == 0:
        raise UnclassifiableError("no image probabilities to aggregate")
    if any(not (0.0 <= p <= 1.0) or math.isnan(p) for p in image_probs):
        raise ValueError("image probabilities must lie in [0, 1]")


def method1_mean(image_probs: Sequence[float], threshold: float) -> MeanDecision:
    """Positive iff the mean probability reaches the threshold (inclusive)."""
    _check(image_probs, threshold)
    n = len(image_probs)
    mean = sum(image_probs) / n
    if n > 1:
        var = sum((p - mean) ** 2 for p in image_probs) / (n - 1)
        std = math.sqrt(var)
    else:
        std = 0.0
    return MeanDecision(mean=mean, std=std, positive=mean >= threshold)


def method2_topn(image_probs: Sequence[float], threshold: float, n: int) -> TopNDecision:
    """Positive iff at least ``n`` images reach the threshold (inclusive)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    _check(image_probs, threshold)
    count = sum(1 for p in image_probs if p >= threshold)
    return TopNDecision(count_above=count, positive=count >= n)


def aggregate_page(
    page_url: str,
    image_probs: Sequence[float],
    threshold: float,
    max_n: int,
) -> PageResult:
    """Apply both rules; method 2 is evaluated for every n in 1..max_n."""
    probs = tuple(float(p) for p in image_probs)
    method1 = method1_mean(probs, threshold)
    max_n = max(max_n, len(probs))
    method2 = {n: method2_topn(probs, threshold, n) for n in range(1, max_n + 1)}
    return PageResult(
        page_url=page_url,
        image_probs=probs,
        method1=method1,
        method2=MappingProxyType(method2),
        threshold_used=threshold,
    )
