"""Failure-rate arithmetic and the response-strength correlation.

A trial is negative when the transformed image changes the predicted
class. The failure-detection rate is negatives over total trials, and
is undefined (an error, not zero) when there are no trials.

The correlation analysis buckets trials by the heat-map value at their
rectangle's center pixel into equal-width bins spanning [0, 1] (the last
bin closed on the right), computes a per-bin rate, and reports the
Pearson correlation between bin midpoints and rates across the bins with
enough trials to be meaningful.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import FewerThanTwoBins, UndefinedForZeroTrials


def fdr(positives: int, negatives: int) -> float:
    """negatives / (positives + negatives); error on zero trials."""
    total = int(positives) + int(negatives)
    if total == 0:
        raise UndefinedForZeroTrials("failure-detection rate of zero trials")
    return negatives / total


def format_percent(value: float, sigfigs: int = 3) -> str:
    """Rate as a percentage with a fixed number of significant figures."""
    return f"{value * 100.0:.{sigfigs}g}%"


def bin_index(value: float, num_bins: int) -> int:
    """Equal-width bin over [0, 1]; 1.0 lands in the last bin."""
    idx = int(np.floor(float(value) * num_bins))
    return min(max(idx, 0), num_bins - 1)


@dataclass(frozen=True)
class BinStat:
    """One bin of the center-pixel response histogram."""
    index: int
    lo: float
    hi: float
    trials: int
    negatives: int

    @property
    def midpoint(self) -> float:
        return (self.lo + self.hi) / 2.0

    @property
    def rate(self) -> float | None:
        return None if self.trials == 0 else self.negatives / self.trials


def binned_rates(values, outcomes, num_bins: int) -> list[BinStat]:
    """Per-bin trial and negative counts; `outcomes` is True for negatives."""
    values = np.asarray(values, dtype=np.float64)
    outcomes = np.asarray(outcomes, dtype=bool)
    if values.shape != outcomes.shape:
        raise ValueError(f"{values.shape} values vs {outcomes.shape} outcomes")
    trials = np.zeros(num_bins, dtype=np.int64)
    negatives = np.zeros(num_bins, dtype=np.int64)
    if values.size:
        idx = np.clip(np.floor(values * num_bins).astype(np.int64), 0, num_bins - 1)
        np.add.at(trials, idx, 1)
        np.add.at(negatives, idx, outcomes.astype(np.int64))
    width = 1.0 / num_bins
    return [
        BinStat(i, i * width, (i + 1) * width, int(trials[i]), int(negatives[i]))
        for i in range(num_bins)
    ]


def pearson(x, y) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    dx = x - x.mean()
    dy = y - y.mean()
    denom = np.sqrt((dx * dx).sum() * (dy * dy).sum())
    if denom == 0.0:
        return float("nan")
    return float((dx * dy).sum() / denom)


@dataclass(frozen=True)
class CorrelationResult:
    r: float
    used_bins: tuple[BinStat, ...]
    all_bins: tuple[BinStat, ...]
    min_trials: int


def correlation(values, outcomes, *, num_bins: int = 20, min_trials: int = 30) -> CorrelationResult:
    """Pearson r between bin midpoints and per-bin failure rates."""
    bins = binned_rates(values, outcomes, num_bins)
    used = tuple(b for b in bins if b.trials >= min_trials)
    if len(used) < 2:
        raise FewerThanTwoBins(
            f"{len(used)} bins have >= {min_trials} trials; correlation needs at least 2"
        )
    r = pearson([b.midpoint for b in used], [b.rate for b in used])
    return CorrelationResult(r=r, used_bins=used, all_bins=tuple(bins), min_trials=min_trials)
