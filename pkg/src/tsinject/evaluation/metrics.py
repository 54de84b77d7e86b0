"""Accuracy aggregation and the relative-gain arithmetic used in result tables."""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from typing import Sequence


class ZeroBaseline(ValueError):
    pass


class NonPositiveGain(ValueError):
    pass


def _round_half_up(x: float, places: int) -> float:
    # repr() gives the shortest round-tripping decimal, so 22.45 stays 22.45
    return float(Decimal(repr(x)).quantize(Decimal(1).scaleb(-places), rounding=ROUND_HALF_UP))


def relative_improvement(candidate_acc: float, baseline_acc: float) -> float:
    """Percent change of ``candidate_acc`` over ``baseline_acc``, one decimal, half-up."""
    if not baseline_acc > 0:
        raise ZeroBaseline(f"baseline accuracy must be positive, got {baseline_acc}")
    return _round_half_up(100.0 * (candidate_acc - baseline_acc) / baseline_acc, 1)


def gain_ratio(rl_gain_pct: float, sft_gain_pct: float) -> float:
    """Ratio of two one-decimal gains, to two decimals.

    Inputs are rounded to one decimal first, so passing full-precision gains
    gives the same answer as passing the printed ones.
    """
    rl, sft = _round_half_up(rl_gain_pct, 1), _round_half_up(sft_gain_pct, 1)
    if rl <= 0 or sft <= 0:
        raise NonPositiveGain(f"both gains must be positive, got {rl_gain_pct} and {sft_gain_pct}")
    return _round_half_up(rl / sft, 2)


def overall_mean(stage_accuracies: Sequence[float]) -> float:
    """Unweighted mean over stages, regardless of how many items each stage has."""
    if not stage_accuracies:
        raise ValueError("no stage accuracies")
    return math.fsum(stage_accuracies) / len(stage_accuracies)


def mean_std(values: Sequence[float]) -> tuple[float, float]:
    """Mean and sample (n-1) standard deviation; a single run has std 0."""
    if not values:
        raise ValueError("no values")
    mean = math.fsum(values) / len(values)
    std = statistics.stdev(values) if len(values) > 1 else 0.0
    return mean, std


@dataclass(frozen=True)
class ImprovementReport:
    label: str
    vs_tslm_pct: float | None = None
    vs_grlm_pct: float | None = None
    gain_ratio_rl_over_sft: float | None = None
