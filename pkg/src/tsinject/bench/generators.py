"""Seeded sensor simulators, one per anomaly family.

Every series has an acceleration, a velocity and a temperature channel by
default. Each channel is a base level plus a periodic component that completes
a whole number of cycles over the record, plus Gaussian noise. The anomaly of
the family is applied to its target channel; the annotation window is the
half-open index range ``[start, end)`` that brackets the injected behaviour.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping

import numpy as np

from tsinject.timeseries import ChannelKind, ChannelMeta, TimeSeries


class Family(str, Enum):
    BASELINE_NORMAL = "baseline_normal"
    VIBRATION_RAMP = "vibration_ramp"
    SPIKE_BURST = "spike_burst"
    PERIODICITY_SHIFT = "periodicity_shift"
    THERMAL_RUNAWAY = "thermal_runaway"
    LEVEL_SHIFT = "level_shift"


class Stage(str, Enum):
    WHAT = "WhatHappened"
    HOW = "HowHappened"
    FIX = "SuggestedFix"


FAMILIES: tuple[Family, ...] = tuple(Family)
STAGES: tuple[Stage, ...] = tuple(Stage)

DEFAULT_KINDS = (ChannelKind.ACCELERATION, ChannelKind.VELOCITY, ChannelKind.TEMPERATURE)

# base level, periodic amplitude and cycle-count multiplier per channel kind
_CHANNEL_SHAPE = {
    ChannelKind.ACCELERATION: (0.0, 1.0, 1.0),
    ChannelKind.VELOCITY: (10.0, 2.0, 1.0),
    ChannelKind.TEMPERATURE: (40.0, 0.5, 0.25),
    ChannelKind.GENERIC: (0.0, 1.0, 1.0),
}

_TARGET_KIND = {
    Family.VIBRATION_RAMP: ChannelKind.ACCELERATION,
    Family.SPIKE_BURST: ChannelKind.ACCELERATION,
    Family.PERIODICITY_SHIFT: ChannelKind.VELOCITY,
    Family.THERMAL_RUNAWAY: ChannelKind.TEMPERATURE,
    Family.LEVEL_SHIFT: ChannelKind.VELOCITY,
}

DEFAULT_PARAM_RANGES: dict[str, tuple[float, float]] = {
    "noise": (0.05, 0.15),
    "onset": (0.3, 0.6),
    "severity": (2.0, 4.0),
    "base_frequency": (4.0, 12.0),
}

# (what happened, how it happened, suggested fix)
ANSWER_BANK: dict[Family, dict[Stage, str]] = {
    Family.BASELINE_NORMAL: {
        Stage.WHAT: "No anomaly: all channels stay within their normal operating band.",
        Stage.HOW: "No fault mechanism is present; the variation is ordinary process noise.",
        Stage.FIX: "No corrective action is needed; continue routine monitoring.",
    },
    Family.VIBRATION_RAMP: {
        Stage.WHAT: "Vibration amplitude on the acceleration channel grows steadily after a point.",
        Stage.HOW: "Progressive bearing wear is loosening the rotating assembly.",
        Stage.FIX: "Inspect and replace the worn bearing, then re-balance the shaft.",
    },
    Family.SPIKE_BURST: {
        Stage.WHAT: "A short burst of sharp spikes appears on the acceleration channel.",
        Stage.HOW: "Intermittent mechanical impacts from a loose or chipped component.",
        Stage.FIX: "Tighten fasteners and check the drive train for chipped or loose parts.",
    },
    Family.PERIODICITY_SHIFT: {
        Stage.WHAT: "The dominant oscillation period of the velocity channel changes abruptly.",
        Stage.HOW: "A slipping belt or failing coupling alters the effective drive ratio.",
        Stage.FIX: "Re-tension or replace the drive belt and verify the coupling alignment.",
    },
    Family.THERMAL_RUNAWAY: {
        Stage.WHAT: "The temperature channel drifts upward without levelling off.",
        Stage.HOW: "Heat generation exceeds dissipation, for example from a blocked cooling path.",
        Stage.FIX: "Shut down the unit, clear the cooling path and check the thermal controller.",
    },
    Family.LEVEL_SHIFT: {
        Stage.WHAT: "The velocity channel jumps to a new steady level and stays there.",
        Stage.HOW: "A setpoint change or sensor offset shifted the operating point.",
        Stage.FIX: "Verify the controller setpoint and recalibrate the velocity sensor.",
    },
}


@dataclass(frozen=True)
class GeneratorSpec:
    family: Family
    length: int = 512
    channel_kinds: tuple[ChannelKind, ...] = DEFAULT_KINDS
    param_ranges: Mapping[str, tuple[float, float]] = field(default_factory=lambda: dict(DEFAULT_PARAM_RANGES))

    def __post_init__(self) -> None:
        object.__setattr__(self, "family", Family(self.family))
        object.__setattr__(self, "channel_kinds", tuple(ChannelKind(k) for k in self.channel_kinds))
        ranges = {**DEFAULT_PARAM_RANGES, **dict(self.param_ranges)}
        object.__setattr__(self, "param_ranges", ranges)
        if self.length < 32:
            raise ValueError("series length must be at least 32")
        if not self.channel_kinds:
            raise ValueError("need at least one channel")
        for name, (lo, hi) in ranges.items():
            if not (math.isfinite(lo) and math.isfinite(hi) and lo <= hi):
                raise ValueError(f"parameter range {name!r} is empty")
        lo, hi = ranges["onset"]
        if not 0.0 < lo <= hi < 1.0:
            raise ValueError("onset range must lie inside (0, 1)")
        if ranges["noise"][0] <= 0 or ranges["severity"][0] <= 1 or ranges["base_frequency"][0] < 1:
            raise ValueError("noise > 0, severity > 1 and base_frequency >= 1 are required")

    def target_channel(self) -> int:
        """Index of the channel carrying the anomaly (channel 0 when the kind is absent)."""
        kind = _TARGET_KIND.get(self.family)
        return self.channel_kinds.index(kind) if kind in self.channel_kinds else 0


@dataclass(frozen=True)
class DiagnosticAnnotation:
    family: Family
    anomaly_window: tuple[int, int]
    what_text: str
    how_text: str
    fix_text: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "family", Family(self.family))
        start, end = (int(x) for x in self.anomaly_window)
        object.__setattr__(self, "anomaly_window", (start, end))
        if not 0 <= start <= end:
            raise ValueError(f"bad anomaly window {self.anomaly_window}")
        if not (self.what_text and self.how_text and self.fix_text):
            raise ValueError("annotation texts must be non-empty")
        if (self.family is Family.BASELINE_NORMAL) != (start == end):
            raise ValueError("only baseline_normal series have an empty window")

    @classmethod
    def canonical(cls, family: Family, window: tuple[int, int]) -> "DiagnosticAnnotation":
        texts = ANSWER_BANK[Family(family)]
        return cls(family, window, texts[Stage.WHAT], texts[Stage.HOW], texts[Stage.FIX])

    def text_for(self, stage: Stage) -> str:
        return {Stage.WHAT: self.what_text, Stage.HOW: self.how_text, Stage.FIX: self.fix_text}[Stage(stage)]


def _draw(rng: np.random.Generator, ranges: Mapping[str, tuple[float, float]], name: str) -> float:
    lo, hi = ranges[name]
    return float(rng.uniform(lo, hi)) if hi > lo else float(lo)


def generate_series(spec: GeneratorSpec, seed: int) -> tuple[TimeSeries, DiagnosticAnnotation]:
    """Simulate one record. The result is a pure function of ``(spec, seed)``."""
    rng = np.random.default_rng(seed)
    t_len = spec.length
    t = np.arange(t_len)
    ranges = spec.param_ranges
    noise = _draw(rng, ranges, "noise")
    onset_frac = _draw(rng, ranges, "onset")
    severity = _draw(rng, ranges, "severity")
    cycles = max(1, int(round(_draw(rng, ranges, "base_frequency"))))

    columns = []
    phases = []
    for kind in spec.channel_kinds:
        level, amp, mult = _CHANNEL_SHAPE[kind]
        k_cycles = max(1, int(round(cycles * mult)))
        phase = float(rng.uniform(0, 2 * np.pi))
        phases.append((level, amp, k_cycles, phase))
        columns.append(level + amp * np.sin(2 * np.pi * k_cycles * t / t_len + phase) + noise * rng.standard_normal(t_len))
    values = np.stack(columns, axis=1)

    onset = min(t_len - 2, max(1, int(round(onset_frac * t_len))))
    target = spec.target_channel()
    family = spec.family
    level, amp, k_cycles, phase = phases[target]
    after = t >= onset
    span = t_len - onset
    u = (t - onset) / span

    if family is Family.BASELINE_NORMAL:
        window = (0, 0)
    elif family is Family.VIBRATION_RAMP:
        # noise envelope grows monotonically from 1x towards (1 + 3*severity)x
        gain = 1.0 + 3.0 * severity * np.clip(u, 0.0, None) ** 0.25
        extra = noise * np.sqrt(gain**2 - 1.0) * rng.standard_normal(t_len)
        values[:, target] += np.where(after, extra, 0.0)
        window = (onset, t_len)
    elif family is Family.SPIKE_BURST:
        width = max(3, min(span, int(round(t_len * float(rng.uniform(0.05, 0.12))))))
        n_spikes = int(rng.integers(3, 8))
        inner = rng.choice(np.arange(onset + 1, onset + width - 1), size=min(n_spikes - 2, width - 2), replace=False)
        where = np.unique(np.concatenate([[onset, onset + width - 1], inner])).astype(int)
        pre = values[:onset, target]
        magnitude = (4.0 + 2.0 * severity) * float(pre.std())
        signs = rng.choice([-1.0, 1.0], size=where.size)
        values[where, target] = float(pre.mean()) + signs * magnitude * rng.uniform(1.0, 1.5, where.size)
        window = (int(where[0]), int(where[-1]) + 1)
    elif family is Family.PERIODICITY_SHIFT:
        base_phase = 2 * np.pi * k_cycles * t / t_len + phase
        shifted = 2 * np.pi * k_cycles * (onset + severity * (t - onset)) / t_len + phase
        clean = amp * np.sin(np.where(after, shifted, base_phase))
        values[:, target] += clean - amp * np.sin(base_phase)
        window = (onset, t_len)
    elif family is Family.THERMAL_RUNAWAY:
        rise = 10.0 * severity * noise + 1.5 * severity * amp
        values[:, target] += np.where(after, rise * u, 0.0)
        window = (onset, t_len)
    elif family is Family.LEVEL_SHIFT:
        step = severity * (3.0 * noise + amp) * float(rng.choice([-1.0, 1.0]))
        values[:, target] += np.where(after, step, 0.0)
        window = (onset, t_len)
    else:  # pragma: no cover
        raise ValueError(f"unknown family {family}")

    channels = tuple(ChannelMeta(_channel_name(kind, k, spec.channel_kinds), kind) for k, kind in enumerate(spec.channel_kinds))
    return TimeSeries(channels, values), DiagnosticAnnotation.canonical(family, window)


def _channel_name(kind: ChannelKind, index: int, kinds: tuple[ChannelKind, ...]) -> str:
    base = kind.value
    return base if kinds.count(kind) == 1 else f"{base}_{index + 1}"
