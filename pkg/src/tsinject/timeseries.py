"""Multivariate sensor records and their text encoding for model prompts."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from enum import Enum
from typing import Iterable, Sequence

import numpy as np


class MalformedEncoding(ValueError):
    pass


class InvalidTarget(ValueError):
    pass


class ChannelKind(str, Enum):
    ACCELERATION = "acceleration"
    VELOCITY = "velocity"
    TEMPERATURE = "temperature"
    GENERIC = "generic"


@dataclass(frozen=True)
class ChannelMeta:
    name: str
    kind: ChannelKind = ChannelKind.GENERIC

    def __post_init__(self) -> None:
        if not self.name:
            raise ValueError("channel name must be non-empty")
        object.__setattr__(self, "kind", ChannelKind(self.kind))


@dataclass(frozen=True, eq=False)
class TimeSeries:
    """T samples of D channels. ``values`` is stored read-only with shape (T, D)."""

    channels: tuple[ChannelMeta, ...]
    values: np.ndarray
    sample_interval: float = 1.0

    def __post_init__(self) -> None:
        channels = tuple(self.channels)
        values = np.array(self.values, dtype=float)
        if values.ndim != 2:
            raise ValueError("values must be a T x D matrix")
        t, d = values.shape
        if t < 1 or d < 1:
            raise ValueError("need at least one sample and one channel")
        if d != len(channels):
            raise ValueError(f"{len(channels)} channel descriptors for {d} value columns")
        if not np.isfinite(values).all():
            raise ValueError("values must be finite")
        names = [c.name for c in channels]
        if len(set(names)) != len(names):
            raise ValueError("channel names must be unique")
        if not (self.sample_interval > 0 and math.isfinite(self.sample_interval)):
            raise ValueError("sample_interval must be positive")
        values.setflags(write=False)
        object.__setattr__(self, "channels", channels)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "sample_interval", float(self.sample_interval))

    @classmethod
    def from_columns(
        cls,
        columns: Sequence[Sequence[float]],
        names: Sequence[str | None] | None = None,
        kinds: Sequence[ChannelKind | str] | None = None,
        sample_interval: float = 1.0,
    ) -> "TimeSeries":
        """Build from per-channel sample lists; missing names become ``Series k``."""
        d = len(columns)
        names = list(names) if names is not None else [None] * d
        kinds = list(kinds) if kinds is not None else [ChannelKind.GENERIC] * d
        channels = tuple(
            ChannelMeta(name or f"Series {k + 1}", kind) for k, (name, kind) in enumerate(zip(names, kinds))
        )
        lengths = {len(c) for c in columns}
        if len(lengths) > 1:
            raise ValueError("all channels need the same number of samples")
        return cls(channels, np.array(columns, dtype=float).T.reshape(-1, d), sample_interval)

    @property
    def length(self) -> int:
        return self.values.shape[0]

    @property
    def n_channels(self) -> int:
        return self.values.shape[1]

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.channels]

    def channel(self, name: str) -> np.ndarray:
        return self.values[:, self.names.index(name)]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TimeSeries):
            return NotImplemented
        return (
            self.channels == other.channels
            and self.sample_interval == other.sample_interval
            and self.values.shape == other.values.shape
            and bool(np.array_equal(self.values, other.values))
        )

    __hash__ = None  # type: ignore[assignment]


def format_value(x: float, decimals: int) -> str:
    """Fixed-decimal text, half away from zero on the shortest decimal repr of ``x``."""
    quantum = Decimal(1).scaleb(-decimals)
    text = format(Decimal(repr(float(x))).quantize(quantum, rounding=ROUND_HALF_UP), "f")
    if text.startswith("-") and not text.strip("-0."):
        text = text[1:]
    return text


def encode_text(ts: TimeSeries, decimals: int = 2) -> str:
    """Render ``ts`` as ``{"name": [v, v, ...], ...}`` with fixed-decimal values.

    The output is byte-deterministic: no exponents, trailing zeros kept,
    negative zero printed without a sign.
    """
    if not 1 <= decimals <= 8:
        raise ValueError("decimals must be in [1, 8]")
    entries = []
    for k, meta in enumerate(ts.channels):
        body = ", ".join(format_value(v, decimals) for v in ts.values[:, k])
        entries.append(f"{json.dumps(meta.name)}: [{body}]")
    return "{" + ", ".join(entries) + "}"


def _reject_constant(token: str) -> float:
    raise MalformedEncoding(f"non-finite literal {token!r}")


class _Pairs(list):
    """Key/value pairs of one JSON object, kept distinct from a JSON array."""


def _pairs(pairs: Iterable[tuple[str, object]]) -> _Pairs:
    return _Pairs(pairs)


def parse_encoded(text: str, sample_interval: float = 1.0) -> TimeSeries:
    """Inverse of :func:`encode_text`. Channel kinds are not encoded and come back generic."""
    try:
        pairs = json.loads(text, object_pairs_hook=_pairs, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise MalformedEncoding(str(exc)) from exc
    if not isinstance(pairs, _Pairs) or not pairs:
        raise MalformedEncoding("expected a non-empty object of channel arrays")
    names = [name for name, _ in pairs]
    if len(set(names)) != len(names):
        raise MalformedEncoding("duplicate channel names")
    columns = []
    for name, arr in pairs:
        if not name:
            raise MalformedEncoding("empty channel name")
        if not isinstance(arr, list) or isinstance(arr, _Pairs) or not arr:
            raise MalformedEncoding(f"channel {name!r} is not a non-empty array")
        if any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in arr):
            raise MalformedEncoding(f"channel {name!r} holds non-numeric values")
        columns.append([float(v) for v in arr])
    if len({len(c) for c in columns}) != 1:
        raise MalformedEncoding("ragged channel lengths")
    try:
        return TimeSeries.from_columns(columns, names, sample_interval=sample_interval)
    except ValueError as exc:
        raise MalformedEncoding(str(exc)) from exc


def preprocess(ts: TimeSeries, target_len: int, normalize: bool = False) -> TimeSeries:
    """Downsample to ``target_len`` window means, optionally z-scoring each channel.

    Window ``i`` covers samples ``[floor(i*T/n), floor((i+1)*T/n))``. Channels
    with zero variance normalize to all zeros.
    """
    t = ts.length
    if target_len < 1 or target_len > t:
        raise InvalidTarget(f"target_len must be in [1, {t}], got {target_len}")
    edges = (np.arange(target_len + 1) * t) // target_len
    sums = np.add.reduceat(ts.values, edges[:-1], axis=0)
    out = sums / np.diff(edges)[:, None]
    if normalize:
        mean = out.mean(axis=0)
        std = out.std(axis=0)
        flat = std <= 1e-12 * np.maximum(1.0, np.abs(mean))
        safe = np.where(flat, 1.0, std)
        out = np.where(flat, 0.0, (out - mean) / safe)
    return TimeSeries(ts.channels, out, ts.sample_interval * t / target_len)
