"""Scripted anomaly localizers built from windowed statistics.

These are deliberately simple, family-aware baselines. They exist to show
that generated items are answerable from the series alone, not to compete
with learned models.
"""

from __future__ import annotations

import numpy as np

from tsinject.bench.generators import Family, GeneratorSpec
from tsinject.timeseries import TimeSeries

BASELINE_FRACTION = 0.2


def _step_split(x: np.ndarray, lo: int) -> int:
    """Index k >= lo minimizing the squared error of a two-level step fit at k."""
    n = x.size
    c1 = np.concatenate([[0.0], np.cumsum(x)])
    c2 = np.concatenate([[0.0], np.cumsum(x * x)])
    ks = np.arange(max(lo, 2), n - 1)
    left_n, right_n = ks, n - ks
    sse = (c2[ks] - c1[ks] ** 2 / left_n) + ((c2[n] - c2[ks]) - (c1[n] - c1[ks]) ** 2 / right_n)
    return int(ks[np.argmin(sse)])


def _hinge_split(x: np.ndarray, lo: int, harmonics: int = 4) -> int:
    """Index k >= lo minimizing the error of ``a + b * max(0, t - k)`` plus slow sinusoids.

    The first ``harmonics`` whole-record sine/cosine pairs are nuisance
    regressors, so slow periodic drift is not mistaken for the hinge.
    """
    n = x.size
    t = np.arange(n, dtype=float)
    cols = [np.ones(n)]
    for j in range(1, harmonics + 1):
        cols += [np.sin(2 * np.pi * j * t / n), np.cos(2 * np.pi * j * t / n)]
    q, _ = np.linalg.qr(np.stack(cols, axis=1))
    ks = np.arange(max(lo, 1), n - 2)
    hinge = np.maximum(0.0, t[:, None] - ks[None, :])
    hinge -= q @ (q.T @ hinge)
    rx = x - q @ (q.T @ x)
    explained = (rx @ hinge) ** 2 / np.maximum((hinge**2).sum(axis=0), 1e-300)
    return int(ks[np.argmax(explained)])


def _variance_split(x: np.ndarray, lo: int) -> int:
    """Index k >= lo maximizing the likelihood of a two-variance zero-mean Gaussian fit."""
    n = x.size
    c2 = np.concatenate([[0.0], np.cumsum(x * x)])
    ks = np.arange(max(lo, 2), n - 1)
    left = np.maximum(c2[ks] / ks, 1e-300)
    right = np.maximum((c2[n] - c2[ks]) / (n - ks), 1e-300)
    return int(ks[np.argmin(ks * np.log(left) + (n - ks) * np.log(right))])


def detect_anomaly(ts: TimeSeries, spec: GeneratorSpec) -> tuple[int, int] | None:
    """Estimate the anomaly window on the family's target channel.

    Returns ``None`` when nothing is found (always the case for the baseline
    family). The first fifth of the record is assumed anomaly-free and serves
    as the reference segment.
    """
    x = ts.values[:, spec.target_channel()]
    n = x.size
    ref = max(8, int(BASELINE_FRACTION * n))
    family = spec.family

    if family is Family.BASELINE_NORMAL:
        return None
    if family is Family.SPIKE_BURST:
        mu, sd = x[:ref].mean(), x[:ref].std()
        hits = np.flatnonzero(np.abs(x - mu) > 4.0 * sd)
        return (int(hits[0]), int(hits[-1]) + 1) if hits.size else None
    if family is Family.LEVEL_SHIFT:
        return _step_split(x, ref), n
    if family is Family.THERMAL_RUNAWAY:
        return _hinge_split(x, ref), n
    if family is Family.VIBRATION_RAMP:
        # second differences cancel slow oscillation and keep the noise
        return _variance_split(np.diff(x, n=2), ref) + 1, n
    if family is Family.PERIODICITY_SHIFT:
        slope = np.abs(np.diff(x, prepend=x[0]))
        return _step_split(slope, ref), n
    raise ValueError(f"unknown family {family}")


def localized(found: tuple[int, int] | None, window: tuple[int, int], tolerance: float = 0.1) -> bool:
    """Both edges of ``found`` lie within ``tolerance`` times the window length of the truth."""
    if found is None:
        return False
    slack = tolerance * (window[1] - window[0])
    return abs(found[0] - window[0]) <= slack and abs(found[1] - window[1]) <= slack
