"""User-prompt layout for multiple-choice diagnostic questions."""

from __future__ import annotations

import string
from typing import Sequence

from tsinject.timeseries import TimeSeries, encode_text

SERIES_HEADER = "Sensor recording (one array per channel):"


def option_labels(n: int) -> list[str]:
    if not 1 <= n <= 26:
        raise ValueError("between 1 and 26 options are supported")
    return list(string.ascii_uppercase[:n])


def format_options(options: Sequence[str]) -> str:
    return "\n".join(f"{label}. {text}" for label, text in zip(option_labels(len(options)), options))


def format_mcq_prompt(
    question: str,
    options: Sequence[str],
    ts: TimeSeries | None = None,
    answer_tags: tuple[str, str] = ("<answer>", "</answer>"),
    decimals: int = 2,
) -> str:
    """Question, lettered options and, when ``ts`` is given, the encoded series above them."""
    parts = []
    if ts is not None:
        parts.append(f"{SERIES_HEADER}\n{encode_text(ts, decimals)}")
    parts.append(f"{question}\n{format_options(options)}")
    parts.append(f"Give the letter of the best option as {answer_tags[0]}X{answer_tags[1]}.")
    return "\n\n".join(parts)


def specialist_prompt(ts: TimeSeries, query: str, decimals: int = 2) -> str:
    return f"{SERIES_HEADER}\n{encode_text(ts, decimals)}\n\n{query}"
