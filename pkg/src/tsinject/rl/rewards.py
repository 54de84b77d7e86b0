"""Verifiable rewards: structural format check plus exact answer match."""

from __future__ import annotations

import re
from dataclasses import dataclass

DEFAULT_TAGS = ("<think>", "</think>", "<answer>", "</answer>")


@dataclass(frozen=True)
class RewardBreakdown:
    fmt: int
    hard: int

    @property
    def total(self) -> int:
        return self.fmt + self.hard


def reward_format(text: str, tags: tuple[str, str, str, str] = DEFAULT_TAGS) -> int:
    """Return 1 iff ``text`` is exactly ``<think>r</think> <answer>y</answer>``.

    Each tag must occur exactly once, think before answer, and only whitespace
    may appear before, between and after the two blocks. Bodies may be empty
    but may not contain any of the tags.
    """
    think_open, think_close, answer_open, answer_close = tags
    if any(text.count(tag) != 1 for tag in tags):
        return 0
    pattern = (
        r"\s*" + re.escape(think_open) + r"(.*?)" + re.escape(think_close)
        + r"\s*" + re.escape(answer_open) + r"(.*?)" + re.escape(answer_close) + r"\s*"
    )
    return int(re.fullmatch(pattern, text, flags=re.DOTALL) is not None)


def reward_hard(predicted_answer: str | None, gold: str) -> int:
    """1 iff the predicted option label equals ``gold`` after trimming and casefolding."""
    if not gold.strip():
        raise ValueError("gold label must be non-empty")
    if predicted_answer is None:
        return 0
    return int(predicted_answer.strip().casefold() == gold.strip().casefold())


def answer_body(text: str, tags: tuple[str, str, str, str] = DEFAULT_TAGS) -> str | None:
    """Content of the first answer-tag pair after the first think close.

    The response ``y`` follows the trace ``r``, so an answer block emitted
    before the trace is closed does not count. None when there is no such pair.
    """
    _, think_close, answer_open, answer_close = tags
    after = text.find(think_close)
    if after < 0:
        return None
    start = text.find(answer_open, after + len(think_close))
    if start < 0:
        return None
    start += len(answer_open)
    end = text.find(answer_close, start)
    if end < 0:
        return None
    return text[start:end]


def composite_reward(text: str, gold: str, tags: tuple[str, str, str, str] = DEFAULT_TAGS) -> RewardBreakdown:
    return RewardBreakdown(fmt=reward_format(text, tags), hard=reward_hard(answer_body(text, tags), gold))
