"""Sentence segmentation of reasoning traces with optional confidence markers."""

from __future__ import annotations

import re
from dataclasses import dataclass

DEFAULT_CONFIDENCE = 1.0

MARKER = re.compile(r"\(\s*confidence\s*:\s*([+-]?(?:\d+(?:\.\d*)?|\.\d+))\s*\)", re.IGNORECASE)
_ENUM = re.compile(r"[ \t]*(?:\d+\.|Step\s+\d+:|Observation\s+\d+:)", re.IGNORECASE)
_BOUNDARY = re.compile(r"[.!?][\"')\]]*\s+|\n")
_LEADING_MARKER = re.compile(r"\s*" + MARKER.pattern + r"\s*", re.IGNORECASE)


class EmptyTrace(ValueError):
    pass


@dataclass(frozen=True)
class Sentence:
    text: str
    confidence: float = DEFAULT_CONFIDENCE

    def __post_init__(self) -> None:
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError("confidence must lie in [0, 1]")


@dataclass(frozen=True)
class ReasoningTrace:
    think_text: str
    sentences: tuple[Sentence, ...]
    answer_text: str = ""

    @classmethod
    def from_text(cls, think_text: str, answer_text: str = "") -> "ReasoningTrace":
        return cls(think_text, tuple(segment_trace(think_text)), answer_text)


def _clamp(x: float) -> float:
    return min(1.0, max(0.0, x))


def _is_enumerator_dot(text: str, end: int) -> bool:
    """True when the period ending at ``end`` closes a line-leading "12." marker."""
    line_start = text.rfind("\n", 0, end) + 1
    return re.fullmatch(r"[ \t]*\d+\.", text[line_start:end]) is not None


def _cut_points(text: str) -> list[int]:
    cuts = []
    for m in _BOUNDARY.finditer(text):
        if m.group() == "\n":
            if _ENUM.match(text, m.end()):
                cuts.append(m.end())
            continue
        if _is_enumerator_dot(text, m.start() + 1):
            continue
        end = m.end()
        lead = _LEADING_MARKER.match(text, end)
        if lead:
            end = lead.end()
        cuts.append(end)
    return sorted(set(cuts))


def segment_trace(think_text: str) -> list[Sentence]:
    """Split a trace into sentences.

    Boundaries are sentence-final punctuation followed by whitespace, and line
    breaks that precede an enumerator ("1.", "Step 2:", "Observation 3:").
    A "(confidence: x.xx)" marker inside or right after a sentence is removed
    from its text and becomes its confidence (clamped to [0, 1]); unmarked
    sentences get confidence 1.0.
    """
    if not think_text.strip():
        return []
    out = []
    prev = 0
    for cut in [*_cut_points(think_text), len(think_text)]:
        chunk = think_text[prev:cut]
        prev = cut
        marks = list(MARKER.finditer(chunk))
        conf = _clamp(float(marks[-1].group(1))) if marks else DEFAULT_CONFIDENCE
        body = " ".join(MARKER.sub(" ", chunk).split())
        if body:
            out.append(Sentence(body, conf))
        elif marks and out:
            # a stray marker on its own scores the preceding sentence
            out[-1] = Sentence(out[-1].text, conf)
    return out


def locate_weak_sentence(trace: ReasoningTrace) -> int:
    """Index of the lowest-confidence sentence; the earliest one wins ties."""
    if not trace.sentences:
        raise EmptyTrace("trace has no sentences")
    confs = [s.confidence for s in trace.sentences]
    return confs.index(min(confs))
