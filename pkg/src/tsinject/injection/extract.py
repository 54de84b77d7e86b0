"""Map a free-text model reply onto one of the offered options."""

from __future__ import annotations

import re
from typing import Sequence

from tsinject.injection.prompts import option_labels


class Unparseable(ValueError):
    pass


_ANSWER_LINE = re.compile(r"answer\s*(?:is)?\s*:\s*\(?\s*([A-Za-z])\s*\)?(?![A-Za-z])", re.IGNORECASE)


def _norm(text: str) -> str:
    return " ".join(text.casefold().split()).strip(" .")


def _label_of(body: str, labels: list[str], options: Sequence[str]) -> int | None:
    """Resolve the inside of an answer block: an option text, a bare label, "B. text" or "(b)"."""
    body = body.strip()
    hits = [i for i, opt in enumerate(options) if _norm(opt) == _norm(body)]
    if len(hits) == 1:
        return hits[0]
    m = re.fullmatch(r"\(?\s*([A-Za-z])\s*[).:]?(?:\s+.*)?", body, flags=re.DOTALL)
    if m and m.group(1).upper() in labels:
        return labels.index(m.group(1).upper())
    return None


# words after a sentence-initial "A" that mark it as a label rather than the article
_LABEL_FOLLOWERS = {"or", "and", "nor", "is", "was", "seems", "looks", "fits", "matches", "because", "since"}


def _is_article(text: str, start: int, end: int) -> bool:
    """Sentence-initial "A" followed by an ordinary lowercase word."""
    before = text[:start].rstrip()
    if before and before[-1] not in ".!?:;>\n":
        return False
    nxt = re.match(r"\s+([a-z]+)", text[end:])
    return bool(nxt) and nxt.group(1) not in _LABEL_FOLLOWERS


def _standalone_letters(text: str, labels: list[str]) -> set[str]:
    found = set()
    for m in re.finditer(r"(?<![A-Za-z0-9'])([A-Z])(?![A-Za-z0-9'])", text):
        letter = m.group(1)
        if letter not in labels:
            continue
        if letter == "A" and _is_article(text, m.start(), m.end()):
            continue
        found.add(letter)
    return found


def extract_answer(text: str, options: Sequence[str], tags: tuple[str, str] = ("<answer>", "</answer>")) -> int:
    """Return the chosen option index.

    Rules, first that yields an answer wins:

    1. the first ``<answer>...</answer>`` block, read as an option text or a label;
    2. the last "Answer: X" line;
    3. exactly one distinct standalone uppercase option letter in the text;
    4. exactly one option whose full text occurs in the reply (case-insensitive).

    Raises :class:`Unparseable` when no rule fires or a rule finds several
    distinct candidates.
    """
    if not options:
        raise ValueError("options must be non-empty")
    labels = option_labels(len(options))

    start = text.find(tags[0])
    if start >= 0:
        end = text.find(tags[1], start + len(tags[0]))
        if end >= 0:
            idx = _label_of(text[start + len(tags[0]) : end], labels, options)
            if idx is not None:
                return idx

    lines = [m.group(1).upper() for m in _ANSWER_LINE.finditer(text)]
    lines = [x for x in lines if x in labels]
    if lines:
        return labels.index(lines[-1])

    letters = _standalone_letters(text, labels)
    if len(letters) > 1:
        raise Unparseable(f"several option letters mentioned: {sorted(letters)}")
    if letters:
        return labels.index(letters.pop())

    folded = _norm(text)
    hits = [i for i, opt in enumerate(options) if _norm(opt) and _norm(opt) in folded]
    if len(hits) == 1:
        return hits[0]
    if hits:
        raise Unparseable("reply quotes several options")
    raise Unparseable("no answer found")
