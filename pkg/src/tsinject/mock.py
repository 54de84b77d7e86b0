"""Deterministic scripted stand-in for a chat-completions endpoint."""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence, Union

import httpx

Predicate = Union[str, Callable[[str], bool]]
Response = Union[str, Callable[[list[dict]], str]]


class NoScriptMatch(LookupError):
    pass


@dataclass(frozen=True)
class Rule:
    """``when`` is a substring or a predicate over the joined request text."""

    when: Predicate
    reply: Response
    name: str = ""

    def matches(self, text: str) -> bool:
        return self.when in text if isinstance(self.when, str) else bool(self.when(text))

    def render(self, messages: list[dict]) -> str:
        return self.reply if isinstance(self.reply, str) else self.reply(messages)


def joined_text(messages: Sequence[dict]) -> str:
    return "\n".join(m.get("content", "") for m in messages)


class ScriptedMock:
    """Ordered rules; the first rule whose predicate holds supplies the reply.

    Every request body is appended to :attr:`requests` under a lock, so the
    log stays consistent when the mock serves several threads.
    """

    def __init__(self, rules: Sequence[Rule | tuple]) -> None:
        self.rules = [r if isinstance(r, Rule) else Rule(*r) for r in rules]
        self._lock = threading.Lock()
        self.requests: list[dict] = []

    def respond(self, messages: Sequence[dict]) -> str:
        messages = [dict(m) for m in messages]
        text = joined_text(messages)
        with self._lock:
            self.requests.append({"messages": messages})
        for rule in self.rules:
            if rule.matches(text):
                return rule.render(messages)
        raise NoScriptMatch(f"no rule matches request ending {text[-120:]!r}")

    def handler(self, request: httpx.Request) -> httpx.Response:
        try:
            body = json.loads(request.content)
            messages = body["messages"]
        except (ValueError, KeyError) as exc:
            return httpx.Response(400, json={"error": f"bad request: {exc}"})
        reply = self.respond(messages)  # NoScriptMatch propagates to the caller
        return httpx.Response(200, json={"choices": [{"index": 0, "message": {"role": "assistant", "content": reply}}]})

    def transport(self) -> httpx.MockTransport:
        return httpx.MockTransport(self.handler)

    def reset(self) -> None:
        with self._lock:
            self.requests.clear()

    @classmethod
    def from_rules(cls, entries: Sequence[dict]) -> "ScriptedMock":
        """Build from ``[{"contains": "...", "reply": "..."}, ...]``; a rule without ``contains`` always matches."""
        rules = []
        for k, entry in enumerate(entries):
            if not isinstance(entry, dict) or "reply" not in entry:
                raise ValueError(f"rule {k} has no reply")
            rules.append(Rule(entry.get("contains", ""), entry["reply"], entry.get("name", f"rule{k}")))
        return cls(rules)

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedMock":
        return cls.from_rules(json.loads(Path(path).read_text(encoding="utf-8")))


def mock_respond(script: Sequence[Rule | tuple], messages: Sequence[dict]) -> str:
    return ScriptedMock(script).respond(messages)
