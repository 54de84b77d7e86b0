"""Chat-completions client with assistant prefill and an instructional fallback."""

from __future__ import annotations

import logging
import os
import time
from dataclasses import dataclass, replace
from enum import Enum
from typing import Callable, Sequence

import httpx

log = logging.getLogger(__name__)

CONTINUE_INSTRUCTION = "Please continue the thinking process above, then give your final answer."


class ClientError(RuntimeError):
    pass


class TransportFailure(ClientError):
    """The endpoint could not be reached, or kept failing transiently, within the retry budget."""


class DeadlineExceeded(ClientError):
    pass


class EndpointRefused(ClientError):
    """The endpoint answered with a non-retryable error or a malformed body."""


class Role(str, Enum):
    SYSTEM = "system"
    USER = "user"
    ASSISTANT = "assistant"


@dataclass(frozen=True)
class ChatMessage:
    role: Role
    content: str
    is_prefill: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "role", Role(self.role))
        if self.is_prefill and self.role is not Role.ASSISTANT:
            raise ValueError("only assistant messages can be prefill")

    def wire(self) -> dict:
        return {"role": self.role.value, "content": self.content}


@dataclass(frozen=True)
class EndpointProfile:
    base_url: str
    model_name: str
    supports_prefill: bool = True
    think_open: str = "<think>"
    think_close: str = "</think>"
    answer_open: str = "<answer>"
    answer_close: str = "</answer>"
    proxy_open: str = "<thinking>"
    proxy_close: str = "</thinking>"
    max_tokens: int = 2048
    temperature: float = 0.0
    timeout: float = 60.0
    retry_budget: int = 2
    backoff_base: float = 0.5

    def __post_init__(self) -> None:
        for open_, close in (
            (self.think_open, self.think_close),
            (self.answer_open, self.answer_close),
            (self.proxy_open, self.proxy_close),
        ):
            if not open_ or not close or open_ == close:
                raise ValueError("tags must be non-empty and open != close")
        if self.retry_budget < 0:
            raise ValueError("retry_budget must be >= 0")
        if self.max_tokens < 1 or self.timeout <= 0 or self.temperature < 0:
            raise ValueError("max_tokens, timeout and temperature out of range")

    @classmethod
    def from_env(cls, role: str, **overrides) -> "EndpointProfile":
        """Profile for ``role`` ("tslm" or "grlm") with its URL from the environment."""
        var = {"tslm": "TSINJECT_TSLM_URL", "grlm": "TSINJECT_GRLM_URL"}[role.lower()]
        url = os.environ.get(var)
        if not url:
            raise ValueError(f"{var} is not set")
        overrides.setdefault("model_name", role.lower())
        return cls(base_url=url, **overrides)

    def with_overrides(self, **changes) -> "EndpointProfile":
        return replace(self, **changes)


@dataclass(frozen=True)
class GenerationResult:
    raw_text: str
    think_text: str
    answer_text: str


def _first_pair(text: str, open_: str, close: str) -> str:
    start = text.find(open_)
    if start < 0:
        return ""
    start += len(open_)
    end = text.find(close, start)
    return "" if end < 0 else text[start:end]


def split_segments(raw: str, profile: EndpointProfile) -> GenerationResult:
    """Cut ``raw`` at the first think pair and the first answer pair."""
    return GenerationResult(
        raw_text=raw,
        think_text=_first_pair(raw, profile.think_open, profile.think_close),
        answer_text=_first_pair(raw, profile.answer_open, profile.answer_close),
    )


def validate_messages(messages: Sequence[ChatMessage]) -> None:
    if not messages:
        raise ValueError("messages must be non-empty")
    prefills = [i for i, m in enumerate(messages) if m.is_prefill]
    if len(prefills) > 1:
        raise ValueError("at most one prefill message")
    if prefills and prefills[0] != len(messages) - 1:
        raise ValueError("the prefill message must be last")


def request_body(profile: EndpointProfile, messages: Sequence[ChatMessage]) -> dict:
    return {
        "model": profile.model_name,
        "messages": [m.wire() for m in messages],
        "max_tokens": profile.max_tokens,
        "temperature": profile.temperature,
    }


def _retryable(status: int) -> bool:
    return status == 408 or status == 429 or status >= 500


class ModelClient:
    """Blocking client for one endpoint. Safe to share across threads."""

    def __init__(
        self,
        profile: EndpointProfile,
        transport: httpx.BaseTransport | None = None,
        api_key: str | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        self.profile = profile
        self._sleep = sleep
        key = api_key if api_key is not None else os.environ.get("TSINJECT_API_KEY", "")
        headers = {"Authorization": f"Bearer {key}"} if key else {}
        self._http = httpx.Client(transport=transport, headers=headers, timeout=profile.timeout)

    def close(self) -> None:
        self._http.close()

    def __enter__(self) -> "ModelClient":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def complete(self, messages: Sequence[ChatMessage]) -> GenerationResult:
        """Send one chat request and split the reply into think and answer segments.

        A trailing prefill message is sent as an ordinary assistant turn and
        its content is prepended to the returned text, so ``raw_text`` holds
        the whole trace. Connection errors, timeouts, 408/429 and 5xx replies
        are retried up to ``retry_budget`` times with exponential backoff;
        anything else fails immediately.
        """
        validate_messages(messages)
        profile = self.profile
        url = profile.base_url.rstrip("/") + "/chat/completions"
        body = request_body(profile, messages)
        last_exc: Exception | None = None
        timed_out = False
        for attempt in range(profile.retry_budget + 1):
            if attempt:
                self._sleep(profile.backoff_base * 2 ** (attempt - 1))
            try:
                resp = self._http.post(url, json=body)
            except httpx.TimeoutException as exc:
                last_exc, timed_out = exc, True
                log.warning("attempt %d to %s timed out", attempt + 1, url)
                continue
            except httpx.TransportError as exc:
                last_exc, timed_out = exc, False
                log.warning("attempt %d to %s failed: %s", attempt + 1, url, exc)
                continue
            if _retryable(resp.status_code):
                last_exc, timed_out = ClientError(f"HTTP {resp.status_code}"), False
                log.warning("attempt %d to %s got HTTP %d", attempt + 1, url, resp.status_code)
                continue
            if resp.status_code >= 400:
                raise EndpointRefused(f"HTTP {resp.status_code}: {resp.text[:200]}")
            text = _extract_content(resp)
            prefill = messages[-1].content if messages[-1].is_prefill else ""
            return split_segments(prefill + text, profile)
        attempts = profile.retry_budget + 1
        if timed_out:
            raise DeadlineExceeded(f"{url} timed out on all {attempts} attempts") from last_exc
        raise TransportFailure(f"{url} failed after {attempts} attempts: {last_exc}") from last_exc


def _extract_content(resp: httpx.Response) -> str:
    try:
        payload = resp.json()
        content = payload["choices"][0]["message"]["content"]
    except (ValueError, KeyError, IndexError, TypeError) as exc:
        raise EndpointRefused(f"malformed completion body: {exc!r}") from exc
    if not isinstance(content, str):
        raise EndpointRefused("completion content is not text")
    return content


def make_injected_request(
    profile: EndpointProfile,
    base_messages: Sequence[ChatMessage],
    injected_trace: str,
    instruction: str = CONTINUE_INSTRUCTION,
) -> list[ChatMessage]:
    """Return ``base_messages`` plus one message that seeds the reasoning trace.

    With prefill the new message is an open-ended assistant turn
    ``think_open + trace``. Without it, a user turn wraps the trace in the
    proxy thinking tags and asks the model to keep going from there.
    """
    if not injected_trace:
        raise ValueError("injected_trace must be non-empty")
    out = list(base_messages)
    if profile.supports_prefill:
        out.append(ChatMessage(Role.ASSISTANT, profile.think_open + injected_trace, is_prefill=True))
    else:
        wrapped = f"{profile.proxy_open}{injected_trace}{profile.proxy_close}\n{instruction}"
        out.append(ChatMessage(Role.USER, wrapped))
    return out
