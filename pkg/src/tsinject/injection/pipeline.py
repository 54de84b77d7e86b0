"""Single-item orchestration: draft, elicit, inject, resume, extract."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Any

from tsinject.bench.mcq import McqItem
from tsinject.client import ChatMessage, ModelClient, Role, make_injected_request
from tsinject.injection.cues import DEFAULT_CUES, InstructionCue
from tsinject.injection.extract import extract_answer
from tsinject.injection.inject import (
    KnowledgeSource,
    QueryMode,
    elicit_knowledge,
    inject_early,
    inject_intermediate,
    inject_late,
    shape_query,
)
from tsinject.injection.prompts import format_mcq_prompt, format_options
from tsinject.injection.trace import ReasoningTrace, locate_weak_sentence
from tsinject.timeseries import TimeSeries


class Strategy(str, Enum):
    EARLY = "early"
    INTERMEDIATE = "intermediate"
    LATE = "late"


@dataclass(frozen=True)
class InjectionPlan:
    strategy: Strategy = Strategy.EARLY
    include_series_in_grlm: bool = True
    knowledge_source: KnowledgeSource = KnowledgeSource.SFT_HELP_QUERY
    decimals: int = 2

    def __post_init__(self) -> None:
        object.__setattr__(self, "strategy", Strategy(self.strategy))
        object.__setattr__(self, "knowledge_source", KnowledgeSource(self.knowledge_source))


class PipelineError(RuntimeError):
    """A failure inside :func:`run_pipeline`, tagged with the step that raised it.

    ``artifacts`` holds whatever was produced before the failure.
    """

    def __init__(self, stage: str, cause: BaseException, artifacts: dict[str, Any] | None = None) -> None:
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause
        self.artifacts = artifacts or {}


@dataclass
class PipelineResult:
    answer_index: int
    artifacts: dict[str, Any] = field(default_factory=dict)


class _Steps:
    """Runs callables under a stage name so errors come out tagged."""

    def __init__(self, artifacts: dict[str, Any]) -> None:
        self.artifacts = artifacts

    def __call__(self, stage: str, fn, *args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except PipelineError:
            raise
        except Exception as exc:
            self.artifacts["error"] = f"[{stage}] {type(exc).__name__}: {exc}"
            raise PipelineError(stage, exc, self.artifacts) from exc


def _continuation(raw: str, messages: list[ChatMessage]) -> str:
    """Text the reasoner produced itself, without an echoed prefill."""
    last = messages[-1]
    if last.is_prefill and raw.startswith(last.content):
        return raw[len(last.content):]
    return raw


def _draft_trace(result, profile) -> ReasoningTrace:
    """The draft's think segment; an untagged draft counts up to its first closing or answer tag."""
    think = result.think_text
    if not think:
        think = result.raw_text.replace(profile.think_open, "", 1)
        for tag in (profile.think_close, profile.answer_open):
            think = think.split(tag)[0]
    return ReasoningTrace.from_text(think, result.answer_text)


def run_pipeline(
    plan: InjectionPlan,
    item: McqItem,
    ts: TimeSeries,
    specialist: ModelClient,
    reasoner: ModelClient,
    cues: InstructionCue = DEFAULT_CUES,
) -> PipelineResult:
    """Answer one item with knowledge injected into the reasoner's trace.

    The specialist is called exactly once. The reasoner is called once for
    early injection and twice (draft, then resume) for intermediate and late.
    The answer is read from the resumed generation only.
    """
    profile = reasoner.profile
    answer_tags = (profile.answer_open, profile.answer_close)
    artifacts: dict[str, Any] = {
        "item_id": item.item_id,
        "strategy": plan.strategy.value,
        "include_series_in_grlm": plan.include_series_in_grlm,
    }
    step = _Steps(artifacts)
    question = f"{item.question_text}\n{format_options(item.options)}"
    grlm_ts = ts if plan.include_series_in_grlm else None
    base_prompt = format_mcq_prompt(item.question_text, item.options, grlm_ts, answer_tags, plan.decimals)
    rl_source = plan.knowledge_source is KnowledgeSource.RL_THINKING_TRACE

    def elicit(query: str):
        artifacts["shaped_query"] = query
        snippet = step("elicit", elicit_knowledge, specialist, ts, query, plan.knowledge_source, plan.decimals)
        artifacts["snippet"] = snippet.text
        return snippet

    def draft(instruction: str) -> ReasoningTrace:
        msgs = [ChatMessage(Role.USER, f"{base_prompt}\n\n{instruction}")]
        result = step("draft", reasoner.complete, msgs)
        artifacts["draft"] = result.raw_text
        return _draft_trace(result, profile)

    if plan.strategy is Strategy.EARLY:
        query = question if rl_source else shape_query(QueryMode.HELP, question, cues=cues)
        snippet = elicit(query)
        injected = step("inject", inject_early, snippet, cues)
    elif plan.strategy is Strategy.INTERMEDIATE:
        trace = draft(cues.confidence)
        k = step("locate", locate_weak_sentence, trace)
        artifacts["weak_index"] = k
        prefix = " ".join(s.text for s in trace.sentences[:k])
        if rl_source:
            query = question
        else:
            query = step("shape", shape_query, QueryMode.ASSIST, question, prefix, trace.sentences[k].text, cues)
        snippet = elicit(query)
        injected = step("inject", inject_intermediate, trace, k, snippet, cues)
    else:
        trace = draft(cues.draft)
        if rl_source:
            query = question
        else:
            query = step("shape", shape_query, QueryMode.CRITIQUE, question, trace.think_text, None, cues)
        snippet = elicit(query)
        injected = step("inject", inject_late, trace, snippet, cues)

    artifacts["injected_trace"] = injected
    messages = make_injected_request(profile, [ChatMessage(Role.USER, base_prompt)], injected, cues.v_continue)
    result = step("resume", reasoner.complete, messages)
    artifacts["grlm_raw"] = result.raw_text
    answer = step("extract", extract_answer, _continuation(result.raw_text, messages), item.options, answer_tags)
    artifacts["answer_index"] = answer
    return PipelineResult(answer, artifacts)
