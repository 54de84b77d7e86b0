"""Query shaping, knowledge elicitation and the three injection operators."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from tsinject.client import ChatMessage, ModelClient, Role
from tsinject.injection.cues import DEFAULT_CUES, InstructionCue
from tsinject.injection.prompts import specialist_prompt
from tsinject.injection.trace import EmptyTrace, ReasoningTrace
from tsinject.timeseries import TimeSeries


class MissingContext(ValueError):
    pass


class EmptyKnowledge(ValueError):
    pass


class IndexOutOfRange(IndexError):
    pass


class KnowledgeSource(str, Enum):
    SFT_HELP_QUERY = "sft_help_query"
    RL_THINKING_TRACE = "rl_thinking_trace"
    SCRIPTED = "scripted"


class QueryMode(str, Enum):
    HELP = "help"
    ASSIST = "assist"
    CRITIQUE = "critique"


@dataclass(frozen=True)
class KnowledgeSnippet:
    text: str
    source: KnowledgeSource = KnowledgeSource.SCRIPTED

    def __post_init__(self) -> None:
        if not self.text:
            raise ValueError("snippet text must be non-empty")
        object.__setattr__(self, "source", KnowledgeSource(self.source))


def shape_query(
    mode: QueryMode | str,
    question: str,
    trace: str | None = None,
    target_sentence: str | None = None,
    cues: InstructionCue = DEFAULT_CUES,
) -> str:
    """Build the specialist request text.

    ``help`` needs only the question. ``assist`` needs the reasoning prefix
    (possibly empty) and the sentence under review. ``critique`` needs the
    full draft.
    """
    mode = QueryMode(mode)
    if mode is QueryMode.HELP:
        return f"{question}\n\n{cues.v_help}"
    if mode is QueryMode.ASSIST:
        if trace is None or not target_sentence:
            raise MissingContext("assist queries need the reasoning prefix and the target sentence")
        prefix = trace if trace.strip() else "(no earlier steps)"
        return (
            f"Question: {question}\n\nReasoning so far:\n{prefix}\n\n"
            f"Step under review:\n{target_sentence}\n\n{cues.v_judge}"
        )
    if not trace or not trace.strip():
        raise MissingContext("critique queries need the full draft")
    return f"Question: {question}\n\nCompleted reasoning:\n{trace}\n\n{cues.v_critique}"


def elicit_knowledge(
    specialist: ModelClient,
    ts: TimeSeries,
    query: str,
    source: KnowledgeSource | str = KnowledgeSource.SFT_HELP_QUERY,
    decimals: int = 2,
) -> KnowledgeSnippet:
    """Ask the specialist about ``ts`` and turn its reply into a snippet.

    For an RL-trained specialist the think segment itself is the knowledge;
    otherwise (or when the reply has no think tags) the whole reply is used.
    """
    source = KnowledgeSource(source)
    result = specialist.complete([ChatMessage(Role.USER, specialist_prompt(ts, query, decimals))])
    text = result.think_text.strip() if source is KnowledgeSource.RL_THINKING_TRACE else ""
    text = text or result.raw_text.strip()
    if not text:
        raise EmptyKnowledge("specialist returned a blank response")
    return KnowledgeSnippet(text, source)


def inject_early(snippet: KnowledgeSnippet, cues: InstructionCue = DEFAULT_CUES) -> str:
    return f"{snippet.text}\n{cues.v_reflect}"


def inject_intermediate(
    trace: ReasoningTrace,
    weak_index: int,
    snippet: KnowledgeSnippet,
    cues: InstructionCue = DEFAULT_CUES,
) -> str:
    """Keep the sentences before ``weak_index``, then the bridge and the snippet.

    The weak sentence and everything after it are dropped.
    """
    if not 0 <= weak_index < len(trace.sentences):
        raise IndexOutOfRange(f"weak_index {weak_index} outside [0, {len(trace.sentences)})")
    prefix = " ".join(s.text for s in trace.sentences[:weak_index])
    head = f"{prefix}\n" if prefix else ""
    return f"{head}{cues.intermediate_bridge}\n{snippet.text}"


def inject_late(trace: ReasoningTrace, snippet: KnowledgeSnippet, cues: InstructionCue = DEFAULT_CUES) -> str:
    if not trace.think_text.strip():
        raise EmptyTrace("late injection needs a non-empty draft")
    return f"{trace.think_text}\n{cues.late_bridge}\n{snippet.text}"
