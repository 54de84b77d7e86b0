"""Fixed instruction texts used to shape specialist queries and bridge injected text."""

from __future__ import annotations

from dataclasses import dataclass, fields

from tsinject.client import CONTINUE_INSTRUCTION

REFLECT = "Wait, let me reflect on my previous thinking process with the time-series data."

HELP = (
    "Study the time series and list the quantitative evidence that bears on the question.\n"
    "Give concrete values, time indices and magnitudes, and stay descriptive rather than speculative.\n"
    'Begin each observation with "Observation 1:", "Observation 2:", and so on.'
)

JUDGE = (
    "Check the reasoning step under review against the time series. State whether it is supported, "
    "explain why, cite concrete values and time indices, and say how it affects the answer."
)

CRITIQUE = (
    "Go through the completed reasoning above and decide, observation by observation, "
    "whether its quantitative claims about the time series are correct. "
    "Where a claim is wrong, state what the data actually shows, naming the channel and the time indices."
)

INTERMEDIATE_BRIDGE = "Wait, I am not sure about my next step. Let me check it against this clarification from the time-series model:"

LATE_BRIDGE = "Wait, let me re-check the reasoning above against this review of the time-series data:"

CONFIDENCE = (
    "Reason step by step, one sentence per step, starting from what the time series shows. "
    "End every sentence with a marker of the form (confidence: x.xx) giving your confidence between 0 and 1."
)

DRAFT = "Reason step by step, one sentence per step, starting from observations of the time series."

PROMPTING_LEAD_IN = (
    "Here is an analysis from a time-series model that is good at time-series analysis "
    "but may be limited in general reasoning:"
)


@dataclass(frozen=True)
class InstructionCue:
    v_help: str = HELP
    v_reflect: str = REFLECT
    v_judge: str = JUDGE
    v_critique: str = CRITIQUE
    v_continue: str = CONTINUE_INSTRUCTION
    intermediate_bridge: str = INTERMEDIATE_BRIDGE
    late_bridge: str = LATE_BRIDGE
    confidence: str = CONFIDENCE
    draft: str = DRAFT
    prompting_lead_in: str = PROMPTING_LEAD_IN

    def __post_init__(self) -> None:
        for f in fields(self):
            if not getattr(self, f.name):
                raise ValueError(f"cue {f.name} must be non-empty")


DEFAULT_CUES = InstructionCue()
