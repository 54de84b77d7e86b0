"""Three-stage multiple-choice items with cross-family distractors."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from tsinject.bench.generators import ANSWER_BANK, DiagnosticAnnotation, Family, Stage


class InsufficientDistractors(ValueError):
    pass


QUESTION_TEXT = {
    Stage.WHAT: "Which description best characterizes the behaviour recorded in these sensor channels?",
    Stage.HOW: "Which mechanism most plausibly explains the behaviour recorded in these sensor channels?",
    Stage.FIX: "Which maintenance action is most appropriate given the behaviour recorded in these sensor channels?",
}

AnswerBank = Mapping[Family, Mapping[Stage, str]]


@dataclass(frozen=True)
class McqItem:
    series_id: str
    stage: Stage
    question_text: str
    options: tuple[str, ...]
    correct_index: int
    rng_seed: int
    option_families: tuple[Family, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "stage", Stage(self.stage))
        object.__setattr__(self, "options", tuple(self.options))
        object.__setattr__(self, "option_families", tuple(Family(f) for f in self.option_families))
        if len(self.options) < 2:
            raise ValueError("an item needs at least two options")
        if len(set(self.options)) != len(self.options):
            raise ValueError("options must be pairwise distinct")
        if not 0 <= self.correct_index < len(self.options):
            raise ValueError("correct_index out of range")
        if len(self.option_families) != len(self.options):
            raise ValueError("one provenance family per option")

    @property
    def item_id(self) -> str:
        return f"{self.series_id}:{self.stage.value}"

    @property
    def correct_text(self) -> str:
        return self.options[self.correct_index]

    @property
    def family(self) -> Family:
        return self.option_families[self.correct_index]


def build_mcq(
    annotation: DiagnosticAnnotation,
    stage: Stage,
    answer_bank: AnswerBank = ANSWER_BANK,
    n_options: int = 4,
    seed: int = 0,
    series_id: str = "",
) -> McqItem:
    """Pair the annotation's canonical answer with distractors from other families.

    Each distractor comes from a distinct foreign family. Both the distractor
    draw and the option order depend only on ``seed``.
    """
    stage = Stage(stage)
    if n_options < 2:
        raise ValueError("n_options must be at least 2")
    correct = annotation.text_for(stage)
    seen = {correct}
    pool: list[tuple[Family, str]] = []
    for family in sorted(answer_bank, key=lambda f: Family(f).value):
        family = Family(family)
        text = answer_bank[family].get(stage)
        if family is annotation.family or not text or text in seen:
            continue
        seen.add(text)
        pool.append((family, text))
    need = n_options - 1
    if len(pool) < need:
        raise InsufficientDistractors(
            f"{annotation.family.value}/{stage.value}: need {need} foreign texts, bank has {len(pool)}"
        )
    rng = np.random.default_rng(seed)
    picks = [pool[i] for i in rng.choice(len(pool), size=need, replace=False)]
    entries = [(annotation.family, correct), *picks]
    order = rng.permutation(n_options)
    return McqItem(
        series_id=series_id,
        stage=stage,
        question_text=QUESTION_TEXT[stage],
        options=tuple(entries[i][1] for i in order),
        correct_index=int(np.flatnonzero(order == 0)[0]),
        rng_seed=int(seed),
        option_families=tuple(entries[i][0] for i in order),
    )
