"""Run one evaluation arm over a dataset for several seeded runs."""

from __future__ import annotations

import json
import logging
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from tsinject.bench.dataset import Dataset
from tsinject.bench.generators import STAGES
from tsinject.bench.mcq import McqItem
from tsinject.client import ChatMessage, ClientError, ModelClient, Role
from tsinject.evaluation.metrics import mean_std, overall_mean
from tsinject.injection.cues import DEFAULT_CUES, InstructionCue
from tsinject.injection.extract import extract_answer
from tsinject.injection.inject import KnowledgeSource, QueryMode, elicit_knowledge, shape_query
from tsinject.injection.pipeline import InjectionPlan, PipelineError, Strategy, run_pipeline
from tsinject.injection.prompts import format_mcq_prompt, format_options, option_labels
from tsinject.timeseries import TimeSeries

log = logging.getLogger(__name__)


class Arm(str, Enum):
    ZERO_SHOT = "zero_shot"
    FEW_SHOT = "few_shot"
    PROMPTING = "prompting"
    INJECT_EARLY = "inject_early"
    INJECT_INTERMEDIATE = "inject_intermediate"
    INJECT_LATE = "inject_late"


_STRATEGY = {
    Arm.INJECT_EARLY: Strategy.EARLY,
    Arm.INJECT_INTERMEDIATE: Strategy.INTERMEDIATE,
    Arm.INJECT_LATE: Strategy.LATE,
}


class InsufficientDemos(ValueError):
    pass


class ConfigError(ValueError):
    pass


class EndpointUnavailable(RuntimeError):
    """Every item of the evaluation failed on the transport layer."""


@dataclass(frozen=True)
class EvalConfig:
    arm: Arm = Arm.ZERO_SHOT
    n_runs: int = 3
    seeds: tuple[int, ...] | None = None
    few_shot_k: int = 3
    include_series_in_grlm: bool = True
    include_series_in_demos: bool = True
    parallelism: int = 1
    knowledge_source: KnowledgeSource = KnowledgeSource.SFT_HELP_QUERY
    shuffle_options: bool = True
    decimals: int = 2
    label: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "arm", Arm(self.arm))
        object.__setattr__(self, "knowledge_source", KnowledgeSource(self.knowledge_source))
        if self.n_runs < 1:
            raise ConfigError("n_runs must be positive")
        seeds = tuple(range(self.n_runs)) if self.seeds is None else tuple(int(s) for s in self.seeds)
        if len(seeds) != self.n_runs:
            raise ConfigError(f"expected {self.n_runs} seeds, got {len(seeds)}")
        object.__setattr__(self, "seeds", seeds)
        if self.few_shot_k < 1:
            raise ConfigError("few_shot_k must be positive")
        if self.parallelism < 1:
            raise ConfigError("parallelism must be positive")
        if not self.label:
            object.__setattr__(self, "label", self.arm.value)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "EvalConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown eval config keys: {sorted(unknown)}")
        try:
            return cls(**data)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["arm"] = self.arm.value
        d["knowledge_source"] = self.knowledge_source.value
        d["seeds"] = list(self.seeds)
        return d


@dataclass
class EvalResult:
    label: str
    arm: str
    stages: list[str]
    per_stage: dict[str, tuple[float, float]]
    overall: tuple[float, float]
    per_run: list[dict[str, float]] = field(default_factory=list)
    records_path: str | None = None

    @property
    def n_runs(self) -> int:
        return len(self.per_run)


def _item_rng(seed: int, item: McqItem) -> np.random.Generator:
    return np.random.default_rng([seed, zlib.crc32(item.item_id.encode("utf-8"))])


def shuffled(item: McqItem, rng: np.random.Generator) -> McqItem:
    """A copy of ``item`` with its options permuted; the original is untouched."""
    order = rng.permutation(len(item.options))
    return replace(
        item,
        options=tuple(item.options[j] for j in order),
        option_families=tuple(item.option_families[j] for j in order),
        correct_index=int(np.flatnonzero(order == item.correct_index)[0]),
    )


def _answer_turn(item: McqItem, tags: tuple[str, str]) -> str:
    return f"{tags[0]}{option_labels(len(item.options))[item.correct_index]}{tags[1]}"


def build_context(
    arm: Arm | str,
    item: McqItem,
    dataset: Dataset,
    config: EvalConfig,
    snippet: str | None = None,
    rng: np.random.Generator | None = None,
    answer_tags: tuple[str, str] = ("<answer>", "</answer>"),
    cues: InstructionCue = DEFAULT_CUES,
) -> list[ChatMessage]:
    """Messages for the non-injection arms.

    Few-shot demonstrations come from other series at the same stage and are
    prepended as user/assistant pairs. The prompting arm puts the specialist's
    analysis above the question, introduced by the lead-in cue.
    """
    arm = Arm(arm)
    ts = dataset.series[item.series_id][0]
    grlm_ts = ts if config.include_series_in_grlm else None
    prompt = format_mcq_prompt(item.question_text, item.options, grlm_ts, answer_tags, config.decimals)
    if arm is Arm.ZERO_SHOT:
        return [ChatMessage(Role.USER, prompt)]
    if arm is Arm.PROMPTING:
        if not snippet:
            raise ValueError("the prompting arm needs a specialist snippet")
        return [ChatMessage(Role.USER, f"{cues.prompting_lead_in}\n{snippet}\n\n{prompt}")]
    if arm is Arm.FEW_SHOT:
        pool = [it for it in dataset.items if it.stage == item.stage and it.series_id != item.series_id]
        k = config.few_shot_k
        if len(pool) < k:
            raise InsufficientDemos(f"need {k} demonstrations, only {len(pool)} available")
        rng = rng if rng is not None else np.random.default_rng(0)
        messages = []
        for j in rng.choice(len(pool), size=k, replace=False):
            demo = pool[int(j)]
            demo_ts = dataset.series[demo.series_id][0] if config.include_series_in_demos else None
            messages.append(ChatMessage(Role.USER, format_mcq_prompt(
                demo.question_text, demo.options, demo_ts, answer_tags, config.decimals)))
            messages.append(ChatMessage(Role.ASSISTANT, _answer_turn(demo, answer_tags)))
        messages.append(ChatMessage(Role.USER, prompt))
        return messages
    raise ValueError(f"{arm.value} is an injection arm; use run_pipeline")


def _tagged(stage: str, fn, *args):
    try:
        return fn(*args)
    except Exception as exc:
        raise PipelineError(stage, exc) from exc


def _run_item(
    config: EvalConfig,
    dataset: Dataset,
    item: McqItem,
    seed: int,
    specialist: ModelClient | None,
    reasoner: ModelClient,
    cues: InstructionCue,
) -> tuple[int | None, dict[str, Any]]:
    rng = _item_rng(seed, item)
    ts: TimeSeries = dataset.series[item.series_id][0]
    tags = (reasoner.profile.answer_open, reasoner.profile.answer_close)
    arm = config.arm
    if arm in _STRATEGY:
        plan = InjectionPlan(_STRATEGY[arm], config.include_series_in_grlm, config.knowledge_source, config.decimals)
        result = run_pipeline(plan, item, ts, specialist, reasoner, cues)
        return result.answer_index, result.artifacts
    artifacts: dict[str, Any] = {}
    snippet = None
    if arm is Arm.PROMPTING:
        question = f"{item.question_text}\n{format_options(item.options)}"
        query = question if config.knowledge_source is KnowledgeSource.RL_THINKING_TRACE else shape_query(
            QueryMode.HELP, question, cues=cues)
        artifacts["shaped_query"] = query
        snippet = _tagged("elicit", elicit_knowledge, specialist, ts, query, config.knowledge_source,
                          config.decimals).text
        artifacts["snippet"] = snippet
    messages = build_context(arm, item, dataset, config, snippet, rng, tags, cues)
    result = _tagged("generate", reasoner.complete, messages)
    artifacts["grlm_raw"] = result.raw_text
    return _tagged("extract", extract_answer, result.raw_text, item.options, tags), artifacts


def run_eval(
    config: EvalConfig,
    dataset: Dataset,
    reasoner: ModelClient,
    specialist: ModelClient | None = None,
    out_dir: str | Path | None = None,
    cues: InstructionCue = DEFAULT_CUES,
) -> EvalResult:
    """Evaluate ``config.arm`` on every item, once per seed.

    Items run concurrently up to ``config.parallelism``. A failing item is
    recorded as incorrect with its stage-tagged error; only configuration
    problems abort. If every single item fails on the transport layer the
    endpoints are treated as unreachable and :class:`EndpointUnavailable`
    is raised. Records are sorted by (run, item_id) before aggregation and
    written to ``out_dir/records.jsonl`` when ``out_dir`` is given.
    """
    if not dataset.items:
        raise ConfigError("dataset has no items")
    if config.arm in (Arm.PROMPTING, *_STRATEGY) and specialist is None:
        raise ConfigError(f"arm {config.arm.value} needs a specialist endpoint")
    if config.arm is Arm.FEW_SHOT:
        for stage in {it.stage for it in dataset.items}:
            pool = {it.series_id for it in dataset.items if it.stage == stage}
            if len(pool) - 1 < config.few_shot_k:
                raise InsufficientDemos(f"stage {stage.value} has too few items for k={config.few_shot_k}")

    tasks = []
    for run, seed in enumerate(config.seeds):
        for item in dataset.items:
            shown = shuffled(item, np.random.default_rng([seed, 7, zlib.crc32(item.item_id.encode())])) \
                if config.shuffle_options else item
            tasks.append((run, seed, shown))

    def work(task):
        run, seed, item = task
        record: dict[str, Any] = {
            "run": run,
            "seed": seed,
            "arm": config.arm.value,
            "item_id": item.item_id,
            "series_id": item.series_id,
            "stage": item.stage.value,
            "family": item.family.value,
            "options": list(item.options),
            "correct_index": item.correct_index,
        }
        client_failure = False
        try:
            answer, artifacts = _run_item(config, dataset, item, seed, specialist, reasoner, cues)
            error = None
        except PipelineError as exc:
            answer, artifacts, error = None, exc.artifacts, str(exc)
            client_failure = isinstance(exc.cause, ClientError)
        artifacts = {k: v for k, v in artifacts.items() if k not in ("item_id", "answer_index", "error")}
        record.update(artifacts)
        record["answer_index"] = answer
        record["correct"] = answer is not None and answer == item.correct_index
        record["error"] = error
        return record, client_failure

    if config.parallelism == 1:
        outcomes = [work(t) for t in tasks]
    else:
        with ThreadPoolExecutor(max_workers=config.parallelism) as pool:
            outcomes = list(pool.map(work, tasks))

    if all(failed for _, failed in outcomes):
        raise EndpointUnavailable(outcomes[0][0]["error"])
    records = sorted((r for r, _ in outcomes), key=lambda r: (r["run"], r["item_id"]))
    n_errors = sum(r["error"] is not None for r in records)
    if n_errors:
        log.warning("%d of %d item runs failed and were scored incorrect", n_errors, len(records))

    result = aggregate(records, config.label, config.arm.value)
    if out_dir is not None:
        path = Path(out_dir) / "records.jsonl"
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as fh:
            for r in records:
                fh.write(json.dumps(r, sort_keys=True) + "\n")
        result.records_path = str(path)
    return result


def aggregate(records: Sequence[dict[str, Any]], label: str, arm: str) -> EvalResult:
    """Per-stage accuracy per run, then mean and sample std across runs."""
    order = [s.value for s in STAGES]
    present = {r["stage"] for r in records}
    stages = [s for s in order if s in present] + sorted(present - set(order))
    runs = sorted({r["run"] for r in records})
    per_run = []
    for run in runs:
        accs = {}
        for stage in stages:
            rows = [r for r in records if r["run"] == run and r["stage"] == stage]
            accs[stage] = sum(bool(r["correct"]) for r in rows) / len(rows)
        accs["overall"] = overall_mean([accs[s] for s in stages])
        per_run.append(accs)
    per_stage = {s: mean_std([pr[s] for pr in per_run]) for s in stages}
    overall = mean_std([pr["overall"] for pr in per_run])
    return EvalResult(label, arm, stages, per_stage, overall, per_run)
