"""Dataset assembly and its line-delimited JSON file format.

File layout: one header line, then one line per series, then one line per
item. Floats are written with ``repr`` precision so a round trip is exact.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from tsinject.bench.generators import (
    ANSWER_BANK,
    FAMILIES,
    STAGES,
    DiagnosticAnnotation,
    Family,
    GeneratorSpec,
    Stage,
    generate_series,
)
from tsinject.bench.mcq import McqItem, build_mcq
from tsinject.timeseries import ChannelMeta, TimeSeries

SCHEMA_VERSION = 1


class SchemaViolation(ValueError):
    pass


class IoFailure(OSError):
    pass


@dataclass(frozen=True)
class BenchConfig:
    n_series: int = 110
    families: tuple[Family, ...] = FAMILIES
    n_options: int = 4
    seed: int = 0
    length: int = 512

    def __post_init__(self) -> None:
        object.__setattr__(self, "families", tuple(Family(f) for f in self.families))
        if not self.families:
            raise ValueError("need at least one family")
        if self.n_series < len(self.families):
            raise ValueError("n_series must be at least the number of families")


@dataclass
class Dataset:
    series: dict[str, tuple[TimeSeries, DiagnosticAnnotation]]
    items: list[McqItem]
    generation_seed: int
    specs: dict[str, GeneratorSpec] = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self) -> None:
        missing = {it.series_id for it in self.items} - set(self.series)
        if missing:
            raise ValueError(f"items reference unknown series {sorted(missing)}")

    def items_for(self, series_id: str) -> list[McqItem]:
        return [it for it in self.items if it.series_id == series_id]


def _child_seed(*words: int) -> int:
    return int(np.random.SeedSequence(list(words)).generate_state(1)[0])


def build_dataset(config: BenchConfig) -> Dataset:
    """Generate ``n_series`` records round-robin over families, three items each.

    Series ``i`` and its items draw from seeds derived from ``(seed, i)`` only,
    so any subset can be rebuilt independently and in any order.
    """
    series: dict[str, tuple[TimeSeries, DiagnosticAnnotation]] = {}
    specs: dict[str, GeneratorSpec] = {}
    items: list[McqItem] = []
    width = max(4, len(str(config.n_series - 1)))
    for i in range(config.n_series):
        sid = f"ts{i:0{width}d}"
        spec = GeneratorSpec(config.families[i % len(config.families)], length=config.length)
        ts, ann = generate_series(spec, _child_seed(config.seed, i))
        series[sid] = (ts, ann)
        specs[sid] = spec
        for k, stage in enumerate(STAGES):
            seed = _child_seed(config.seed, i, k + 1)
            items.append(build_mcq(ann, stage, ANSWER_BANK, config.n_options, seed, series_id=sid))
    return Dataset(series, items, config.seed, specs)


def random_guess_accuracy(items: Sequence[McqItem], seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    if not items:
        raise ValueError("no items")
    hits = sum(int(rng.integers(len(it.options))) == it.correct_index for it in items)
    return hits / len(items)


def _series_record(sid: str, ts: TimeSeries, ann: DiagnosticAnnotation) -> dict:
    return {
        "id": sid,
        "channels": [{"name": c.name, "kind": c.kind.value} for c in ts.channels],
        "sample_interval": ts.sample_interval,
        "values": [ts.values[:, k].tolist() for k in range(ts.n_channels)],
        "annotation": {
            "family": ann.family.value,
            "window": list(ann.anomaly_window),
            "what": ann.what_text,
            "how": ann.how_text,
            "fix": ann.fix_text,
        },
    }


def _item_record(it: McqItem) -> dict:
    return {
        "series_id": it.series_id,
        "stage": it.stage.value,
        "question": it.question_text,
        "options": list(it.options),
        "correct_index": it.correct_index,
        "family_provenance": [f.value for f in it.option_families],
        "rng_seed": it.rng_seed,
    }


def save_dataset(ds: Dataset, path: str | Path) -> None:
    header = {
        "schema_version": SCHEMA_VERSION,
        "generation_seed": ds.generation_seed,
        "n_series": len(ds.series),
        "n_items": len(ds.items),
    }
    lines = [header]
    lines += [_series_record(sid, ts, ann) for sid, (ts, ann) in ds.series.items()]
    lines += [_item_record(it) for it in ds.items]
    try:
        with open(path, "w", encoding="utf-8") as fh:
            for rec in lines:
                fh.write(json.dumps(rec, ensure_ascii=False) + "\n")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def load_dataset(path: str | Path) -> Dataset:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = fh.read().splitlines()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    try:
        records = [json.loads(line) for line in raw if line.strip()]
    except json.JSONDecodeError as exc:
        raise SchemaViolation(f"line is not valid JSON: {exc}") from exc
    if not records or not isinstance(records[0], dict):
        raise SchemaViolation("missing header")
    header = records[0]
    try:
        if header["schema_version"] != SCHEMA_VERSION:
            raise SchemaViolation(f"unsupported schema version {header['schema_version']}")
        n_series, n_items = int(header["n_series"]), int(header["n_items"])
        seed = header["generation_seed"]
        body = records[1:]
        if len(body) != n_series + n_items:
            raise SchemaViolation(f"header announces {n_series + n_items} records, file has {len(body)}")
        series = {}
        for rec in body[:n_series]:
            channels = tuple(ChannelMeta(c["name"], c["kind"]) for c in rec["channels"])
            ts = TimeSeries(channels, np.array(rec["values"], dtype=float).T, rec["sample_interval"])
            a = rec["annotation"]
            series[rec["id"]] = (ts, DiagnosticAnnotation(a["family"], tuple(a["window"]), a["what"], a["how"], a["fix"]))
        items = [
            McqItem(
                series_id=rec["series_id"],
                stage=Stage(rec["stage"]),
                question_text=rec["question"],
                options=tuple(rec["options"]),
                correct_index=int(rec["correct_index"]),
                rng_seed=int(rec["rng_seed"]),
                option_families=tuple(rec["family_provenance"]),
            )
            for rec in body[n_series:]
        ]
        return Dataset(series, items, seed)
    except SchemaViolation:
        raise
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise SchemaViolation(f"malformed record: {exc!r}") from exc
