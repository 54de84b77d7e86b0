"""Command-line entry point: gen-bench, eval, train-toy, inject-one, report."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import asdict, fields
from pathlib import Path
from typing import Any, Sequence

from tsinject.bench.dataset import BenchConfig, Dataset, build_dataset, load_dataset, save_dataset
from tsinject.client import ClientError, EndpointProfile, ModelClient
from tsinject.evaluation.harness import Arm, ConfigError, EndpointUnavailable, EvalConfig, aggregate, run_eval
from tsinject.evaluation.report import improvement_report, load_report, render_report
from tsinject.injection.pipeline import InjectionPlan, PipelineError, run_pipeline
from tsinject.mock import ScriptedMock
from tsinject.rl.grpo import GrpoConfig
from tsinject.rl.toy import FormatGame, estimate_reward, train_toy

log = logging.getLogger("tsinject")

MOCK_URL = "http://mock.local/v1"


# ---------------------------------------------------------------- config


def parse_override(text: str) -> tuple[list[str], Any]:
    """``a.b=v``: the value is read as JSON when it parses, else kept as a string."""
    key, sep, raw = text.partition("=")
    if not sep or not key:
        raise ConfigError(f"override {text!r} is not key=value")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.split("."), value


def resolve_config(path: str | None, overrides: Sequence[str], seed: int | None) -> dict[str, Any]:
    """Load the JSON config, apply ``--set`` overrides in order, then ``--seed``."""
    config: dict[str, Any] = {}
    if path:
        try:
            config = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        if not isinstance(config, dict):
            raise ConfigError("config file must hold a JSON object")
    for text in overrides:
        keys, value = parse_override(text)
        node = config
        for k in keys[:-1]:
            node = node.setdefault(k, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {text!r} descends into a non-object")
        node[keys[-1]] = value
    if seed is not None:
        config["seed"] = seed
    return config


def _pick(config: dict[str, Any], cls, allowed_extra: set[str] = frozenset()) -> dict[str, Any]:
    names = {f.name for f in fields(cls)}
    unknown = set(config) - names - set(allowed_extra)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return {k: v for k, v in config.items() if k in names}


def _build(cls, kwargs: dict[str, Any]):
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{cls.__name__}: {exc}") from exc


def make_run_dir(root: str | Path) -> Path:
    stamp = time.strftime("%Y%m%d-%H%M%S")
    base = Path(root) / stamp
    path, n = base, 1
    while path.exists():
        n += 1
        path = base.with_name(f"{stamp}-{n}")
    path.mkdir(parents=True)
    return path


def _write_json(path: Path, data: Any) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8")


def _echo(name: str, data: dict[str, Any]) -> None:
    print(f"{name} config: {json.dumps(data, sort_keys=True, default=str)}")


# ---------------------------------------------------------------- endpoints


def _load_mocks(path: str) -> tuple[ScriptedMock, ScriptedMock]:
    """A mock file is either one rule list shared by both roles or {"specialist": [...], "reasoner": [...]}."""
    try:
        spec = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot load mock script {path}: {exc}") from exc
    try:
        if isinstance(spec, list):
            return ScriptedMock.from_rules(spec), ScriptedMock.from_rules(spec)
        return ScriptedMock.from_rules(spec["specialist"]), ScriptedMock.from_rules(spec["reasoner"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad mock script {path}: {exc}") from exc


def _profile(role: str, overrides: dict[str, Any], mock: bool) -> EndpointProfile:
    overrides = dict(overrides)
    try:
        if mock:
            overrides.setdefault("base_url", MOCK_URL)
            overrides.setdefault("model_name", f"mock-{role}")
            return EndpointProfile(**overrides)
        if "base_url" in overrides:
            overrides.setdefault("model_name", role)
            return EndpointProfile(**overrides)
        return EndpointProfile.from_env(role, **overrides)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{role} endpoint: {exc}") from exc


def make_clients(
    config: dict[str, Any], mock_path: str | None, need_specialist: bool = True
) -> tuple[ModelClient | None, ModelClient]:
    """(specialist, reasoner) clients; endpoint fields come from config["tslm"] and config["grlm"]."""
    mocks = _load_mocks(mock_path) if mock_path else (None, None)
    specialist = None
    if need_specialist:
        tslm = _profile("tslm", config.get("tslm", {}), mock_path is not None)
        specialist = ModelClient(tslm, transport=mocks[0].transport() if mocks[0] else None)
    grlm = _profile("grlm", config.get("grlm", {}), mock_path is not None)
    reasoner = ModelClient(grlm, transport=mocks[1].transport() if mocks[1] else None)
    return specialist, reasoner


def _dataset(config: dict[str, Any]) -> Dataset:
    if "dataset" in config:
        return load_dataset(config["dataset"])
    bench = dict(config.get("bench", {}))
    if "seed" in config:
        bench.setdefault("seed", config["seed"])
    return build_dataset(_build(BenchConfig, _pick(bench, BenchConfig)))


# ---------------------------------------------------------------- subcommands


def cmd_gen_bench(args, config: dict[str, Any]) -> int:
    bench = _build(BenchConfig, _pick(config, BenchConfig))
    resolved = asdict(bench)
    resolved["families"] = [f.value for f in bench.families]
    _echo("gen-bench", resolved)
    run_dir = make_run_dir(args.output_dir)
    ds = build_dataset(bench)
    save_dataset(ds, run_dir / "dataset.jsonl")
    _write_json(run_dir / "config.json", {"command": "gen-bench", **resolved})
    print(f"wrote {len(ds.items)} items over {len(ds.series)} series to {run_dir / 'dataset.jsonl'}")
    return 0


def cmd_eval(args, config: dict[str, Any]) -> int:
    extra = {"dataset", "bench", "tslm", "grlm", "seed"}
    eval_kwargs = _pick(config, EvalConfig, extra)
    if "seed" in config and "seeds" not in eval_kwargs:
        n = int(eval_kwargs.get("n_runs", 3))
        eval_kwargs["seeds"] = [int(config["seed"]) + k for k in range(n)]
    if args.parallelism is not None:
        eval_kwargs["parallelism"] = args.parallelism
    eval_config = _build(EvalConfig, eval_kwargs)
    resolved = {**{k: config[k] for k in extra if k in config}, **eval_config.to_dict(), "mock": args.mock}
    _echo("eval", resolved)
    dataset = _dataset(config)
    needs = eval_config.arm not in (Arm.ZERO_SHOT, Arm.FEW_SHOT)
    specialist, reasoner = make_clients(config, args.mock, need_specialist=needs)
    run_dir = make_run_dir(args.output_dir)
    _write_json(run_dir / "config.json", {"command": "eval", **resolved})
    result = run_eval(eval_config, dataset, reasoner, specialist, out_dir=run_dir)
    print(render_report([result], out_dir=run_dir), end="")
    print(f"results in {run_dir}")
    return 0


def cmd_train_toy(args, config: dict[str, Any]) -> int:
    defaults = {"iterations": 500, "seed": 0, "step_size": 10.0, "inner_steps": 4,
                "golds": ["A", "B", "C", "D"], "length": 6, "conditioning": "position"}
    grpo_keys = {f.name for f in fields(GrpoConfig)}
    unknown = set(config) - set(defaults) - grpo_keys
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    resolved = {**defaults, **asdict(GrpoConfig()), **config}
    _echo("train-toy", resolved)
    grpo = _build(GrpoConfig, {k: resolved[k] for k in grpo_keys})
    env = _build(FormatGame, {"golds": tuple(resolved["golds"]), "length": int(resolved["length"])})
    run_dir = make_run_dir(args.output_dir)
    _write_json(run_dir / "config.json", {"command": "train-toy", **resolved})
    result = train_toy(env, grpo, int(resolved["iterations"]), int(resolved["seed"]),
                       step_size=float(resolved["step_size"]), inner_steps=int(resolved["inner_steps"]),
                       conditioning=resolved["conditioning"])
    result.write_curve(run_dir / "curve.csv")
    final = estimate_reward(env, result.policy, result.theta)
    print(f"initial batch reward {result.curve[0][1]:.3f}, final estimated reward {final:.3f} "
          f"(KL to reference {result.curve[-1][2]:.3f})")
    print(f"curve in {run_dir / 'curve.csv'}")
    return 0


def cmd_inject_one(args, config: dict[str, Any]) -> int:
    plan_keys = {f.name for f in fields(InjectionPlan)}
    extra = {"dataset", "bench", "tslm", "grlm", "seed", "item_id"}
    unknown = set(config) - plan_keys - extra
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    plan = _build(InjectionPlan, {k: v for k, v in config.items() if k in plan_keys})
    dataset = _dataset(config)
    item_id = config.get("item_id", dataset.items[0].item_id)
    matches = [it for it in dataset.items if it.item_id == item_id]
    if not matches:
        raise ConfigError(f"no item {item_id!r} in the dataset")
    item = matches[0]
    resolved = {**{k: config[k] for k in extra if k in config}, "item_id": item_id,
                "strategy": plan.strategy.value, "include_series_in_grlm": plan.include_series_in_grlm,
                "knowledge_source": plan.knowledge_source.value, "decimals": plan.decimals, "mock": args.mock}
    _echo("inject-one", resolved)
    specialist, reasoner = make_clients(config, args.mock)
    run_dir = make_run_dir(args.output_dir)
    _write_json(run_dir / "config.json", {"command": "inject-one", **resolved})
    try:
        result = run_pipeline(plan, item, dataset.series[item.series_id][0], specialist, reasoner)
    except PipelineError as exc:
        _write_json(run_dir / "artifacts.json", exc.artifacts)
        raise
    artifacts = {**result.artifacts, "correct_index": item.correct_index}
    _write_json(run_dir / "artifacts.json", artifacts)
    verdict = "correct" if result.answer_index == item.correct_index else "wrong"
    print(f"{item_id}: answered option {result.answer_index} ({verdict}); artifacts in {run_dir}")
    return 0


def _results_from(path: Path):
    if (path / "report.jsonl").exists():
        return load_report(path / "report.jsonl")
    records_path = path / "records.jsonl"
    if not records_path.exists():
        raise ConfigError(f"{path} holds neither report.jsonl nor records.jsonl")
    records = [json.loads(line) for line in records_path.read_text(encoding="utf-8").splitlines() if line]
    if not records:
        raise ConfigError(f"{records_path} is empty")
    label = records[0]["arm"]
    cfg_path = path / "config.json"
    if cfg_path.exists():
        label = json.loads(cfg_path.read_text(encoding="utf-8")).get("label", label)
    return [aggregate(records, label, records[0]["arm"])], []


def cmd_report(args, config: dict[str, Any]) -> int:
    results, comparisons = [], []
    for p in args.runs:
        rs, cs = _results_from(Path(p))
        results += rs
        comparisons += cs
    if not results:
        raise ConfigError("no results to report")
    by_label = {r.label: r for r in results}
    for flag in ("tslm", "grlm", "sft"):
        name = getattr(args, flag)
        if name and name not in by_label:
            raise ConfigError(f"--{flag} {name!r} matches no result label")
    if args.grlm or args.tslm:
        baselines = {args.tslm, args.grlm, args.sft}
        comparisons = [
            improvement_report(r, by_label.get(args.tslm), by_label.get(args.grlm), by_label.get(args.sft))
            for r in results if r.label not in baselines
        ]
    run_dir = make_run_dir(args.output_dir)
    print(render_report(results, comparisons, out_dir=run_dir), end="")
    print(f"report in {run_dir}")
    return 0


# ---------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--seed", type=int, help="overrides the config seed")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config entry (dotted keys descend); repeatable, last wins")
    common.add_argument("--output-dir", default="runs", help="root for timestamped run directories")

    parser = argparse.ArgumentParser(prog="tsinject", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    sub.add_parser("gen-bench", parents=[common], help="generate the synthetic benchmark")
    p = sub.add_parser("eval", parents=[common], help="evaluate one arm over a dataset")
    p.add_argument("--mock", metavar="SCRIPT", help="serve both endpoints from a scripted mock")
    p.add_argument("--parallelism", type=int, help="concurrent items (default from config, else 1)")
    sub.add_parser("train-toy", parents=[common], help="GRPO on the format game")
    p = sub.add_parser("inject-one", parents=[common], help="run the injection pipeline on one item")
    p.add_argument("--mock", metavar="SCRIPT", help="serve both endpoints from a scripted mock")
    p = sub.add_parser("report", parents=[common], help="re-render tables from run directories")
    p.add_argument("runs", nargs="+", help="run directories holding report.jsonl or records.jsonl")
    p.add_argument("--tslm", help="label of the specialist baseline")
    p.add_argument("--grlm", help="label of the zero-shot reasoner baseline")
    p.add_argument("--sft", help="label of the SFT-fed injection arm, for gain ratios")
    return parser


COMMANDS = {
    "gen-bench": cmd_gen_bench,
    "eval": cmd_eval,
    "train-toy": cmd_train_toy,
    "inject-one": cmd_inject_one,
    "report": cmd_report,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = resolve_config(args.config, args.overrides, args.seed)
        return COMMANDS[args.command](args, config)
    except ConfigError as exc:
        print(f"tsinject: config error: {exc}", file=sys.stderr)
        return 2
    except (PipelineError, EndpointUnavailable, ClientError) as exc:
        print(f"tsinject: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError, LookupError) as exc:
        print(f"tsinject: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
