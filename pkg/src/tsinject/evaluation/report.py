"""Markdown result tables and their line-delimited JSON twin."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Sequence

from tsinject.bench.dataset import IoFailure
from tsinject.evaluation.harness import EvalResult
from tsinject.evaluation.metrics import ImprovementReport, NonPositiveGain, gain_ratio, relative_improvement

STD_NOTE = "Values are mean±std over runs; std is the sample standard deviation (n-1). Overall is the unweighted mean of stage accuracies."


def improvement_report(
    candidate: EvalResult,
    tslm: EvalResult | None = None,
    grlm: EvalResult | None = None,
    sft_candidate: EvalResult | None = None,
) -> ImprovementReport:
    """Gains of ``candidate`` over the specialist and the zero-shot reasoner.

    With ``sft_candidate`` (the same arm fed by an SFT specialist) also
    reports how many times larger the candidate's gain over ``grlm`` is.
    """
    acc = candidate.overall[0]
    vs_tslm = relative_improvement(acc, tslm.overall[0]) if tslm else None
    vs_grlm = relative_improvement(acc, grlm.overall[0]) if grlm else None
    ratio = None
    if sft_candidate is not None and vs_grlm is not None:
        try:
            ratio = gain_ratio(vs_grlm, relative_improvement(sft_candidate.overall[0], grlm.overall[0]))
        except NonPositiveGain:
            ratio = None
    return ImprovementReport(candidate.label, vs_tslm, vs_grlm, ratio)


def _cell(mean: float, std: float) -> str:
    return f"{mean:.3f}±{std:.3f}"


def _pct(x: float | None) -> str:
    return "" if x is None else f"{x:+.1f}%"


def _ratio(x: float | None) -> str:
    return "" if x is None else f"{x:.2f}x"


def _markdown(results: Sequence[EvalResult], comparisons: Sequence[ImprovementReport]) -> str:
    stages: list[str] = []
    for r in results:
        stages.extend(s for s in r.stages if s not in stages)
    by_label = {c.label: c for c in comparisons}
    header = ["Method", *stages, "Overall", "vs TSLM", "vs GRLM", "Gain ratio"]
    lines = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
    for r in results:
        cmp = by_label.get(r.label, ImprovementReport(r.label))
        cells = [r.label]
        cells += [_cell(*r.per_stage[s]) if s in r.per_stage else "" for s in stages]
        cells += [_cell(*r.overall), _pct(cmp.vs_tslm_pct), _pct(cmp.vs_grlm_pct), _ratio(cmp.gain_ratio_rl_over_sft)]
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines) + f"\n\n{STD_NOTE}\n"


def _result_record(r: EvalResult) -> dict:
    return {
        "kind": "result",
        "label": r.label,
        "arm": r.arm,
        "stages": r.stages,
        "per_stage": {s: list(r.per_stage[s]) for s in r.stages},
        "overall": list(r.overall),
        "per_run": r.per_run,
    }


def _comparison_record(c: ImprovementReport) -> dict:
    return {
        "kind": "comparison",
        "label": c.label,
        "vs_tslm_pct": c.vs_tslm_pct,
        "vs_grlm_pct": c.vs_grlm_pct,
        "gain_ratio_rl_over_sft": c.gain_ratio_rl_over_sft,
    }


def render_report(
    results: Sequence[EvalResult],
    comparisons: Sequence[ImprovementReport] = (),
    out_dir: str | Path | None = None,
) -> str:
    """Return the markdown table; with ``out_dir`` also write report.md and report.jsonl."""
    if not results:
        raise ValueError("need at least one result")
    text = _markdown(results, comparisons)
    if out_dir is not None:
        out = Path(out_dir)
        try:
            out.mkdir(parents=True, exist_ok=True)
            (out / "report.md").write_text(text, encoding="utf-8")
            with open(out / "report.jsonl", "w", encoding="utf-8") as fh:
                for r in results:
                    fh.write(json.dumps(_result_record(r), sort_keys=True) + "\n")
                for c in comparisons:
                    fh.write(json.dumps(_comparison_record(c), sort_keys=True) + "\n")
        except OSError as exc:
            raise IoFailure(f"cannot write report to {out}: {exc}") from exc
    return text


def load_report(path: str | Path) -> tuple[list[EvalResult], list[ImprovementReport]]:
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    results, comparisons = [], []
    for line in lines:
        rec = json.loads(line)
        if rec["kind"] == "result":
            results.append(EvalResult(
                rec["label"], rec["arm"], rec["stages"],
                {s: tuple(v) for s, v in rec["per_stage"].items()},
                tuple(rec["overall"]), rec["per_run"],
            ))
        else:
            comparisons.append(ImprovementReport(
                rec["label"], rec["vs_tslm_pct"], rec["vs_grlm_pct"], rec["gain_ratio_rl_over_sft"]))
    return results, comparisons


def rerender(path: str | Path, out_dir: str | Path | None = None) -> str:
    """Rebuild the markdown from a report.jsonl (or a directory holding one)."""
    path = Path(path)
    if path.is_dir():
        path = path / "report.jsonl"
    results, comparisons = load_report(path)
    return render_report(results, comparisons, out_dir)
