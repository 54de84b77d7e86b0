import json
import math
import zlib

import numpy as np
import pytest
from hypothesis import given, strategies as st

from tsinject.bench.dataset import BenchConfig, build_dataset
from tsinject.evaluation.harness import (
    Arm, ConfigError, EndpointUnavailable, EvalConfig, InsufficientDemos, aggregate, build_context,
    run_eval, shuffled,
)
from tsinject.evaluation.metrics import (
    NonPositiveGain, ZeroBaseline, gain_ratio, mean_std, overall_mean, relative_improvement,
)
from tsinject.evaluation.report import improvement_report, render_report, rerender
from tsinject.injection.cues import DEFAULT_CUES
from tsinject.injection.prompts import SERIES_HEADER
from tsinject.mock import Rule, ScriptedMock, joined_text

from scripted import client_for, reasoner_mock, specialist_mock


@pytest.fixture(scope="module")
def small():
    return build_dataset(BenchConfig(n_series=20, seed=3))


@pytest.fixture(scope="module")
def full():
    return build_dataset(BenchConfig(n_series=110, seed=0))


# metrics

def test_relative_improvement_examples():
    assert relative_improvement(0.650, 0.531) == 22.4
    assert relative_improvement(0.554, 0.502) == 10.4
    assert relative_improvement(0.5, 0.5) == 0.0
    assert relative_improvement(0.4, 0.5) == -20.0


def test_relative_improvement_rounds_half_up():
    from tsinject.evaluation.metrics import _round_half_up

    assert round(2.25, 1) == 2.2
    assert _round_half_up(2.25, 1) == 2.3
    assert _round_half_up(-2.25, 1) == -2.3
    assert relative_improvement(0.5125, 0.5) == 2.5


def test_zero_baseline():
    with pytest.raises(ZeroBaseline):
        relative_improvement(0.3, 0.0)


@given(st.floats(0.01, 1), st.floats(0.01, 1), st.floats(0.1, 10))
def test_relative_improvement_scale_invariant(a, b, k):
    assert abs(relative_improvement(a * k, b * k) - relative_improvement(a, b)) <= 0.1 + 1e-9


@given(st.floats(0.05, 1), st.floats(0.05, 1))
def test_relative_improvement_sign_antisymmetry(a, b):
    fwd, back = relative_improvement(a, b), relative_improvement(b, a)
    assert (fwd > 0) == (back < 0) or fwd == back == 0.0


def test_gain_ratio():
    assert gain_ratio(12.1, 7.3) == 1.66
    assert gain_ratio(10.4, 5.2) == 2.0
    with pytest.raises(NonPositiveGain):
        gain_ratio(5.0, 0.0)
    with pytest.raises(NonPositiveGain):
        gain_ratio(5.0, -1.0)


def test_overall_and_std():
    assert abs(overall_mean([0.779, 0.627, 0.542]) - 0.650) < 0.001
    assert mean_std([0.5]) == (0.5, 0.0)
    m, s = mean_std([0.1, 0.2, 0.3])
    assert math.isclose(m, 0.2) and math.isclose(s, 0.1)
    with pytest.raises(ValueError):
        overall_mean([])


# config

def test_config_round_trip_and_errors():
    cfg = EvalConfig(arm="few_shot", n_runs=2, seeds=(5, 9), few_shot_k=2)
    assert EvalConfig.from_dict(cfg.to_dict()) == cfg
    assert cfg.label == "few_shot"
    with pytest.raises(ConfigError):
        EvalConfig.from_dict({"arm": "zero_shot", "bogus": 1})
    with pytest.raises(ConfigError):
        EvalConfig(n_runs=2, seeds=(1,))
    with pytest.raises(ConfigError):
        EvalConfig.from_dict({"arm": "telepathy"})


# contexts

def test_shuffled_keeps_answer(small):
    item = small.items[0]
    for s in range(20):
        sh = shuffled(item, np.random.default_rng(s))
        assert sh.correct_text == item.correct_text
        assert sorted(sh.options) == sorted(item.options)
    assert small.items[0] is item


def test_few_shot_context(small):
    item = small.items[0]
    cfg = EvalConfig(arm=Arm.FEW_SHOT, n_runs=1, few_shot_k=3, include_series_in_demos=False)
    msgs = build_context(Arm.FEW_SHOT, item, small, cfg, rng=np.random.default_rng(0))
    assert len(msgs) == 7
    assert [m.role.value for m in msgs] == ["user", "assistant"] * 3 + ["user"]
    for demo in msgs[:-1:2]:
        assert SERIES_HEADER not in demo.content
        assert item.question_text in demo.content
    assert SERIES_HEADER in msgs[-1].content
    for reply in msgs[1:-1:2]:
        assert reply.content.startswith("<answer>") and reply.content.endswith("</answer>")
    with_series = build_context(Arm.FEW_SHOT, item, small, EvalConfig(arm=Arm.FEW_SHOT, n_runs=1),
                                rng=np.random.default_rng(0))
    assert all(SERIES_HEADER in m.content for m in with_series[::2])


def test_few_shot_demos_come_from_other_series(small):
    item = small.items[0]
    cfg = EvalConfig(arm=Arm.FEW_SHOT, n_runs=1)
    enc = build_context(Arm.ZERO_SHOT, item, small, cfg)[0].content
    for s in range(10):
        msgs = build_context(Arm.FEW_SHOT, item, small, cfg, rng=np.random.default_rng(s))
        assert all(m.content != enc for m in msgs[:-1])


def test_insufficient_demos():
    ds = build_dataset(BenchConfig(n_series=6, seed=1))
    with pytest.raises(InsufficientDemos):
        run_eval(EvalConfig(arm=Arm.FEW_SHOT, n_runs=1, few_shot_k=6), ds, client_for(reasoner_mock()))


def test_prompting_context(small):
    item = small.items[0]
    msgs = build_context(Arm.PROMPTING, item, small, EvalConfig(arm=Arm.PROMPTING, n_runs=1), snippet="SNIP")
    assert len(msgs) == 1
    assert msgs[0].content.startswith(f"{DEFAULT_CUES.prompting_lead_in}\nSNIP\n\n")
    with pytest.raises(ValueError):
        build_context(Arm.INJECT_EARLY, item, small, EvalConfig(n_runs=1))


# runs

def test_always_correct_mock(small):
    res = run_eval(EvalConfig(arm=Arm.INJECT_EARLY, n_runs=2), small,
                   client_for(reasoner_mock()), client_for(specialist_mock(small)))
    assert res.overall == (1.0, 0.0)
    assert all(v == (1.0, 0.0) for v in res.per_stage.values())


def test_uniform_guessing_near_chance(full):
    res = run_eval(EvalConfig(arm=Arm.ZERO_SHOT, n_runs=1), full, client_for(reasoner_mock()))
    assert len(full.items) == 330
    assert abs(res.overall[0] - 0.25) <= 0.05


def test_identical_seeds_zero_std(small):
    res = run_eval(EvalConfig(arm=Arm.ZERO_SHOT, n_runs=3, seeds=(4, 4, 4)), small, client_for(reasoner_mock()))
    assert res.overall[1] == 0.0
    assert all(std == 0.0 for _, std in res.per_stage.values())
    assert res.n_runs == 3


def test_parallel_matches_serial(small, tmp_path):
    rm = reasoner_mock()
    a = run_eval(EvalConfig(arm=Arm.INJECT_LATE, n_runs=2), small, client_for(rm),
                 client_for(specialist_mock(small)), out_dir=tmp_path / "a")
    b = run_eval(EvalConfig(arm=Arm.INJECT_LATE, n_runs=2, parallelism=4), small, client_for(rm),
                 client_for(specialist_mock(small)), out_dir=tmp_path / "b")
    assert a.per_run == b.per_run
    assert (tmp_path / "a/records.jsonl").read_bytes() == (tmp_path / "b/records.jsonl").read_bytes()


def test_records_file(small, tmp_path):
    res = run_eval(EvalConfig(arm=Arm.PROMPTING, n_runs=1), small, client_for(reasoner_mock()),
                   client_for(specialist_mock(small)), out_dir=tmp_path)
    rows = [json.loads(l) for l in open(res.records_path)]
    assert len(rows) == len(small.items)
    assert all(r["snippet"] and r["error"] is None for r in rows)
    assert [r["item_id"] for r in rows] == sorted(r["item_id"] for r in rows)


def test_missing_specialist_is_config_error(small):
    with pytest.raises(ConfigError):
        run_eval(EvalConfig(arm=Arm.INJECT_EARLY, n_runs=1), small, client_for(reasoner_mock()))


def test_item_failures_scored_incorrect(small):
    def flaky(messages):
        text = joined_text(messages)
        if zlib.crc32(text.encode()) % 3 == 0:
            return "I cannot decide."
        return "<answer>A</answer>"

    res = run_eval(EvalConfig(arm=Arm.ZERO_SHOT, n_runs=1), small,
                   client_for(ScriptedMock([Rule(lambda t: True, flaky)])))
    assert 0 < res.overall[0] < 1


def test_unreachable_endpoint(small):
    from tsinject.client import EndpointProfile, ModelClient
    import httpx

    def refuse(request):
        raise httpx.ConnectError("refused", request=request)

    client = ModelClient(EndpointProfile(base_url="http://nowhere.invalid/v1", model_name="m", retry_budget=0),
                         transport=httpx.MockTransport(refuse))
    with pytest.raises(EndpointUnavailable, match=r"\[generate\]"):
        run_eval(EvalConfig(arm=Arm.ZERO_SHOT, n_runs=1), small, client)


def test_aggregate_by_hand():
    recs = [
        {"run": 0, "stage": "what_happened", "correct": True},
        {"run": 0, "stage": "what_happened", "correct": False},
        {"run": 0, "stage": "how_happened", "correct": True},
        {"run": 1, "stage": "what_happened", "correct": True},
        {"run": 1, "stage": "how_happened", "correct": False},
    ]
    res = aggregate(recs, "x", "zero_shot")
    assert res.per_run[0]["overall"] == 0.75
    assert res.per_run[1]["overall"] == 0.5
    assert res.overall[0] == 0.625


# report

def test_report_round_trip(small, tmp_path):
    zs = run_eval(EvalConfig(arm=Arm.ZERO_SHOT, n_runs=2), small, client_for(reasoner_mock()))
    inj = run_eval(EvalConfig(arm=Arm.INJECT_EARLY, n_runs=2), small, client_for(reasoner_mock()),
                   client_for(specialist_mock(small)))
    cmp = improvement_report(inj, grlm=zs)
    assert cmp.vs_grlm_pct == relative_improvement(inj.overall[0], zs.overall[0])
    text = render_report([zs, inj], [cmp], out_dir=tmp_path / "r1")
    assert text.splitlines()[0].startswith("| Method |")
    assert "sample standard deviation" in text
    again = rerender(tmp_path / "r1", out_dir=tmp_path / "r2")
    assert again == text
    assert (tmp_path / "r1/report.md").read_bytes() == (tmp_path / "r2/report.md").read_bytes()
    assert (tmp_path / "r1/report.jsonl").read_bytes() == (tmp_path / "r2/report.jsonl").read_bytes()
