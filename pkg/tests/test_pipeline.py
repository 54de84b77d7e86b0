import json

import httpx
import pytest

from tsinject.bench.dataset import BenchConfig, build_dataset
from tsinject.client import CONTINUE_INSTRUCTION, EndpointProfile, ModelClient
from tsinject.injection.cues import DEFAULT_CUES, REFLECT
from tsinject.injection.pipeline import InjectionPlan, PipelineError, Strategy, run_pipeline
from tsinject.injection.prompts import SERIES_HEADER, format_mcq_prompt
from tsinject.mock import Rule, ScriptedMock
from tsinject.timeseries import encode_text

SNIPPET = "Observation 1: spike at t=40.\nObservation 2: level returns afterwards."
DRAFT = ("<think>The acceleration channel is steady early on. (confidence: 0.95) "
         "The spike is probably a sensor glitch. (confidence: 0.20) "
         "So nothing is wrong. (confidence: 0.60)</think><answer>A</answer>")


@pytest.fixture(scope="module")
def data():
    ds = build_dataset(BenchConfig(n_series=6, seed=1, length=48))
    item = ds.items[3]
    return item, ds.series[item.series_id][0]


class Wire:
    """Captures the raw request bytes in front of a scripted mock."""

    def __init__(self, mock):
        self.mock = mock
        self.bodies = []

    def handler(self, request):
        self.bodies.append(request.content)
        return self.mock.handler(request)

    def client(self, **kw):
        profile = EndpointProfile("http://mock.local/v1", kw.pop("model_name", "m"), **kw)
        return ModelClient(profile, transport=httpx.MockTransport(self.handler))


def make(reasoner_reply=" fine.</think><answer>B</answer>", **profile):
    spec = Wire(ScriptedMock([Rule("", SNIPPET)]))

    def reply(messages):
        text = messages[-1]["content"]
        return DRAFT if "(confidence: x.xx)" in text or "Reason step by step" in text else reasoner_reply

    reas = Wire(ScriptedMock([Rule("", reply)]))
    return spec, reas, spec.client(model_name="tslm"), reas.client(model_name="grlm", **profile)


def test_early_prefill_bytes(data):
    item, ts = data
    spec, reas, s, r = make()
    result = run_pipeline(InjectionPlan(Strategy.EARLY), item, ts, s, r)
    prompt = format_mcq_prompt(item.question_text, item.options, ts)
    expected_prefill = "<think>" + SNIPPET + "\nWait, let me reflect on my previous thinking process with the time-series data."
    expected = {
        "model": "grlm",
        "messages": [{"role": "user", "content": prompt}, {"role": "assistant", "content": expected_prefill}],
        "max_tokens": 2048,
        "temperature": 0.0,
    }
    assert len(reas.bodies) == 1
    sent = json.loads(reas.bodies[0])
    assert sent == expected
    assert sent["messages"][-1]["content"].encode("utf-8") == expected_prefill.encode("utf-8")
    assert reas.bodies[0] == json.dumps(expected, ensure_ascii=False, separators=(",", ":")).encode("utf-8")
    assert result.artifacts["injected_trace"] == SNIPPET + "\n" + REFLECT
    assert result.answer_index == 1


def test_proxy_path(data):
    item, ts = data
    spec, reas, s, r = make(reasoner_reply="Thinking more. <answer>C</answer>", supports_prefill=False)
    result = run_pipeline(InjectionPlan(Strategy.EARLY), item, ts, s, r)
    last = json.loads(reas.bodies[-1])["messages"][-1]
    assert last["role"] == "user"
    assert last["content"] == f"<thinking>{SNIPPET}\n{REFLECT}</thinking>\n{CONTINUE_INSTRUCTION}"
    assert result.answer_index == 2


def test_intermediate(data):
    item, ts = data
    spec, reas, s, r = make()
    result = run_pipeline(InjectionPlan(Strategy.INTERMEDIATE), item, ts, s, r)
    a = result.artifacts
    assert a["weak_index"] == 1
    assert a["injected_trace"] == (
        f"The acceleration channel is steady early on.\n{DEFAULT_CUES.intermediate_bridge}\n{SNIPPET}")
    assert "glitch" not in a["injected_trace"] and "nothing is wrong" not in a["injected_trace"]
    assert "Step under review:\nThe spike is probably a sensor glitch." in a["shaped_query"]
    assert len(spec.bodies) == 1 and len(reas.bodies) == 2
    assert "(confidence: x.xx)" in json.loads(reas.bodies[0])["messages"][0]["content"]


def test_late(data):
    item, ts = data
    spec, reas, s, r = make()
    result = run_pipeline(InjectionPlan(Strategy.LATE), item, ts, s, r)
    injected = result.artifacts["injected_trace"]
    draft_think = DRAFT[len("<think>"):DRAFT.index("</think>")]
    assert injected == f"{draft_think}\n{DEFAULT_CUES.late_bridge}\n{SNIPPET}"
    assert injected.index("So nothing is wrong") < injected.index("Observation 1")
    assert "whether its quantitative claims" in result.artifacts["shaped_query"]
    assert len(spec.bodies) == 1 and len(reas.bodies) == 2


@pytest.mark.parametrize("strategy", list(Strategy))
def test_artifacts_match_request_log(data, strategy):
    item, ts = data
    spec, reas, s, r = make()
    result = run_pipeline(InjectionPlan(strategy), item, ts, s, r)
    sent = json.loads(reas.bodies[-1])["messages"][-1]["content"]
    assert sent == "<think>" + result.artifacts["injected_trace"]
    assert json.loads(spec.bodies[0])["messages"][0]["content"].endswith(result.artifacts["shaped_query"])
    assert result.artifacts["snippet"] == SNIPPET
    calls = 1 if strategy is Strategy.EARLY else 2
    assert len(reas.mock.requests) == calls and len(spec.mock.requests) == 1


@pytest.mark.parametrize("strategy", list(Strategy))
def test_no_series_flag(data, strategy):
    item, ts = data
    spec, reas, s, r = make()
    run_pipeline(InjectionPlan(strategy, include_series_in_grlm=False), item, ts, s, r)
    encoded = encode_text(ts)
    for body in reas.bodies:
        text = body.decode("utf-8")
        assert SERIES_HEADER not in text and encoded[:40] not in text
    assert encoded in json.loads(spec.bodies[0])["messages"][0]["content"]


def test_answer_read_from_continuation_only(data):
    item, ts = data
    spec, reas, s, r = make(reasoner_reply="no tags here")
    # the prefill contains "<answer>"-free text with letters; the continuation has no answer
    with pytest.raises(PipelineError) as info:
        run_pipeline(InjectionPlan(Strategy.EARLY), item, ts, s, r)
    assert info.value.stage == "extract"
    assert str(info.value).startswith("[extract] Unparseable")
    assert info.value.artifacts["grlm_raw"].endswith("no tags here")


def test_rl_source_sends_raw_question(data):
    item, ts = data
    spec, reas, s, r = make()
    result = run_pipeline(InjectionPlan(Strategy.EARLY, knowledge_source="rl_thinking_trace"), item, ts, s, r)
    assert DEFAULT_CUES.v_help not in result.artifacts["shaped_query"]
    assert result.artifacts["shaped_query"].startswith(item.question_text)


def test_errors_are_stage_tagged(data):
    item, ts = data
    spec = ScriptedMock([Rule("", "   ")])
    s = ModelClient(EndpointProfile("http://mock.local/v1", "t"), transport=spec.transport())
    r = ModelClient(EndpointProfile("http://mock.local/v1", "g"), transport=ScriptedMock([Rule("", "x")]).transport())
    with pytest.raises(PipelineError) as info:
        run_pipeline(InjectionPlan(Strategy.EARLY), item, ts, s, r)
    assert info.value.stage == "elicit"

    def refuse(request):
        return httpx.Response(404, json={})

    r = ModelClient(EndpointProfile("http://mock.local/v1", "g"), transport=httpx.MockTransport(refuse))
    with pytest.raises(PipelineError) as info:
        run_pipeline(InjectionPlan(Strategy.LATE), item, ts, s, r)
    assert info.value.stage == "draft" and "EndpointRefused" in str(info.value)


def test_inputs_untouched(data):
    item, ts = data
    before = (item, ts.values.copy())
    spec, reas, s, r = make()
    for strategy in Strategy:
        run_pipeline(InjectionPlan(strategy), item, ts, s, r)
    assert item == before[0] and (ts.values == before[1]).all()


def test_reproducible(data):
    item, ts = data
    runs = []
    for _ in range(2):
        spec, reas, s, r = make()
        run_pipeline(InjectionPlan(Strategy.INTERMEDIATE), item, ts, s, r)
        runs.append((spec.bodies, reas.bodies))
    assert runs[0] == runs[1]
