from __future__ import annotations

from random import Random

import pytest

from lapis.evaluator import (
    GenerationParams,
    ModelResponse,
    Rationale,
    ScriptedMockService,
    TransportError,
    assess_hypothesis,
    extract_ref_nos,
    parse_response,
    prompt_hash,
    render_response,
    tag_rationale,
)

from .helpers import GOLDEN_PREMISES, T2_CONTEXT, T2_HYPOTHESIS, golden_bundle
from lapis.prompting import PromptStrategy, build_prompt


def test_parse_well_formed():
    r = parse_response("ASSESSMENT: True\nRATIONALE: r")
    assert r.parse_status == "ok"
    assert r.assessment is True
    assert r.rationale.text == "r"


def test_parse_free_prose_unparseable():
    raw = "The hypothesis seems plausible given the premises, but I am unsure."
    r = parse_response(raw)
    assert r.parse_status == "unparseable"
    assert r.assessment is None
    assert r.raw == raw


def test_parse_case_insensitive():
    r = parse_response("assessment: false\nrationale: x")
    assert r.assessment is False
    assert r.rationale.text == "x"


def test_parse_extracts_ref_nos():
    r = parse_response("ASSESSMENT: True\nRATIONALE: see (Ref No: 89do2087)")
    assert r.rationale.cited_ref_nos == ("89do2087",)


def test_parse_invalid_label_unparseable():
    assert parse_response("ASSESSMENT: maybe\nRATIONALE: r").parse_status == "unparseable"


def test_parse_requires_rationale_marker():
    assert parse_response("ASSESSMENT: True").parse_status == "unparseable"


def test_parse_tolerates_fencing_and_whitespace():
    raw = "```\n   ASSESSMENT: True\nRATIONALE: fenced reasoning\n```"
    r = parse_response(raw)
    assert r.parse_status == "ok"
    assert r.assessment is True
    assert r.rationale.text == "fenced reasoning"
    assert r.raw == raw  # raw keeps the fences


def test_parse_first_assessment_line_wins():
    raw = "ASSESSMENT: False\nRATIONALE: first\nASSESSMENT: True"
    assert parse_response(raw).assessment is False


def test_parse_locale_synonyms():
    r = parse_response("ASSESSMENT: vrai\nRATIONALE: oui", synonyms={"vrai": True})
    assert r.assessment is True


def test_parse_trailing_punctuation():
    assert parse_response("ASSESSMENT: True.\nRATIONALE: r").assessment is True
    assert parse_response("ASSESSMENT: **False**\nRATIONALE: r").assessment is False


def test_extract_ref_nos_unique_in_order():
    text = "per 89do2087 and 82do2525, then 89do2087 again"
    assert extract_ref_nos(text) == ("89do2087", "82do2525")


def test_round_trip_random_pairs():
    rng = Random(13)
    words = ["intent", "ruling", "premise", "witness", "arrest", "89do2087", "evidence"]
    for _ in range(100):
        assessment = rng.random() < 0.5
        text = " ".join(rng.choice(words) for _ in range(rng.randint(1, 12)))
        parsed = parse_response(render_response(assessment, text))
        assert parsed.parse_status == "ok"
        assert parsed.assessment == assessment
        assert parsed.rationale.text == text


def test_model_response_invariant():
    with pytest.raises(ValueError):
        ModelResponse(raw="x", assessment=True, rationale=None, parse_status="ok")
    with pytest.raises(ValueError):
        ModelResponse(
            raw="x",
            assessment=True,
            rationale=Rationale(text="r"),
            parse_status="unparseable",
        )


def test_rationale_validates_type_and_refs():
    with pytest.raises(ValueError):
        Rationale(text="r", rationale_type="GPT5-MAGIC")
    with pytest.raises(ValueError):
        Rationale(text="r", cited_ref_nos=("not-a-ref",))


def test_scripted_mock_keyed_by_hash():
    mock = ScriptedMockService()
    mock.add("prompt one", "ASSESSMENT: True\nRATIONALE: a")
    assert mock.generate("prompt one", GenerationParams()) == "ASSESSMENT: True\nRATIONALE: a"
    with pytest.raises(LookupError):
        mock.generate("unknown prompt", GenerationParams())
    assert mock.call_count == 2


def test_scripted_mock_default_and_file_round_trip(tmp_path):
    mock = ScriptedMockService(default="ASSESSMENT: False\nRATIONALE: d")
    assert mock.generate("anything", GenerationParams()).startswith("ASSESSMENT: False")

    mock.add("known", "canned")
    path = tmp_path / "script.jsonl"
    mock.save(path)
    loaded = ScriptedMockService.load(path)
    assert loaded.script == {prompt_hash("known"): "canned"}


class CountingService:
    def __init__(self, responses, failures=0):
        self.responses = responses
        self.failures = failures
        self.calls = 0
        self.service_id = "counting"

    def generate(self, prompt, params):
        self.calls += 1
        if self.calls <= self.failures:
            raise TransportError("down")
        return self.responses


def test_assess_single_generation_per_call():
    bundle = golden_bundle("VP-ZS")
    service = CountingService("ASSESSMENT: True\nRATIONALE: fine")
    response = assess_hypothesis(bundle, service)
    assert service.calls == 1
    assert response.parse_status == "ok"


def test_assess_does_not_retry_unparseable():
    bundle = golden_bundle("VP-ZS")
    service = CountingService("no structure at all")
    response = assess_hypothesis(bundle, service)
    assert service.calls == 1
    assert response.parse_status == "unparseable"
    assert response.raw == "no structure at all"


def test_assess_retries_transport_errors_up_to_cap():
    bundle = golden_bundle("VP-ZS")
    service = CountingService("ASSESSMENT: False\nRATIONALE: ok", failures=2)
    response = assess_hypothesis(bundle, service, retry_cap=2)
    assert service.calls == 3
    assert response.assessment is False

    exhausted = CountingService("irrelevant", failures=5)
    with pytest.raises(TransportError):
        assess_hypothesis(bundle, exhausted, retry_cap=2)
    assert exhausted.calls == 3


def test_scripted_scenario_t2_false():
    bundle = build_prompt(
        PromptStrategy.preset("CILR-ZS"),
        T2_CONTEXT,
        T2_HYPOTHESIS,
        premises=GOLDEN_PREMISES,
    )
    mock = ScriptedMockService()
    mock.add(
        bundle.rendered,
        render_response(False, "Testimony must be gathered in full detail (textbook)."),
    )
    response = assess_hypothesis(bundle, mock)
    assert response.assessment is False
    assert response.parse_status == "ok"


def test_tag_rationale():
    response = parse_response("ASSESSMENT: True\nRATIONALE: r")
    tagged = tag_rationale(response, "GPT4-CILR-ZS")
    assert tagged.rationale.rationale_type == "GPT4-CILR-ZS"
    assert response.rationale.rationale_type == "LIVE"  # original untouched
