import json

import httpx
import pytest

from labelloop import llm_client as mod
from labelloop.errors import (
    ConfigError,
    EmptyResponseError,
    ScriptExhaustedError,
    TransportError,
)
from labelloop.llm_client import (
    ChatExchange,
    GenerationSettings,
    HttpEndpoint,
    LLMClient,
    build_request_payload,
    endpoint_from_spec,
    load_endpoint,
    scripted_mock,
)


def test_generation_defaults():
    settings = GenerationSettings()
    assert settings.temperature == 0.7
    assert settings.top_p == 0.9
    assert settings.top_k == 0
    assert settings.max_answer_tokens == 2048
    assert settings.system_prompt is None
    assert settings.fresh_session is True


@pytest.mark.parametrize("kwargs", [
    {"temperature": -0.1},
    {"top_p": 0.0},
    {"top_p": 1.5},
    {"top_k": -1},
    {"max_answer_tokens": 0},
])
def test_generation_validation(kwargs):
    with pytest.raises(ConfigError):
        GenerationSettings(**kwargs)


def test_scripted_replays_in_order():
    endpoint = scripted_mock(["1,2", "3,4"])
    client = LLMClient()
    assert client.complete(endpoint, "first prompt").response_text == "1,2"
    assert client.complete(endpoint, "second prompt").response_text == "3,4"
    assert endpoint.prompts == ["first prompt", "second prompt"]


def test_scripted_exhaustion():
    endpoint = scripted_mock(["a", "b"])
    client = LLMClient()
    client.complete(endpoint, "p1")
    client.complete(endpoint, "p2")
    with pytest.raises(ScriptExhaustedError):
        client.complete(endpoint, "p3")


def test_scripted_empty_response_is_distinct_error():
    endpoint = scripted_mock([""])
    transcript: list = []
    client = LLMClient(transcript=transcript)
    with pytest.raises(EmptyResponseError):
        client.complete(endpoint, "prompt")
    # the exchange was still logged before control returned
    assert len(transcript) == 1
    assert transcript[0]["response_text"] == ""


def test_scripted_requires_nonempty_script():
    with pytest.raises(ConfigError):
        scripted_mock([])


def test_scripted_transcript_is_byte_reproducible(tmp_path):
    def run(path):
        endpoint = scripted_mock(["7, 8", "9, 10"])
        client = LLMClient(transcript=path)
        client.complete(endpoint, "prompt one")
        client.complete(endpoint, "prompt two")
        return path.read_bytes()

    first = run(tmp_path / "t1.jsonl")
    second = run(tmp_path / "t2.jsonl")
    assert first == second


def test_payload_omits_top_k_when_zero():
    endpoint = HttpEndpoint(base_url="https://example.test/v1", model_id="m")
    payload = build_request_payload(endpoint, "hello", GenerationSettings())
    assert "top_k" not in payload
    assert payload["temperature"] == 0.7
    assert payload["top_p"] == 0.9
    assert payload["max_tokens"] == 2048
    assert payload["messages"] == [{"role": "user", "content": "hello"}]

    with_k = build_request_payload(endpoint, "hello", GenerationSettings(top_k=40))
    assert with_k["top_k"] == 40


def test_payload_system_prompt_only_when_set():
    endpoint = HttpEndpoint(base_url="https://example.test", model_id="m")
    payload = build_request_payload(
        endpoint, "hi", GenerationSettings(system_prompt="be terse")
    )
    assert payload["messages"][0] == {"role": "system", "content": "be terse"}


class FakeResponse:
    def __init__(self, status_code=200, content="42, 17", text=""):
        self.status_code = status_code
        self._content = content
        self.text = text

    def json(self):
        return {"choices": [{"message": {"content": self._content}}]}


def test_http_success(monkeypatch):
    calls = []

    def fake_post(url, json=None, headers=None, timeout=None):
        calls.append((url, json))
        return FakeResponse(content="3, 7")

    monkeypatch.setattr(mod.httpx, "post", fake_post)
    endpoint = HttpEndpoint(base_url="https://example.test/v1", model_id="model-x")
    exchange = LLMClient().complete(endpoint, "pick some")
    assert exchange.response_text == "3, 7"
    assert exchange.model_id == "model-x"
    assert calls[0][0] == "https://example.test/v1/chat/completions"


def test_http_retries_with_distinct_attempts(monkeypatch):
    attempts = []

    def failing_post(url, json=None, headers=None, timeout=None):
        attempts.append(1)
        raise httpx.ConnectError("connection refused")

    sleeps = []
    monkeypatch.setattr(mod.httpx, "post", failing_post)
    transcript: list = []
    client = LLMClient(transcript=transcript, sleep=sleeps.append)
    endpoint = HttpEndpoint(base_url="https://example.test", model_id="m")
    with pytest.raises(TransportError) as exc:
        client.complete(endpoint, "prompt")
    assert exc.value.attempts == 3
    assert len(attempts) == 3
    assert sleeps == [1.0, 2.0]
    assert [entry["attempt"] for entry in transcript] == [1, 2, 3]


def test_http_5xx_retries_then_succeeds(monkeypatch):
    responses = [FakeResponse(status_code=500), FakeResponse(content="ok 1, 2")]

    def flaky_post(url, json=None, headers=None, timeout=None):
        return responses.pop(0)

    monkeypatch.setattr(mod.httpx, "post", flaky_post)
    client = LLMClient(sleep=lambda s: None)
    endpoint = HttpEndpoint(base_url="https://example.test", model_id="m")
    exchange = client.complete(endpoint, "prompt")
    assert exchange.response_text == "ok 1, 2"
    assert exchange.attempt == 2


def test_http_empty_body_raises_empty_response(monkeypatch):
    monkeypatch.setattr(mod.httpx, "post",
                        lambda *a, **k: FakeResponse(content=""))
    client = LLMClient()
    endpoint = HttpEndpoint(base_url="https://example.test", model_id="m")
    with pytest.raises(EmptyResponseError):
        client.complete(endpoint, "prompt")


def test_endpoint_descriptor_file(tmp_path):
    path = tmp_path / "endpoint.json"
    path.write_text(json.dumps({
        "base_url": "https://example.test/v1/",
        "model_id": "model-y",
        "api_key_env": "MY_KEY",
        "timeout": 30,
    }), encoding="utf-8")
    endpoint = load_endpoint(path)
    assert endpoint.base_url == "https://example.test/v1"
    assert endpoint.model_id == "model-y"
    assert endpoint.api_key_env == "MY_KEY"


def test_endpoint_spec_round_trip():
    scripted = scripted_mock(["a", "b"], model_id="mock-1")
    scripted.next_response("p")
    rebuilt = endpoint_from_spec(scripted.to_spec())
    assert rebuilt.consumed == 1
    assert rebuilt.script == ["a", "b"]

    http = HttpEndpoint(base_url="https://example.test", model_id="m")
    assert endpoint_from_spec(http.to_spec()) == http


def test_prompt_artifact_accepted(tiny_pool):
    from labelloop.prompts import PromptConfig, build_prompt
    artifact = build_prompt(tiny_pool, PromptConfig(selection_size=2,
                                                    presented_batch_size=5),
                            [0, 1, 2])
    endpoint = scripted_mock(["0, 1"])
    exchange = LLMClient().complete(endpoint, artifact)
    assert exchange.prompt_text == artifact.text
