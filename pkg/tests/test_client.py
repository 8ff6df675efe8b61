from __future__ import annotations

import threading

import pytest

from ladder.client import EndpointConfig, GenerationResult, generate, generate_batch

from mock_endpoints import endpoint_for


class TestEndpointConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            EndpointConfig("http://x", "m", max_in_flight=0)
        with pytest.raises(ValueError):
            EndpointConfig("http://x", "m", timeout=0)
        with pytest.raises(ValueError):
            EndpointConfig("http://x", "m", retries=-1)

    def test_api_key_env_fallback(self, monkeypatch):
        monkeypatch.setenv("LADDER_API_KEY", "from-env")
        assert EndpointConfig("http://x", "m").resolved_api_key() == "from-env"
        assert EndpointConfig("http://x", "m", api_key="inline").resolved_api_key() == "inline"


class TestGenerationResult:
    def test_exactly_one_of_text_or_error(self):
        with pytest.raises(ValueError):
            GenerationResult("0", text="a", error="b", attempts=1, latency_ms=1.0)
        with pytest.raises(ValueError):
            GenerationResult("0", text=None, error=None, attempts=1, latency_ms=1.0)


class TestGenerate:
    def test_echo(self, chat_server_factory):
        server = chat_server_factory(lambda prompt: prompt)
        result = generate(endpoint_for(server), "hello endpoint")
        assert result.ok
        assert result.text == "hello endpoint"
        assert result.attempts == 1
        # wire contract: model name and bearer token travel in the request
        assert server.log.bodies[0]["model"] == "mock-model"

    def test_bearer_header(self, chat_server_factory):
        server = chat_server_factory(lambda prompt: "ok")
        generate(endpoint_for(server, api_key="sekrit"), "p")
        assert server.log.headers[0].get("Authorization") == "Bearer sekrit"

    def test_retry_until_success(self, chat_server_factory):
        failures = {"left": 2}
        lock = threading.Lock()

        def reply(prompt):
            with lock:
                if failures["left"] > 0:
                    failures["left"] -= 1
                    return 503
            return "recovered"

        server = chat_server_factory(reply)
        result = generate(endpoint_for(server, retries=3), "p")
        assert result.ok and result.text == "recovered"
        assert result.attempts == 3

    def test_no_retries_single_attempt(self, chat_server_factory):
        server = chat_server_factory(lambda prompt: 500)
        result = generate(endpoint_for(server, retries=0), "p")
        assert not result.ok
        assert result.attempts == 1

    def test_attempts_never_exceed_retry_budget(self, chat_server_factory):
        server = chat_server_factory(lambda prompt: 429)
        cfg = endpoint_for(server, retries=2)
        result = generate(cfg, "p")
        assert not result.ok
        assert result.attempts == cfg.retries + 1
        assert server.log.request_count == cfg.retries + 1

    def test_non_retryable_4xx_not_retried(self, chat_server_factory):
        server = chat_server_factory(lambda prompt: 401)
        result = generate(endpoint_for(server, retries=3), "p")
        assert not result.ok and "401" in result.error
        assert server.log.request_count == 1

    def test_malformed_body(self, chat_server_factory):
        server = chat_server_factory(lambda prompt: {"unexpected": True})
        result = generate(endpoint_for(server), "p")
        assert not result.ok and "malformed" in result.error

    def test_empty_prompt_raises(self, chat_server_factory):
        server = chat_server_factory(lambda prompt: "x")
        with pytest.raises(ValueError):
            generate(endpoint_for(server), "")


class TestGenerateBatch:
    def test_order_and_concurrency_bound(self, chat_server_factory):
        server = chat_server_factory(lambda prompt: f"reply:{prompt}", delay=0.01)
        cfg = endpoint_for(server, max_in_flight=3)
        prompts = [f"item {i}" for i in range(10)]
        results = generate_batch(cfg, prompts)
        assert [r.text for r in results] == [f"reply:item {i}" for i in range(10)]
        assert server.log.concurrent_max <= 3

    def test_partial_failure_keeps_position(self, chat_server_factory):
        server = chat_server_factory(lambda prompt: 400 if prompt == "item 5" else prompt)
        results = generate_batch(endpoint_for(server), [f"item {i}" for i in range(10)])
        assert sum(r.ok for r in results) == 9
        assert not results[5].ok

    def test_empty_prompt_is_per_item_error(self, chat_server_factory):
        server = chat_server_factory(lambda prompt: prompt)
        results = generate_batch(endpoint_for(server), ["a", "b", "", "d"])
        assert [r.ok for r in results] == [True, True, False, True]
        assert results[2].error == "empty prompt"
        assert results[2].attempts == 0

    def test_empty_batch_rejected(self, chat_server_factory):
        server = chat_server_factory(lambda prompt: prompt)
        with pytest.raises(ValueError):
            generate_batch(endpoint_for(server), [])

    def test_ids_carried_through(self, chat_server_factory):
        server = chat_server_factory(lambda prompt: prompt)
        results = generate_batch(endpoint_for(server), ["a", "b"], ids=["x", "y"])
        assert [r.id for r in results] == ["x", "y"]
