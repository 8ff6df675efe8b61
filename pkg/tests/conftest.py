"""Fixtures over the shared mock-endpoint helpers."""

from __future__ import annotations

import pytest

from ladder.prompting import TemplatePair

from mock_endpoints import (
    PIPE_DIRECT,
    PIPE_REFINE,
    MockServer,
    make_chat_responder,
    make_score_responder,
)


@pytest.fixture
def pipe_templates() -> TemplatePair:
    return TemplatePair(PIPE_DIRECT, PIPE_REFINE)


@pytest.fixture
def mock_server_factory():
    servers: list[MockServer] = []

    def factory(respond, delay: float = 0.0) -> MockServer:
        server = MockServer(respond, delay=delay)
        servers.append(server)
        return server

    yield factory
    for server in servers:
        server.stop()


@pytest.fixture
def chat_server_factory(mock_server_factory):
    def factory(reply, delay: float = 0.0) -> MockServer:
        return mock_server_factory(make_chat_responder(reply), delay=delay)

    return factory


@pytest.fixture
def score_server_factory(mock_server_factory):
    def factory(score) -> MockServer:
        return mock_server_factory(make_score_responder(score))

    return factory
