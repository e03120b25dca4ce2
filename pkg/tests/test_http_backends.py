"""HTTP backend contracts, exercised against in-process stub servers."""

from __future__ import annotations

import json
import sys
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer
from pathlib import Path

import pytest

from thames.errors import TransportError
from thames.gateway.backends import (
    ChatRequest,
    HttpScoringBackend,
    OpenAIChatBackend,
    OpenAIEmbeddingBackend,
)

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "scripts"))
from scorer_stub import Handler as ScorerHandler, heuristic_scores  # noqa: E402


class _FakeOpenAI(BaseHTTPRequestHandler):
    last_request: dict = {}
    fail_next: int = 0

    def do_POST(self):
        cls = type(self)
        length = int(self.headers.get("Content-Length", 0))
        body = json.loads(self.rfile.read(length))
        cls.last_request = {"path": self.path, "body": body, "auth": self.headers.get("Authorization")}

        if cls.fail_next > 0:
            cls.fail_next -= 1
            self.send_error(503)
            return

        if self.path.endswith("/chat/completions"):
            payload = {
                "choices": [{"message": {"role": "assistant", "content": "stub says hi"}}],
                "usage": {"prompt_tokens": 7, "completion_tokens": 3},
            }
        elif self.path.endswith("/embeddings"):
            payload = {
                "data": [
                    {"index": i, "embedding": [float(i + 1), 0.0, 0.0]}
                    for i in range(len(body["input"]))
                ],
                "usage": {"prompt_tokens": 4},
            }
        elif self.path.endswith("/refuse"):
            self.send_error(400, "refused")
            return
        else:
            self.send_error(404)
            return
        raw = json.dumps(payload).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(raw)))
        self.end_headers()
        self.wfile.write(raw)

    def log_message(self, fmt, *args):
        pass


@pytest.fixture(scope="module")
def openai_server():
    server = HTTPServer(("127.0.0.1", 0), _FakeOpenAI)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_port}/v1"
    server.shutdown()


@pytest.fixture(scope="module")
def scorer_server():
    server = HTTPServer(("127.0.0.1", 0), ScorerHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_port}"
    server.shutdown()


class TestOpenAIChat:
    def test_request_shape_and_response(self, openai_server, monkeypatch):
        monkeypatch.setenv("THAMES_API_KEY", "sekret")
        backend = OpenAIChatBackend(base_url=openai_server)
        result = backend.complete(
            ChatRequest(system_prompt="sys", user_messages=["hi there"], temperature=0.5, model_id="gpt-test")
        )
        assert result.text == "stub says hi"
        assert result.input_tokens == 7 and result.output_tokens == 3
        sent = _FakeOpenAI.last_request
        assert sent["path"].endswith("/chat/completions")
        assert sent["auth"] == "Bearer sekret"
        assert sent["body"]["model"] == "gpt-test"
        assert sent["body"]["messages"][0] == {"role": "system", "content": "sys"}
        assert sent["body"]["messages"][1] == {"role": "user", "content": "hi there"}

    def test_server_error_is_transport_error(self, openai_server):
        _FakeOpenAI.fail_next = 1
        backend = OpenAIChatBackend(base_url=openai_server)
        with pytest.raises(TransportError):
            backend.complete(ChatRequest(system_prompt="", user_messages=["x"], model_id="m"))

    def test_unreachable_host(self):
        backend = OpenAIChatBackend(base_url="http://127.0.0.1:1/v1", timeout=0.2)
        with pytest.raises(TransportError):
            backend.complete(ChatRequest(system_prompt="", user_messages=["x"], model_id="m"))


class TestOpenAIEmbeddings:
    def test_order_and_values(self, openai_server):
        backend = OpenAIEmbeddingBackend(base_url=openai_server)
        result = backend.embed(["a", "b"], model_id="embed-test")
        assert result.vectors == [[1.0, 0.0, 0.0], [2.0, 0.0, 0.0]]
        assert _FakeOpenAI.last_request["body"]["input"] == ["a", "b"]


class TestScorerEndpoint:
    def test_score_contract(self, scorer_server):
        backend = HttpScoringBackend(base_url=scorer_server)
        entailment, consistency = backend.score("the sky is blue", "the sky is blue")
        assert 0.0 <= entailment <= 1.0 and 0.0 <= consistency <= 1.0

    def test_identical_premise_and_answer_entails(self, scorer_server):
        # sanity oracle for the shipped reference scorer: a statement should
        # entail itself with probability well above chance
        backend = HttpScoringBackend(base_url=scorer_server)
        text = "The northern station opened in 1904 after a two-year build."
        entailment, consistency = backend.score(text, text)
        assert entailment >= 0.5
        assert consistency == pytest.approx(1.0)

    def test_heuristic_is_pure(self):
        assert heuristic_scores("a b c", "a b") == heuristic_scores("a b c", "a b")
        entailment, consistency = heuristic_scores("alpha beta", "gamma delta")
        assert entailment == 0.0 and consistency == 0.0
