"""Secondary acceptance: smoke LoRA run with the published configuration."""

from __future__ import annotations

import json
import threading
import time

import pytest
import uvicorn

from peft_harness.serving import create_app
from peft_harness.training import train_adapter
from tests.acceptance_report import criterion
from tests.test_config import PUBLISHED_CONFIG


def test_peft_smoke(tiny_base, training_set, tmp_path):
    with criterion("PEFT smoke: published config, loss drop, served round-trip (<10min)"):
        start = time.monotonic()

        result = train_adapter(training_set, tiny_base, out_dir=tmp_path / "run")
        assert result.final_loss < result.initial_loss
        emitted = json.loads((result.adapter_dir / "lora_config.json").read_text())
        assert emitted == PUBLISHED_CONFIG
        assert emitted["r"] == 8
        assert emitted["lora_alpha"] == 16
        assert emitted["lora_dropout"] == 0.05
        assert emitted["learning_rate"] == 2e-5
        assert emitted["num_train_epochs"] == 3

        from thames.gateway.backends import ChatRequest, OpenAIChatBackend

        app = create_app(tiny_base, result.adapter_dir)
        config = uvicorn.Config(app, host="127.0.0.1", port=0, log_level="error")
        server = uvicorn.Server(config)
        thread = threading.Thread(target=server.run, daemon=True)
        thread.start()
        try:
            deadline = time.monotonic() + 10
            while not server.started:
                if time.monotonic() > deadline:
                    pytest.fail("server did not start")
                time.sleep(0.05)
            port = server.servers[0].sockets[0].getsockname()[1]
            backend = OpenAIChatBackend(base_url=f"http://127.0.0.1:{port}/v1")
            reply = backend.complete(
                ChatRequest(
                    system_prompt="",
                    user_messages=["Answer Yes or No:"],
                    max_tokens=8,
                    model_id="peft-smoke",
                )
            )
            assert isinstance(reply.text, str)
        finally:
            server.should_exit = True
            thread.join(timeout=10)

        assert time.monotonic() - start < 600
