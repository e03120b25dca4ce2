"""Serve a tuned model behind the evaluation gateway's chat REST contract.

POST /v1/chat/completions accepts the OpenAI-compatible shape the
evaluation tool's gateway speaks; GET /health reports model and adapter
identity.
"""

from __future__ import annotations

import logging
from pathlib import Path

import torch
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel
from transformers import AutoModelForCausalLM

from peft_harness.errors import TrainingError
from peft_harness.lora import load_adapter
from peft_harness.tokenizer import ByteTokenizer

logger = logging.getLogger(__name__)


class ChatMessage(BaseModel):
    role: str
    content: str


class ChatCompletionRequest(BaseModel):
    model: str = "peft-model"
    messages: list[ChatMessage]
    temperature: float = 0.0
    max_tokens: int = 64


def load_model_with_adapter(base_model: str | Path, adapter_dir: str | Path | None):
    try:
        model = AutoModelForCausalLM.from_pretrained(str(base_model))
    except (OSError, ValueError) as exc:
        raise TrainingError(f"cannot load base model {base_model}: {exc}") from exc
    if adapter_dir is not None:
        load_adapter(model, adapter_dir)
    model.eval()
    return model


def generate_reply(model, tok: ByteTokenizer, prompt: str, max_new_tokens: int) -> str:
    ids = torch.tensor([[tok.bos_id, *tok.encode(prompt)]], dtype=torch.long)
    with torch.no_grad():
        out = model.generate(
            ids,
            max_new_tokens=max(1, min(max_new_tokens, 256)),
            do_sample=False,
            eos_token_id=tok.eos_id,
            pad_token_id=tok.pad_id,
        )
    return tok.decode(out[0, ids.shape[1] :].tolist())


def create_app(base_model: str | Path, adapter_dir: str | Path | None) -> FastAPI:
    model = load_model_with_adapter(base_model, adapter_dir)
    tok = ByteTokenizer()
    app = FastAPI(title="peft-harness serving")

    @app.get("/health")
    def health():
        return {
            "status": "ok",
            "base_model": str(base_model),
            "adapter": str(adapter_dir) if adapter_dir else None,
        }

    @app.post("/v1/chat/completions")
    def chat_completions(request: ChatCompletionRequest):
        if not request.messages:
            raise HTTPException(status_code=400, detail="messages must be non-empty")
        prompt = "\n".join(m.content for m in request.messages)
        reply = generate_reply(model, tok, prompt, request.max_tokens)
        prompt_tokens = len(tok.encode(prompt)) + 1
        completion_tokens = len(tok.encode(reply))
        return {
            "id": "peftcmpl-0",
            "object": "chat.completion",
            "model": request.model,
            "choices": [
                {
                    "index": 0,
                    "message": {"role": "assistant", "content": reply},
                    "finish_reason": "stop",
                }
            ],
            "usage": {
                "prompt_tokens": prompt_tokens,
                "completion_tokens": completion_tokens,
                "total_tokens": prompt_tokens + completion_tokens,
            },
        }

    return app


def serve_adapter(base_model: str | Path, adapter_dir: str | Path | None, port: int, host: str = "127.0.0.1") -> None:
    import uvicorn

    app = create_app(base_model, adapter_dir)
    logger.info("serving %s (+%s) on %s:%d", base_model, adapter_dir, host, port)
    uvicorn.run(app, host=host, port=port, log_level="warning")
