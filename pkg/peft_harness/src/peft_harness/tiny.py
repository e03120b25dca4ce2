"""Tiny byte-vocabulary causal LM for desk-scale smoke training."""

from __future__ import annotations

from pathlib import Path

import torch
from transformers import LlamaConfig, LlamaForCausalLM

from peft_harness.tokenizer import PAD_ID, VOCAB_SIZE


def build_tiny_base_model(out_dir: str | Path, *, seed: int = 0) -> Path:
    """Random-initialised 2-layer model (~115k params) saved to ``out_dir``."""
    config = LlamaConfig(
        vocab_size=VOCAB_SIZE,
        hidden_size=64,
        intermediate_size=128,
        num_hidden_layers=2,
        num_attention_heads=2,
        num_key_value_heads=2,
        max_position_embeddings=512,
        pad_token_id=PAD_ID,
    )
    torch.manual_seed(seed)
    model = LlamaForCausalLM(config)
    out_dir = Path(out_dir)
    model.save_pretrained(out_dir)
    return out_dir
