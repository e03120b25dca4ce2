"""LoRA training configuration.

The defaults are the published fine-tuning configuration; any override is
recorded in the run manifest so the emitted ``lora_config.json`` always
reflects what actually ran.
"""

from __future__ import annotations

from dataclasses import dataclass, fields


@dataclass
class LoraConfigRecord:
    r: int = 8
    lora_alpha: int = 16
    bias: str = "None"
    lora_dropout: float = 0.05
    task_type: str = "CAUSAL_LM"
    warmup_steps: int = 0
    per_device_train_batch_size: int = 2
    gradient_accumulation_steps: int = 2
    num_train_epochs: int = 3
    learning_rate: float = 2e-5
    optim: str = "paged_adamw_8bit"
    logging_steps: int = 25
    save_steps: int = 1
    eval_steps: int = 25
    do_eval: bool = True
    gradient_checkpointing: bool = True

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def with_overrides(self, overrides: dict | None) -> tuple["LoraConfigRecord", dict]:
        """Apply overrides; returns (new record, the overrides that differed)."""
        overrides = overrides or {}
        known = {f.name for f in fields(self)}
        unknown = set(overrides) - known
        if unknown:
            raise ValueError(f"unknown config overrides: {sorted(unknown)}")
        applied = {k: v for k, v in overrides.items() if getattr(self, k) != v}
        merged = LoraConfigRecord(**{**self.to_dict(), **overrides})
        return merged, applied
