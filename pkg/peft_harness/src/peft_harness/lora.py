"""Minimal LoRA: low-rank additive adapters on attention projections.

The base weights stay frozen; each adapted linear layer gains A (r x in)
and B (out x r) with B zero-initialised, so training starts from the base
model's behaviour. Adapter weights serialize separately from the base.
"""

from __future__ import annotations

import contextlib
import json
import math
from pathlib import Path

import torch
from torch import nn

from peft_harness.config import LoraConfigRecord
from peft_harness.errors import TrainingError

DEFAULT_TARGET_MODULES = ("q_proj", "v_proj")

ADAPTER_WEIGHTS_FILE = "adapter_weights.pt"
ADAPTER_CONFIG_FILE = "lora_config.json"


class LoraLinear(nn.Module):
    """A frozen linear layer plus a trainable low-rank residual."""

    def __init__(self, base: nn.Linear, r: int, alpha: float, dropout: float):
        super().__init__()
        self.base = base
        self.r = r
        self.scaling = alpha / r
        self.lora_A = nn.Parameter(torch.empty(r, base.in_features))
        self.lora_B = nn.Parameter(torch.zeros(base.out_features, r))
        nn.init.kaiming_uniform_(self.lora_A, a=math.sqrt(5))
        self.lora_dropout = nn.Dropout(dropout)
        self.enabled = True

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        out = self.base(x)
        if self.enabled:
            update = self.lora_dropout(x) @ self.lora_A.T @ self.lora_B.T
            out = out + update * self.scaling
        return out


def apply_lora(
    model: nn.Module,
    record: LoraConfigRecord,
    target_modules: tuple[str, ...] = DEFAULT_TARGET_MODULES,
) -> list[str]:
    """Freeze the base model and wrap matching linears; returns adapted paths."""
    for param in model.parameters():
        param.requires_grad_(False)

    adapted: list[str] = []
    for name, module in list(model.named_modules()):
        for child_name, child in list(module.named_children()):
            if child_name in target_modules and isinstance(child, nn.Linear):
                wrapped = LoraLinear(child, record.r, record.lora_alpha, record.lora_dropout)
                setattr(module, child_name, wrapped)
                adapted.append(f"{name}.{child_name}" if name else child_name)
    if not adapted:
        raise TrainingError(f"no target modules {target_modules} found in model")
    return adapted


def adapter_parameters(model: nn.Module) -> list[nn.Parameter]:
    return [p for p in model.parameters() if p.requires_grad]


def adapter_state_dict(model: nn.Module) -> dict[str, torch.Tensor]:
    state = {}
    for name, module in model.named_modules():
        if isinstance(module, LoraLinear):
            state[f"{name}.lora_A"] = module.lora_A.detach().clone()
            state[f"{name}.lora_B"] = module.lora_B.detach().clone()
    return state


def load_adapter_state(model: nn.Module, state: dict[str, torch.Tensor]) -> None:
    modules = {name: module for name, module in model.named_modules() if isinstance(module, LoraLinear)}
    expected = {f"{n}.lora_A" for n in modules} | {f"{n}.lora_B" for n in modules}
    if expected != set(state):
        raise TrainingError(
            "adapter does not match the model's adapted modules "
            f"(expected {len(expected)} tensors, got {len(state)})"
        )
    with torch.no_grad():
        for name, module in modules.items():
            a, b = state[f"{name}.lora_A"], state[f"{name}.lora_B"]
            if a.shape != module.lora_A.shape or b.shape != module.lora_B.shape:
                raise TrainingError(
                    f"adapter shape mismatch at {name}: {tuple(a.shape)}/{tuple(b.shape)} vs "
                    f"{tuple(module.lora_A.shape)}/{tuple(module.lora_B.shape)}"
                )
            module.lora_A.copy_(a)
            module.lora_B.copy_(b)


def save_adapter(model: nn.Module, record: LoraConfigRecord, directory: str | Path) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    torch.save(adapter_state_dict(model), directory / ADAPTER_WEIGHTS_FILE)
    (directory / ADAPTER_CONFIG_FILE).write_text(
        json.dumps(record.to_dict(), indent=2, sort_keys=True) + "\n"
    )
    return directory


def load_adapter(model: nn.Module, directory: str | Path, target_modules=DEFAULT_TARGET_MODULES) -> LoraConfigRecord:
    """Apply LoRA per the saved config and load its weights into ``model``."""
    directory = Path(directory)
    config_path = directory / ADAPTER_CONFIG_FILE
    if not config_path.is_file():
        raise TrainingError(f"not an adapter directory: {directory}")
    record = LoraConfigRecord(**json.loads(config_path.read_text()))
    apply_lora(model, record, target_modules)
    state = torch.load(directory / ADAPTER_WEIGHTS_FILE, map_location="cpu", weights_only=True)
    load_adapter_state(model, state)
    return record


def set_adapter_enabled(model: nn.Module, enabled: bool) -> None:
    for module in model.modules():
        if isinstance(module, LoraLinear):
            module.enabled = enabled


@contextlib.contextmanager
def adapter_disabled(model: nn.Module):
    set_adapter_enabled(model, False)
    try:
        yield
    finally:
        set_adapter_enabled(model, True)


def parameter_bytes(parameters) -> int:
    return sum(p.numel() * p.element_size() for p in parameters)
