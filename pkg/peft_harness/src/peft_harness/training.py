"""Adapter training loop.

Consumes the exported failure training set (line-delimited JSON rows with
``prompt`` and ``target``), trains LoRA adapters on a frozen causal LM,
logs per-step losses, and checkpoints every ``save_steps`` optimizer steps
so interrupted runs resume exactly. Examples are visited in file order
(no shuffling) to keep resumed runs bit-stable.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import torch
from torch import nn
from transformers import AutoModelForCausalLM

from peft_harness.config import LoraConfigRecord
from peft_harness.errors import TrainingError
from peft_harness.lora import (
    DEFAULT_TARGET_MODULES,
    adapter_parameters,
    adapter_state_dict,
    apply_lora,
    load_adapter_state,
    save_adapter,
)
from peft_harness.tokenizer import ByteTokenizer

logger = logging.getLogger(__name__)


@dataclass
class TrainResult:
    adapter_dir: Path
    loss_curve_path: Path
    initial_loss: float
    final_loss: float
    steps_completed: int
    manifest: dict


def load_training_rows(path: str | Path) -> list[dict]:
    path = Path(path)
    if not path.is_file():
        raise TrainingError(f"training set not found: {path}")
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line_number, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            if not isinstance(row.get("prompt"), str) or not row["prompt"]:
                raise TrainingError(f"row {line_number}: missing non-empty 'prompt'")
            if not isinstance(row.get("target"), str) or not row["target"]:
                raise TrainingError(f"row {line_number}: missing non-empty 'target'")
            rows.append({"prompt": row["prompt"], "target": row["target"]})
    if not rows:
        raise TrainingError(f"training set is empty: {path}")
    return rows


def encode_example(tok: ByteTokenizer, prompt: str, target: str, max_len: int) -> tuple[list[int], list[int]]:
    """Token ids and labels; loss applies to the target span only."""
    prompt_ids = [tok.bos_id, *tok.encode(prompt)]
    target_ids = [*tok.encode(target), tok.eos_id]
    ids = prompt_ids + target_ids
    labels = [-100] * len(prompt_ids) + list(target_ids)
    if len(ids) > max_len:  # keep the target; trim the prompt head
        overflow = len(ids) - max_len
        ids, labels = ids[overflow:], labels[overflow:]
    return ids, labels


def make_batches(rows: list[dict], tok: ByteTokenizer, batch_size: int, max_len: int) -> list[dict]:
    encoded = [encode_example(tok, r["prompt"], r["target"], max_len) for r in rows]
    batches = []
    for start in range(0, len(encoded), batch_size):
        group = encoded[start : start + batch_size]
        width = max(len(ids) for ids, _ in group)
        input_ids, labels, attention = [], [], []
        for ids, lab in group:
            pad = width - len(ids)
            input_ids.append(ids + [tok.pad_id] * pad)
            labels.append(lab + [-100] * pad)
            attention.append([1] * len(ids) + [0] * pad)
        batches.append(
            {
                "input_ids": torch.tensor(input_ids, dtype=torch.long),
                "labels": torch.tensor(labels, dtype=torch.long),
                "attention_mask": torch.tensor(attention, dtype=torch.long),
            }
        )
    return batches


@torch.no_grad()
def evaluate_loss(model: nn.Module, batches: list[dict]) -> float:
    """Token-weighted mean NLL over all batches, dropout off."""
    was_training = model.training
    model.eval()
    total_nll, total_tokens = 0.0, 0
    for batch in batches:
        out = model(**batch)
        n_tokens = int((batch["labels"] != -100).sum())
        total_nll += float(out.loss) * n_tokens
        total_tokens += n_tokens
    if was_training:
        model.train()
    return total_nll / total_tokens


def _build_optimizer(params, cfg: LoraConfigRecord):
    if cfg.optim == "paged_adamw_8bit":
        try:
            import bitsandbytes as bnb  # GPU-only dependency

            return bnb.optim.PagedAdamW8bit(params, lr=cfg.learning_rate), "paged_adamw_8bit"
        except ImportError:
            logger.warning("bitsandbytes unavailable; falling back to torch AdamW")
            return torch.optim.AdamW(params, lr=cfg.learning_rate), "adamw_torch_fallback"
    if cfg.optim in ("adamw", "adamw_torch"):
        return torch.optim.AdamW(params, lr=cfg.learning_rate), "adamw_torch"
    raise TrainingError(f"unknown optimizer: {cfg.optim!r}")


def _latest_checkpoint(directory: Path) -> Path | None:
    if not directory.is_dir():
        return None
    checkpoints = sorted(directory.glob("step-*.pt"))
    return checkpoints[-1] if checkpoints else None


def train_adapter(
    training_set: str | Path,
    base_model: str | Path,
    cfg: LoraConfigRecord | None = None,
    *,
    out_dir: str | Path,
    overrides: dict | None = None,
    target_modules: tuple[str, ...] = DEFAULT_TARGET_MODULES,
    seed: int = 0,
    max_steps: int | None = None,
    resume: bool = False,
    max_seq_len: int = 192,
) -> TrainResult:
    """Train a LoRA adapter; returns the adapter directory and loss summary.

    The base model's weights are never modified: the adapter is an additive
    set of low-rank parameters saved separately.
    """
    cfg, applied_overrides = (cfg or LoraConfigRecord()).with_overrides(overrides)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    checkpoints_dir = out_dir / "checkpoints"

    rows = load_training_rows(training_set)
    tok = ByteTokenizer()
    torch.manual_seed(seed)

    try:
        model = AutoModelForCausalLM.from_pretrained(str(base_model))
    except (OSError, ValueError) as exc:
        raise TrainingError(f"cannot load base model {base_model}: {exc}") from exc

    apply_lora(model, cfg, target_modules)
    if cfg.gradient_checkpointing:
        model.config.use_cache = False
        model.gradient_checkpointing_enable()
        model.enable_input_require_grads()

    micro_batches = make_batches(rows, tok, cfg.per_device_train_batch_size, max_seq_len)
    accum = cfg.gradient_accumulation_steps
    stream_length = cfg.num_train_epochs * len(micro_batches)
    total_steps = (stream_length + accum - 1) // accum
    if max_steps is not None:
        total_steps = min(total_steps, max_steps)

    params = adapter_parameters(model)
    optimizer, optimizer_used = _build_optimizer(params, cfg)
    scheduler = None
    if cfg.warmup_steps > 0:
        scheduler = torch.optim.lr_scheduler.LambdaLR(
            optimizer, lambda step: min(1.0, (step + 1) / cfg.warmup_steps)
        )

    initial_loss = evaluate_loss(model, micro_batches)

    start_step = 0
    if resume:
        checkpoint_path = _latest_checkpoint(checkpoints_dir)
        if checkpoint_path is not None:
            snapshot = torch.load(checkpoint_path, map_location="cpu", weights_only=False)
            load_adapter_state(model, snapshot["adapter"])
            optimizer.load_state_dict(snapshot["optimizer"])
            torch.set_rng_state(snapshot["torch_rng"])
            start_step = snapshot["step"]
            logger.info("resuming from %s (step %d)", checkpoint_path.name, start_step)

    curve: list[tuple[int, float, float | None]] = []
    model.train()
    try:
        for step in range(start_step, total_steps):
            optimizer.zero_grad(set_to_none=True)
            step_loss = 0.0
            consumed = 0
            for micro_index in range(step * accum, min((step + 1) * accum, stream_length)):
                batch = micro_batches[micro_index % len(micro_batches)]
                loss = model(**batch).loss / accum
                loss.backward()
                step_loss += float(loss.detach()) * accum
                consumed += 1
            optimizer.step()
            if scheduler is not None:
                scheduler.step()

            step_number = step + 1
            train_loss = step_loss / max(1, consumed)
            eval_loss = None
            if cfg.do_eval and step_number % cfg.eval_steps == 0:
                eval_loss = evaluate_loss(model, micro_batches)
            curve.append((step_number, train_loss, eval_loss))
            if step_number % cfg.logging_steps == 0:
                logger.info("step %d/%d loss %.4f", step_number, total_steps, train_loss)

            if step_number % cfg.save_steps == 0:
                checkpoints_dir.mkdir(parents=True, exist_ok=True)
                torch.save(
                    {
                        "step": step_number,
                        "adapter": adapter_state_dict(model),
                        "optimizer": optimizer.state_dict(),
                        "torch_rng": torch.get_rng_state(),
                    },
                    checkpoints_dir / f"step-{step_number:05d}.pt",
                )
    except torch.cuda.OutOfMemoryError as exc:
        raise TrainingError(
            "out of memory during training; enable gradient_checkpointing or "
            "reduce per_device_train_batch_size"
        ) from exc

    final_loss = evaluate_loss(model, micro_batches)

    loss_curve_path = out_dir / "loss_curve.csv"
    with open(loss_curve_path, "w", encoding="utf-8") as fh:
        fh.write("step,train_loss,eval_loss\n")
        for step_number, train_loss, eval_loss in curve:
            eval_text = "" if eval_loss is None else repr(eval_loss)
            fh.write(f"{step_number},{train_loss!r},{eval_text}\n")

    adapter_dir = save_adapter(model, cfg, out_dir / "adapter")
    manifest = {
        "base_model": str(base_model),
        "training_set": str(training_set),
        "n_rows": len(rows),
        "seed": seed,
        "target_modules": list(target_modules),
        "overrides": applied_overrides,
        "max_steps": max_steps,
        "optim_requested": cfg.optim,
        "optim_used": optimizer_used,
        "steps_completed": total_steps,
        "initial_loss": initial_loss,
        "final_loss": final_loss,
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")

    return TrainResult(
        adapter_dir=adapter_dir,
        loss_curve_path=loss_curve_path,
        initial_loss=initial_loss,
        final_loss=final_loss,
        steps_completed=total_steps,
        manifest=manifest,
    )
