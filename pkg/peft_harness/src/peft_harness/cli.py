"""Command line: make-tiny-base / train / serve."""

from __future__ import annotations

import argparse
import logging
import sys

from peft_harness.config import LoraConfigRecord
from peft_harness.errors import HarnessError


def cmd_make_tiny_base(args) -> int:
    from peft_harness.tiny import build_tiny_base_model

    path = build_tiny_base_model(args.out, seed=args.seed)
    print(f"tiny base model -> {path}")
    return 0


def cmd_train(args) -> int:
    from peft_harness.training import train_adapter

    overrides = {}
    if args.learning_rate is not None:
        overrides["learning_rate"] = args.learning_rate
    if args.epochs is not None:
        overrides["num_train_epochs"] = args.epochs

    result = train_adapter(
        args.training_set,
        args.base_model,
        LoraConfigRecord(),
        out_dir=args.out,
        overrides=overrides or None,
        seed=args.seed,
        resume=args.resume,
        max_steps=args.max_steps,
    )
    print(f"adapter -> {result.adapter_dir}")
    print(f"loss: {result.initial_loss:.4f} -> {result.final_loss:.4f} over {result.steps_completed} steps")
    return 0


def cmd_serve(args) -> int:
    from peft_harness.serving import serve_adapter

    serve_adapter(args.base_model, args.adapter, args.port, host=args.host)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="peft-harness", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    tiny = sub.add_parser("make-tiny-base", help="build the smoke-scale base model")
    tiny.add_argument("--out", required=True)
    tiny.add_argument("--seed", type=int, default=0)
    tiny.set_defaults(fn=cmd_make_tiny_base)

    train = sub.add_parser("train", help="train a LoRA adapter on a failure training set")
    train.add_argument("--training-set", required=True)
    train.add_argument("--base-model", required=True)
    train.add_argument("--out", required=True)
    train.add_argument("--seed", type=int, default=0)
    train.add_argument("--resume", action="store_true")
    train.add_argument("--max-steps", type=int, dest="max_steps")
    train.add_argument("--learning-rate", type=float, dest="learning_rate")
    train.add_argument("--epochs", type=int)
    train.set_defaults(fn=cmd_train)

    serve = sub.add_parser("serve", help="serve base+adapter behind the chat REST contract")
    serve.add_argument("--base-model", required=True)
    serve.add_argument("--adapter")
    serve.add_argument("--port", type=int, default=8199)
    serve.add_argument("--host", default="127.0.0.1")
    serve.set_defaults(fn=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level="INFO")
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except HarnessError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
