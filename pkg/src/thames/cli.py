"""Command-line surface: ingest / generate / evaluate / report / export-peft.

Outputs land in content-addressed run directories under the configured
output dir; a completed run directory is never mutated, and an incomplete
generate run resumes from its stage checkpoints.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import logging
import os
import sys
from pathlib import Path

from thames import evaluation, mitigation, prompts, reports, testset as forge
from thames.config import RunConfig, build_judge_gateway, build_subject_gateway
from thames.errors import BudgetExceeded, ConfigError, ThamesError
from thames.ioutil import atomic_write_json, canonical_json, sha256_text, write_jsonl
from thames.knowledge_base import embed_all, ingest_corpus, load_kb, save_kb, verify_manifest

logger = logging.getLogger(__name__)

COMPLETE_MARKER = "COMPLETE"


def run_directory(config: RunConfig, command: str, extra: dict | None = None) -> Path:
    """Content-addressed directory for one command invocation."""
    content = {"command": command, "config": config.content_dict(), "extra": extra or {}}
    digest = sha256_text(canonical_json(content))[:12]
    return Path(config.output_dir) / f"{command}-{digest}"


@contextlib.contextmanager
def run_lock(directory: Path):
    """One command at a time per run directory."""
    directory.mkdir(parents=True, exist_ok=True)
    lock_path = directory / ".lock"
    try:
        fd = os.open(lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise ThamesError(f"run directory is locked (another command running?): {lock_path}")
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield
    finally:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(lock_path)


def _mark_complete(directory: Path) -> None:
    (directory / COMPLETE_MARKER).write_text("ok\n")


def _is_complete(directory: Path) -> bool:
    return (directory / COMPLETE_MARKER).is_file()


def _write_usage(gateway, directory: Path, name: str = "usage.json") -> None:
    atomic_write_json(directory / name, {"snapshot": gateway.ledger.snapshot(), "records": gateway.ledger.dump()})


# -- subcommands ----------------------------------------------------------------


def cmd_ingest(args) -> int:
    config = RunConfig.from_file(args.config)
    config.validate(require_corpus=True)
    kb_dir = config.resolved_kb_dir()
    gateway = build_judge_gateway(config)

    if (kb_dir / "manifest.json").is_file():
        kb = load_kb(kb_dir)
        verify_manifest(kb)
        print(f"knowledge base already at {kb_dir}; re-embedding via cache")
    else:
        kb = ingest_corpus(config.corpus_paths, config.chunking)

    embed_all(kb, gateway, checkpoint_dir=kb_dir)
    save_kb(kb, kb_dir)
    _write_usage(gateway, kb_dir)

    token_estimate = sum(len(n.text) // 4 for n in kb.nodes)
    snapshot = gateway.ledger.snapshot()
    print(f"ingested {len(kb)} nodes (~{token_estimate} tokens) -> {kb_dir}")
    print(f"embedding calls: {snapshot['calls']}, cache hits: {snapshot['cache_hits']}")
    return 0


def cmd_generate(args) -> int:
    config = RunConfig.from_file(args.config)
    _apply_overrides(config, args)
    config.validate()

    kb_dir = config.resolved_kb_dir()
    kb = load_kb(kb_dir)
    run_dir = run_directory(config, "generate")
    if _is_complete(run_dir):
        print(f"already complete: {run_dir}")
        return 0

    gateway = build_judge_gateway(config)
    with run_lock(run_dir):
        try:
            result = forge.build_testset(
                kb,
                config.per_type_target,
                config.seed,
                gateway,
                config.forge,
                checkpoint_dir=run_dir / "checkpoints",
                budget_tokens=config.budget_tokens,
            )
        except BudgetExceeded as exc:
            _write_usage(gateway, run_dir)
            print(f"aborted: {exc}", file=sys.stderr)
            return 1
        forge.save_testset(result, run_dir)
        save_kb(kb, kb_dir)  # persist updated retrieval counts
        _write_usage(gateway, run_dir)
        if result.generation_manifest["shortfall"]:
            atomic_write_json(run_dir / "shortfall.json", result.generation_manifest["shortfall"])
            print(f"shortfall: {result.generation_manifest['shortfall']}", file=sys.stderr)
        _mark_complete(run_dir)

    print(f"testset: {len(result.items)} items -> {run_dir}")
    return 0


def cmd_evaluate(args) -> int:
    config = RunConfig.from_file(args.config)
    _apply_overrides(config, args)
    config.validate()

    items_dir = Path(args.testset)
    ts = forge.load_testset(items_dir)
    kb = load_kb(config.resolved_kb_dir())
    judge = build_judge_gateway(config)
    subject = build_subject_gateway(config)

    store = None
    if config.strategy == "rag":
        if not config.failure_store or not Path(config.failure_store).is_file():
            raise ConfigError("rag strategy needs config.failure_store pointing at a saved store")
        store = mitigation.load_failure_store(config.failure_store)
    strategy = mitigation.strategy_by_name(config.strategy, store=store, k=config.rag_k, gateway=judge)

    run_dir = run_directory(config, "evaluate", {"testset": ts.fingerprint(), "task": args.task})
    if _is_complete(run_dir):
        print(f"already complete: {run_dir}")
        return 0

    with run_lock(run_dir):
        if args.task in ("generation", "both"):
            gen_run = evaluation.run_text_generation(
                subject, ts, strategy, judge, config.seed, kb,
                relevancy_n=config.relevancy_n,
            )
            evaluation.save_run(gen_run, run_dir / "text_generation")
            print(f"text generation aggregates: {json.dumps(gen_run.aggregates, sort_keys=True)}")
        if args.task in ("identification", "both"):
            ident_run = evaluation.run_identification(subject, ts, strategy, judge, config.seed)
            evaluation.save_run(ident_run, run_dir / "identification")
            failures = evaluation.extract_failures(ident_run, ts, judge)
            mitigation.save_failure_store(mitigation.build_failure_store(failures), run_dir / "failures.jsonl")
            print(f"identification aggregates: {json.dumps(ident_run.aggregates, sort_keys=True)}")
            print(f"failure cases: {len(failures)}")
        _write_usage(judge, run_dir)
        _mark_complete(run_dir)

    print(f"run -> {run_dir}")
    return 0


def cmd_report(args) -> int:
    runs = []
    for run_dir in args.run_dirs:
        for task_dir in ("text_generation", "identification"):
            candidate = Path(run_dir) / task_dir
            if (candidate / "summary.json").is_file():
                runs.append(evaluation.load_run(candidate))
    if not runs:
        raise ThamesError("no runs found under the given directories")

    out_dir = Path(args.out) if args.out else Path(args.run_dirs[0]) / "report"
    table = evaluation.compare_runs(runs)
    written = reports.write_comparison(table, out_dir)
    print(f"comparison -> {written['markdown']}")

    if args.kb_dir:
        kb = load_kb(args.kb_dir)
        sampling = reports.write_sampling_report(kb, out_dir)
        print(f"sampling report -> {sampling['json']}")
    return 0


def cmd_export_peft(args) -> int:
    store_path = Path(args.run_dir) / "failures.jsonl"
    if not store_path.is_file():
        print(f"no failure store at {store_path}", file=sys.stderr)
        return 1
    store = mitigation.load_failure_store(store_path)
    if len(store) == 0:
        print("failure store is empty; nothing to export", file=sys.stderr)
        return 1

    rows = [training_row(case) for case in store.cases]
    _validate_training_rows(rows)
    out_path = Path(args.out) if args.out else Path(args.run_dir) / "peft_training.jsonl"
    write_jsonl(out_path, rows)
    print(f"exported {len(rows)} training rows -> {out_path}")
    return 0


def training_row(case: mitigation.FailureCase) -> dict:
    """Identification prompt with the gold verdict as the training target."""
    user = (
        f"Question: {case.question}\n"
        f"Candidate answer: {case.presented_answer}\n\n"
        "Is the candidate answer hallucinated? Answer Yes or No:"
    )
    prompt = prompts.render("identification_judgment") + "\n\n" + user
    return {"prompt": prompt, "target": "Yes" if case.true_label else "No"}


def _validate_training_rows(rows: list[dict]) -> None:
    import jsonschema
    from importlib import resources

    schema = json.loads(
        resources.files("thames.schemas").joinpath("peft_training_row.schema.json").read_text()
    )
    for row in rows:
        jsonschema.validate(row, schema)


def _apply_overrides(config: RunConfig, args) -> None:
    if getattr(args, "seed", None) is not None:
        config.seed = args.seed
    if getattr(args, "per_type_target", None) is not None:
        config.per_type_target = args.per_type_target
    if getattr(args, "budget_tokens", None) is not None:
        config.budget_tokens = args.budget_tokens
    if getattr(args, "strategy", None) is not None:
        config.strategy = args.strategy


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="thames", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    ingest = sub.add_parser("ingest", help="build and embed the knowledge base")
    ingest.add_argument("--config", required=True)
    ingest.set_defaults(fn=cmd_ingest)

    generate = sub.add_parser("generate", help="generate a benchmark testset")
    generate.add_argument("--config", required=True)
    generate.add_argument("--seed", type=int)
    generate.add_argument("--per-type-target", type=int, dest="per_type_target")
    generate.add_argument("--budget-tokens", type=int, dest="budget_tokens")
    generate.set_defaults(fn=cmd_generate)

    evaluate = sub.add_parser("evaluate", help="evaluate a model on a testset")
    evaluate.add_argument("--config", required=True)
    evaluate.add_argument("--testset", required=True)
    evaluate.add_argument("--task", choices=("generation", "identification", "both"), default="both")
    evaluate.add_argument("--strategy", choices=("original", "icl", "rag"))
    evaluate.add_argument("--seed", type=int)
    evaluate.set_defaults(fn=cmd_evaluate)

    report = sub.add_parser("report", help="comparison tables and sampling plots")
    report.add_argument("run_dirs", nargs="+")
    report.add_argument("--kb-dir", dest="kb_dir")
    report.add_argument("--out")
    report.set_defaults(fn=cmd_report)

    export = sub.add_parser("export-peft", help="export failure cases as a training set")
    export.add_argument("run_dir")
    export.add_argument("--out")
    export.set_defaults(fn=cmd_export_peft)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=os.environ.get("THAMES_LOG", "WARNING"))
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ThamesError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
