"""CLI: ``embed`` exports an embedding table for a string list;
``finetune`` runs masked-LM fine-tuning over a corpus file.

Both commands write a run manifest recording the exact torch and
transformers versions next to their output.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import llm_embedder
from llm_embedder.embedder import DEFAULT_MODEL, EmbedJob, embed_strings, read_string_list
from llm_embedder.finetune import finetune_mlm


def _write_manifest(command: str, config: dict, inputs: list[str],
                    outputs: list[str], started: float) -> None:
    import torch
    import transformers

    manifest = {
        "command": command,
        "config": {k: v for k, v in sorted(config.items())},
        "inputs": inputs,
        "outputs": outputs,
        "tool_version": llm_embedder.__version__,
        "torch_version": torch.__version__,
        "transformers_version": transformers.__version__,
        "wall_clock_s": round(time.monotonic() - started, 3),
        "started_utc": datetime.now(timezone.utc).isoformat(),
    }
    target = Path(outputs[0])
    path = target.with_name(target.name + ".manifest.json")
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", "utf-8")


def cmd_embed(args: argparse.Namespace) -> int:
    started = time.monotonic()
    strings = read_string_list(args.strings)
    job = EmbedJob(strings=strings, output_path=args.out,
                   model=args.model, batch_size=args.batch_size)
    embed_strings(job)
    print(f"embed: {len(set(strings))} strings -> {args.out}")
    _write_manifest("embed",
                    {"model": args.model, "batch_size": args.batch_size},
                    [args.strings], [args.out], started)
    return 0


def cmd_finetune(args: argparse.Namespace) -> int:
    started = time.monotonic()
    finetune_mlm(args.corpus, args.out, args.model, epochs=args.epochs, seed=args.seed)
    print(f"finetune: {args.epochs} epochs on {args.corpus} -> {args.out}")
    _write_manifest("finetune",
                    {"model": args.model, "epochs": args.epochs, "seed": args.seed},
                    [args.corpus], [args.out], started)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ctm-llm",
        description="Export transformer string embeddings and fine-tune the model.",
    )
    parser.add_argument("--version", action="version", version=llm_embedder.__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("embed", help="embed a string list into a table file")
    p.add_argument("--model", default=DEFAULT_MODEL, help="model id or local directory")
    p.add_argument("--strings", required=True, help="input file, one string per line")
    p.add_argument("--out", required=True, help="embedding table output path")
    p.add_argument("--batch-size", dest="batch_size", type=int, default=32)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("finetune", help="masked-LM fine-tuning over a corpus file")
    p.add_argument("--model", default=DEFAULT_MODEL, help="model id or local directory")
    p.add_argument("--corpus", required=True, help="fine-tuning corpus text file")
    p.add_argument("--epochs", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output model directory")
    p.set_defaults(func=cmd_finetune)

    return parser


def main(argv: list[str] | None = None) -> int:
    import transformers

    transformers.logging.set_verbosity_error()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
