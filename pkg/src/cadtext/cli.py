"""Command-line entry point orchestrating extraction, corpus building,
task sampling, baseline training, evaluation and reporting.

Configuration layering per subcommand: built-in defaults, then an
optional flat key=value config file (--config), then explicit flags.
CTM_SEED in the environment is the fallback for any unset --seed.
Every artifact-producing command writes a run manifest next to its
output.
"""

from __future__ import annotations

import argparse
import json
import multiprocessing
import os
import re
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import cadtext
from cadtext import step_extract
from cadtext.corpus import (
    CleaningConfig,
    Corpus,
    DocumentRecord,
    build_corpus,
    read_corpus_jsonl,
    read_splits_tsv,
    write_corpus_jsonl,
    write_finetune_corpus,
    write_splits_tsv,
)
from cadtext.embeddings import bow_vectorize, load_embedding_table, save_embedding_table
from cadtext.evaluate import (
    TrialReport,
    evaluate_task,
    read_predictions_jsonl,
    write_predictions_jsonl,
)
from cadtext.fasteners import corpus_fastener_report, load_standards
from cadtext.neural import MLPTrainConfig, SetEncoderConfig
from cadtext.skipgram import SkipGramConfig, train_subword_skipgram
from cadtext.tasks import (
    batches_filename,
    build_docname_batches,
    build_missing_part_batches,
    pairs_filename,
    sample_two_parts,
    write_batches_jsonl,
    write_pairs_tsv,
)

RANDOM_ROWS = {"two-parts": 50.0, "missing-part": 0.2, "doc-name": 0.2}


class CLIError(Exception):
    """Bad invocation or unusable input; exits nonzero with a message."""


def _read_config_file(path: str) -> dict[str, str]:
    values: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text("utf-8").splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise CLIError(f"{path}:{lineno}: expected key=value")
        key, _, value = line.partition("=")
        values[key.strip().replace("-", "_")] = value.strip()
    return values


def _resolve(args: argparse.Namespace, defaults: dict) -> dict:
    """Layer defaults < config file < explicit flags; coerce types from
    the defaults' values."""
    resolved = dict(defaults)
    if getattr(args, "config", None):
        file_values = _read_config_file(args.config)
        for key, raw in file_values.items():
            if key not in resolved:
                raise CLIError(f"unknown config key {key!r}")
            ref = resolved[key]
            if isinstance(ref, bool):
                resolved[key] = raw.lower() in ("1", "true", "yes")
            elif isinstance(ref, int):
                resolved[key] = int(raw)
            elif isinstance(ref, float):
                resolved[key] = float(raw)
            else:
                resolved[key] = raw
    for key in resolved:
        flag_value = getattr(args, key, None)
        if flag_value is not None:
            resolved[key] = flag_value
    if "seed" in resolved and resolved["seed"] is None:
        resolved["seed"] = int(os.environ.get("CTM_SEED", "0"))
    return resolved


def _write_manifest(command: str, config: dict, inputs: list[str],
                    outputs: list[str], started: float) -> None:
    manifest = {
        "command": command,
        "config": {k: v for k, v in sorted(config.items())},
        "seeds": [config["seed"]] if "seed" in config else [],
        "inputs": inputs,
        "outputs": outputs,
        "tool_version": cadtext.__version__,
        "wall_clock_s": round(time.monotonic() - started, 3),
        "started_utc": datetime.now(timezone.utc).isoformat(),
    }
    target = Path(outputs[0]) if outputs else Path(f"{command}.out")
    path = target.with_name(target.name + ".manifest.json")
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", "utf-8")


def _load_corpus(corpus_path: str, splits_path: str | None) -> Corpus:
    records = read_corpus_jsonl(corpus_path)
    if splits_path:
        split = read_splits_tsv(splits_path)
    else:
        split = {r.doc_id: "train" for r in records}
    return Corpus(records=records, split=split, seed=0)


# ---------------------------------------------------------------------------
# extract

def _scan_one(task: tuple[str, str]) -> tuple[str, dict[str, int], int]:
    path, doc_id = task
    warn = [0]
    scan = step_extract.scan_step_file(Path(path).read_bytes(), file_id=path)
    counts = step_extract.file_name_multiset(scan, warn_tally=warn)
    return doc_id, counts, scan.warnings + warn[0]


def cmd_extract(args: argparse.Namespace) -> int:
    started = time.monotonic()
    cfg = _resolve(args, {"in_dir": None, "out": None, "doc_id_pattern": r"^([^_]+)",
                          "jobs": 1, "seed": 0})
    if not cfg["in_dir"] or not cfg["out"]:
        raise CLIError("extract: --in and --out are required")
    root = Path(cfg["in_dir"])
    if not root.exists():
        raise CLIError(f"extract: input directory {root} does not exist")
    pattern = re.compile(cfg["doc_id_pattern"])
    files = sorted(str(p) for p in root.rglob("*") if p.suffix.lower() in (".step", ".stp"))
    tasks = []
    for path in files:
        m = pattern.search(Path(path).stem)
        doc_id = m.group(1) if m else Path(path).stem
        tasks.append((path, doc_id))

    if cfg["jobs"] > 1:
        with multiprocessing.Pool(cfg["jobs"]) as pool:
            results = pool.map(_scan_one, tasks)
    else:
        results = [_scan_one(t) for t in tasks]

    per_doc: dict[str, list[dict[str, int]]] = {}
    total_warnings = 0
    for doc_id, counts, warnings in results:
        per_doc.setdefault(doc_id, []).append(counts)
        total_warnings += warnings

    with open(cfg["out"], "w", encoding="utf-8", newline="\n") as fh:
        for doc_id in sorted(per_doc):
            aggregated = step_extract.aggregate_document(per_doc[doc_id])
            fh.write(json.dumps(
                {"doc_id": doc_id, "parts": dict(sorted(aggregated.items()))},
                ensure_ascii=False, sort_keys=True))
            fh.write("\n")
    if total_warnings:
        print(f"extract: skipped or kept-raw records: {total_warnings}", file=sys.stderr)
    _write_manifest("extract", cfg, files, [cfg["out"]], started)
    return 0


# ---------------------------------------------------------------------------
# build-corpus

def cmd_build_corpus(args: argparse.Namespace) -> int:
    started = time.monotonic()
    cfg = _resolve(args, {"parts": None, "metadata": "", "out_dir": None,
                          "seed": None, "dedup_include_doc_name": True})
    if not cfg["parts"] or not cfg["out_dir"]:
        raise CLIError("build-corpus: --parts and --out-dir are required")
    out_dir = Path(cfg["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)

    parts_by_doc: dict[str, dict[str, int]] = {}
    with open(cfg["parts"], encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                obj = json.loads(line)
                parts_by_doc[obj["doc_id"]] = obj.get("parts", {})

    meta_by_doc: dict[str, dict] = {}
    if cfg["metadata"]:
        with open(cfg["metadata"], encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    obj = json.loads(line)
                    meta_by_doc[obj["doc_id"]] = obj

    records = []
    for doc_id in sorted(set(parts_by_doc) | set(meta_by_doc)):
        meta = meta_by_doc.get(doc_id, {})
        features = meta.get("features", {})
        if isinstance(features, list):
            features = {name: 1 for name in features}
        records.append(DocumentRecord(
            doc_id=doc_id,
            doc_name=meta.get("doc_name", ""),
            parts=parts_by_doc.get(doc_id, {}),
            features=features,
        ))

    clean_cfg = CleaningConfig(dedup_include_doc_name=cfg["dedup_include_doc_name"])
    corpus = build_corpus(records, cfg["seed"], clean_cfg)
    corpus_path = out_dir / "corpus.jsonl"
    splits_path = out_dir / "splits.tsv"
    write_corpus_jsonl(corpus.records, corpus_path)
    write_splits_tsv(corpus, splits_path)
    print(f"build-corpus: {len(corpus.records)} documents after cleaning and dedup")
    _write_manifest("build-corpus", cfg,
                    [cfg["parts"]] + ([cfg["metadata"]] if cfg["metadata"] else []),
                    [str(corpus_path), str(splits_path)], started)
    return 0


# ---------------------------------------------------------------------------
# detect-fasteners

def cmd_detect_fasteners(args: argparse.Namespace) -> int:
    started = time.monotonic()
    cfg = _resolve(args, {"corpus": None, "out": None, "standards": "", "seed": 0})
    if not cfg["corpus"] or not cfg["out"]:
        raise CLIError("detect-fasteners: --corpus and --out are required")
    records = read_corpus_jsonl(cfg["corpus"])
    db = load_standards(cfg["standards"] or None)
    report = corpus_fastener_report(records, db)
    Path(cfg["out"]).write_text(report.to_json() + "\n", "utf-8")
    print(f"detect-fasteners: {report.documents_with_fastener} documents, "
          f"{report.total_fasteners} fasteners")
    _write_manifest("detect-fasteners", cfg, [cfg["corpus"]], [cfg["out"]], started)
    return 0


# ---------------------------------------------------------------------------
# emit-finetune

def cmd_emit_finetune(args: argparse.Namespace) -> int:
    started = time.monotonic()
    cfg = _resolve(args, {"corpus": None, "splits": None, "split": "train",
                          "out": None, "seed": 0})
    if not cfg["corpus"] or not cfg["splits"] or not cfg["out"]:
        raise CLIError("emit-finetune: --corpus, --splits and --out are required")
    corpus = _load_corpus(cfg["corpus"], cfg["splits"])
    count = write_finetune_corpus(corpus, cfg["split"], cfg["out"])
    print(f"emit-finetune: wrote {count} lines for split {cfg['split']}")
    _write_manifest("emit-finetune", cfg, [cfg["corpus"], cfg["splits"]], [cfg["out"]], started)
    return 0


# ---------------------------------------------------------------------------
# sample-tasks

def cmd_sample_tasks(args: argparse.Namespace) -> int:
    started = time.monotonic()
    cfg = _resolve(args, {"corpus": None, "splits": None, "task": None,
                          "split": "test", "seed": None, "out_dir": None,
                          "batch_size": 512})
    for key in ("corpus", "splits", "task", "out_dir"):
        if not cfg[key]:
            raise CLIError(f"sample-tasks: --{key.replace('_', '-')} is required")
    corpus = _load_corpus(cfg["corpus"], cfg["splits"])
    out_dir = Path(cfg["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    seed, split = cfg["seed"], cfg["split"]

    if cfg["task"] == "two-parts":
        pairs = sample_two_parts(corpus, split, seed)
        out_path = out_dir / pairs_filename(split, seed)
        write_pairs_tsv(pairs, out_path)
        print(f"sample-tasks: {len(pairs)} pairs -> {out_path}")
    else:
        if cfg["task"] == "missing-part":
            batches = build_missing_part_batches(corpus, split, seed, cfg["batch_size"])
        elif cfg["task"] == "doc-name":
            batches = build_docname_batches(corpus, split, seed, cfg["batch_size"])
        else:
            raise CLIError(f"sample-tasks: unknown task {cfg['task']!r}")
        out_path = out_dir / batches_filename(cfg["task"], split, seed)
        write_batches_jsonl(batches, out_path)
        n = sum(len(b.instances) for b in batches)
        print(f"sample-tasks: {len(batches)} batches, {n} instances -> {out_path}")
    _write_manifest("sample-tasks", cfg, [cfg["corpus"], cfg["splits"]], [str(out_path)], started)
    return 0


# ---------------------------------------------------------------------------
# train-baseline

def cmd_train_baseline(args: argparse.Namespace) -> int:
    started = time.monotonic()
    cfg = _resolve(args, {
        "method": None, "corpus_text": None, "out": None, "seed": None,
        "dim": 128, "window": 6, "mode": "skipgram", "negatives": 5,
        "ngram_min": 3, "ngram_max": 6, "buckets": 2_000_000,
        "epochs": 5, "learning_rate": 0.025, "min_count": 1,
    })
    for key in ("method", "corpus_text", "out"):
        if not cfg[key]:
            raise CLIError(f"train-baseline: --{key.replace('_', '-')} is required")
    lines = [ln for ln in Path(cfg["corpus_text"]).read_text("utf-8").splitlines() if ln.strip()]
    if cfg["method"] in ("bow-freq", "tfidf"):
        mode = "frequency" if cfg["method"] == "bow-freq" else "tfidf"
        table = bow_vectorize(lines, mode)
    elif cfg["method"] == "skipgram":
        sg = SkipGramConfig(
            dim=cfg["dim"], window=cfg["window"], mode=cfg["mode"],
            negatives=cfg["negatives"], ngram_min=cfg["ngram_min"],
            ngram_max=cfg["ngram_max"], bucket_count=cfg["buckets"],
            epochs=cfg["epochs"], learning_rate=cfg["learning_rate"],
            seed=cfg["seed"], min_count=cfg["min_count"],
        )
        table = train_subword_skipgram(lines, sg)
    else:
        raise CLIError(f"train-baseline: unknown method {cfg['method']!r}")
    save_embedding_table(table, cfg["out"])
    print(f"train-baseline: {cfg['method']} table with {len(table.entries)} entries, "
          f"dim {table.dim} -> {cfg['out']}")
    _write_manifest("train-baseline", cfg, [cfg["corpus_text"]], [cfg["out"]], started)
    return 0


# ---------------------------------------------------------------------------
# train-eval

def cmd_train_eval(args: argparse.Namespace) -> int:
    started = time.monotonic()
    cfg = _resolve(args, {
        "task": None, "corpus": None, "splits": None, "table": None,
        "out": None, "trials": 5, "seed": None, "task_seed": 0,
        "hidden": 512, "inducing": 32, "heads": 4, "layer_norm": False,
        "max_epochs": 200, "patience": 40, "learning_rate": 0.001,
        "predictions_out": "",
    })
    for key in ("task", "corpus", "splits", "table", "out"):
        if not cfg[key]:
            raise CLIError(f"train-eval: --{key.replace('_', '-')} is required")
    corpus = _load_corpus(cfg["corpus"], cfg["splits"])
    table = load_embedding_table(cfg["table"])
    enc_cfg = SetEncoderConfig(
        dim=table.dim, hidden=cfg["hidden"], inducing_points=cfg["inducing"],
        heads=cfg["heads"], layer_norm=cfg["layer_norm"],
        max_epochs=cfg["max_epochs"], patience=cfg["patience"],
        learning_rate=cfg["learning_rate"],
    )
    predictions: list | None = [] if cfg["predictions_out"] else None
    report = evaluate_task(
        cfg["task"], corpus, table,
        trials=cfg["trials"], base_seed=cfg["seed"], task_seed=cfg["task_seed"],
        mlp_cfg=MLPTrainConfig(), enc_cfg=enc_cfg, predictions_out=predictions,
    )
    Path(cfg["out"]).write_text(report.to_json() + "\n", "utf-8")
    outputs = [cfg["out"]]
    if predictions is not None:
        write_predictions_jsonl(predictions, cfg["predictions_out"])
        outputs.append(cfg["predictions_out"])
    print(f"train-eval: {cfg['task']} accuracy {100 * report.mean:.1f} "
          f"+/- {100 * report.std:.1f} over {report.n_trials} trials")
    _write_manifest("train-eval", cfg, [cfg["corpus"], cfg["splits"], cfg["table"]],
                    outputs, started)
    return 0


# ---------------------------------------------------------------------------
# report

def cmd_report(args: argparse.Namespace) -> int:
    cfg = _resolve(args, {"task": "", "compare_correct": "", "compare_incorrect": "",
                          "limit": 10, "seed": 0})
    named = [(Path(p).stem, TrialReport.from_json(Path(p).read_text("utf-8")))
             for p in (args.reports or [])]
    if cfg["task"]:
        named = [(n, r) for n, r in named if r.task == cfg["task"]]
        tasks = [cfg["task"]]
    else:
        tasks = sorted({r.task for _, r in named}) or list(RANDOM_ROWS)

    for task in tasks:
        print(f"Task: {task}")
        print(f"  {'Model':<24} {'Test Accuracy (%)':>20}")
        print(f"  {'Random':<24} {RANDOM_ROWS.get(task, 0.0):>20.1f}")
        for name, r in named:
            if r.task == task:
                print(f"  {name:<24} {100 * r.mean:>14.1f} +/- {100 * r.std:.1f}")
        print()

    if cfg["compare_correct"] and cfg["compare_incorrect"]:
        a = read_predictions_jsonl(cfg["compare_correct"])
        b = read_predictions_jsonl(cfg["compare_incorrect"])
        wrong_b = {(p.doc_id, p.target) for p in b if not p.correct}
        print("Predictions correct in the first source where the second failed:")
        shown = 0
        for p in a:
            if p.correct and (p.doc_id, p.target) in wrong_b:
                print(f"  target: {p.target}")
                print(f"    inputs: {', '.join(p.inputs)}")
                shown += 1
                if shown >= cfg["limit"]:
                    break
        if shown == 0:
            print("  (none)")
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ctm",
        description="CAD text mining: extract part names, build corpora, "
                    "train baselines and evaluate embedding tables.",
    )
    parser.add_argument("--version", action="version", version=cadtext.__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="flat key=value config file; flags override it")
        p.add_argument("--seed", type=int, default=None,
                       help="random seed (falls back to CTM_SEED, then 0)")

    p = sub.add_parser("extract", help="scan STEP files and emit per-document part names")
    common(p)
    p.add_argument("--in", dest="in_dir", help="directory of .step/.stp files")
    p.add_argument("--out", help="output JSONL path")
    p.add_argument("--doc-id-pattern", help="regex whose first group is the document id")
    p.add_argument("--jobs", type=int, default=None, help="parallel worker count")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("build-corpus", help="clean, deduplicate and split extracted text")
    common(p)
    p.add_argument("--parts", help="extractor output JSONL")
    p.add_argument("--metadata", help="metadata JSONL (doc_id, doc_name, features)")
    p.add_argument("--out-dir", dest="out_dir", help="directory for corpus.jsonl and splits.tsv")
    p.add_argument("--no-doc-name-in-dedup", dest="dedup_include_doc_name",
                   action="store_false", default=None,
                   help="exclude the document name from the dedup key")
    p.set_defaults(func=cmd_build_corpus)

    p = sub.add_parser("detect-fasteners", help="summarize standard fasteners in a corpus")
    common(p)
    p.add_argument("--corpus", help="corpus.jsonl")
    p.add_argument("--out", help="JSON report path")
    p.add_argument("--standards", help="override standards TSV")
    p.set_defaults(func=cmd_detect_fasteners)

    p = sub.add_parser("emit-finetune", help="write the fine-tuning text corpus")
    common(p)
    p.add_argument("--corpus", help="corpus.jsonl")
    p.add_argument("--splits", help="splits.tsv")
    p.add_argument("--split", help="train|validation|test")
    p.add_argument("--out", help="output text path")
    p.set_defaults(func=cmd_emit_finetune)

    p = sub.add_parser("sample-tasks", help="materialize task artifacts")
    common(p)
    p.add_argument("--corpus", help="corpus.jsonl")
    p.add_argument("--splits", help="splits.tsv")
    p.add_argument("--task", choices=["two-parts", "missing-part", "doc-name"])
    p.add_argument("--split", help="which document split to sample from")
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    p.set_defaults(func=cmd_sample_tasks)

    p = sub.add_parser("train-baseline", help="train a baseline embedding table")
    common(p)
    p.add_argument("--method", choices=["bow-freq", "tfidf", "skipgram"])
    p.add_argument("--corpus-text", dest="corpus_text", help="fine-tuning corpus text file")
    p.add_argument("--out", help="embedding table output path")
    p.add_argument("--dim", type=int, default=None)
    p.add_argument("--window", type=int, default=None)
    p.add_argument("--mode", choices=["skipgram", "cbow"], default=None)
    p.add_argument("--negatives", type=int, default=None)
    p.add_argument("--ngram-min", dest="ngram_min", type=int, default=None)
    p.add_argument("--ngram-max", dest="ngram_max", type=int, default=None)
    p.add_argument("--buckets", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--learning-rate", dest="learning_rate", type=float, default=None)
    p.add_argument("--min-count", dest="min_count", type=int, default=None)
    p.set_defaults(func=cmd_train_baseline)

    p = sub.add_parser("train-eval", help="run the trial protocol for one task")
    common(p)
    p.add_argument("--task", choices=["two-parts", "missing-part", "doc-name"])
    p.add_argument("--corpus", help="corpus.jsonl")
    p.add_argument("--splits", help="splits.tsv")
    p.add_argument("--table", help="embedding table path")
    p.add_argument("--out", help="trial report JSON path")
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--task-seed", dest="task_seed", type=int, default=None)
    p.add_argument("--hidden", type=int, default=None)
    p.add_argument("--inducing", type=int, default=None)
    p.add_argument("--heads", type=int, default=None)
    p.add_argument("--layer-norm", dest="layer_norm", action="store_true", default=None)
    p.add_argument("--max-epochs", dest="max_epochs", type=int, default=None)
    p.add_argument("--patience", type=int, default=None)
    p.add_argument("--learning-rate", dest="learning_rate", type=float, default=None)
    p.add_argument("--predictions-out", dest="predictions_out",
                   help="dump per-instance predictions for qualitative reports")
    p.set_defaults(func=cmd_train_eval)

    p = sub.add_parser("report", help="render result tables and qualitative listings")
    common(p)
    p.add_argument("--reports", nargs="*", help="trial report JSON files")
    p.add_argument("--task", help="restrict to one task")
    p.add_argument("--compare-correct", dest="compare_correct",
                   help="predictions JSONL expected to be correct")
    p.add_argument("--compare-incorrect", dest="compare_incorrect",
                   help="predictions JSONL expected to have failed")
    p.add_argument("--limit", type=int, default=None)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CLIError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
