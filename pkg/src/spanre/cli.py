"""Command-line entry point: ``spanre {train,eval,extract,gradcheck,stats,synth}``.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import checkpoint as ckpt_io
from .data import (DEFAULT_RELATIONS, CorpusFormatError, RelationSchema, SchemaError, SyntheticConfigError,
                   corpus_stats, format_stats_table, generate_synthetic, load_corpus, tokenize, write_corpus)
from .model import ModelConfig, featurize
from .tagger import extract_triplets

log = logging.getLogger("spanre")

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    """Bad invocation: missing paths, malformed config, conflicting options."""


# --------------------------------------------------------------------------
# Argument parsing


def _add_train_overrides(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("training overrides (win over --config)")
    g.add_argument("--epochs", type=int)
    g.add_argument("--lr", dest="base_lr", type=float)
    g.add_argument("--warmup-steps", type=int)
    g.add_argument("--batch-size", type=int)
    g.add_argument("--patience", type=int)
    g.add_argument("--eval-every", type=int)
    g.add_argument("--target-f1", type=float)
    m = p.add_argument_group("model overrides")
    m.add_argument("--hidden", type=int)
    m.add_argument("--word-dim", type=int)
    m.add_argument("--char-dim", type=int)
    m.add_argument("--char-out", type=int)
    m.add_argument("--att-hidden", type=int)
    m.add_argument("--dropout", type=float)
    m.add_argument("--max-len", type=int)
    ea = m.add_mutually_exclusive_group()
    ea.add_argument("--ablate-entity-attention", dest="entity_attention", action="store_false", default=None,
                    help="replace entity attention with concatenation of subject and sentence features")
    ea.add_argument("--entity-attention", dest="entity_attention", action="store_true", default=None)
    ms = m.add_mutually_exclusive_group()
    ms.add_argument("--ablate-multi-scale", dest="multi_scale_chars", action="store_false", default=None,
                    help="use a single character kernel")
    ms.add_argument("--multi-scale", dest="multi_scale_chars", action="store_true", default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spanre", description="Span-based joint entity and relation extraction.")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--threads", type=int, default=None,
                        help="per-sentence fan-out during training (default: $SPANRE_THREADS or 1)")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model and save the best checkpoint")
    p.add_argument("--train", required=True, type=Path, help="JSON-lines training corpus")
    p.add_argument("--valid", type=Path, help="validation corpus (default: the training corpus)")
    p.add_argument("--schema", type=Path, help="relation schema JSON (default: labels seen in training)")
    p.add_argument("--config", type=Path, help='JSON file with "train" and "model" sections')
    p.add_argument("--word-vectors", type=Path, help="GloVe-format text vectors")
    p.add_argument("--out", required=True, type=Path, help="checkpoint path")
    p.add_argument("--log", type=Path, help="JSON-lines per-epoch metrics (default: <out>.log.jsonl)")
    _add_train_overrides(p)

    p = sub.add_parser("eval", help="score a checkpoint on an annotated corpus")
    p.add_argument("--checkpoint", required=True, type=Path)
    p.add_argument("--corpus", required=True, type=Path)
    p.add_argument("--breakdown", choices=("overlap", "length", "all"), default="all")
    p.add_argument("--json", type=Path, help="also write the report as JSON")

    p = sub.add_parser("extract", help="extract triplets from raw sentences, one per line")
    p.add_argument("--checkpoint", required=True, type=Path)
    p.add_argument("--input", default="-", help="text file, or - for stdin")
    p.add_argument("--output", default="-", help="JSON-lines output, or - for stdout")

    sub.add_parser("gradcheck", help="finite-difference check of every op and the joint loss")

    p = sub.add_parser("stats", help="dataset statistics table")
    p.add_argument("corpora", nargs="+", type=Path)
    p.add_argument("--schema", type=Path)
    p.add_argument("--tuple", action="store_true", help="print the raw tuple per corpus")

    p = sub.add_parser("synth", help="write a synthetic corpus and its schema")
    p.add_argument("--n", type=int, default=50)
    p.add_argument("--mix", type=float, nargs=3, default=(0.4, 0.4, 0.2), metavar=("NORMAL", "SEO", "EPO"))
    p.add_argument("--relations", nargs="+", default=list(DEFAULT_RELATIONS))
    p.add_argument("--out", required=True, type=Path, help="corpus path")
    p.add_argument("--schema-out", type=Path, help="schema path (default: <out>.schema.json)")
    return parser


def resolve_threads(arg: Optional[int]) -> int:
    if arg is not None:
        value = arg
    else:
        raw = os.environ.get("SPANRE_THREADS", "1")
        try:
            value = int(raw)
        except ValueError:
            raise UsageError(f"SPANRE_THREADS must be an integer, got {raw!r}") from None
    if value < 1:
        raise UsageError("thread count must be >= 1")
    return value


def _require(path: Optional[Path], what: str) -> None:
    if path is not None and not path.is_file():
        raise UsageError(f"{what} not found: {path}")


def build_configs(args):
    """Merge the JSON config file with flag overrides; flags win."""
    from .training import TrainConfig

    train_d, model_d = {}, {}
    if args.config is not None:
        _require(args.config, "config file")
        try:
            raw = json.loads(args.config.read_text(encoding="utf8"))
        except json.JSONDecodeError as exc:
            raise UsageError(f"config file is not valid JSON: {exc}") from exc
        if not isinstance(raw, dict) or set(raw) - {"train", "model"}:
            raise UsageError('config file must be an object with optional "train" and "model" sections')
        train_d.update(raw.get("train", {}))
        model_d.update(raw.get("model", {}))
    for key in ("epochs", "base_lr", "warmup_steps", "batch_size", "patience", "eval_every", "target_f1"):
        if getattr(args, key) is not None:
            train_d[key] = getattr(args, key)
    for key in ("hidden", "word_dim", "char_dim", "char_out", "att_hidden", "dropout", "max_len",
                "entity_attention", "multi_scale_chars"):
        if getattr(args, key) is not None:
            model_d[key] = getattr(args, key)
    train_d["seed"] = args.seed
    train_d["threads"] = resolve_threads(args.threads)
    try:
        return TrainConfig.from_dict(train_d), ModelConfig.from_dict(model_d)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid configuration: {exc}") from exc


# --------------------------------------------------------------------------
# Subcommands


def cmd_train(args) -> int:
    from .representation import load_word_vectors
    from .training import TrainingDiverged, train

    for path, what in ((args.train, "training corpus"), (args.valid, "validation corpus"),
                       (args.schema, "schema"), (args.word_vectors, "word-vector file")):
        _require(path, what)
    cfg, model_cfg = build_configs(args)
    schema = RelationSchema.load(args.schema) if args.schema else None
    corpus = load_corpus(args.train, schema=schema, max_len=model_cfg.max_len)
    valid = load_corpus(args.valid, schema=schema, max_len=model_cfg.max_len) if args.valid else None
    vectors = None
    if args.word_vectors:
        vectors = load_word_vectors(args.word_vectors, model_cfg.word_dim)
    log_path = args.log or args.out.with_name(args.out.name + ".log.jsonl")
    args.out.parent.mkdir(parents=True, exist_ok=True)
    try:
        result = train(corpus, cfg, model_cfg, valid=valid, schema=schema, word_vectors=vectors,
                       checkpoint_path=args.out, log_path=log_path,
                       on_epoch=lambda e: print(_epoch_line(e), flush=True))
    except TrainingDiverged as exc:
        print(f"error: {exc}; last good checkpoint kept at {args.out}", file=sys.stderr)
        return EXIT_FAILURE
    print(f"best validation F1 {result.best_f1:.4f} at epoch {result.best_epoch}; checkpoint {args.out}")
    return EXIT_OK


def _epoch_line(e: dict) -> str:
    line = f"epoch {e['epoch']:4d}  loss {e['loss']:.5f}  lr {e['lr']:.2e}"
    if "f1" in e:
        line += f"  P {e['precision']:.4f}  R {e['recall']:.4f}  F1 {e['f1']:.4f}"
    return line


def _load_checkpoint(path: Path):
    _require(path, "checkpoint")
    return ckpt_io.load(path).params


def cmd_eval(args) -> int:
    from .training import evaluate_model

    params = _load_checkpoint(args.checkpoint)
    _require(args.corpus, "corpus")
    corpus = load_corpus(args.corpus, max_len=params.config.max_len)
    known = set(params.relations)
    unknown = sorted({t.relation for ex in corpus for t in ex.triplets} - known)
    if unknown:
        raise SchemaError(f"corpus relations missing from the checkpoint schema: {', '.join(unknown)}")
    report = evaluate_model(corpus, params)
    print(report.format_table(args.breakdown))
    if args.json:
        args.json.write_text(report.to_json() + "\n", encoding="utf8")
    return EXIT_OK


def cmd_extract(args) -> int:
    params = _load_checkpoint(args.checkpoint)
    if args.input != "-":
        _require(Path(args.input), "input file")
    src = sys.stdin if args.input == "-" else open(args.input, encoding="utf8")
    dst = sys.stdout if args.output == "-" else open(args.output, "w", encoding="utf8")
    try:
        for lineno, line in enumerate(src, start=1):
            text = line.strip()
            if not text:
                log.warning("line %d is empty; skipped", lineno)
                continue
            tokens = tokenize(text)[: params.config.max_len]
            found = extract_triplets(featurize(tokens, params), params)
            triplets = [{"subject": " ".join(tokens[t.subject.start:t.subject.end + 1]),
                         "subject_span": list(t.subject),
                         "relation": params.relations[t.relation],
                         "object": " ".join(tokens[t.object.start:t.object.end + 1]),
                         "object_span": list(t.object)}
                        for t in sorted(found)]
            dst.write(json.dumps({"sentence": text, "triplets": triplets}, ensure_ascii=False) + "\n")
    finally:
        if src is not sys.stdin:
            src.close()
        if dst is not sys.stdout:
            dst.close()
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from .gradcheck import TOLERANCE, run_suite

    def show(r):
        status = "ok  " if r.ok else "FAIL"
        print(f"{status} {r.name:36s} rel err {r.error:.2e}  ({r.seconds:.2f}s)", flush=True)

    results = run_suite(seed=args.seed, report=show)
    bad = [r for r in results if not r.ok]
    if bad:
        print(f"{len(bad)} check(s) at or above {TOLERANCE:g}: {', '.join(r.name for r in bad)}", file=sys.stderr)
        return EXIT_FAILURE
    print(f"all {len(results)} checks below {TOLERANCE:g}")
    return EXIT_OK


def cmd_stats(args) -> int:
    for path in [*args.corpora, args.schema]:
        _require(path, "file")
    schema = RelationSchema.load(args.schema) if args.schema else None
    columns = {}
    for path in args.corpora:
        columns[path.stem] = corpus_stats(load_corpus(path, schema=schema), schema)
    if args.tuple:
        for name, st in columns.items():
            print(name, st.as_tuple())
    else:
        print(format_stats_table(columns))
    return EXIT_OK


def cmd_synth(args) -> int:
    if args.n < 0:
        raise UsageError("--n must be nonnegative")
    schema = RelationSchema(args.relations)
    corpus = generate_synthetic(args.seed, args.n, schema, tuple(args.mix))
    args.out.parent.mkdir(parents=True, exist_ok=True)
    write_corpus(corpus, args.out)
    schema_path = args.schema_out or args.out.with_name(args.out.stem + ".schema.json")
    schema.save(schema_path)
    print(f"wrote {len(corpus)} sentences to {args.out} and {len(schema)} relations to {schema_path}")
    return EXIT_OK


COMMANDS = {"train": cmd_train, "eval": cmd_eval, "extract": cmd_extract, "gradcheck": cmd_gradcheck,
            "stats": cmd_stats, "synth": cmd_synth}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on usage errors, 0 on --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command != "train":
            resolve_threads(args.threads)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SchemaError, CorpusFormatError, ckpt_io.CheckpointError, SyntheticConfigError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
