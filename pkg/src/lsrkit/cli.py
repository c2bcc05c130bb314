"""Command-line interface: one subcommand per pipeline stage.

Every stage reads and writes the documented file formats, so intermediate
artifacts (vectors, index, run) stay inspectable and reusable. Commands are
deterministic: identical inputs and --seed produce byte-identical outputs.
"""

from __future__ import annotations

import argparse
import sys

from . import diagnostics as diag
from . import evaluation as ev
from .core import Vocabulary, read_vectors, write_vectors
from .embeddings import FileEmbeddingProvider, ToyEmbeddingProvider
from .encoders import EncoderConfig, Providers, encode_document, encode_query, load_params
from .errors import ToolkitError
from .index import InvertedIndex, build_index, index_stats, search
from .ingest import build_query_text, load_corpus, load_queries
from .training import (
    TrainingConfig,
    load_pairs,
    save_checkpoint,
    train,
    write_loss_log,
)


def _check_paths(args) -> None:
    """Fail before any work starts: inputs must exist, output dirs must too."""
    import os

    for attr in getattr(args, "input_paths", ()):
        value = getattr(args, attr, None)
        if value and not os.path.exists(value):
            raise ToolkitError(f"input file not found: {value}")
    for attr in getattr(args, "output_paths", ()):
        value = getattr(args, attr, None)
        if value:
            parent = os.path.dirname(os.path.abspath(value))
            if not os.path.isdir(parent):
                raise ToolkitError(f"output directory does not exist: {parent}")


def _add_provider_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--provider", choices=["toy", "file"], default="toy",
                   help="token-embedding source (default: toy)")
    p.add_argument("--dim", type=int, default=16, help="toy embedding dimension")
    p.add_argument("--seed", type=int, default=0, help="seed for all toy randomness")
    p.add_argument("--token-embeddings", help="token-level embedding file (file provider)")
    p.add_argument("--query-embeddings", help="item-level pooled query embeddings (optional)")
    p.add_argument("--image-embeddings", help="item-level pooled image embeddings")


def _build_providers(args, vocab: Vocabulary) -> Providers:
    if args.provider == "toy":
        tokens = ToyEmbeddingProvider(args.dim, args.seed)
    else:
        if not args.token_embeddings:
            raise ToolkitError("--provider file requires --token-embeddings")
        tokens = FileEmbeddingProvider.load(args.token_embeddings)
    query_pooled = FileEmbeddingProvider.load(args.query_embeddings) if args.query_embeddings else None
    image_pooled = FileEmbeddingProvider.load(args.image_embeddings) if args.image_embeddings else None
    return Providers(vocab=vocab, tokens=tokens, query_pooled=query_pooled, image_pooled=image_pooled)


def _parse_cutoffs(text: str) -> tuple[int, ...]:
    try:
        cutoffs = tuple(int(part) for part in text.split(",") if part.strip())
    except ValueError as exc:
        raise ToolkitError(f"bad cutoff list {text!r}: {exc}") from exc
    if not cutoffs or any(k < 1 for k in cutoffs):
        raise ToolkitError(f"cutoffs must be positive integers, got {text!r}")
    return cutoffs


def cmd_encode(args) -> int:
    vocab = Vocabulary.load(args.vocab)
    config = EncoderConfig.load(args.config)
    params = load_params(args.params)
    providers = _build_providers(args, vocab)

    out = []
    if args.type == "queries":
        empty = 0
        for q in load_queries(args.input):
            text = build_query_text(q)
            if not text:
                empty += 1
            out.append((q.id, encode_query(text, config, providers, params, query_id=q.id)))
        if empty:
            print(f"warning: {empty} query record(s) produced empty query text", file=sys.stderr)
    else:
        for doc in load_corpus(args.input):
            out.append((doc.id, encode_document(doc, config, providers, params)))
    write_vectors(args.out, out)
    print(f"encoded {len(out)} {args.type} -> {args.out}")
    return 0


def cmd_train(args) -> int:
    vocab = Vocabulary.load(args.vocab)
    config = EncoderConfig.load(args.config)
    tcfg = TrainingConfig.load(args.train_config)
    if args.seed is not None:
        tcfg = TrainingConfig(
            epochs=tcfg.epochs,
            batch_size=tcfg.batch_size,
            learning_rate=tcfg.learning_rate,
            temperature=tcfg.temperature,
            seed=args.seed,
            flops_lambda=tcfg.flops_lambda,
        )
    args.seed = tcfg.seed  # toy provider shares the training seed
    providers = _build_providers(args, vocab)

    pairs = load_pairs(args.pairs)
    queries = {q.id: q for q in load_queries(args.queries)}
    docs = {d.id: d for d in load_corpus(args.corpus)}
    outcome = train(pairs, queries, docs, tcfg, config, providers)
    save_checkpoint(args.out_checkpoint, outcome.params, epoch=tcfg.epochs, seed=tcfg.seed)
    write_loss_log(args.out_losslog, outcome.log)
    first = outcome.epoch_mean_infonce(1)
    last = outcome.epoch_mean_infonce(tcfg.epochs)
    print(
        f"trained {len(pairs)} pairs for {tcfg.epochs} epochs: "
        f"epoch-mean InfoNCE {first:.6f} -> {last:.6f}; checkpoint in {args.out_checkpoint}"
    )
    return 0


def cmd_index(args) -> int:
    if args.vocab:
        vocab_size = Vocabulary.load(args.vocab).size
    elif args.vocab_size is not None:
        vocab_size = args.vocab_size
    else:
        raise ToolkitError("pass --vocab or --vocab-size")
    docs = read_vectors(args.vectors)
    index = build_index(docs, vocab_size)
    index.save(args.out_index)
    stats = index_stats(index)
    print(
        f"indexed {index.doc_count} docs, {stats['total_postings']} postings over "
        f"{stats['terms_used']} terms -> {args.out_index}"
    )
    return 0


def cmd_search(args) -> int:
    index = InvertedIndex.load(args.index)
    queries = read_vectors(args.query_vectors)
    run = [search(index, vec, args.k, query_id=qid) for qid, vec in queries]
    ev.write_run(run, args.out_run, tag=args.tag)
    hits = sum(len(r) for r in run)
    print(f"searched {len(run)} queries (k={args.k}): {hits} hits -> {args.out_run}")
    return 0


def cmd_eval(args) -> int:
    run, _ = ev.read_run(args.run)
    qrels = ev.read_qrels(args.qrels)
    report = ev.evaluate_run(
        run,
        qrels,
        ndcg_map_cutoffs=_parse_cutoffs(args.cutoffs),
        recall_cutoffs=_parse_cutoffs(args.recall_cutoffs),
    )
    report.save(args.out_report)
    print(report.format_table())
    return 0


def cmd_diagnose(args) -> int:
    vocab = Vocabulary.load(args.vocab)
    items = read_vectors(args.vectors)
    vectors = [vec for _, vec in items]
    report = diag.coactivation_report(vectors, vocab.size)
    payload = report.to_json_dict()
    if args.stoplist:
        stoplist = diag.load_stoplist(args.stoplist)
        masses = [diag.stopword_mass(vec, vocab, stoplist) for vec in vectors]
        payload["stopword_mass_mean"] = sum(masses) / len(masses) if masses else 0.0

    import json

    with open(args.out_report, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")
    if args.out_top_terms:
        diag.write_top_terms_tsv(args.out_top_terms, items, vocab, args.top_terms)
    print(
        f"{len(vectors)} vectors: density={report.density:.4f} "
        f"postings/active-term={report.expected_postings_per_active_term:.4f} -> {args.out_report}"
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lsrkit", description="Learned sparse retrieval toolkit (encode, train, index, search, eval, diagnose)"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    provider_inputs = ["token_embeddings", "query_embeddings", "image_embeddings"]

    p = sub.add_parser("encode", help="encode queries or documents to sparse vectors")
    p.add_argument("--type", choices=["queries", "docs"], required=True)
    p.add_argument("--input", required=True, help="queries or corpus JSONL")
    p.add_argument("--config", required=True, help="encoder config JSON")
    p.add_argument("--params", required=True, help="head parameter file (JSONL)")
    p.add_argument("--vocab", required=True, help="vocabulary file, one term per line")
    p.add_argument("--out", required=True, help="output sparse-vector JSONL")
    _add_provider_flags(p)
    p.set_defaults(
        func=cmd_encode,
        input_paths=["input", "config", "params", "vocab", *provider_inputs],
        output_paths=["out"],
    )

    p = sub.add_parser("train", help="contrastive training over query-document pairs")
    p.add_argument("--config", required=True, help="encoder config JSON")
    p.add_argument("--vocab", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--pairs", required=True, help="TSV query_id<TAB>doc_id")
    p.add_argument("--train-config", required=True, help="training config JSON")
    p.add_argument("--out-checkpoint", required=True, help="checkpoint directory")
    p.add_argument("--out-losslog", required=True, help="per-step loss CSV")
    _add_provider_flags(p)
    p.set_defaults(
        func=cmd_train,
        seed=None,
        input_paths=["config", "vocab", "queries", "corpus", "pairs", "train_config", *provider_inputs],
        output_paths=["out_losslog"],
    )

    p = sub.add_parser("index", help="build an inverted index from document vectors")
    p.add_argument("--vectors", required=True)
    p.add_argument("--vocab")
    p.add_argument("--vocab-size", type=int)
    p.add_argument("--out-index", required=True)
    p.set_defaults(func=cmd_index, input_paths=["vectors", "vocab"], output_paths=[])

    p = sub.add_parser("search", help="top-k retrieval, writes a TREC run file")
    p.add_argument("--index", required=True)
    p.add_argument("--query-vectors", required=True)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--tag", default="lsrkit")
    p.add_argument("--out-run", required=True)
    p.set_defaults(
        func=cmd_search, input_paths=["index", "query_vectors"], output_paths=["out_run"]
    )

    p = sub.add_parser("eval", help="score a run file against qrels")
    p.add_argument("--run", required=True)
    p.add_argument("--qrels", required=True)
    p.add_argument("--cutoffs", default="5,10,100,500,1000", help="NDCG/MAP cutoffs, comma-separated")
    p.add_argument("--recall-cutoffs", default="20,100,500,1000", help="Recall cutoffs, comma-separated")
    p.add_argument("--out-report", required=True)
    p.set_defaults(
        func=cmd_eval, input_paths=["run", "qrels"], output_paths=["out_report"]
    )

    p = sub.add_parser("diagnose", help="co-activation report and top-term dump")
    p.add_argument("--vectors", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--stoplist")
    p.add_argument("--out-report", required=True)
    p.add_argument("--top-terms", type=int, default=10)
    p.add_argument("--out-top-terms")
    p.set_defaults(
        func=cmd_diagnose,
        input_paths=["vectors", "vocab", "stoplist"],
        output_paths=["out_report", "out_top_terms"],
    )

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _check_paths(args)
        return args.func(args)
    except (ToolkitError, OSError) as exc:
        print(f"lsrkit {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
