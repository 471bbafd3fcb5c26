"""Command-line pipeline: train, extract, eval, retrieve, verify, synth.

Exit codes are fixed for scripting: 0 success, 1 verification failure,
2 usage/config error, 3 training divergence, 4 empty result.  Flags
override values from the ``--config`` JSON file, which override defaults.
All randomness flows from the single ``--seed``.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional

import torch

from .checkpoint import load_checkpoint
from .corpus import (
    DEFAULT_MAX_VOCAB,
    DEFAULT_MIN_DOC_FREQ,
    build_vocabulary,
    load_corpus,
)
from .errors import (
    CemtmError,
    DivergedLoss,
    EmptyExtraction,
    EmptyIndex,
    EmptyVocabulary,
    EndpointUnavailable,
    NoVectorsAvailable,
    UnparsableResponse,
)
from .extraction import (
    aggregate_word_topics,
    all_topic_summaries,
    assign_documents,
    config_hash,
    summaries_from_json,
    write_summaries,
)
from .judge import API_KEY_ENV, JudgeConfig, llm_score
from .metrics import (
    DEFAULT_COHERENCE_TOP_N,
    DEFAULT_DIVERSITY_TOP_N,
    DEFAULT_NPMI_EPSILON,
    DEFAULT_RBO_DEPTH,
    DEFAULT_RBO_P,
    CooccurrenceStats,
    MetricReport,
    ari,
    irbo,
    load_word_vectors,
    nmi,
    npmi,
    purity,
    topic_diversity,
    we_coherence,
)
from .model import ModelConfig
from .retrieval import SIM_COSINE, ThetaIndex, select_examples
from .synth import make_clustered_corpus
from .training import TrainConfig, train
from .verify import run_verification

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_CONFIG = 2
EXIT_DIVERGED = 3
EXIT_EMPTY = 4


class ConfigError(Exception):
    pass


def _fail(message: str) -> None:
    print(f"error: {message}", file=sys.stderr)


def _warn(message: str) -> None:
    print(f"warning: {message}", file=sys.stderr)


def _load_config(path: Optional[str]) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    try:
        data = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object")
    return data


def _resolve(flag, cfg: dict, key: str, default=None, required: bool = False):
    if flag is not None:
        return flag
    if key in cfg and cfg[key] is not None:
        return cfg[key]
    if required:
        raise ConfigError(f"missing required field '{key}'")
    return default


def _manifest_path(corpus_arg: str) -> Path:
    p = Path(corpus_arg)
    return p / "manifest.json" if p.is_dir() else p


# --- commands -----------------------------------------------------------------


def cmd_train(args) -> int:
    cfg = _load_config(args.config)
    corpus_path = _resolve(args.corpus, cfg, "corpus", required=True)
    out = Path(_resolve(args.out, cfg, "out", required=True))
    seed = int(_resolve(args.seed, cfg, "seed", default=0))

    model_fields = dict(cfg.get("model", {}))
    model_fields.pop("D", None)
    k = args.topics if args.topics is not None else model_fields.pop("K", 10)
    model_fields.pop("K", None)

    train_fields = dict(cfg.get("train", {}))
    train_fields.pop("seed", None)
    if args.epochs is not None:
        train_fields["epochs"] = args.epochs
    if args.lr is not None:
        train_fields["learning_rate"] = args.lr
    if args.batch is not None:
        train_fields["batch_size"] = args.batch

    corpus = load_corpus(_manifest_path(corpus_path))
    try:
        model_config = ModelConfig(D=corpus.embedding_dim, K=int(k), **model_fields)
        train_config = TrainConfig(seed=seed, **train_fields)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc

    out.mkdir(parents=True, exist_ok=True)
    model, report = train(corpus, model_config, train_config, checkpoint_dir=out)
    report.save(out / "train_report.json")
    print(f"trained {train_config.epochs} epochs; checkpoint: {report.final_checkpoint}")
    return EXIT_OK


def cmd_extract(args) -> int:
    cfg = _load_config(args.config)
    corpus_path = _resolve(args.corpus, cfg, "corpus", required=True)
    out = Path(_resolve(args.out, cfg, "out", required=True))
    checkpoint = _resolve(args.checkpoint, cfg, "checkpoint", required=True)

    model = load_checkpoint(checkpoint)
    if args.topics is not None and args.topics != model.config.K:
        raise ConfigError(
            f"checkpoint was trained with K={model.config.K}, requested K={args.topics}"
        )
    corpus = load_corpus(_manifest_path(corpus_path))

    vocab_cfg = cfg.get("vocabulary", {})
    min_df = args.min_doc_freq if args.min_doc_freq is not None else vocab_cfg.get(
        "min_doc_freq", DEFAULT_MIN_DOC_FREQ
    )
    max_size = args.max_vocab if args.max_vocab is not None else vocab_cfg.get(
        "max_size", DEFAULT_MAX_VOCAB
    )
    vocabulary = build_vocabulary(corpus, min_doc_freq=int(min_df), max_size=int(max_size))

    matrix = aggregate_word_topics(corpus, model, vocabulary)
    fingerprint = config_hash(model, vocabulary)
    out.mkdir(parents=True, exist_ok=True)
    write_summaries(
        all_topic_summaries(matrix, DEFAULT_COHERENCE_TOP_N),
        out / "topics_top10.json",
        fingerprint,
    )
    write_summaries(
        all_topic_summaries(matrix, DEFAULT_DIVERSITY_TOP_N),
        out / "topics_top25.json",
        fingerprint,
    )
    assignments = assign_documents(corpus, model)
    ThetaIndex.from_assignments(assignments).save(out / "theta_index.json")
    (out / "assignments.json").write_text(
        json.dumps({doc_id: topic for doc_id, _, topic in sorted(assignments)}, indent=2),
        encoding="utf-8",
    )
    print(f"extracted {model.config.K} topics over {len(matrix.words)} words -> {out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _load_config(args.config)
    run_dir = Path(_resolve(args.run, cfg, "run", required=True))
    corpus_path = _resolve(args.corpus, cfg, "corpus", required=True)
    out_path = Path(args.out) if args.out else run_dir / "metrics.json"

    top10_path = run_dir / "topics_top10.json"
    top25_path = run_dir / "topics_top25.json"
    for p in (top10_path, top25_path):
        if not p.is_file():
            raise ConfigError(f"missing extract output: {p}")
    summaries10 = summaries_from_json(top10_path.read_text(encoding="utf-8"))
    summaries25 = summaries_from_json(top25_path.read_text(encoding="utf-8"))
    corpus = load_corpus(_manifest_path(corpus_path))

    metric_cfg = cfg.get("metrics", {})
    epsilon = float(metric_cfg.get("npmi_epsilon", DEFAULT_NPMI_EPSILON))
    rbo_p = float(metric_cfg.get("rbo_p", DEFAULT_RBO_P))
    rbo_depth = int(metric_cfg.get("rbo_depth", DEFAULT_RBO_DEPTH))
    diversity_n = int(metric_cfg.get("diversity_top_n", DEFAULT_DIVERSITY_TOP_N))

    stats = CooccurrenceStats.from_corpus(corpus)
    report = MetricReport(
        npmi=npmi(summaries10, stats, epsilon),
        td=topic_diversity(summaries25, diversity_n),
        irbo=irbo(summaries10, rbo_p, rbo_depth),
        config={
            "coherence_top_n": DEFAULT_COHERENCE_TOP_N,
            "diversity_top_n": diversity_n,
            "rbo_p": rbo_p,
            "rbo_depth": rbo_depth,
            "npmi_epsilon": epsilon,
        },
    )

    if args.word_vectors:
        try:
            report.we = we_coherence(summaries10, load_word_vectors(args.word_vectors))
        except NoVectorsAvailable as exc:
            _warn(f"word-embedding coherence skipped: {exc}")

    labels = corpus.labels()
    if labels is not None:
        assign_path = run_dir / "assignments.json"
        if not assign_path.is_file():
            raise ConfigError(f"missing extract output: {assign_path}")
        assignments = {
            doc_id: int(topic)
            for doc_id, topic in json.loads(assign_path.read_text(encoding="utf-8")).items()
        }
        report.purity = purity(assignments, labels)
        report.ari = ari(assignments, labels)
        report.nmi = nmi(assignments, labels)

    if args.llm:
        judge_cfg = dict(cfg.get("judge", {}))
        endpoint = judge_cfg.pop("endpoint", None)
        if not endpoint:
            raise ConfigError(
                "--llm requires a judge endpoint: set judge.endpoint in --config "
                f"and the API key in ${API_KEY_ENV}"
            )
        try:
            report.llm = llm_score(summaries10, JudgeConfig(endpoint=endpoint, **judge_cfg))
        except (EndpointUnavailable, UnparsableResponse) as exc:
            _warn(f"LLM judge skipped: {exc}")

    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(report.to_json(), encoding="utf-8")
    print(report.summary_line())
    return EXIT_OK


def cmd_retrieve(args) -> int:
    index = ThetaIndex.load(args.index)
    query_theta = index.get(args.query)
    if query_theta is None:
        raise ConfigError(f"unknown doc_id {args.query!r} in index {args.index}")
    results = select_examples(
        query_theta, index, k=args.k, exclude={args.query}, measure=args.measure
    )
    for doc_id, similarity in results:
        print(f"{doc_id}\t{similarity:.6f}")
    return EXIT_OK


def cmd_verify(args) -> int:
    try:
        results = run_verification(only=args.only, seed=args.seed if args.seed is not None else 7)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    for result in results:
        print(result.line())
    return EXIT_OK if all(r.passed for r in results) else EXIT_VERIFY_FAILED


def cmd_synth(args) -> int:
    manifest = make_clustered_corpus(
        args.out,
        num_clusters=args.clusters,
        docs_per_cluster=args.docs_per_cluster,
        tokens_per_doc=args.tokens,
        dim=args.dim,
        seed=args.seed if args.seed is not None else 0,
    )
    print(str(manifest))
    return EXIT_OK


# --- parser ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cemtm",
        description="Train and evaluate a multimodal topic model over precomputed embeddings.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file; flags override its fields")
        p.add_argument("--seed", type=int, help="seed for all randomness")

    p = sub.add_parser("train", help="train a model and write a checkpoint")
    common(p)
    p.add_argument("--corpus", help="corpus directory or manifest.json")
    p.add_argument("--out", help="output directory for checkpoint + report")
    p.add_argument("--topics", type=int, help="number of topics K")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("extract", help="extract topics and document assignments")
    common(p)
    p.add_argument("--checkpoint", help="trained checkpoint file")
    p.add_argument("--corpus", help="corpus directory or manifest.json")
    p.add_argument("--out", help="output directory for topic/assignment JSON")
    p.add_argument("--topics", type=int, help="expected K; must match the checkpoint")
    p.add_argument("--min-doc-freq", type=int)
    p.add_argument("--max-vocab", type=int)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("eval", help="score an extract run with the metric suite")
    common(p)
    p.add_argument("--run", help="directory produced by `cemtm extract`")
    p.add_argument("--corpus", help="corpus directory or manifest.json")
    p.add_argument("--out", help="metrics JSON path (default <run>/metrics.json)")
    p.add_argument("--word-vectors", help="textual word2vec file for the WE score")
    p.add_argument("--llm", action="store_true", help="also query the external judge")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("retrieve", help="rank similar documents by topic vector")
    common(p)
    p.add_argument("--index", required=True, help="theta_index.json from `cemtm extract`")
    p.add_argument("--query", required=True, help="query doc_id (always excluded from results)")
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--measure", default=SIM_COSINE, choices=[SIM_COSINE, "jensen-shannon"])
    p.set_defaults(func=cmd_retrieve)

    p = sub.add_parser("verify", help="run the self-verification suites")
    common(p)
    p.add_argument("--only", help="run a single group (gradients/losses/simplex/metrics/retrieval)")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("synth", help="write a synthetic labeled toy corpus")
    common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--clusters", type=int, default=5)
    p.add_argument("--docs-per-cluster", type=int, default=40)
    p.add_argument("--tokens", type=int, default=20)
    p.add_argument("--dim", type=int, default=32)
    p.set_defaults(func=cmd_synth)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    torch.set_num_threads(1)
    try:
        return args.func(args)
    except ConfigError as exc:
        _fail(str(exc))
        return EXIT_CONFIG
    except DivergedLoss as exc:
        _fail(str(exc))
        return EXIT_DIVERGED
    except (EmptyExtraction, EmptyVocabulary, EmptyIndex) as exc:
        _fail(str(exc))
        return EXIT_EMPTY
    except CemtmError as exc:
        _fail(str(exc))
        return EXIT_CONFIG
    except OSError as exc:
        _fail(str(exc))
        return EXIT_CONFIG


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
