"""Multimodal topic modeling over precomputed contextual embeddings."""

from .corpus import (
    Corpus,
    CorpusManifest,
    DocumentRecord,
    TokenEntry,
    TokenKind,
    Vocabulary,
    build_vocabulary,
    load_corpus,
    read_document,
    write_corpus,
    write_document,
)
from .model import ModelConfig, TopicModel, ForwardTrace, infer_theta
from .checkpoint import load_checkpoint, save_checkpoint
from .training import TrainConfig, TrainReport, gradient_check, train
from .extraction import (
    TopicSummary,
    TopicWordMatrix,
    aggregate_word_topics,
    all_topic_summaries,
    assign_documents,
    map_patches_to_words,
    top_words,
)
from .metrics import CooccurrenceStats, MetricReport
from .retrieval import ThetaIndex, select_examples, topic_similarity

__version__ = "0.1.0"
