"""Turns raw multimodal documents into precomputed-embedding corpora.

The output directory follows the published corpus format (manifest.json,
``<doc_id>.emb``, ``<doc_id>.tokens.json``) so the topic-modeling engine can
consume it directly; the two packages share only that file contract.
"""

from .records import BridgeConfig, BridgeRecord, RawDocument
from .preprocess import preprocess_text
from .synthetic import SyntheticEncoder
from .writer import export_corpus

__version__ = "0.1.0"
