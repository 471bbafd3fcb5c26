"""On-disk corpus of precomputed contextual embeddings.

A corpus directory contains:

* ``manifest.json`` -- UTF-8 JSON with::

      {
        "corpus_id": str,
        "embedding_dim": int,
        "num_documents": int,
        "encoder_name": str,
        "documents": [{"doc_id": str, "path": str, "label": str | null}, ...]
      }

  ``path`` is relative to the manifest's directory.  Labels must be present
  for all documents or for none.

* one ``<doc_id>.emb`` per document: magic ``CEMB``, version ``u32=1``,
  ``N u32``, ``D u32``, then ``N*D`` little-endian f32 (row-major token
  embedding matrix H), then ``D`` little-endian f32 (document embedding).
  The layout is fixed so any producer can emit bit-exact files.

* one ``<doc_id>.tokens.json`` sidecar per document: an ordered list of
  ``{"surface": str, "kind": "text" | "patch"}`` entries, one per row of H.

Documents are immutable once written; concurrent read-only access is safe.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterator, Optional, Sequence

import numpy as np

from .errors import (
    CorruptHeader,
    DimensionMismatch,
    EmptyVocabulary,
    MissingFile,
    NonFiniteValue,
)
from .stopwords import ENGLISH_STOPWORDS

MAGIC = b"CEMB"
VERSION = 1

DEFAULT_MAX_VOCAB = 5000
DEFAULT_MIN_DOC_FREQ = 5


class TokenKind(str, Enum):
    TEXT = "text"
    PATCH = "patch"


@dataclass(frozen=True)
class TokenEntry:
    surface: str
    kind: TokenKind

    def validate(self) -> None:
        if not self.surface:
            raise ValueError("token surface must be non-empty")
        if self.kind is TokenKind.PATCH and not self.surface.startswith("patch:"):
            raise ValueError(
                f"patch token surface must look like 'patch:<index>', got {self.surface!r}"
            )


@dataclass
class DocumentRecord:
    """One document: token metadata, token embeddings H (N x D), doc embedding."""

    doc_id: str
    tokens: list[TokenEntry]
    H: np.ndarray
    e_d: np.ndarray

    def validate(self) -> None:
        n = len(self.tokens)
        if n < 1:
            raise ValueError(f"document {self.doc_id!r} has no tokens")
        if self.H.ndim != 2 or self.H.shape[0] != n:
            raise ValueError(
                f"document {self.doc_id!r}: H has shape {self.H.shape}, "
                f"expected ({n}, D)"
            )
        if self.e_d.ndim != 1 or self.e_d.shape[0] != self.H.shape[1]:
            raise ValueError(
                f"document {self.doc_id!r}: e_d has shape {self.e_d.shape}, "
                f"expected ({self.H.shape[1]},)"
            )
        for entry in self.tokens:
            entry.validate()
        finite_rows = np.isfinite(self.H).all(axis=1)
        if not finite_rows.all():
            row = int(np.flatnonzero(~finite_rows)[0])
            raise NonFiniteValue(
                f"document {self.doc_id!r}: non-finite value in H row {row}"
            )
        if not np.isfinite(self.e_d).all():
            raise NonFiniteValue(f"document {self.doc_id!r}: non-finite value in e_d")

    @property
    def num_tokens(self) -> int:
        return len(self.tokens)

    @property
    def dim(self) -> int:
        return int(self.H.shape[1])


@dataclass
class ManifestEntry:
    doc_id: str
    path: str
    label: Optional[str] = None


@dataclass
class CorpusManifest:
    corpus_id: str
    embedding_dim: int
    encoder_name: str
    documents: list[ManifestEntry]

    @property
    def num_documents(self) -> int:
        return len(self.documents)

    def validate(self) -> None:
        if self.embedding_dim < 1:
            raise ValueError("embedding_dim must be >= 1")
        ids = [e.doc_id for e in self.documents]
        if len(set(ids)) != len(ids):
            raise ValueError("manifest contains duplicate doc_ids")
        labeled = sum(1 for e in self.documents if e.label is not None)
        if labeled not in (0, len(self.documents)):
            raise ValueError(
                "labels must be present for all documents or for none "
                f"({labeled}/{len(self.documents)} labeled)"
            )

    @property
    def has_labels(self) -> bool:
        return bool(self.documents) and self.documents[0].label is not None


def write_document(record: DocumentRecord, path: Path | str) -> None:
    """Write one document file plus its ``<doc_id>.tokens.json`` sidecar.

    The record is validated first; nothing is written for an invalid record.
    """
    record.validate()
    path = Path(path)
    h = np.ascontiguousarray(record.H, dtype="<f4")
    e = np.ascontiguousarray(record.e_d, dtype="<f4")
    n, d = h.shape
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<III", VERSION, n, d))
        f.write(h.tobytes())
        f.write(e.tobytes())
    sidecar = path.parent / f"{record.doc_id}.tokens.json"
    entries = [{"surface": t.surface, "kind": t.kind.value} for t in record.tokens]
    sidecar.write_text(json.dumps(entries, ensure_ascii=False), encoding="utf-8")


def read_document(doc_id: str, path: Path | str, expected_dim: Optional[int] = None) -> DocumentRecord:
    """Read and validate one document file and its token sidecar."""
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"document file not found: {path}")
    raw = path.read_bytes()
    if len(raw) < 16 or raw[:4] != MAGIC:
        raise CorruptHeader(f"document {doc_id!r}: bad magic in {path}")
    version, n, d = struct.unpack_from("<III", raw, 4)
    if version != VERSION:
        raise CorruptHeader(f"document {doc_id!r}: unsupported version {version}")
    expected_len = 16 + 4 * (n * d + d)
    if len(raw) != expected_len:
        raise CorruptHeader(
            f"document {doc_id!r}: file length {len(raw)} != expected {expected_len}"
        )
    if expected_dim is not None and d != expected_dim:
        raise DimensionMismatch(
            f"document {doc_id!r} has D={d}, manifest says D={expected_dim}"
        )
    flat = np.frombuffer(raw, dtype="<f4", count=n * d + d, offset=16)
    h = flat[: n * d].reshape(n, d).copy()
    e = flat[n * d :].copy()

    sidecar = path.parent / f"{doc_id}.tokens.json"
    if not sidecar.is_file():
        raise MissingFile(f"token sidecar not found: {sidecar}")
    entries = json.loads(sidecar.read_text(encoding="utf-8"))
    tokens = [TokenEntry(e["surface"], TokenKind(e["kind"])) for e in entries]
    if len(tokens) != n:
        raise CorruptHeader(
            f"document {doc_id!r}: sidecar lists {len(tokens)} tokens, header says {n}"
        )
    record = DocumentRecord(doc_id=doc_id, tokens=tokens, H=h, e_d=e)
    record.validate()
    return record


class Corpus:
    """Manifest plus lazy per-document access with on-read validation."""

    def __init__(self, manifest: CorpusManifest, base_dir: Path):
        self.manifest = manifest
        self.base_dir = base_dir
        self._by_id = {e.doc_id: e for e in manifest.documents}

    @property
    def doc_ids(self) -> list[str]:
        return [e.doc_id for e in self.manifest.documents]

    @property
    def embedding_dim(self) -> int:
        return self.manifest.embedding_dim

    def __len__(self) -> int:
        return self.manifest.num_documents

    def get(self, doc_id: str) -> DocumentRecord:
        entry = self._by_id.get(doc_id)
        if entry is None:
            raise MissingFile(f"doc_id {doc_id!r} not in manifest")
        return read_document(doc_id, self.base_dir / entry.path, self.manifest.embedding_dim)

    def __iter__(self) -> Iterator[DocumentRecord]:
        for entry in self.manifest.documents:
            yield self.get(entry.doc_id)

    def labels(self) -> Optional[dict[str, str]]:
        if not self.manifest.has_labels:
            return None
        return {e.doc_id: e.label for e in self.manifest.documents}


def load_corpus(manifest_path: Path | str) -> Corpus:
    """Parse a manifest and return a lazily validating corpus accessor.

    Document files are checked for existence now; their contents are
    validated on first read.
    """
    manifest_path = Path(manifest_path)
    if not manifest_path.is_file():
        raise MissingFile(f"manifest not found: {manifest_path}")
    try:
        data = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CorruptHeader(f"manifest is not valid JSON: {exc}") from exc
    try:
        entries = [
            ManifestEntry(doc_id=e["doc_id"], path=e["path"], label=e.get("label"))
            for e in data["documents"]
        ]
        manifest = CorpusManifest(
            corpus_id=data["corpus_id"],
            embedding_dim=int(data["embedding_dim"]),
            encoder_name=data.get("encoder_name", ""),
            documents=entries,
        )
    except (KeyError, TypeError) as exc:
        raise CorruptHeader(f"manifest missing required field: {exc}") from exc
    if "num_documents" in data and int(data["num_documents"]) != len(entries):
        raise CorruptHeader(
            f"manifest num_documents={data['num_documents']} but lists {len(entries)} documents"
        )
    manifest.validate()
    base_dir = manifest_path.parent
    for entry in entries:
        if not (base_dir / entry.path).is_file():
            raise MissingFile(f"document file for {entry.doc_id!r} not found: {entry.path}")
    return Corpus(manifest, base_dir)


def write_corpus(
    records: Sequence[DocumentRecord],
    out_dir: Path | str,
    corpus_id: str = "corpus",
    encoder_name: str = "unknown",
    labels: Optional[dict[str, str]] = None,
) -> Path:
    """Write records plus a manifest into ``out_dir``; returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    dims = {r.dim for r in records}
    if len(dims) > 1:
        raise DimensionMismatch(f"records disagree on D: {sorted(dims)}")
    entries = []
    for record in records:
        fname = f"{record.doc_id}.emb"
        write_document(record, out_dir / fname)
        label = labels.get(record.doc_id) if labels else None
        entries.append({"doc_id": record.doc_id, "path": fname, "label": label})
    manifest = {
        "corpus_id": corpus_id,
        "embedding_dim": records[0].dim if records else 0,
        "num_documents": len(records),
        "encoder_name": encoder_name,
        "documents": entries,
    }
    manifest_path = out_dir / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2, ensure_ascii=False), encoding="utf-8")
    return manifest_path


# vocabulary ---------------------------------------------------------------

@dataclass
class Vocabulary:
    """Fixed word list with dense indices and per-word document counts."""

    words: list[str]
    doc_frequency: dict[str, int]
    word_to_index: dict[str, int] = field(init=False)

    def __post_init__(self):
        self.word_to_index = {w: i for i, w in enumerate(self.words)}

    def __len__(self) -> int:
        return len(self.words)

    def __contains__(self, word: str) -> bool:
        return word in self.word_to_index


def build_vocabulary(
    corpus: Corpus,
    stopwords: frozenset[str] | set[str] = ENGLISH_STOPWORDS,
    min_doc_freq: int = DEFAULT_MIN_DOC_FREQ,
    max_size: int = DEFAULT_MAX_VOCAB,
) -> Vocabulary:
    """Build the fixed vocabulary from text-token document frequencies.

    Keeps the ``max_size`` surfaces with the highest document frequency,
    excluding stopwords and surfaces seen in fewer than ``min_doc_freq``
    documents.  Patch tokens never contribute.  Ties in the frequency
    ranking break lexicographically so the result is deterministic.
    """
    if min_doc_freq < 1:
        raise ValueError("min_doc_freq must be >= 1")
    if max_size < 1:
        raise ValueError("max_size must be >= 1")
    df: dict[str, int] = {}
    for record in corpus:
        seen = {t.surface for t in record.tokens if t.kind is TokenKind.TEXT}
        for surface in seen:
            if surface not in stopwords:
                df[surface] = df.get(surface, 0) + 1
    kept = [(w, c) for w, c in df.items() if c >= min_doc_freq]
    if not kept:
        raise EmptyVocabulary(
            f"no word survives filters (min_doc_freq={min_doc_freq}, "
            f"{len(df)} candidate surfaces)"
        )
    kept.sort(key=lambda wc: (-wc[1], wc[0]))
    kept = kept[:max_size]
    return Vocabulary(words=[w for w, _ in kept], doc_frequency=dict(kept))
