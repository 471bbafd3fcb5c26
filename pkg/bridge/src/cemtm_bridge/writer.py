"""Writes encoded documents in the corpus format the topic engine reads.

The byte layout is the published contract: magic ``CEMB``, version u32=1,
N u32, D u32, N*D little-endian f32 (row-major token states), D little-endian
f32 (document embedding), plus a ``<doc_id>.tokens.json`` sidecar and a
``manifest.json``.  This module implements the format independently; emitted
directories must pass the engine's own validation.
"""

from __future__ import annotations

import json
import logging
import struct
from pathlib import Path
from typing import Iterable

import numpy as np

from .records import BridgeRecord

log = logging.getLogger(__name__)

MAGIC = b"CEMB"
VERSION = 1


def write_record(record: BridgeRecord, out_dir: Path) -> str:
    H = np.ascontiguousarray(record.H, dtype="<f4")
    e_d = np.ascontiguousarray(record.e_d, dtype="<f4")
    n, d = H.shape
    if len(record.tokens) != n:
        raise ValueError(f"document {record.doc_id!r}: {len(record.tokens)} tokens vs {n} rows")
    fname = f"{record.doc_id}.emb"
    with open(out_dir / fname, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<III", VERSION, n, d))
        f.write(H.tobytes())
        f.write(e_d.tobytes())
    sidecar = [{"surface": surface, "kind": kind} for surface, kind in record.tokens]
    (out_dir / f"{record.doc_id}.tokens.json").write_text(
        json.dumps(sidecar, ensure_ascii=False), encoding="utf-8"
    )
    return fname


def export_corpus(
    records: Iterable[BridgeRecord],
    out_dir: Path | str,
    corpus_id: str = "bridge",
    encoder_name: str = "unknown",
) -> Path:
    """Write all records plus the manifest; returns the manifest path.

    Records are consumed from an iterator so encoding failures upstream can
    be skipped by the caller without aborting the export.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    dim = None
    for record in records:
        if dim is None:
            dim = int(record.H.shape[1])
        elif record.H.shape[1] != dim:
            raise ValueError(
                f"document {record.doc_id!r} has D={record.H.shape[1]}, corpus uses D={dim}"
            )
        fname = write_record(record, out_dir)
        entries.append({"doc_id": record.doc_id, "path": fname, "label": record.label})
    manifest = {
        "corpus_id": corpus_id,
        "embedding_dim": dim or 0,
        "num_documents": len(entries),
        "encoder_name": encoder_name,
        "documents": entries,
    }
    manifest_path = out_dir / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2, ensure_ascii=False), encoding="utf-8")
    log.info("wrote %d documents (D=%s) to %s", len(entries), dim, out_dir)
    return manifest_path
