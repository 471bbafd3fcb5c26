import numpy as np
import pytest
import torch

from cemtm.corpus import DocumentRecord, TokenEntry, TokenKind

torch.set_num_threads(1)


def text_token(surface: str) -> TokenEntry:
    return TokenEntry(surface, TokenKind.TEXT)


def patch_token(index: int) -> TokenEntry:
    return TokenEntry(f"patch:{index}", TokenKind.PATCH)


def make_record(doc_id: str, surfaces, H, e_d=None, kinds=None) -> DocumentRecord:
    H = np.asarray(H, dtype=np.float32)
    if e_d is None:
        e_d = H.mean(axis=0)
    if kinds is None:
        tokens = [text_token(s) for s in surfaces]
    else:
        tokens = [TokenEntry(s, k) for s, k in zip(surfaces, kinds)]
    return DocumentRecord(doc_id=doc_id, tokens=tokens, H=H, e_d=np.asarray(e_d, dtype=np.float32))


@pytest.fixture
def rng():
    return np.random.default_rng(42)
