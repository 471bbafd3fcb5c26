import numpy as np
import pytest

from cemtm_bridge.records import BridgeConfig, RawDocument
from cemtm_bridge.synthetic import SyntheticEncoder


def encoder(**kw):
    kw.setdefault("synthetic", True)
    kw.setdefault("synthetic_dim", 16)
    kw.setdefault("patches_per_image", 4)
    return SyntheticEncoder(BridgeConfig(**kw))


class TestSyntheticEncoder:
    def test_text_only_has_no_patches_and_final_row_document_embedding(self):
        record = encoder().encode_document(RawDocument("d", "Lava flows downhill"))
        assert all(kind == "text" for _, kind in record.tokens)
        assert record.e_d.tobytes() == record.H[-1].tobytes()

    def test_patch_count_follows_processor_config(self):
        record = encoder(patches_per_image=4).encode_document(
            RawDocument("d", "ash", ["a.png", "b.png"])
        )
        patches = [(s, k) for s, k in record.tokens if k == "patch"]
        assert len(patches) == 8
        assert [s for s, _ in patches] == [f"patch:{i}" for i in range(8)]

    def test_deterministic_re_encoding(self):
        raw = RawDocument("d", "magma chamber beneath the volcano", ["x.png"])
        a = encoder(seed=3).encode_document(raw)
        b = encoder(seed=3).encode_document(raw)
        assert a.H.tobytes() == b.H.tobytes()
        assert a.e_d.tobytes() == b.e_d.tobytes()
        assert a.tokens == b.tokens

    def test_seed_changes_embeddings(self):
        raw = RawDocument("d", "magma chamber")
        a = encoder(seed=1).encode_document(raw)
        b = encoder(seed=2).encode_document(raw)
        assert a.H.tobytes() != b.H.tobytes()

    def test_long_words_occupy_two_positions_with_same_surface(self):
        record = encoder().encode_document(RawDocument("d", "pyroclastic ash"))
        surfaces = [s for s, _ in record.tokens]
        assert surfaces == ["pyroclastic", "pyroclastic", "ash"]
        assert record.H.shape[0] == 3

    def test_repeated_surface_embeds_nearby(self):
        record = encoder().encode_document(RawDocument("d", "lava rock lava"))
        lava_rows = [row for (s, _), row in zip(record.tokens, record.H) if s == "lava"]
        rock_rows = [row for (s, _), row in zip(record.tokens, record.H) if s == "rock"]
        same = np.linalg.norm(lava_rows[0] - lava_rows[1])
        cross = np.linalg.norm(lava_rows[0] - rock_rows[0])
        assert same < cross

    def test_unencodable_document_rejected(self):
        with pytest.raises(ValueError):
            encoder().encode_document(RawDocument("d", "!!! ..."))

    def test_invalid_raw_document_rejected(self):
        with pytest.raises(ValueError):
            encoder().encode_document(RawDocument("d", "", []))

    def test_float32_output(self):
        record = encoder().encode_document(RawDocument("d", "basalt"))
        assert record.H.dtype == np.float32
        assert record.e_d.dtype == np.float32

    def test_max_tokens_truncation(self):
        text = " ".join(f"word{i}" for i in range(100))
        record = encoder(max_tokens=10).encode_document(RawDocument("d", text))
        assert len({s for s, _ in record.tokens}) == 10
