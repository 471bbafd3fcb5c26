"""Vision-language encoder backend built on transformers.

Loads a pretrained multimodal encoder (default: the VLM2Vec fine-tune of
LLaVA-Next), runs one forward pass per document with hidden states enabled,
and maps each output position to either a cleaned word surface or an image
patch.  Heavy dependencies are imported lazily so the synthetic backend
works without them; model downloads happen on first use.
"""

from __future__ import annotations

import logging

import numpy as np

from .preprocess import preprocess_text
from .records import BridgeConfig, BridgeRecord, ImageDecodeError, ModelLoadError, RawDocument

log = logging.getLogger(__name__)


class TransformersVlmEncoder:
    def __init__(self, config: BridgeConfig):
        self.config = config
        try:
            import torch
            from transformers import AutoModel, AutoProcessor
        except ImportError as exc:
            raise ModelLoadError(
                "the model backend needs the 'model' extra (torch, transformers, Pillow)"
            ) from exc
        self._torch = torch
        try:
            self.processor = AutoProcessor.from_pretrained(config.model_name)
            self.model = AutoModel.from_pretrained(
                config.model_name, torch_dtype=torch.float32
            ).to(config.device)
            self.model.eval()
        except Exception as exc:
            raise ModelLoadError(f"could not load {config.model_name!r}: {exc}") from exc
        self._image_token_id = getattr(self.model.config, "image_token_index", None)

    @property
    def dim(self) -> int:
        return int(self.model.config.hidden_size)

    @property
    def name(self) -> str:
        return self.config.model_name

    def _load_images(self, raw: RawDocument):
        from PIL import Image

        images = []
        for path in raw.image_paths:
            try:
                image = Image.open(path).convert("RGB")
            except Exception as exc:
                raise ImageDecodeError(f"{raw.doc_id}: cannot read image {path}: {exc}") from exc
            if self.config.image_size is not None:
                image = image.resize((self.config.image_size, self.config.image_size))
            images.append(image)
        return images

    def encode_document(self, raw: RawDocument) -> BridgeRecord:
        """One forward pass over the full multimodal input.

        Word alignment: the cleaned text is re-joined with spaces and
        tokenized with offset mapping, so every subword inherits the surface
        of the word covering its start offset.  Positions whose input id is
        the image token are tagged as patches.
        """
        raw.validate()
        torch = self._torch
        words = preprocess_text(raw.text)
        clean_text = " ".join(words)
        images = self._load_images(raw) if raw.image_paths else None

        inputs = self.processor(
            text=clean_text,
            images=images,
            return_tensors="pt",
            truncation=True,
            max_length=self.config.max_tokens,
        )
        offsets = self.processor.tokenizer(
            clean_text,
            return_offsets_mapping=True,
            truncation=True,
            max_length=self.config.max_tokens,
        )["offset_mapping"]
        starts = []
        pos = 0
        for word in words:
            starts.append(pos)
            pos += len(word) + 1

        def word_at(char_start: int) -> str:
            idx = int(np.searchsorted(starts, char_start, side="right")) - 1
            return words[max(idx, 0)]

        with torch.no_grad():
            output = self.model(
                **{k: v.to(self.config.device) for k, v in inputs.items()},
                output_hidden_states=True,
            )
        states = output.hidden_states[-1][0].cpu().to(torch.float32).numpy()
        input_ids = inputs["input_ids"][0].tolist()

        tokens: list[tuple[str, str]] = []
        keep_rows = []
        patch_index = 0
        text_cursor = 0
        for position, token_id in enumerate(input_ids):
            if self._image_token_id is not None and token_id == self._image_token_id:
                tokens.append((f"patch:{patch_index}", "patch"))
                patch_index += 1
                keep_rows.append(position)
            else:
                if text_cursor < len(offsets):
                    start, end = offsets[text_cursor]
                    text_cursor += 1
                    if end > start and words:
                        tokens.append((word_at(start), "text"))
                        keep_rows.append(position)
        if not tokens:
            raise ValueError(f"document {raw.doc_id!r} produced no taggable positions")

        H = states[keep_rows].astype(np.float32)
        e_d = states[-1].astype(np.float32).copy()  # final token's hidden state
        return BridgeRecord(doc_id=raw.doc_id, tokens=tokens, H=H, e_d=e_d, label=raw.label)
