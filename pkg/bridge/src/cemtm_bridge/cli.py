"""cemtm-embed: encode raw documents into a corpus directory.

Input is JSONL with one document per line ({doc_id, text, image_paths,
label}); output is a corpus directory the topic engine loads directly.
Documents that fail to encode are skipped with a warning and left out of
the manifest.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional

from .records import BridgeConfig, BridgeError, ImageDecodeError, ModelLoadError, read_jsonl
from .synthetic import SyntheticEncoder
from .writer import export_corpus

log = logging.getLogger("cemtm_bridge")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cemtm-embed",
        description="Encode text+image documents into a precomputed-embedding corpus.",
    )
    parser.add_argument("--input", required=True, help="JSONL file of raw documents")
    parser.add_argument("--images-root", default=".", help="directory image paths are relative to")
    parser.add_argument("--out", required=True, help="corpus output directory")
    parser.add_argument("--synthetic", action="store_true",
                        help="use the offline synthetic backend instead of a pretrained model")
    parser.add_argument("--model", default=BridgeConfig.model_name, help="model identifier")
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--max-tokens", type=int, default=4096)
    parser.add_argument("--image-size", type=int, default=None,
                        help="square-resize images before encoding (default: processor policy)")
    parser.add_argument("--dim", type=int, default=64, help="embedding dim (synthetic mode)")
    parser.add_argument("--patches-per-image", type=int, default=16)
    parser.add_argument("--seed", type=int, default=0, help="synthetic backend seed")
    parser.add_argument("--corpus-id", default="bridge")
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0

    config = BridgeConfig(
        model_name=args.model,
        device=args.device,
        max_tokens=args.max_tokens,
        image_size=args.image_size,
        synthetic=args.synthetic,
        synthetic_dim=args.dim,
        patches_per_image=args.patches_per_image,
        seed=args.seed,
    )
    if args.synthetic:
        encoder = SyntheticEncoder(config)
    else:
        from .encoder import TransformersVlmEncoder

        try:
            encoder = TransformersVlmEncoder(config)
        except ModelLoadError as exc:
            log.error("%s", exc)
            return 2

    input_path = Path(args.input)
    if not input_path.is_file():
        log.error("input file not found: %s", input_path)
        return 2
    images_root = Path(args.images_root)

    def encoded_records():
        total = skipped = 0
        for raw in read_jsonl(input_path):
            total += 1
            raw.image_paths = [str(images_root / p) for p in raw.image_paths]
            try:
                yield encoder.encode_document(raw)
            except (ImageDecodeError, ValueError, BridgeError) as exc:
                skipped += 1
                log.warning("skipping %s: %s", raw.doc_id, exc)
        log.info("encoded %d/%d documents (%d skipped)", total - skipped, total, skipped)

    manifest = export_corpus(
        encoded_records(), args.out, corpus_id=args.corpus_id, encoder_name=encoder.name
    )
    print(str(manifest))
    return 0


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
