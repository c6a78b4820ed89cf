"""duet-export: capture attention maps into a .dueta archive + JSON manifest.

Writes <out>.dueta (tensor archive in the compression toolkit's format) and
<out>.json (capture provenance).  Exit codes follow the toolkit: 0 success,
2 usage, 3 I/O, 4 configuration, 5 internal.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from duet_compress import (
    ConfigError,
    EngineError,
    TensorFormatError,
    UsageError,
    save_archive,
)

from . import __version__
from .capture import capture_pretrained, capture_random
from .presets import build_random_llava, load_image, tokenize_bytes

RANDOM_PRESETS = ("random:llava-1.5",)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="duet-export",
        description="export vision-language attention maps to a tensor archive",
    )
    parser.add_argument("--model", required=True,
                        help="random:llava-1.5 or hf:<repo-id>")
    parser.add_argument("--image", required=True,
                        help="image path, or synth:checker|gradient|noise")
    parser.add_argument("--prompt", required=True, help="text prompt")
    parser.add_argument("--layers", default="16,24",
                        help="1-based decoder layers to capture, comma list")
    parser.add_argument("--out", required=True,
                        help="output stem; writes <out>.dueta and <out>.json")
    parser.add_argument("--seed", type=int, default=0,
                        help="weights/image seed for the random preset")
    return parser


def _parse_layers(text: str) -> list[int]:
    try:
        layers = [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise UsageError(f"layers must be a comma list of integers: {text!r}")
    if not layers:
        raise UsageError("need at least one layer")
    if any(l < 1 for l in layers):
        raise UsageError(f"layers are 1-based: {layers}")
    if sorted(set(layers)) != layers:
        raise UsageError(f"layers must be strictly increasing: {layers}")
    return layers


def _atomic_write_text(path: str, text: str) -> None:
    tmp = f"{path}.{os.getpid()}.tmp"
    try:
        with open(tmp, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def export(args: argparse.Namespace) -> int:
    layers = _parse_layers(args.layers)
    stem = args.out[:-6] if args.out.endswith(".dueta") else args.out

    if args.model in RANDOM_PRESETS:
        preset = build_random_llava(args.seed, num_decoder_layers=max(layers))
        pixels, image_meta = load_image(args.image, args.seed)
        prompt_ids = tokenize_bytes(args.prompt)
        cap = capture_random(preset, pixels, prompt_ids, layers)
    elif args.model.startswith("hf:"):
        if args.image.startswith("synth:"):
            raise UsageError("pretrained capture needs a real image file")
        image_meta = {"source": args.image}
        cap = capture_pretrained(args.model[3:], args.image, args.prompt, layers)
    else:
        raise UsageError(
            f"unknown model {args.model!r}; use one of {RANDOM_PRESETS} or hf:<repo>"
        )

    archive_path = f"{stem}.dueta"
    save_archive(archive_path, cap.entries())
    manifest = {
        "model": args.model,
        "seed": args.seed,
        "prompt": args.prompt,
        "image": image_meta,
        "archive": os.path.basename(archive_path),
        "entries": sorted(cap.entries()),
        "dtype": "float32",
        **cap.meta,
    }
    _atomic_write_text(f"{stem}.json", json.dumps(manifest, indent=2) + "\n")
    shape = cap.attn_v2v.shape
    print(
        f"wrote {archive_path}: attn_v2v {shape[0]}x{shape[1]}, "
        f"{len(cap.stages)} decoder stages, manifest {stem}.json"
    )
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return export(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (TensorFormatError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except EngineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 5
    except Exception as exc:  # noqa: BLE001
        print(f"internal error: {exc!r}", file=sys.stderr)
        return 5


if __name__ == "__main__":
    raise SystemExit(main())
