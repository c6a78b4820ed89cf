"""Model construction and image sourcing for the exporter.

Two model flavors:

- ``random:llava-1.5``: a from-config, randomly initialized LLaVA-1.5-class
  stack (CLIP-style vision tower at 336 px / patch 14 giving 576 patches, a
  linear projector, and a small causal decoder).  No downloads, fully seeded,
  so tests and smoke runs work offline.  Geometry is real; weights are not.
- ``hf:<repo>``: a pretrained checkpoint loaded through transformers.

Images come from a file path or from ``synth:<kind>`` generators
(checker, gradient, noise) so no fixture files are needed.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
import torch
from duet_compress import ConfigError, UsageError
from transformers import CLIPVisionConfig, CLIPVisionModel, LlamaConfig, LlamaModel

IMAGE_SIZE = 336
PATCH_SIZE = 14
N_PATCHES = (IMAGE_SIZE // PATCH_SIZE) ** 2  # 576


@dataclass
class RandomPreset:
    """Randomly initialized vision tower + projector + decoder."""

    vision: CLIPVisionModel
    projector: torch.nn.Linear
    embed: torch.nn.Embedding
    decoder: LlamaModel
    d_proj: int

    @property
    def num_decoder_layers(self) -> int:
        return self.decoder.config.num_hidden_layers


def build_random_llava(seed: int, num_decoder_layers: int) -> RandomPreset:
    """LLaVA-1.5 geometry with small random weights; deterministic per seed."""
    if num_decoder_layers < 1:
        raise ConfigError("need at least one decoder layer")
    torch.manual_seed(seed)
    vision_cfg = CLIPVisionConfig(
        hidden_size=64,
        intermediate_size=128,
        num_hidden_layers=2,
        num_attention_heads=4,
        image_size=IMAGE_SIZE,
        patch_size=PATCH_SIZE,
    )
    # sdpa kernels refuse output_attentions; capture needs the eager path
    vision_cfg._attn_implementation = "eager"
    vision = CLIPVisionModel(vision_cfg)
    d_proj = 64
    projector = torch.nn.Linear(vision_cfg.hidden_size, d_proj)
    decoder_cfg = LlamaConfig(
        hidden_size=d_proj,
        intermediate_size=128,
        num_hidden_layers=num_decoder_layers,
        num_attention_heads=4,
        num_key_value_heads=4,
        vocab_size=256,
        max_position_embeddings=4096,
    )
    decoder_cfg._attn_implementation = "eager"
    decoder = LlamaModel(decoder_cfg)
    embed = torch.nn.Embedding(256, d_proj)
    preset = RandomPreset(
        vision=vision, projector=projector, embed=embed,
        decoder=decoder, d_proj=d_proj,
    )
    vision.eval()
    decoder.eval()
    return preset


def tokenize_bytes(prompt: str) -> torch.Tensor:
    """Byte-level ids; one text token per UTF-8 byte of the prompt."""
    raw = prompt.encode("utf-8")
    if not raw:
        raise UsageError("prompt must not be empty")
    return torch.tensor(list(raw), dtype=torch.long)


def load_image(spec: str, seed: int) -> tuple[torch.Tensor, dict]:
    """Pixel tensor (1, 3, H, W) in [0, 1] plus provenance for the manifest.

    ``synth:checker|gradient|noise`` fabricate an image; anything else is a
    file path decoded with Pillow and resized to the tower's geometry.
    """
    if spec.startswith("synth:"):
        kind = spec.split(":", 1)[1]
        if kind == "checker":
            tile = np.indices((IMAGE_SIZE, IMAGE_SIZE)).sum(axis=0) // 28 % 2
            img = np.stack([tile, 1 - tile, tile], axis=0).astype(np.float32)
        elif kind == "gradient":
            ramp = np.linspace(0.0, 1.0, IMAGE_SIZE, dtype=np.float32)
            img = np.stack(
                [np.tile(ramp, (IMAGE_SIZE, 1)),
                 np.tile(ramp[:, None], (1, IMAGE_SIZE)),
                 np.full((IMAGE_SIZE, IMAGE_SIZE), 0.5, dtype=np.float32)],
                axis=0,
            )
        elif kind == "noise":
            gen = torch.Generator().manual_seed(seed)
            img = torch.rand((3, IMAGE_SIZE, IMAGE_SIZE), generator=gen).numpy()
        else:
            raise UsageError(f"unknown synthetic image {spec!r}")
        return torch.from_numpy(np.ascontiguousarray(img)).unsqueeze(0), {
            "source": spec
        }

    from PIL import Image

    try:
        with Image.open(spec) as im:
            im = im.convert("RGB").resize((IMAGE_SIZE, IMAGE_SIZE))
            arr = np.asarray(im, dtype=np.float32) / 255.0
    except FileNotFoundError:
        raise
    digest = hashlib.sha256(arr.tobytes()).hexdigest()
    pixels = torch.from_numpy(arr.transpose(2, 0, 1)).unsqueeze(0)
    return pixels, {"source": spec, "sha256": digest}
