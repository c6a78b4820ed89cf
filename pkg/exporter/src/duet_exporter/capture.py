"""Attention capture: run forwards and slice maps into archive entries.

Aggregation is uniform everywhere: post-softmax attention probabilities,
averaged over heads.  The vision tower's CLS position is dropped from both
axes of attn_v2v so it is exactly patch x patch; decoder maps are sliced
into a text-to-text block and a full-width text-to-visual block per
requested layer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from duet_compress import ConfigError

from .presets import N_PATCHES, RandomPreset


@dataclass
class Capture:
    """Everything an archive needs, as float32 numpy arrays."""

    tokens: np.ndarray                 # (n_patches, d) post-projection
    attn_v2v: np.ndarray               # (n_patches, n_patches)
    stages: list[tuple[np.ndarray, np.ndarray]]  # (attn_text, attn_t2v)
    meta: dict

    def entries(self) -> dict[str, np.ndarray]:
        out = {"tokens": self.tokens, "attn_v2v": self.attn_v2v}
        for i, (text, t2v) in enumerate(self.stages):
            out[f"attn_text_{i}"] = text
            out[f"attn_t2v_{i}"] = t2v
        return out


def _mean_heads(attn: torch.Tensor) -> torch.Tensor:
    # (1, heads, q, k) -> (q, k)
    return attn[0].mean(dim=0)


def _slice_decoder_layer(
    attn: torch.Tensor, image_span: range, text_positions: list[int]
) -> tuple[np.ndarray, np.ndarray]:
    """Text-to-text and text-to-visual blocks of one decoder layer."""
    merged = _mean_heads(attn)
    rows = torch.tensor(text_positions)
    text = merged[rows][:, rows]
    t2v = merged[rows][:, image_span.start : image_span.stop]
    return (
        text.detach().numpy().astype(np.float32),
        t2v.detach().numpy().astype(np.float32),
    )


def capture_random(
    preset: RandomPreset,
    pixels: torch.Tensor,
    prompt_ids: torch.Tensor,
    layers: list[int],
) -> Capture:
    """Forward the random preset and capture the requested decoder layers.

    Layer indices are 1-based.  The vision map comes from the tower's last
    self-attention layer; the sequence is [image patches][prompt bytes].
    """
    depth = preset.num_decoder_layers
    for layer in layers:
        if not 1 <= layer <= depth:
            raise ConfigError(f"layer {layer} outside 1..{depth}")

    with torch.no_grad():
        vision_out = preset.vision(pixel_values=pixels, output_attentions=True)
        # drop CLS (position 0) from features and from both attention axes
        patch_feats = vision_out.last_hidden_state[0, 1:, :]
        v2v = _mean_heads(vision_out.attentions[-1])[1:, 1:]
        tokens = preset.projector(patch_feats)

        text_embeds = preset.embed(prompt_ids)
        seq = torch.cat([tokens, text_embeds], dim=0).unsqueeze(0)
        dec_out = preset.decoder(
            inputs_embeds=seq, output_attentions=True, use_cache=False
        )

    m = prompt_ids.shape[0]
    image_span = range(0, N_PATCHES)
    text_positions = list(range(N_PATCHES, N_PATCHES + m))
    stages = [
        _slice_decoder_layer(dec_out.attentions[layer - 1], image_span, text_positions)
        for layer in layers
    ]
    return Capture(
        tokens=tokens.detach().numpy().astype(np.float32),
        attn_v2v=v2v.detach().numpy().astype(np.float32),
        stages=stages,
        meta={
            "n_patches": N_PATCHES,
            "d_proj": preset.d_proj,
            "text_tokens": m,
            "vision_attn_layer": preset.vision.config.num_hidden_layers,
            "decoder_layers_captured": layers,
            "head_aggregation": "mean over heads, post-softmax",
            "cls_dropped": True,
        },
    )


def capture_pretrained(
    model_id: str, pixels_path: str, prompt: str, layers: list[int]
) -> Capture:
    """Capture from a pretrained multimodal checkpoint.

    Needs downloaded weights; the image placeholder span is located by the
    model's image token id, text rows are the positions after that span.
    """
    from transformers import AutoProcessor, LlavaForConditionalGeneration
    from PIL import Image

    processor = AutoProcessor.from_pretrained(model_id)
    model = LlavaForConditionalGeneration.from_pretrained(
        model_id, attn_implementation="eager"
    )
    model.eval()
    for layer in layers:
        depth = model.config.text_config.num_hidden_layers
        if not 1 <= layer <= depth:
            raise ConfigError(f"layer {layer} outside 1..{depth}")

    image = Image.open(pixels_path).convert("RGB")
    prompt_text = f"USER: <image>\n{prompt} ASSISTANT:"
    inputs = processor(images=image, text=prompt_text, return_tensors="pt")
    with torch.no_grad():
        vt = model.vision_tower(
            inputs["pixel_values"], output_attentions=True
        )
        feats = model.multi_modal_projector(vt.last_hidden_state[0, 1:, :])
        v2v = _mean_heads(vt.attentions[-1])[1:, 1:]
        out = model(**inputs, output_attentions=True)

    ids = inputs["input_ids"][0].tolist()
    image_token = model.config.image_token_index
    spans = [i for i, t in enumerate(ids) if t == image_token]
    if not spans or spans != list(range(spans[0], spans[0] + len(spans))):
        raise ConfigError("could not locate a contiguous image span")
    image_span = range(spans[0], spans[-1] + 1)
    text_positions = [i for i in range(len(ids)) if i > spans[-1]]
    if not text_positions:
        raise ConfigError("no text tokens after the image span")
    stages = [
        _slice_decoder_layer(out.attentions[layer - 1], image_span, text_positions)
        for layer in layers
    ]
    return Capture(
        tokens=feats.detach().numpy().astype(np.float32),
        attn_v2v=v2v.detach().numpy().astype(np.float32),
        stages=stages,
        meta={
            "n_patches": len(spans),
            "text_tokens": len(text_positions),
            "decoder_layers_captured": layers,
            "head_aggregation": "mean over heads, post-softmax",
            "cls_dropped": True,
        },
    )
