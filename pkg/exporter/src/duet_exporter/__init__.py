"""Attention capture into duet-compress tensor archives."""

__version__ = "0.1.0"

from .capture import Capture, capture_random  # noqa: E402,F401
from .presets import (  # noqa: E402,F401
    N_PATCHES,
    RandomPreset,
    build_random_llava,
    load_image,
    tokenize_bytes,
)
